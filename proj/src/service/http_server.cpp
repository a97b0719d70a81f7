#include "icms/service/http_server.hpp"

#include <algorithm>
#include <charconv>
#include <functional>

#include <httplib.h>

namespace icms::service {
namespace {

using nlohmann::json;

json error_body(ErrorCode code, const std::string& message, json location = nullptr) {
  json err{{"code", to_string(code)}, {"message", message}};
  if (!location.is_null()) err["location"] = std::move(location);
  return {{"error", err}};
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Runs a handler and converts every failure into an ApiError response.
void guarded(httplib::Response& res, const std::function<json()>& handler, int ok_status = 200) {
  try {
    send_json(res, ok_status, handler());
  } catch (const RuleSyntaxError& e) {
    send_json(res, http_status(e.code()),
              error_body(e.code(), e.what(), json{{"line", e.line()}, {"column", e.column()}}));
  } catch (const ParseError& e) {
    send_json(res, http_status(e.code()), error_body(e.code(), e.what(), json{{"offset", e.offset()}}));
  } catch (const Error& e) {
    send_json(res, http_status(e.code()), error_body(e.code(), e.what()));
  } catch (const json::exception& e) {
    send_json(res, 400, error_body(ErrorCode::Schema, e.what()));
  } catch (const std::exception& e) {
    send_json(res, 500, error_body(ErrorCode::Contract, e.what()));
  }
}

std::optional<std::string> param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  return req.get_param_value(name);
}

std::string required(const httplib::Request& req, const char* name) {
  auto v = param(req, name);
  if (!v || v->empty()) throw Error(ErrorCode::Validation, std::string("missing query parameter '") + name + "'");
  return *v;
}

template <typename T, typename F>
std::optional<T> parsed_param(const httplib::Request& req, const char* name, F&& parse) {
  auto v = param(req, name);
  if (!v) return std::nullopt;
  try {
    return parse(*v);
  } catch (const Error& e) {
    throw Error(ErrorCode::Validation, std::string("query parameter '") + name + "': " + e.what());
  }
}

std::optional<Instant> instant_param(const httplib::Request& req, const char* name) {
  return parsed_param<Instant>(req, name, [](const std::string& s) { return parse_instant(s); });
}

std::optional<Date> date_param(const httplib::Request& req, const char* name) {
  return parsed_param<Date>(req, name, [](const std::string& s) { return parse_date(s); });
}

std::optional<double> number_param(const httplib::Request& req, const char* name) {
  return parsed_param<double>(req, name, [](const std::string& s) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) throw Error(ErrorCode::Validation, "not a number");
    return v;
  });
}

std::uint64_t path_id(const httplib::Request& req) {
  const std::string s = req.matches[1];
  std::uint64_t id = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), id);
  if (ec != std::errc{} || end != s.data() + s.size()) throw Error(ErrorCode::NotFound, "no such id '" + s + "'");
  return id;
}

json body_json(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("request body is not JSON: ") + e.what(), e.byte);
  }
}

energy::BlockBasis basis_param(const httplib::Request& req) {
  auto s = param(req, "basis");
  if (!s) return energy::BlockBasis::observed;
  auto b = energy::block_basis_from(*s);
  if (!b) throw Error(ErrorCode::Validation, "basis must be 'observed' or 'forecast'");
  return *b;
}

template <typename T>
json array_of(const std::vector<T>& items) {
  json out = json::array();
  for (const auto& x : items) out.push_back(to_json(x));
  return out;
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::Validation:
    case ErrorCode::Schema:
    case ErrorCode::Parse:
    case ErrorCode::RuleSyntax:
    case ErrorCode::Argument: return 400;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::State: return 409;
    case ErrorCode::InsufficientData: return 422;
    case ErrorCode::Storage: return 503;
    case ErrorCode::Config:
    case ErrorCode::Contract:
    case ErrorCode::Recovery: return 500;
  }
  return 500;
}

struct HttpServer::Impl {
  Impl(CityService& s, EngineSwitches e) : svc(s), engines(e) {}

  CityService& svc;
  EngineSwitches engines;
  httplib::Server server;

  void core_routes();
  void ingest_routes();
  void safety_routes();
  void energy_routes();
  void maintenance_routes();
};

void HttpServer::Impl::core_routes() {
  server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      return json{{"status", "ok"},
                  {"last_sequence", svc.last_sequence()},
                  {"engines",
                   {{"safety", engines.safety}, {"energy", engines.energy}, {"maintenance", engines.maintenance}}}};
    });
  });
  server.Get("/posts", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return svc.read([](const CityState& s) { return to_json(s.posts()); }); });
  });
  server.Get("/config", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return svc.read([](const CityState& s) { return to_json(s.config()); }); });
  });
  server.Get("/state", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return svc.export_state(); });
  });
}

void HttpServer::Impl::ingest_routes() {
  auto route = [this](ingest::FeedKind kind) {
    return [this, kind](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto r = svc.ingest(kind, req.body);
        return json{{"accepted", r.accepted}, {"quarantined", r.quarantined}, {"last_sequence", r.last_sequence}};
      });
    };
  };
  server.Post("/ingest/radar", route(ingest::FeedKind::radar));
  server.Post("/ingest/pedestrians", route(ingest::FeedKind::pedestrian));
  server.Post("/ingest/detections", route(ingest::FeedKind::detection));
}

void HttpServer::Impl::safety_routes() {
  server.Get("/rules", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return svc.read([](const CityState& s) { return array_of(*s.rules()); }); });
  });
  server.Post("/rules", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(
        res,
        [&] {
          const auto body = body_json(req);
          if (!body.is_object() || !body.contains("text") || !body.at("text").is_string()) {
            throw Error(ErrorCode::Schema, "rule body needs a string 'text'");
          }
          return to_json(svc.create_rule(body.value("name", std::string{}), body.at("text").get<std::string>(),
                                         body.value("enabled", true)));
        },
        201);
  });
  server.Get(R"(/rules/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = path_id(req);
      auto rule = svc.read([&](const CityState& s) { return s.rule(id); });
      if (!rule) throw Error(ErrorCode::NotFound, "unknown rule " + std::to_string(id));
      return to_json(*rule);
    });
  });
  server.Put(R"(/rules/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = path_id(req);
      const auto body = body_json(req);
      if (!body.is_object()) throw Error(ErrorCode::Schema, "rule body must be an object");
      auto current = svc.read([&](const CityState& s) { return s.rule(id); });
      if (!current) throw Error(ErrorCode::NotFound, "unknown rule " + std::to_string(id));
      // absent fields keep their current values
      return to_json(svc.update_rule(id, body.value("name", current->name), body.value("text", current->text),
                                     body.value("enabled", current->enabled)));
    });
  });
  server.Delete(R"(/rules/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = path_id(req);
      svc.delete_rule(id);
      return json{{"deleted", id}};
    });
  });
  server.Get("/violations", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      ViolationQuery q{param(req, "post_id"), instant_param(req, "from"), instant_param(req, "to")};
      return svc.read([&](const CityState& s) {
        const auto v = s.violations(q);
        const Instant now = q.to ? *q.to : s.latest_event().value_or(Instant{});
        return json{{"violations", array_of(v)}, {"frequency", array_of(s.frequency_levels(v, now))}};
      });
    });
  });
  server.Get("/safety/ratio", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto street = required(req, "street_id");
      auto from = date_param(req, "from");
      auto to = date_param(req, "to");
      const auto threshold = number_param(req, "threshold");
      if (threshold && !(*threshold >= 0.0)) throw Error(ErrorCode::Validation, "threshold must be ≥ 0");
      return svc.read([&](const CityState& s) {
        // an open end of the range extends to the data
        const auto feats = s.features();
        Date lo = feats->empty() ? Date{} : s.calendar().date(feats->front().window_start);
        Date hi = feats->empty() ? Date{} : s.calendar().date(feats->back().window_start);
        return to_json(s.hourly_ratio(street, from.value_or(lo), to.value_or(hi), threshold));
      });
    });
  });
}

void HttpServer::Impl::energy_routes() {
  server.Get("/energy/forecast", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto street = required(req, "street_id");
      const auto from = instant_param(req, "from");
      return svc.read([&](const CityState& s) { return energy::to_json(s.forecast(street, from)); });
    });
  });
  server.Get("/energy/blocks", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto street = required(req, "street_id");
      const auto date = date_param(req, "date");
      const auto basis = basis_param(req);
      return svc.read([&](const CityState& s) {
        json out = json::array();
        for (const auto& b : s.blocks(street, date, basis)) out.push_back(energy::to_json(b));
        return out;
      });
    });
  });
  server.Get("/energy/recommendations", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto street = required(req, "street_id");
      const auto date = date_param(req, "date");
      const auto basis = basis_param(req);
      const auto dim = number_param(req, "dim_level");
      return svc.read([&](const CityState& s) {
        const auto recs = s.recommendations(street, date, basis, dim);
        json list = json::array();
        double total = 0.0;
        for (const auto& r : recs) {
          list.push_back(energy::to_json(r));
          total += r.estimated_savings_kwh;
        }
        return json{{"street_id", street},
                    {"dim_level", dim.value_or(s.config().dim_level)},
                    {"recommendations", list},
                    {"total_savings_kwh", total}};
      });
    });
  });
  server.Post("/energy/train", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = body_json(req);
      if (!body.is_object() || !body.contains("from") || !body.contains("to") || !body.at("from").is_string() ||
          !body.at("to").is_string()) {
        throw Error(ErrorCode::Schema, "train body needs RFC 3339 'from' and 'to'");
      }
      const auto outcome = svc.train(parse_instant(body.at("from").get<std::string>()),
                                     parse_instant(body.at("to").get<std::string>()));
      json trained = json::array();
      for (const auto& m : outcome.trained) trained.push_back(energy::to_json(m));
      return json{{"trained", trained}, {"skipped", outcome.skipped}};
    });
  });
}

void HttpServer::Impl::maintenance_routes() {
  auto filter_of = [](const httplib::Request& req) {
    maintenance::IssueFilter f;
    if (auto s = param(req, "status")) {
      f.status = maintenance::issue_status_from(*s);
      if (!f.status) throw Error(ErrorCode::Validation, "unknown status '" + *s + "'");
    }
    if (auto s = param(req, "class")) {
      f.detection_class = detection_class_from(*s);
      if (!f.detection_class) throw Error(ErrorCode::Validation, "unknown class '" + *s + "'");
    }
    if (auto s = param(req, "min_urgency")) {
      f.min_urgency = maintenance::urgency_from(*s);
      if (!f.min_urgency) throw Error(ErrorCode::Validation, "unknown urgency '" + *s + "'");
    }
    return f;
  };
  server.Get("/issues", [this, filter_of](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto f = filter_of(req);
      return svc.read([&](const CityState& s) { return array_of(s.registry().list(f)); });
    });
  });
  server.Get("/issues.geojson", [this, filter_of](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto f = filter_of(req);
      return svc.read([&](const CityState& s) { return maintenance::to_geojson(s.registry().list(f)); });
    });
  });
  auto transition = [this](maintenance::Transition action) {
    return [this, action](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return maintenance::to_json(svc.transition_issue(path_id(req), action)); });
    };
  };
  server.Post(R"(/issues/([^/]+)/acknowledge)", transition(maintenance::Transition::acknowledge));
  server.Post(R"(/issues/([^/]+)/resolve)", transition(maintenance::Transition::resolve));
}

HttpServer::HttpServer(CityService& service, EngineSwitches engines)
    : impl_(std::make_unique<Impl>(service, engines)) {
  impl_->core_routes();
  impl_->ingest_routes();
  if (engines.safety) impl_->safety_routes();
  if (engines.energy) impl_->energy_routes();
  if (engines.maintenance) impl_->maintenance_routes();
  impl_->server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const auto code = res.status == 404 ? ErrorCode::NotFound : ErrorCode::Validation;
    res.set_content(error_body(code, "no route for " + req.method + " " + req.path).dump(), "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) return -1;
  return port;
}

bool HttpServer::listen() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace icms::service
