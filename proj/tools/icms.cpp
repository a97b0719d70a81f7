#include <csignal>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "icms/config.hpp"
#include "icms/error.hpp"
#include "icms/replay/generator.hpp"
#include "icms/replay/replay.hpp"
#include "icms/service/city_service.hpp"
#include "icms/service/http_server.hpp"

namespace fs = std::filesystem;
using namespace icms;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitConfig = 3;

void emit(const std::string& text, const std::optional<std::string>& out) {
  if (!out) {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream f(*out, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw Error(ErrorCode::Storage, "cannot write " + *out);
}

Config config_from(const std::optional<std::string>& path) { return path ? load_config(*path) : Config{}; }

PostRegistry posts_from(const fs::path& file) {
  if (!fs::exists(file)) {
    std::cerr << "icms: no posts file at " << file.string() << "; every sensor event will be quarantined\n";
    return {};
  }
  return load_posts(file.string());
}

int serve(const std::optional<std::string>& config_path, const std::string& data_dir, int port,
          const std::string& host, const std::optional<std::string>& posts_path,
          const std::vector<std::string>& disabled) {
  const Config config = config_from(config_path);
  const PostRegistry posts = posts_from(posts_path ? fs::path(*posts_path) : fs::path(data_dir) / "posts.json");
  service::EngineSwitches engines;
  for (const auto& d : disabled) {
    if (d == "safety") engines.safety = false;
    if (d == "energy") engines.energy = false;
    if (d == "maintenance") engines.maintenance = false;
  }

  // signals are taken synchronously by a dedicated thread
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  service::CityService svc(config, posts, data_dir);
  service::HttpServer server(svc, engines);
  const int bound = server.bind(host, port);
  if (bound < 0) throw Error(ErrorCode::Storage, "cannot bind " + host + ":" + std::to_string(port));
  std::cerr << "icms: serving on http://" << host << ":" << bound << " (log sequence " << svc.last_sequence()
            << ")\n";

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.listen();
  // wake the waiter if the server stopped for another reason
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kExitOk;
}

int report_error(const std::exception& e) {
  if (const auto* df = dynamic_cast<const replay::DataFileError*>(&e)) {
    std::cerr << "icms: " << df->file().string();
    if (df->line() > 0) std::cerr << ":" << df->line();
    std::cerr << ": " << to_string(df->code()) << ": " << df->what() << "\n";
    return df->code() == ErrorCode::Config ? kExitConfig : kExitData;
  }
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    std::cerr << "icms: " << to_string(err->code()) << ": " << err->what() << "\n";
    switch (err->code()) {
      case ErrorCode::Config: return kExitConfig;
      case ErrorCode::Argument: return kExitUsage;
      default: return kExitData;
    }
  }
  std::cerr << "icms: " << e.what() << "\n";
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"icms - integrated city management system"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::string> out;

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  std::string data_dir = "icms-data";
  int port = 8080;
  std::string host = "127.0.0.1";
  std::optional<std::string> posts_path;
  std::vector<std::string> disabled;
  serve_cmd->add_option("--config", config_path, "Config JSON file")->envname("ICMS_CONFIG");
  serve_cmd->add_option("--data-dir", data_dir, "Event log directory")->envname("ICMS_DATA_DIR");
  serve_cmd->add_option("--port", port, "TCP port (0 picks a free one)")->envname("ICMS_PORT");
  serve_cmd->add_option("--host", host, "Listen address");
  serve_cmd->add_option("--posts", posts_path, "Posts JSON file (default: <data-dir>/posts.json)");
  serve_cmd->add_option("--disable", disabled, "Engine whose routes are switched off")
      ->check(CLI::IsMember({"safety", "energy", "maintenance"}));

  auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic dataset");
  std::uint64_t seed = 0;
  std::string gen_out;
  replay::Profile profile;
  std::string start = format_date(profile.start);
  bool no_zero_nights = false;
  bool no_outage = false;
  gen_cmd->add_option("--seed", seed, "RNG seed")->required();
  gen_cmd->add_option("--out", gen_out, "Output directory")->required();
  gen_cmd->add_option("--streets", profile.streets, "Number of streets")->capture_default_str();
  gen_cmd->add_option("--posts-per-street", profile.posts_per_street, "Posts per street")->capture_default_str();
  gen_cmd->add_option("--months", profile.months, "Calendar months covered")->capture_default_str();
  gen_cmd->add_option("--start", start, "First local date (YYYY-MM-DD)")->capture_default_str();
  gen_cmd->add_option("--noise", profile.noise, "Pedestrian count noise stdev")->capture_default_str();
  gen_cmd->add_option("--episodes", profile.speeding_episodes, "Planted speeding windows")->capture_default_str();
  gen_cmd->add_option("--clusters", profile.detection_clusters, "Planted detection clusters")->capture_default_str();
  gen_cmd->add_option("--dead-letter", profile.dead_letter, "Events from an unknown post")->capture_default_str();
  gen_cmd->add_flag("--no-zero-nights", no_zero_nights, "Do not plant dark nights");
  gen_cmd->add_flag("--no-outage", no_outage, "Do not plant a sensor outage");

  auto* replay_cmd = app.add_subcommand("replay", "Replay a dataset and print the evaluation report");
  std::string dataset_dir;
  std::optional<std::string> boundary;
  replay_cmd->add_option("--data", dataset_dir, "Dataset directory")->required();
  replay_cmd->add_option("--config", config_path, "Config JSON (default: <data>/config.json)");
  replay_cmd->add_option("--boundary", boundary, "Train/holdout boundary (RFC 3339)");
  replay_cmd->add_option("--out", out, "Write the report here instead of stdout");

  auto* report_cmd = app.add_subcommand("report", "Print the state recovered from a service event log");
  std::string log_dir;
  std::optional<std::string> report_posts;
  report_cmd->add_option("--data-dir", log_dir, "Service data directory")->required()->envname("ICMS_DATA_DIR");
  report_cmd->add_option("--config", config_path, "Config JSON file")->envname("ICMS_CONFIG");
  report_cmd->add_option("--posts", report_posts, "Posts JSON file (default: <data-dir>/posts.json)");
  report_cmd->add_option("--out", out, "Write the report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*serve_cmd) return serve(config_path, data_dir, port, host, posts_path, disabled);

    if (*gen_cmd) {
      profile.start = parse_date(start);
      profile.zero_nights = !no_zero_nights;
      profile.outage = !no_outage;
      replay::write_dataset(replay::generate_dataset(seed, profile), gen_out);
      return kExitOk;
    }

    if (*replay_cmd) {
      const auto t0 = std::chrono::steady_clock::now();
      const Config config = replay::load_dataset_config(dataset_dir, config_path);
      const auto data = replay::load_dataset(dataset_dir);
      std::optional<Instant> b;
      if (boundary) b = parse_instant(*boundary);
      const auto report = replay::run_replay(data, config, b, replay::dataset_hash(dataset_dir));
      emit(replay::canonical(report), out);
      const auto ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
      std::cerr << "icms: replay finished in " << ms << " ms\n";
      return kExitOk;
    }

    if (*report_cmd) {
      const Config config = config_from(config_path);
      const PostRegistry posts = posts_from(report_posts ? fs::path(*report_posts) : fs::path(log_dir) / "posts.json");
      const auto state =
          service::recover_state(config, posts, fs::path(log_dir) / service::CityService::kLogFile);
      emit(replay::canonical(state->export_state()), out);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    return report_error(e);
  }
  return kExitUsage;
}
