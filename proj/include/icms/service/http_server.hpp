#pragma once

#include <memory>
#include <string>

#include "icms/error.hpp"
#include "icms/service/city_service.hpp"

namespace icms::service {

// Route families that can be switched off to emulate separately deployed
// engines. Core routes (/health, /posts, /config) are always on.
struct EngineSwitches {
  bool safety = true;
  bool energy = true;
  bool maintenance = true;
};

int http_status(ErrorCode code);

class HttpServer {
 public:
  HttpServer(CityService& service, EngineSwitches engines = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds to port, or to an ephemeral port when port == 0; returns the port.
  int bind(const std::string& host, int port);
  // Blocks serving requests until stop().
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace icms::service
