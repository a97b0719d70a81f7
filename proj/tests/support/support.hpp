#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "icms/config.hpp"
#include "icms/time.hpp"
#include "icms/types.hpp"

namespace icms::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "icms-test-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Instant at(const char* text) { return parse_instant(text); }

inline Date date(const char* text) { return parse_date(text); }

inline SmartPost post(std::string id, std::string street, int limit = 50, int lamps = 1, double watts = 80.0,
                      bool dimmable = true) {
  return SmartPost{std::move(id), std::move(street), {40.6405, -8.6538}, limit, lamps, watts, dimmable};
}

inline LocalCalendar lisbon() { return make_calendar(Config{}); }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

}  // namespace icms::test
