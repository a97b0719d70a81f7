#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace icms::service {

struct LogRecord {
  std::uint64_t sequence = 0;
  std::string kind;
  nlohmann::json payload;
  std::string received_at;

  bool operator==(const LogRecord&) const = default;
};

nlohmann::json to_json(const LogRecord& r);

struct LogContents {
  std::vector<LogRecord> records;
  std::uintmax_t valid_bytes = 0;  // length of the well-formed prefix
  bool torn_tail = false;          // an unterminated final line was dropped
};

// Reads a log file. Sequence numbers must run 1..N without gaps; an
// unterminated final line is treated as a torn write and excluded. Any other
// damage is a RecoveryError naming the sequence number it stopped at.
LogContents read_log(const std::filesystem::path& file);

// Append-only JSONL event log. Each append batch is written and fdatasync'd
// before returning; IO failures surface as Error{Storage}.
class EventLog {
 public:
  // Opens (creating if needed) and recovers the file, truncating a torn tail.
  static std::pair<EventLog, std::vector<LogRecord>> open(const std::filesystem::path& file);

  EventLog(EventLog&& other) noexcept;
  EventLog& operator=(EventLog&& other) noexcept;
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;
  ~EventLog();

  using Entry = std::pair<std::string, nlohmann::json>;  // kind, payload

  // Returns the sequence numbers assigned, in order.
  std::vector<std::uint64_t> append(const std::vector<Entry>& entries, const std::string& received_at);
  std::uint64_t append(const std::string& kind, const nlohmann::json& payload, const std::string& received_at);

  std::uint64_t last_sequence() const { return last_sequence_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  EventLog(std::filesystem::path path, int fd, std::uint64_t last_sequence)
      : path_(std::move(path)), fd_(fd), last_sequence_(last_sequence) {}

  std::filesystem::path path_;
  int fd_ = -1;
  std::uint64_t last_sequence_ = 0;
};

}  // namespace icms::service
