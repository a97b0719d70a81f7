#include "icms/service/event_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "icms/error.hpp"

namespace icms::service {
namespace {

using nlohmann::json;

[[noreturn]] void storage_failure(const std::string& what) {
  throw Error(ErrorCode::Storage, what + ": " + std::strerror(errno));
}

void write_all(int fd, const std::string& data) {
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      storage_failure("event log write failed");
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

}  // namespace

json to_json(const LogRecord& r) {
  return {{"seq", r.sequence}, {"kind", r.kind}, {"payload", r.payload}, {"received_at", r.received_at}};
}

LogContents read_log(const std::filesystem::path& file) {
  LogContents out;
  if (!std::filesystem::exists(file) || !std::filesystem::is_regular_file(file)) return out;

  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::Storage, "cannot read event log " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();

  std::size_t pos = 0;
  std::uint64_t expected = 1;
  while (pos < data.size()) {
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      out.torn_tail = true;
      break;
    }
    const std::string_view line(data.data() + pos, nl - pos);
    LogRecord rec;
    try {
      const json j = json::parse(line);
      rec.sequence = j.at("seq").get<std::uint64_t>();
      rec.kind = j.at("kind").get<std::string>();
      rec.payload = j.at("payload");
      rec.received_at = j.value("received_at", std::string{});
    } catch (const json::exception& e) {
      throw RecoveryError("corrupt event log record at sequence " + std::to_string(expected) + ": " + e.what(),
                          expected);
    }
    if (rec.sequence != expected) {
      throw RecoveryError("event log sequence gap: expected " + std::to_string(expected) + ", found " +
                              std::to_string(rec.sequence),
                          expected);
    }
    ++expected;
    out.records.push_back(std::move(rec));
    pos = nl + 1;
    out.valid_bytes = pos;
  }
  return out;
}

std::pair<EventLog, std::vector<LogRecord>> EventLog::open(const std::filesystem::path& file) {
  LogContents contents = read_log(file);
  const bool regular = std::filesystem::exists(file) && std::filesystem::is_regular_file(file);
  if (regular && contents.torn_tail) {
    std::error_code ec;
    std::filesystem::resize_file(file, contents.valid_bytes, ec);
    if (ec) throw Error(ErrorCode::Storage, "cannot truncate torn tail of " + file.string() + ": " + ec.message());
  }
  const int fd = ::open(file.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) storage_failure("cannot open event log " + file.string());
  const std::uint64_t last = contents.records.empty() ? 0 : contents.records.back().sequence;
  return {EventLog(file, fd, last), std::move(contents.records)};
}

EventLog::EventLog(EventLog&& other) noexcept
    : path_(std::move(other.path_)), fd_(std::exchange(other.fd_, -1)), last_sequence_(other.last_sequence_) {}

EventLog& EventLog::operator=(EventLog&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    path_ = std::move(other.path_);
    fd_ = std::exchange(other.fd_, -1);
    last_sequence_ = other.last_sequence_;
  }
  return *this;
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

std::vector<std::uint64_t> EventLog::append(const std::vector<Entry>& entries, const std::string& received_at) {
  std::vector<std::uint64_t> seqs;
  if (entries.empty()) return seqs;
  std::string data;
  std::uint64_t seq = last_sequence_;
  for (const auto& [kind, payload] : entries) {
    LogRecord rec{++seq, kind, payload, received_at};
    data += to_json(rec).dump();
    data += '\n';
    seqs.push_back(seq);
  }
  const off_t before = ::lseek(fd_, 0, SEEK_END);
  try {
    write_all(fd_, data);
    if (::fdatasync(fd_) != 0 && errno != EINVAL) storage_failure("event log sync failed");
  } catch (const Error&) {
    // drop whatever part of the batch reached the file so the log stays well-formed
    if (before >= 0 && ::ftruncate(fd_, before) != 0) errno = 0;
    throw;
  }
  last_sequence_ = seq;
  return seqs;
}

std::uint64_t EventLog::append(const std::string& kind, const json& payload, const std::string& received_at) {
  return append(std::vector<Entry>{{kind, payload}}, received_at).front();
}

}  // namespace icms::service
