#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace portwin::cli {

enum class LogLevel : int { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Reads PORTWIN_LOG (error, warn, info, debug); unset or unknown means info.
inline LogLevel log_level_from_env() {
  const char* v = std::getenv("PORTWIN_LOG");
  if (!v) return LogLevel::Info;
  const std::string s(v);
  if (s == "error") return LogLevel::Error;
  if (s == "warn") return LogLevel::Warn;
  if (s == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

/// Line-oriented logger writing "[level] message" to a stream.
class Logger {
 public:
  Logger(std::ostream& out, LogLevel level) : out_(&out), level_(level) {}

  bool enabled(LogLevel l) const { return static_cast<int>(l) <= static_cast<int>(level_); }

  void log(LogLevel l, const std::string& msg) {
    if (!enabled(l)) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::lock_guard lock(mu_);
    *out_ << '[' << names[static_cast<int>(l)] << "] " << msg << '\n';
    out_->flush();
  }

  void warn(const std::string& m) { log(LogLevel::Warn, m); }
  void info(const std::string& m) { log(LogLevel::Info, m); }
  void debug(const std::string& m) { log(LogLevel::Debug, m); }

 private:
  std::ostream* out_;
  LogLevel level_;
  std::mutex mu_;
};

}  // namespace portwin::cli
