#pragma once

#include <functional>
#include <initializer_list>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>

namespace twostep {

/// Structured single-line event logger. Callers log identifiers and outcome
/// codes only; secret material (passwords, PINs, tokens, keys) must never be
/// passed in.
class AuditLog {
 public:
  using Sink = std::function<void(const std::string& line)>;
  using Field = std::pair<std::string_view, std::string>;

  /// Defaults to writing lines to stderr.
  AuditLog();
  explicit AuditLog(Sink sink);

  void log(std::string_view event, std::initializer_list<Field> fields);

 private:
  std::mutex mutex_;
  Sink sink_;
};

}  // namespace twostep
