#include "twostep/audit.hpp"

#include <cstdio>

namespace twostep {

AuditLog::AuditLog()
    : sink_([](const std::string& line) {
        std::fputs(line.c_str(), stderr);
        std::fputc('\n', stderr);
      }) {}

AuditLog::AuditLog(Sink sink) : sink_(std::move(sink)) {}

void AuditLog::log(std::string_view event,
                   std::initializer_list<Field> fields) {
  std::string line = "event=";
  line += event;
  for (const auto& [key, value] : fields) {
    line += ' ';
    line += key;
    line += "=\"";
    line += value;
    line += '"';
  }
  std::lock_guard<std::mutex> lock(mutex_);
  if (sink_) sink_(line);
}

}  // namespace twostep
