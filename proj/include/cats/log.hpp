#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace cats {

using LogSink = std::function<void(std::string_view level, std::string_view message)>;

// Replaces the process-wide sink (default: stderr). Returns the previous one.
LogSink set_log_sink(LogSink sink);

void log_info(std::string_view message);
void log_warning(std::string_view message);

}  // namespace cats
