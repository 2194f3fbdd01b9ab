#pragma once

#include <string_view>

namespace affinv::log {

enum class Level { Debug, Info, Warn, Error, Off };

// Reads AFFINV_LOG (debug|info|warn|error|off). Defaults to warn.
void init_from_env();
void set_level(Level level);

void debug(std::string_view msg);
void info(std::string_view msg);
void warn(std::string_view msg);
void error(std::string_view msg);

}  // namespace affinv::log
