#include "affinv/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace affinv::log {

namespace {

std::shared_ptr<spdlog::logger> logger() {
    static auto instance = [] {
        auto l = spdlog::get("affinv");
        if (!l) l = spdlog::stderr_color_mt("affinv");
        l->set_pattern("[%l] %v");
        l->set_level(spdlog::level::warn);
        return l;
    }();
    return instance;
}

}  // namespace

void set_level(Level level) {
    switch (level) {
        case Level::Debug: logger()->set_level(spdlog::level::debug); break;
        case Level::Info: logger()->set_level(spdlog::level::info); break;
        case Level::Warn: logger()->set_level(spdlog::level::warn); break;
        case Level::Error: logger()->set_level(spdlog::level::err); break;
        case Level::Off: logger()->set_level(spdlog::level::off); break;
    }
}

void init_from_env() {
    const char* env = std::getenv("AFFINV_LOG");
    if (!env) return;
    std::string v(env);
    if (v == "debug") set_level(Level::Debug);
    else if (v == "info") set_level(Level::Info);
    else if (v == "warn") set_level(Level::Warn);
    else if (v == "error") set_level(Level::Error);
    else if (v == "off") set_level(Level::Off);
}

void debug(std::string_view msg) { logger()->debug(msg); }
void info(std::string_view msg) { logger()->info(msg); }
void warn(std::string_view msg) { logger()->warn(msg); }
void error(std::string_view msg) { logger()->error(msg); }

}  // namespace affinv::log
