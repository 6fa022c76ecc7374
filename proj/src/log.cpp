#include "autoscale/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_sinks.h>

namespace autoscale {

spdlog::logger& log() {
    static std::shared_ptr<spdlog::logger> instance = [] {
        auto l = std::make_shared<spdlog::logger>("autoscale", std::make_shared<spdlog::sinks::stderr_sink_mt>());
        l->set_pattern("[%l] %v");
        const char* env = std::getenv("AUTOSCALE_LOG");
        l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
        return l;
    }();
    return *instance;
}

}  // namespace autoscale
