#pragma once
// Process-wide stderr logger. Level comes from AUTOSCALE_LOG
// (trace, debug, info, warn, error, off); default warn.

#include <spdlog/spdlog.h>

namespace autoscale {

spdlog::logger& log();

}  // namespace autoscale
