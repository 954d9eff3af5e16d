#pragma once

#include <string>

#include "lidarvoice/training.hpp"

namespace lidarvoice {

/// key=value lines; numbers use the shortest round-trip form, as in the JSON.
std::string format_metrics_text(const ClassMetrics& m);
std::string format_metrics_json(const ClassMetrics& m);

}  // namespace lidarvoice
