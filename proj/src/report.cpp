#include "lidarvoice/report.hpp"

#include <iterator>

#include <fmt/format.h>
#include <json.hpp>

namespace lidarvoice {

std::string format_metrics_text(const ClassMetrics& m) {
  std::string out;
  auto it = std::back_inserter(out);
  fmt::format_to(it, "count={}\naccuracy={}\nloss={}\n", m.count, m.accuracy, m.mean_loss);
  for (int k = 0; k < kNumClasses; ++k) {
    fmt::format_to(it, "class={} precision={} recall={} f1={} support={}\n", class_name(static_cast<ClassId>(k)),
                   m.precision[k], m.recall[k], m.f1[k], m.support[k]);
  }
  for (int k = 0; k < kNumClasses; ++k) {
    fmt::format_to(it, "confusion.{}={}\n", class_name(static_cast<ClassId>(k)), fmt::join(m.confusion[k], " "));
  }
  return out;
}

std::string format_metrics_json(const ClassMetrics& m) {
  nlohmann::json classes = nlohmann::json::array();
  for (int k = 0; k < kNumClasses; ++k) {
    classes.push_back({{"class", std::string(class_name(static_cast<ClassId>(k)))},
                       {"precision", m.precision[k]},
                       {"recall", m.recall[k]},
                       {"f1", m.f1[k]},
                       {"support", m.support[k]}});
  }
  const nlohmann::json j = {{"count", m.count},
                            {"accuracy", m.accuracy},
                            {"loss", m.mean_loss},
                            {"classes", classes},
                            {"confusion", m.confusion}};
  return j.dump(2) + "\n";
}

}  // namespace lidarvoice
