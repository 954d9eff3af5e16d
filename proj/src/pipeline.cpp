#include "lidarvoice/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <fmt/format.h>

#include "lidarvoice/error.hpp"

namespace lidarvoice {

PipelineResult run_pipeline(const Sample& sample, const ModelParams& params, const ModelConfig& config,
                            SpeechBackend* backend, std::uint64_t seed) {
  StageTimer timer;
  PipelineResult r;

  timer.start(StageTimer::kPreprocess);
  const ProcessedSample processed =
      preprocess_sample(sample, seed, {config.dims.num_points, config.dims.image_size});
  timer.stop(StageTimer::kPreprocess);

  timer.start(StageTimer::kInference);
  r.detection = predict(params, config, processed);
  r.detection.distance_m = estimate_distance(sample);
  timer.stop(StageTimer::kInference);

  timer.start(StageTimer::kPhrase);
  r.phrase = format_phrase(r.detection);
  timer.stop(StageTimer::kPhrase);

  timer.start(StageTimer::kTts);
  r.status = backend == nullptr ? AnnounceStatus::kSkipped : announce(r.phrase, *backend);
  timer.stop(StageTimer::kTts);

  r.latency = timer.report();
  return r;
}

namespace {

StageSummary summarize(std::vector<double> v) {
  StageSummary s;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  double total = 0;
  for (double x : v) total += x;
  s.mean = total / static_cast<double>(n);
  s.median = n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95 = v[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

StageSummary summarize_field(std::span<const LatencyReport> reports, std::int64_t LatencyReport::*field) {
  std::vector<double> v;
  v.reserve(reports.size());
  for (const auto& r : reports) v.push_back(static_cast<double>(r.*field));
  return summarize(std::move(v));
}

}  // namespace

LatencySummary summarize_latencies(std::span<const LatencyReport> reports) {
  if (reports.empty()) throw Error(ErrorKind::kInvalidArgument, "no latency rows to summarize");
  LatencySummary s;
  s.iterations = reports.size();
  s.preprocess = summarize_field(reports, &LatencyReport::preprocess_ms);
  s.inference = summarize_field(reports, &LatencyReport::inference_ms);
  s.phrase = summarize_field(reports, &LatencyReport::phrase_ms);
  s.tts = summarize_field(reports, &LatencyReport::tts_ms);
  s.total = summarize_field(reports, &LatencyReport::total_ms);
  s.over_budget = static_cast<std::size_t>(
      std::count_if(reports.begin(), reports.end(), [](const LatencyReport& r) { return r.over_budget; }));
  return s;
}

std::string format_latency_summary(const LatencySummary& s) {
  std::string out = fmt::format("iterations={}\n", s.iterations);
  const std::pair<const char*, const StageSummary*> rows[] = {{"preprocess", &s.preprocess},
                                                               {"inference", &s.inference},
                                                               {"phrase", &s.phrase},
                                                               {"tts", &s.tts},
                                                               {"total", &s.total}};
  for (const auto& [name, st] : rows) {
    out += fmt::format("{}_ms mean={:.3f} median={:.3f} p95={:.3f}\n", name, st->mean, st->median, st->p95);
  }
  out += fmt::format("budget_ms={} over_budget={}/{}\n", kLatencyBudgetMs, s.over_budget, s.iterations);
  out += fmt::format("reference_inference_ms={} reference_tts_ms={} reference_total_ms={}\n", kReferenceInferenceMs,
                     kReferenceTtsMs, kReferenceTotalMs);
  return out;
}

}  // namespace lidarvoice
