#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "lidarvoice/model.hpp"
#include "lidarvoice/voice.hpp"

namespace lidarvoice {

struct PipelineResult {
  DetectionResult detection;
  VoicePhrase phrase;
  AnnounceStatus status = AnnounceStatus::kSkipped;
  LatencyReport latency;
};

/// preprocess -> predict -> phrase -> announce, timing each stage. A null
/// backend skips speech (tts stage ~0 ms).
PipelineResult run_pipeline(const Sample& sample, const ModelParams& params, const ModelConfig& config,
                            SpeechBackend* backend, std::uint64_t seed = 0);

struct StageSummary {
  double mean = 0;
  double median = 0;
  /// Nearest-rank 95th percentile.
  double p95 = 0;
};

struct LatencySummary {
  std::size_t iterations = 0;
  StageSummary preprocess, inference, phrase, tts, total;
  std::size_t over_budget = 0;
};

LatencySummary summarize_latencies(std::span<const LatencyReport> reports);
std::string format_latency_summary(const LatencySummary& summary);

}  // namespace lidarvoice
