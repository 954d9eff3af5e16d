#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "lidarvoice/model.hpp"

namespace lidarvoice {

/// Half-up rounding to `decimals` places. A 1e-9 nudge keeps values like 2.15
/// (stored as 2.1499999...) rounding the way they read.
double round_half_up(double value, int decimals);

/// Distance carried on the sample, rounded to 0.1 m; nullopt when unknown.
std::optional<double> estimate_distance(const Sample& sample);

struct VoicePhrase {
  std::string text;  // empty when suppressed
  ClassId class_id = ClassId::kDontCare;
  std::optional<double> distance_m;
  double confidence = 0;

  bool suppressed() const noexcept { return text.empty(); }
};

/// "<Class> detected, <D> meters away, <P>% confidence". DontCare yields an
/// empty (suppressed) phrase; a missing distance drops the middle clause.
VoicePhrase format_phrase(const DetectionResult& result);

// ---- speech backends ------------------------------------------------------

enum class SpeechStatus { kDone, kTimeout, kError };

struct BackendInfo {
  std::string name;
  std::string voice_id;
};

class SpeechBackend {
 public:
  virtual ~SpeechBackend() = default;
  virtual BackendInfo info() const = 0;
  virtual SpeechStatus synthesize(std::string_view text) = 0;
};

/// Writes each phrase on its own line.
class TextEchoBackend : public SpeechBackend {
 public:
  explicit TextEchoBackend(std::ostream& out) : out_(out) {}
  BackendInfo info() const override { return {"text", "stdout"}; }
  SpeechStatus synthesize(std::string_view text) override;

 private:
  std::ostream& out_;
};

/// Appends each phrase as a line to a transcript file.
class FileSinkBackend : public SpeechBackend {
 public:
  explicit FileSinkBackend(std::filesystem::path transcript) : path_(std::move(transcript)) {}
  BackendInfo info() const override { return {"file", path_.string()}; }
  SpeechStatus synthesize(std::string_view text) override;

 private:
  std::filesystem::path path_;
};

inline constexpr std::chrono::milliseconds kDefaultTtsTimeout{2000};

/// LIDARVOICE_TTS_TIMEOUT_MS when set to a positive integer, else 2000 ms.
std::chrono::milliseconds tts_timeout_from_env();

/// Runs a command per phrase. The template is split on whitespace; every
/// "{text}" inside a word is replaced by the phrase, and the words are passed
/// as argv (no shell). The child is killed once the timeout elapses.
class ExternalCommandBackend : public SpeechBackend {
 public:
  explicit ExternalCommandBackend(std::string command_template,
                                  std::chrono::milliseconds timeout = tts_timeout_from_env(),
                                  std::string voice_id = "external");
  BackendInfo info() const override { return {"command", voice_id_}; }
  SpeechStatus synthesize(std::string_view text) override;

  std::vector<std::string> expand(std::string_view text) const;
  std::chrono::milliseconds timeout() const noexcept { return timeout_; }

 private:
  std::vector<std::string> words_;
  std::chrono::milliseconds timeout_;
  std::string voice_id_;
};

enum class AnnounceStatus { kSkipped, kSpoken, kTimeout, kBackendError };

std::string_view to_string(AnnounceStatus status) noexcept;

AnnounceStatus announce(const VoicePhrase& phrase, SpeechBackend& backend);

/// Background announcer with a one-slot queue: a phrase submitted while
/// another waits replaces it (the stale one is dropped). Submission never blocks.
class AnnounceDispatcher {
 public:
  using Listener = std::function<void(const VoicePhrase&, AnnounceStatus)>;

  explicit AnnounceDispatcher(SpeechBackend& backend, Listener listener = {});
  ~AnnounceDispatcher();
  AnnounceDispatcher(const AnnounceDispatcher&) = delete;
  AnnounceDispatcher& operator=(const AnnounceDispatcher&) = delete;

  void submit(VoicePhrase phrase);
  /// Blocks until the queue is empty and no announcement is running.
  void drain();

  std::size_t dropped() const;
  std::size_t completed() const;

 private:
  void run();

  SpeechBackend& backend_;
  Listener listener_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<VoicePhrase> pending_;
  bool busy_ = false;
  bool stopping_ = false;
  std::size_t dropped_ = 0;
  std::size_t completed_ = 0;
  std::thread worker_;
};

// ---- latency accounting ---------------------------------------------------

inline constexpr std::int64_t kLatencyBudgetMs = 500;
inline constexpr std::int64_t kReferenceInferenceMs = 100;
inline constexpr std::int64_t kReferenceTtsMs = 300;
inline constexpr std::int64_t kReferenceTotalMs = 400;

struct LatencyReport {
  std::int64_t preprocess_ms = 0;
  std::int64_t inference_ms = 0;
  std::int64_t phrase_ms = 0;
  std::int64_t tts_ms = 0;
  std::int64_t total_ms = 0;
  std::int64_t budget_ms = kLatencyBudgetMs;
  bool over_budget = false;
};

/// Integer-millisecond stages; the total is their exact sum.
LatencyReport latency_report(std::int64_t preprocess_ms, std::int64_t inference_ms, std::int64_t phrase_ms,
                             std::int64_t tts_ms);

/// Monotonic timestamps around each stage; durations are rounded to whole ms.
class StageTimer {
 public:
  using Clock = std::chrono::steady_clock;
  enum Stage { kPreprocess = 0, kInference, kPhrase, kTts, kStageCount };

  void start(Stage s) { begin_[s] = Clock::now(); }
  void stop(Stage s) { elapsed_[s] += Clock::now() - begin_[s]; }
  std::int64_t ms(Stage s) const;
  LatencyReport report() const;

 private:
  Clock::time_point begin_[kStageCount]{};
  Clock::duration elapsed_[kStageCount]{};
};

/// Multi-line "stage=... ms" text including the reference split.
std::string format_latency_report(const LatencyReport& report);

}  // namespace lidarvoice
