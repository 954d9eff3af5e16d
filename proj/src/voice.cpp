#include "lidarvoice/voice.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>

#include "lidarvoice/error.hpp"

extern char** environ;

namespace lidarvoice {

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

std::optional<double> estimate_distance(const Sample& sample) {
  if (!std::isfinite(sample.distance_m)) return std::nullopt;
  return round_half_up(sample.distance_m, 1);
}

namespace {

std::string format_tenths(double meters) {
  const auto tenths = static_cast<long long>(std::floor(meters * 10.0 + 0.5 + 1e-9));
  if (tenths % 10 == 0) return fmt::format("{}", tenths / 10);
  return fmt::format("{}.{}", tenths / 10, std::llabs(tenths % 10));
}

}  // namespace

VoicePhrase format_phrase(const DetectionResult& result) {
  VoicePhrase p;
  p.class_id = result.class_id;
  p.distance_m = result.distance_m;
  p.confidence = result.confidence;
  if (result.class_id == ClassId::kDontCare) return p;

  const auto percent = static_cast<long long>(std::floor(result.confidence * 100.0 + 0.5 + 1e-9));
  if (result.distance_m && std::isfinite(*result.distance_m)) {
    p.text = fmt::format("{} detected, {} meters away, {}% confidence", class_name(result.class_id),
                         format_tenths(*result.distance_m), percent);
  } else {
    p.text = fmt::format("{} detected, {}% confidence", class_name(result.class_id), percent);
  }
  return p;
}

// ---------------------------------------------------------------------------
// backends

SpeechStatus TextEchoBackend::synthesize(std::string_view text) {
  out_ << text << '\n';
  out_.flush();
  return out_ ? SpeechStatus::kDone : SpeechStatus::kError;
}

SpeechStatus FileSinkBackend::synthesize(std::string_view text) {
  std::ofstream out(path_, std::ios::app);
  if (!out) return SpeechStatus::kError;
  out << text << '\n';
  return out ? SpeechStatus::kDone : SpeechStatus::kError;
}

std::chrono::milliseconds tts_timeout_from_env() {
  const char* raw = std::getenv("LIDARVOICE_TTS_TIMEOUT_MS");
  if (raw == nullptr) return kDefaultTtsTimeout;
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(raw, &end, 10);
  if (errno != 0 || end == raw || *end != '\0' || v <= 0) return kDefaultTtsTimeout;
  return std::chrono::milliseconds(v);
}

ExternalCommandBackend::ExternalCommandBackend(std::string command_template, std::chrono::milliseconds timeout,
                                               std::string voice_id)
    : timeout_(timeout), voice_id_(std::move(voice_id)) {
  std::istringstream in(command_template);
  for (std::string w; in >> w;) words_.push_back(w);
  if (words_.empty()) throw Error(ErrorKind::kConfig, "speech command template is empty");
  if (timeout_.count() <= 0) throw Error(ErrorKind::kConfig, "speech command timeout must be positive");
}

std::vector<std::string> ExternalCommandBackend::expand(std::string_view text) const {
  constexpr std::string_view kSlot = "{text}";
  std::vector<std::string> argv;
  for (const auto& w : words_) {
    std::string out;
    std::size_t pos = 0;
    for (std::size_t hit; (hit = w.find(kSlot, pos)) != std::string::npos; pos = hit + kSlot.size()) {
      out.append(w, pos, hit - pos);
      out.append(text);
    }
    out.append(w, pos);
    argv.push_back(std::move(out));
  }
  return argv;
}

SpeechStatus ExternalCommandBackend::synthesize(std::string_view text) {
  const auto args = expand(text);
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  pid_t pid = 0;
  if (posix_spawnp(&pid, argv[0], nullptr, nullptr, argv.data(), environ) != 0) return SpeechStatus::kError;

  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  auto pause = std::chrono::microseconds(200);
  for (;;) {
    int status = 0;
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) {
      return WIFEXITED(status) && WEXITSTATUS(status) == 0 ? SpeechStatus::kDone : SpeechStatus::kError;
    }
    if (r < 0 && errno != EINTR) return SpeechStatus::kError;
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(pid, SIGKILL);
      while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
      }
      return SpeechStatus::kTimeout;
    }
    std::this_thread::sleep_for(pause);
    pause = std::min(pause * 2, std::chrono::microseconds(10000));
  }
}

std::string_view to_string(AnnounceStatus status) noexcept {
  switch (status) {
    case AnnounceStatus::kSkipped: return "skipped";
    case AnnounceStatus::kSpoken: return "spoken";
    case AnnounceStatus::kTimeout: return "timeout";
    case AnnounceStatus::kBackendError: return "backend_error";
  }
  return "backend_error";
}

AnnounceStatus announce(const VoicePhrase& phrase, SpeechBackend& backend) {
  if (phrase.suppressed()) return AnnounceStatus::kSkipped;
  try {
    switch (backend.synthesize(phrase.text)) {
      case SpeechStatus::kDone: return AnnounceStatus::kSpoken;
      case SpeechStatus::kTimeout: return AnnounceStatus::kTimeout;
      case SpeechStatus::kError: return AnnounceStatus::kBackendError;
    }
  } catch (const std::exception&) {
  }
  return AnnounceStatus::kBackendError;
}

// ---------------------------------------------------------------------------
// dispatcher

AnnounceDispatcher::AnnounceDispatcher(SpeechBackend& backend, Listener listener)
    : backend_(backend), listener_(std::move(listener)), worker_([this] { run(); }) {}

AnnounceDispatcher::~AnnounceDispatcher() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void AnnounceDispatcher::submit(VoicePhrase phrase) {
  {
    std::lock_guard lock(mu_);
    if (pending_) ++dropped_;
    pending_ = std::move(phrase);
  }
  cv_.notify_all();
}

void AnnounceDispatcher::drain() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return !pending_ && !busy_; });
}

std::size_t AnnounceDispatcher::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

std::size_t AnnounceDispatcher::completed() const {
  std::lock_guard lock(mu_);
  return completed_;
}

void AnnounceDispatcher::run() {
  std::unique_lock lock(mu_);
  for (;;) {
    cv_.wait(lock, [this] { return stopping_ || pending_.has_value(); });
    if (!pending_) return;  // stopping with nothing queued
    VoicePhrase phrase = std::move(*pending_);
    pending_.reset();
    busy_ = true;
    lock.unlock();
    const AnnounceStatus status = announce(phrase, backend_);
    if (listener_) listener_(phrase, status);
    lock.lock();
    busy_ = false;
    ++completed_;
    cv_.notify_all();
  }
}

// ---------------------------------------------------------------------------
// latency

LatencyReport latency_report(std::int64_t preprocess_ms, std::int64_t inference_ms, std::int64_t phrase_ms,
                             std::int64_t tts_ms) {
  if (preprocess_ms < 0 || inference_ms < 0 || phrase_ms < 0 || tts_ms < 0) {
    throw Error(ErrorKind::kInvalidArgument, "stage durations must be non-negative");
  }
  LatencyReport r;
  r.preprocess_ms = preprocess_ms;
  r.inference_ms = inference_ms;
  r.phrase_ms = phrase_ms;
  r.tts_ms = tts_ms;
  r.total_ms = preprocess_ms + inference_ms + phrase_ms + tts_ms;
  r.over_budget = r.total_ms > r.budget_ms;
  return r;
}

std::int64_t StageTimer::ms(Stage s) const {
  return std::chrono::round<std::chrono::milliseconds>(elapsed_[s]).count();
}

LatencyReport StageTimer::report() const {
  return latency_report(ms(kPreprocess), ms(kInference), ms(kPhrase), ms(kTts));
}

std::string format_latency_report(const LatencyReport& r) {
  return fmt::format(
      "preprocess_ms={}\ninference_ms={}\nphrase_ms={}\ntts_ms={}\ntotal_ms={}\nbudget_ms={}\nover_budget={}\n"
      "reference_inference_ms={}\nreference_tts_ms={}\nreference_total_ms={}\n",
      r.preprocess_ms, r.inference_ms, r.phrase_ms, r.tts_ms, r.total_ms, r.budget_ms, r.over_budget,
      kReferenceInferenceMs, kReferenceTtsMs, kReferenceTotalMs);
}

}  // namespace lidarvoice
