#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "lidarvoice/model.hpp"
#include "lidarvoice/training.hpp"

namespace lidarvoice {

struct DataConfig {
  std::filesystem::path train_dir;
  /// Empty: carve the validation slice out of train_dir with val_fraction.
  std::filesystem::path val_dir;
  double val_fraction = 0.2;
  /// Max samples ingested per directory; 0 = all.
  std::size_t limit = 0;
  bool use_calib = true;
};

struct OutputConfig {
  std::filesystem::path dir = "run";
  std::string checkpoint = "best.ckpt";
  std::string epoch_log = "epochs.log";
  std::string metrics = "metrics.txt";
};

/// Sections "data", "model", "fit", "output" plus a top-level "seed" that
/// feeds initialization, shuffling, splitting and preprocessing.
struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  FitConfig fit;
  OutputConfig output;

  void validate() const;
};

/// Strict JSON reader: unknown keys, wrong types and invalid values all throw
/// Error(kConfig); malformed JSON throws ParseError.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

}  // namespace lidarvoice
