// lidarvoice command-line front end.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 configuration or usage error,
// 3 parse error (malformed file), 4 I/O or ingestion error, 5 empty dataset,
// 6 checkpoint error, 7 invalid input (shape, label or argument).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "lidarvoice/config.hpp"
#include "lidarvoice/error.hpp"
#include "lidarvoice/kitti_io.hpp"
#include "lidarvoice/model.hpp"
#include "lidarvoice/pipeline.hpp"
#include "lidarvoice/preprocess.hpp"
#include "lidarvoice/report.hpp"
#include "lidarvoice/synthetic.hpp"
#include "lidarvoice/training.hpp"
#include "lidarvoice/visualize.hpp"
#include "lidarvoice/voice.hpp"

#ifdef LIDARVOICE_HAVE_PNG
#include "lidarvoice/png_decoder.hpp"
#endif

namespace fs = std::filesystem;
using namespace lidarvoice;

namespace {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitParse = 3,
  kExitIo = 4,
  kExitEmptyDataset = 5,
  kExitCheckpoint = 6,
  kExitInput = 7,
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kParse:
    case ErrorKind::kMalformedFile: return kExitParse;
    case ErrorKind::kIo:
    case ErrorKind::kIngestion: return kExitIo;
    case ErrorKind::kEmptyDataset: return kExitEmptyDataset;
    case ErrorKind::kCheckpoint: return kExitCheckpoint;
    case ErrorKind::kShape:
    case ErrorKind::kEmptyInput:
    case ErrorKind::kInvalidLabel:
    case ErrorKind::kEmptyObject:
    case ErrorKind::kInvalidArgument: return kExitInput;
  }
  return kExitFailure;
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool verbose = false;

  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
};

Globals g_globals;

void note(const std::string& text) {
  if (g_globals.verbose) std::cerr << text << '\n';
}

std::uint64_t effective_seed() {
  if (g_globals.seed) return *g_globals.seed;
  if (!g_globals.config.empty()) return load_run_config(g_globals.config).seed;
  return 0;
}

Dataset ingest(const fs::path& root, std::size_t limit, bool use_calib) {
  if (!fs::is_directory(root)) throw Error(ErrorKind::kIo, fmt::format("dataset directory '{}' not found", root.string()));
  ExtractOptions options;
  options.use_calib = use_calib;
  const std::size_t max_samples = limit == 0 ? std::numeric_limits<std::size_t>::max() : limit;
  Dataset d = build_dataset(DatasetLayout::under(root), max_samples, options);
  for (const auto& w : d.warnings) note(fmt::format("warning: {}", w));
  if (d.samples.empty()) throw Error(ErrorKind::kEmptyDataset, fmt::format("no samples in '{}'", root.string()));
  return d;
}

std::string histogram_text(const std::array<std::size_t, kNumClasses>& h) {
  return fmt::format("car={} pedestrian={} cyclist={} dontcare={}", h[0], h[1], h[2], h[3]);
}

// ---- frame inputs -------------------------------------------------------------

struct FrameArgs {
  std::string data;
  std::string frame;
  std::string velodyne;
  std::string image;
  std::string label;
  std::string calib;
  std::size_t object = 0;
  bool no_calib = false;
};

void add_frame_options(CLI::App* cmd, FrameArgs& a) {
  cmd->add_option("--data", a.data, "Dataset root (KITTI layout); use with --frame");
  cmd->add_option("--frame", a.frame, "Frame id inside --data, e.g. 000042");
  cmd->add_option("--velodyne", a.velodyne, "Velodyne .bin scan");
  cmd->add_option("--image", a.image, "Camera image (.png or .ppm)");
  cmd->add_option("--label", a.label, "KITTI label file for the frame");
  cmd->add_option("--calib", a.calib, "KITTI calibration file for the frame");
  cmd->add_option("--object", a.object, "Label index to classify")->default_val(0);
  cmd->add_flag("--no-calib", a.no_calib, "Label geometry is already in the velodyne frame");
}

struct LoadedFrame {
  std::string id;
  fs::path image_path;
  PointCloud cloud;
  RgbImage image;
  std::vector<ObjectLabel> labels;
  CalibData calib = CalibData::identity();
};

fs::path find_image(const fs::path& dir, const std::string& stem) {
  for (const char* ext : {".png", ".ppm"}) {
    fs::path p = dir / (stem + ext);
    if (fs::exists(p)) return p;
  }
  throw Error(ErrorKind::kIngestion, fmt::format("frame {}: no image in '{}'", stem, dir.string()));
}

RgbImage load_image_file(const fs::path& path) {
  const auto format = image_format_from_extension(path);
  if (!format) throw Error(ErrorKind::kConfig, fmt::format("unsupported image type '{}'", path.string()));
  return load_image(read_file_bytes(path), *format);
}

LoadedFrame load_frame(FrameArgs a) {
  LoadedFrame f;
  if (!a.data.empty() || !a.frame.empty()) {
    if (a.data.empty() || a.frame.empty()) throw Error(ErrorKind::kConfig, "--data and --frame go together");
    const DatasetLayout layout = DatasetLayout::under(a.data);
    a.velodyne = (layout.velodyne_dir / (a.frame + ".bin")).string();
    a.image = find_image(layout.image_dir, a.frame).string();
    if (a.label.empty() && fs::exists(layout.label_dir / (a.frame + ".txt")))
      a.label = (layout.label_dir / (a.frame + ".txt")).string();
    if (a.calib.empty() && fs::exists(layout.calib_dir / (a.frame + ".txt")))
      a.calib = (layout.calib_dir / (a.frame + ".txt")).string();
    f.id = a.frame;
  }
  if (a.velodyne.empty() || a.image.empty()) {
    throw Error(ErrorKind::kConfig, "a frame needs --velodyne and --image (or --data with --frame)");
  }
  if (f.id.empty()) f.id = fs::path(a.velodyne).stem().string();
  f.cloud = read_velodyne_bin(read_file_bytes(a.velodyne));
  f.image_path = a.image;
  f.image = load_image_file(a.image);
  if (!a.label.empty()) f.labels = parse_label_file(read_file_text(a.label));
  if (!a.calib.empty()) f.calib = parse_calib_file(read_file_text(a.calib));
  return f;
}

/// The labelled object, or the whole scan with unknown distance when no label is given.
Sample frame_sample(const LoadedFrame& f, const FrameArgs& a) {
  if (f.labels.empty()) {
    if (f.cloud.empty()) throw Error(ErrorKind::kEmptyObject, fmt::format("frame {}: scan has no points", f.id));
    Sample s;
    s.points = f.cloud;
    s.image = f.image;
    s.distance_m = std::nan("");
    s.frame_id = f.id;
    return s;
  }
  if (a.object >= f.labels.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("frame {}: object {} requested, {} labels present", f.id, a.object, f.labels.size()));
  }
  ExtractOptions options;
  options.use_calib = !a.no_calib;
  Sample s = extract_object_sample(f.cloud, f.image, f.labels[a.object], f.calib, options);
  s.frame_id = f.id;
  return s;
}

// ---- speech backend -----------------------------------------------------------

struct BackendArgs {
  std::string kind = "text";
  std::string transcript = "transcript.txt";
  std::string command;
  std::optional<long> timeout_ms;
};

void add_backend_options(CLI::App* cmd, BackendArgs& b) {
  cmd->add_option("--backend", b.kind, "Speech backend: text, file, command or none")
      ->check(CLI::IsMember({"text", "file", "command", "none"}))
      ->default_val("text");
  cmd->add_option("--transcript", b.transcript, "Transcript file for --backend file")->default_val("transcript.txt");
  cmd->add_option("--command", b.command, "Command template for --backend command; {text} is replaced");
  cmd->add_option("--timeout-ms", b.timeout_ms, "Command timeout (default LIDARVOICE_TTS_TIMEOUT_MS or 2000)");
}

std::unique_ptr<SpeechBackend> make_backend(const BackendArgs& b) {
  if (b.kind == "none") return nullptr;
  if (b.kind == "text") return std::make_unique<TextEchoBackend>(std::cout);
  if (b.kind == "file") return std::make_unique<FileSinkBackend>(b.transcript);
  if (b.command.empty()) throw Error(ErrorKind::kConfig, "--backend command needs --command");
  const auto timeout = b.timeout_ms ? std::chrono::milliseconds(*b.timeout_ms) : tts_timeout_from_env();
  return std::make_unique<ExternalCommandBackend>(b.command, timeout);
}

// ---- commands -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t per_class = 10;
  std::vector<std::size_t> counts;
  std::optional<std::size_t> kitti_ratio;
  double sigma = kDefaultNoiseSigma;
};

int cmd_synth(const SynthArgs& a) {
  SyntheticSpec spec;
  spec.noise_sigma = a.sigma;
  spec.seed = effective_seed();
  if (a.kitti_ratio) {
    spec.counts = kitti_ratio_counts(*a.kitti_ratio);
  } else if (!a.counts.empty()) {
    if (a.counts.size() != kNumClasses) throw Error(ErrorKind::kConfig, "--counts needs 4 values");
    std::copy(a.counts.begin(), a.counts.end(), spec.counts.begin());
  } else {
    spec.counts.fill(a.per_class);
  }
  const auto h = write_synthetic_dataset(spec, a.out);
  std::size_t frames = 0;
  for (auto c : h) frames += c;
  fmt::print("frames={} {} sigma={} seed={} out={}\n", frames, histogram_text(h), spec.noise_sigma, spec.seed, a.out);
  return kExitOk;
}

struct PreprocessArgs {
  std::string data;
  std::size_t limit = 0;
  std::size_t target_points = kNumPoints;
  bool dbscan = false;
  bool no_calib = false;
};

int cmd_preprocess(const PreprocessArgs& a) {
  if (a.target_points == 0) throw Error(ErrorKind::kConfig, "--target-points must be positive");
  const Dataset d = ingest(a.data, a.limit, !a.no_calib);
  const std::uint64_t seed = effective_seed();
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const Sample& s = d.samples[i];
    const PointCloud kept = remove_statistical_outliers(s.points);
    const ProcessedSample p = preprocess_sample(s, seed + i, {a.target_points, kImageSize});
    const auto dist = estimate_distance(s);
    std::string line = fmt::format("frame={} class={} source_points={} after_outliers={} points={} distance_m={}",
                                   s.frame_id, class_name(s.class_id), s.points.size(), kept.size(),
                                   p.points.coords.rows(), dist ? fmt::format("{}", *dist) : "unknown");
    if (a.dbscan) {
      const auto labels = cluster_dbscan(s.points, kDbscanEps, kDbscanMinSamples);
      const int clusters = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
      const auto noise = std::count(labels.begin(), labels.end(), -1);
      line += fmt::format(" clusters={} noise_points={}", clusters, noise);
    }
    fmt::print("{}\n", line);
  }
  fmt::print("samples={} {}\n", d.samples.size(), histogram_text(d.histogram));
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string val;
  std::string mode;
  std::string out;
  std::optional<std::size_t> epochs;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = g_globals.config.empty() ? RunConfig{} : load_run_config(g_globals.config);
  if (g_globals.seed) cfg.seed = cfg.model.seed = cfg.fit.seed = *g_globals.seed;
  if (!a.data.empty()) cfg.data.train_dir = a.data;
  if (!a.val.empty()) cfg.data.val_dir = a.val;
  if (!a.mode.empty()) cfg.model.mode = fusion_mode_from_string(a.mode);
  if (!a.out.empty()) cfg.output.dir = a.out;
  if (a.epochs) cfg.fit.max_epochs = *a.epochs;
  cfg.validate();
  if (cfg.data.train_dir.empty()) throw Error(ErrorKind::kConfig, "no training data: set data.train_dir or --data");

  const PreprocessOptions prep{cfg.model.dims.num_points, cfg.model.dims.image_size};
  const Dataset train_set = ingest(cfg.data.train_dir, cfg.data.limit, cfg.data.use_calib);
  std::vector<ProcessedSample> all = preprocess_all(train_set.samples, cfg.seed, prep);
  std::vector<ProcessedSample> train, val;
  if (cfg.data.val_dir.empty()) {
    const SplitIndices split = split_train_val(all.size(), cfg.data.val_fraction, cfg.seed);
    for (auto i : split.train) train.push_back(std::move(all[i]));
    for (auto i : split.val) val.push_back(std::move(all[i]));
  } else {
    train = std::move(all);
    const Dataset val_set = ingest(cfg.data.val_dir, cfg.data.limit, cfg.data.use_calib);
    val = preprocess_all(val_set.samples, cfg.seed + train_set.samples.size(), prep);
  }
  if (train.empty()) throw Error(ErrorKind::kEmptyDataset, "training split is empty");
  note(fmt::format("train={} val={} mode={} params={}", train.size(), val.size(), to_string(cfg.model.mode),
                   init_params(cfg.model).parameter_count()));

  std::error_code ec;
  fs::create_directories(cfg.output.dir, ec);
  if (ec) throw Error(ErrorKind::kIo, fmt::format("cannot create '{}': {}", cfg.output.dir.string(), ec.message()));
  const fs::path ckpt = cfg.output.dir / cfg.output.checkpoint;
  write_file_text(cfg.output.dir / "config.json", dump_run_config(cfg));
  std::ofstream log(cfg.output.dir / cfg.output.epoch_log, std::ios::trunc);
  if (!log) throw Error(ErrorKind::kIo, "cannot open the epoch log");

  FitCallbacks callbacks;
  callbacks.on_epoch = [&](const EpochReport& r) {
    const std::string line = format_epoch_report(r);
    fmt::print("{}\n", line);
    std::fflush(stdout);
    log << line << '\n' << std::flush;
  };
  callbacks.on_improvement = [&](const ModelParams& params, const EpochReport&) {
    save_checkpoint(ckpt, params, cfg.model);
  };
  const FitResult result = fit(train, val, cfg.model, cfg.fit, callbacks);
  if (!fs::exists(ckpt)) save_checkpoint(ckpt, result.best_params, cfg.model);

  const ClassMetrics m = evaluate_metrics(result.best_params, cfg.model, val.empty() ? train : val,
                                          cfg.fit.class_weights, cfg.fit.batch_size);
  std::string metrics = fmt::format("best_epoch={}\nepochs_run={}\nearly_stopped={}\nsplit={}\n", result.best_epoch,
                                    result.reports.size(), result.early_stopped, val.empty() ? "train" : "val");
  metrics += format_metrics_text(m);
  write_file_text(cfg.output.dir / cfg.output.metrics, metrics);
  fmt::print("{}checkpoint={}\n", metrics, ckpt.string());
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::size_t limit = 0;
  std::string format = "text";
  bool no_calib = false;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Dataset d = ingest(a.data, a.limit, !a.no_calib);
  const auto processed =
      preprocess_all(d.samples, effective_seed(), {ck.config.dims.num_points, ck.config.dims.image_size});
  const ClassMetrics m = evaluate_metrics(ck.params, ck.config, processed);
  fmt::print("{}", a.format == "json" ? format_metrics_json(m) : format_metrics_text(m));
  return kExitOk;
}

void print_detection(const std::string& frame, const PipelineResult& r) {
  const auto& det = r.detection;
  fmt::print("frame={}\nclass={}\nconfidence={}\ndistance_m={}\n", frame, class_name(det.class_id), det.confidence,
             det.distance_m ? fmt::format("{}", round_half_up(*det.distance_m, 1)) : "unknown");
  fmt::print("probabilities=Car:{} Pedestrian:{} Cyclist:{} DontCare:{}\n", det.probabilities[0], det.probabilities[1],
             det.probabilities[2], det.probabilities[3]);
  fmt::print("phrase={}\nannounce={}\n", r.phrase.suppressed() ? "<suppressed>" : r.phrase.text,
             to_string(r.status));
  fmt::print("{}", format_latency_report(r.latency));
}

struct PredictArgs {
  std::string checkpoint;
  FrameArgs frame;
  BackendArgs backend;
};

int cmd_predict(const PredictArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const LoadedFrame f = load_frame(a.frame);
  const Sample s = frame_sample(f, a.frame);
  auto backend = make_backend(a.backend);
  const PipelineResult r = run_pipeline(s, ck.params, ck.config, backend.get(), effective_seed());
  print_detection(f.id, r);
  return kExitOk;
}

struct VisualizeArgs {
  FrameArgs frame;
  std::string out;
};

int cmd_visualize(const VisualizeArgs& a) {
  const LoadedFrame f = load_frame(a.frame);
  ExtractOptions options;
  options.use_calib = !a.frame.no_calib;
  const auto colors = color_by_labels(f.cloud, f.labels, f.calib, options);
  const fs::path prefix = a.out;
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  const fs::path ply = prefix.string() + ".ply";
  const fs::path svg = prefix.string() + ".svg";
  const fs::path img = prefix.string() + f.image_path.extension().string();
  write_file_text(ply, export_ply(f.cloud, colors));
  write_file_text(svg, export_svg(f.cloud, colors));
  write_file_bytes(img, read_file_bytes(f.image_path));
  fmt::print("frame={} points={} labels={}\nply={}\nsvg={}\nimage={}\n", f.id, f.cloud.size(), f.labels.size(),
             ply.string(), svg.string(), img.string());
  return kExitOk;
}

struct BenchArgs {
  std::string checkpoint;
  std::string data;
  std::size_t iterations = 10;
  std::size_t limit = 0;
  bool no_calib = false;
  BackendArgs backend;
};

int cmd_bench(const BenchArgs& a) {
  if (a.iterations == 0) throw Error(ErrorKind::kConfig, "--iterations must be at least 1");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Dataset d = ingest(a.data, a.limit, !a.no_calib);
  auto backend = make_backend(a.backend);
  const std::uint64_t seed = effective_seed();
  std::vector<LatencyReport> rows;
  for (std::size_t i = 0; i < a.iterations; ++i) {
    const Sample& s = d.samples[i % d.samples.size()];
    const PipelineResult r = run_pipeline(s, ck.params, ck.config, backend.get(), seed + i);
    const LatencyReport& l = r.latency;
    fmt::print("iter={} frame={} preprocess_ms={} inference_ms={} phrase_ms={} tts_ms={} total_ms={} over_budget={}\n",
               i, s.frame_id, l.preprocess_ms, l.inference_ms, l.phrase_ms, l.tts_ms, l.total_ms, l.over_budget);
    rows.push_back(l);
  }
  fmt::print("{}", format_latency_summary(summarize_latencies(rows)));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator_for_training();
#ifdef LIDARVOICE_HAVE_PNG
  register_png_decoder();
#endif

  CLI::App app{"LiDAR + RGB object classification with spoken detection phrases"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", g_globals.config, "JSON run configuration");
  app.add_option("--seed", g_globals.seed, "Seed for generation, preprocessing and training");
  app.add_flag("-v,--verbose", g_globals.verbose, "Diagnostics on stderr");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth-data", "Write a synthetic dataset in KITTI layout");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  auto* per_class = c_synth->add_option("--per-class", synth.per_class, "Frames per class")->default_val(10);
  auto* counts = c_synth->add_option("--counts", synth.counts, "Car,Pedestrian,Cyclist,DontCare frame counts")
                     ->delimiter(',')
                     ->expected(kNumClasses);
  auto* ratio =
      c_synth->add_option("--paper-ratio", synth.kitti_ratio, "Total frames split 2224:380:75:321 across classes");
  per_class->excludes(counts)->excludes(ratio);
  counts->excludes(ratio);
  c_synth->add_option("--sigma", synth.sigma, "Point noise sigma in meters")->default_val(kDefaultNoiseSigma);

  PreprocessArgs prep;
  auto* c_prep = app.add_subcommand("preprocess", "Ingest a dataset and report per-sample preprocessing");
  c_prep->add_option("--data", prep.data, "Dataset root")->required();
  c_prep->add_option("--limit", prep.limit, "Max samples (0 = all)")->default_val(0);
  c_prep->add_option("--target-points", prep.target_points, "Points per sample")->default_val(kNumPoints);
  c_prep->add_flag("--dbscan", prep.dbscan, "Also report DBSCAN clusters (eps 0.5, min_samples 5)");
  c_prep->add_flag("--no-calib", prep.no_calib, "Label geometry is already in the velodyne frame");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train and write checkpoint, epoch log and metrics");
  c_train->add_option("--data", train.data, "Training dataset root (overrides data.train_dir)");
  c_train->add_option("--val", train.val, "Validation dataset root (overrides data.val_dir)");
  c_train->add_option("--mode", train.mode, "fused or lidar_only")->check(CLI::IsMember({"fused", "lidar_only"}));
  c_train->add_option("--out", train.out, "Output directory (overrides output.dir)");
  c_train->add_option("--epochs", train.epochs, "Override fit.max_epochs");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  c_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  c_eval->add_option("--data", eval.data, "Dataset root")->required();
  c_eval->add_option("--limit", eval.limit, "Max samples (0 = all)")->default_val(0);
  c_eval->add_option("--format", eval.format, "text or json")
      ->check(CLI::IsMember({"text", "json"}))
      ->default_val("text");
  c_eval->add_flag("--no-calib", eval.no_calib, "Label geometry is already in the velodyne frame");

  PredictArgs predict;
  auto* c_predict = app.add_subcommand("predict", "Classify one object and announce it");
  c_predict->add_option("--checkpoint", predict.checkpoint, "Checkpoint file")->required();
  add_frame_options(c_predict, predict.frame);
  add_backend_options(c_predict, predict.backend);

  VisualizeArgs vis;
  auto* c_vis = app.add_subcommand("visualize", "Export PLY, SVG and an image copy for one frame");
  add_frame_options(c_vis, vis.frame);
  c_vis->add_option("--out", vis.out, "Output prefix")->required();

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Latency distribution of the detection pipeline");
  c_bench->add_option("--checkpoint", bench.checkpoint, "Checkpoint file")->required();
  c_bench->add_option("--data", bench.data, "Dataset root")->required();
  c_bench->add_option("--iterations", bench.iterations, "Pipeline runs")->default_val(10);
  c_bench->add_option("--limit", bench.limit, "Max samples (0 = all)")->default_val(0);
  c_bench->add_flag("--no-calib", bench.no_calib, "Label geometry is already in the velodyne frame");
  add_backend_options(c_bench, bench.backend);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (c_synth->parsed()) return cmd_synth(synth);
    if (c_prep->parsed()) return cmd_preprocess(prep);
    if (c_train->parsed()) return cmd_train(train);
    if (c_eval->parsed()) return cmd_eval(eval);
    if (c_predict->parsed()) return cmd_predict(predict);
    if (c_vis->parsed()) return cmd_visualize(vis);
    if (c_bench->parsed()) return cmd_bench(bench);
  } catch (const ParseError& e) {
    fmt::print(stderr, "error [parse]: {}\n", e.what());
    return kExitParse;
  } catch (const Error& e) {
    fmt::print(stderr, "error [{}]: {}\n", to_string(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
