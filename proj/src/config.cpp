#include "lidarvoice/config.hpp"

#include <algorithm>
#include <initializer_list>

#include <fmt/format.h>
#include <json.hpp>

#include "lidarvoice/error.hpp"

namespace lidarvoice {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::kConfig, what); }

void require_object(const json& j, std::string_view where) {
  if (!j.is_object()) config_error(fmt::format("'{}' must be an object", where));
}

void reject_unknown(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      config_error(where.empty() ? fmt::format("unknown key '{}'", key)
                                 : fmt::format("unknown key '{}' in section '{}'", key, where));
    }
  }
}

template <typename T>
void read(const json& section, std::string_view section_name, const char* key, T& out) {
  if (!section.contains(key)) return;
  try {
    section.at(key).get_to(out);
  } catch (const json::exception&) {
    config_error(fmt::format("'{}.{}' has the wrong type", section_name, key));
  }
}

void read_count(const json& section, std::string_view section_name, const char* key, std::size_t& out) {
  if (!section.contains(key)) return;
  const json& v = section.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    config_error(fmt::format("'{}.{}' must be a non-negative integer", section_name, key));
  }
  out = v.get<std::size_t>();
}

void read_widths(const json& section, std::string_view section_name, const char* key, std::vector<std::size_t>& out) {
  if (!section.contains(key)) return;
  const json& v = section.at(key);
  if (!v.is_array() || v.empty()) config_error(fmt::format("'{}.{}' must be a non-empty array", section_name, key));
  std::vector<std::size_t> widths;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<long long>() <= 0) {
      config_error(fmt::format("'{}.{}' entries must be positive integers", section_name, key));
    }
    widths.push_back(e.get<std::size_t>());
  }
  out = std::move(widths);
}

void read_path(const json& section, std::string_view section_name, const char* key, fs::path& out) {
  std::string s = out.string();
  read(section, section_name, key, s);
  out = s;
}

std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  fit.validate();
  if (!(data.val_fraction >= 0) || data.val_fraction >= 1) config_error("'data.val_fraction' must lie in [0, 1)");
  if (output.checkpoint.empty() || output.epoch_log.empty() || output.metrics.empty()) {
    config_error("output file names must be non-empty");
  }
}

RunConfig parse_run_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(line_of(json_text, e.byte == 0 ? 0 : e.byte - 1), fmt::format("invalid JSON: {}", e.what()));
  }
  require_object(root, "<root>");
  reject_unknown(root, "", {"seed", "data", "model", "fit", "output"});

  RunConfig c;
  if (root.contains("seed")) {
    if (!root.at("seed").is_number_unsigned()) config_error("'seed' must be a non-negative integer");
    c.seed = root.at("seed").get<std::uint64_t>();
  }

  if (root.contains("data")) {
    const json& d = root.at("data");
    require_object(d, "data");
    reject_unknown(d, "data", {"train_dir", "val_dir", "val_fraction", "limit", "use_calib"});
    read_path(d, "data", "train_dir", c.data.train_dir);
    read_path(d, "data", "val_dir", c.data.val_dir);
    read(d, "data", "val_fraction", c.data.val_fraction);
    read_count(d, "data", "limit", c.data.limit);
    read(d, "data", "use_calib", c.data.use_calib);
  }

  if (root.contains("model")) {
    const json& m = root.at("model");
    require_object(m, "model");
    reject_unknown(m, "model", {"mode", "dropout_rate", "ortho_weight", "dims"});
    if (m.contains("mode")) {
      std::string mode;
      read(m, "model", "mode", mode);
      c.model.mode = fusion_mode_from_string(mode);
    }
    read(m, "model", "dropout_rate", c.model.dropout_rate);
    read(m, "model", "ortho_weight", c.model.ortho_weight);
    if (m.contains("dims")) {
      const json& d = m.at("dims");
      require_object(d, "model.dims");
      reject_unknown(d, "model.dims",
                     {"num_points", "image_size", "tnet_point", "tnet_dense", "lidar_point", "rgb_conv",
                      "rgb_feature", "head_dense"});
      ModelDims& dims = c.model.dims;
      read_count(d, "model.dims", "num_points", dims.num_points);
      read_count(d, "model.dims", "image_size", dims.image_size);
      read_widths(d, "model.dims", "tnet_point", dims.tnet_point);
      read_widths(d, "model.dims", "tnet_dense", dims.tnet_dense);
      read_widths(d, "model.dims", "lidar_point", dims.lidar_point);
      read_widths(d, "model.dims", "rgb_conv", dims.rgb_conv);
      read_count(d, "model.dims", "rgb_feature", dims.rgb_feature);
      read_widths(d, "model.dims", "head_dense", dims.head_dense);
    }
  }

  if (root.contains("fit")) {
    const json& f = root.at("fit");
    require_object(f, "fit");
    reject_unknown(f, "fit",
                   {"lr0", "beta1", "beta2", "eps", "batch_size", "max_epochs", "early_stop_patience",
                    "plateau_patience", "plateau_factor", "min_lr", "min_delta", "class_weights",
                    "grad_clip_norm", "evaluate_train"});
    read(f, "fit", "lr0", c.fit.lr0);
    read(f, "fit", "beta1", c.fit.beta1);
    read(f, "fit", "beta2", c.fit.beta2);
    read(f, "fit", "eps", c.fit.eps);
    read_count(f, "fit", "batch_size", c.fit.batch_size);
    read_count(f, "fit", "max_epochs", c.fit.max_epochs);
    read_count(f, "fit", "early_stop_patience", c.fit.early_stop_patience);
    read_count(f, "fit", "plateau_patience", c.fit.plateau_patience);
    read(f, "fit", "plateau_factor", c.fit.plateau_factor);
    read(f, "fit", "min_lr", c.fit.min_lr);
    read(f, "fit", "min_delta", c.fit.min_delta);
    if (f.contains("class_weights")) {
      const json& w = f.at("class_weights");
      if (!w.is_array() || w.size() != kNumClasses) config_error("'fit.class_weights' must list 4 numbers");
      for (std::size_t k = 0; k < kNumClasses; ++k) {
        if (!w[k].is_number()) config_error("'fit.class_weights' must list 4 numbers");
        c.fit.class_weights[k] = w[k].get<double>();
      }
    }
    read(f, "fit", "grad_clip_norm", c.fit.grad_clip_norm);
    read(f, "fit", "evaluate_train", c.fit.evaluate_train);
  }

  if (root.contains("output")) {
    const json& o = root.at("output");
    require_object(o, "output");
    reject_unknown(o, "output", {"dir", "checkpoint", "epoch_log", "metrics"});
    read_path(o, "output", "dir", c.output.dir);
    read(o, "output", "checkpoint", c.output.checkpoint);
    read(o, "output", "epoch_log", c.output.epoch_log);
    read(o, "output", "metrics", c.output.metrics);
  }

  c.model.seed = c.seed;
  c.fit.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  RunConfig c = parse_run_config(read_file_text(path));
  // Relative paths are taken relative to the config file.
  const fs::path base = path.parent_path();
  for (fs::path* p : {&c.data.train_dir, &c.data.val_dir, &c.output.dir}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return c;
}

std::string dump_run_config(const RunConfig& c) {
  const ModelDims& d = c.model.dims;
  const json j = {
      {"seed", c.seed},
      {"data",
       {{"train_dir", c.data.train_dir.string()},
        {"val_dir", c.data.val_dir.string()},
        {"val_fraction", c.data.val_fraction},
        {"limit", c.data.limit},
        {"use_calib", c.data.use_calib}}},
      {"model",
       {{"mode", std::string(to_string(c.model.mode))},
        {"dropout_rate", c.model.dropout_rate},
        {"ortho_weight", c.model.ortho_weight},
        {"dims",
         {{"num_points", d.num_points},
          {"image_size", d.image_size},
          {"tnet_point", d.tnet_point},
          {"tnet_dense", d.tnet_dense},
          {"lidar_point", d.lidar_point},
          {"rgb_conv", d.rgb_conv},
          {"rgb_feature", d.rgb_feature},
          {"head_dense", d.head_dense}}}}},
      {"fit",
       {{"lr0", c.fit.lr0},
        {"beta1", c.fit.beta1},
        {"beta2", c.fit.beta2},
        {"eps", c.fit.eps},
        {"batch_size", c.fit.batch_size},
        {"max_epochs", c.fit.max_epochs},
        {"early_stop_patience", c.fit.early_stop_patience},
        {"plateau_patience", c.fit.plateau_patience},
        {"plateau_factor", c.fit.plateau_factor},
        {"min_lr", c.fit.min_lr},
        {"min_delta", c.fit.min_delta},
        {"class_weights", c.fit.class_weights},
        {"grad_clip_norm", c.fit.grad_clip_norm},
        {"evaluate_train", c.fit.evaluate_train}}},
      {"output",
       {{"dir", c.output.dir.string()},
        {"checkpoint", c.output.checkpoint},
        {"epoch_log", c.output.epoch_log},
        {"metrics", c.output.metrics}}},
  };
  return j.dump(2) + "\n";
}

}  // namespace lidarvoice
