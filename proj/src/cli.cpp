#include "drgaze/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "drgaze/checkpoint.hpp"
#include "drgaze/errors.hpp"
#include "drgaze/tensor_io.hpp"

namespace drgaze::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& value) {
  std::size_t v = 0;
  const std::string t = trim(value);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return v;
}

double to_real(const std::string& key, const std::string& value) {
  try {
    return parse_real(trim(value));
  } catch (const FormatError&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  const std::string t = trim(value);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

std::vector<double> to_reals(const std::string& key, const std::string& value, char sep = ',') {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (trim(item).empty()) continue;
    out.push_back(to_real(key, item));
  }
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

const std::set<std::string>& model_keys() {
  static const std::set<std::string> keys{"channels", "features", "blocks", "growth", "layers",
                                          "height", "width", "feature_embedding", "hidden",
                                          "scale_targets"};
  return keys;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k{
      "seed",     "epochs",   "batch_size", "lr",       "milestones",  "gamma",
      "beta1",    "beta2",    "eps",        "precision", "channels",   "features",
      "blocks",   "growth",   "layers",     "height",   "width",       "feature_embedding",
      "hidden",   "scale_targets", "manifest", "out",   "checkpoint",  "val_drivers",
      "test_drivers"};
  return k;
}

bool RunConfig::is_model_key(const std::string& key) { return model_keys().count(key) > 0; }

void RunConfig::set(const std::string& key, const std::string& value) {
  ModelConfig& m = train.model;
  if (key == "seed") train.seed = to_size(key, value);
  else if (key == "epochs") train.epochs = to_size(key, value);
  else if (key == "batch_size") train.batch_size = to_size(key, value);
  else if (key == "lr") train.schedule.base = to_real(key, value);
  else if (key == "milestones") {
    train.schedule.milestones.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!trim(item).empty()) train.schedule.milestones.push_back(to_size(key, item));
    }
  } else if (key == "gamma") train.schedule.gamma = to_real(key, value);
  else if (key == "beta1") train.adam.beta1 = to_real(key, value);
  else if (key == "beta2") train.adam.beta2 = to_real(key, value);
  else if (key == "eps") train.adam.eps = to_real(key, value);
  else if (key == "precision") {
    const std::string t = trim(value);
    if (t == "f32") precision = Precision::kF32;
    else if (t == "f64") precision = Precision::kF64;
    else throw ConfigError("precision: expected f32 or f64, got '" + value + "'");
  } else if (key == "channels") m.eye.channels = to_size(key, value);
  else if (key == "features") m.eye.features = to_size(key, value);
  else if (key == "blocks") m.eye.blocks = to_size(key, value);
  else if (key == "growth") m.eye.growth = to_size(key, value);
  else if (key == "layers") m.eye.layers = to_size(key, value);
  else if (key == "height") m.eye.height = to_size(key, value);
  else if (key == "width") m.eye.width = to_size(key, value);
  else if (key == "feature_embedding") m.feature_embedding = to_size(key, value);
  else if (key == "hidden") m.hidden = to_size(key, value);
  else if (key == "scale_targets") m.scale_targets = to_bool(key, value);
  else if (key == "manifest") manifest = trim(value);
  else if (key == "out") out = trim(value);
  else if (key == "checkpoint") checkpoint = trim(value);
  else if (key == "val_drivers") val_drivers = to_size(key, value);
  else if (key == "test_drivers") test_drivers = to_size(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const {
  const ModelConfig& m = train.model;
  if (key == "seed") return std::to_string(train.seed);
  if (key == "epochs") return std::to_string(train.epochs);
  if (key == "batch_size") return std::to_string(train.batch_size);
  if (key == "lr") return format_real(train.schedule.base);
  if (key == "milestones") return join_sizes(train.schedule.milestones);
  if (key == "gamma") return format_real(train.schedule.gamma);
  if (key == "beta1") return format_real(train.adam.beta1);
  if (key == "beta2") return format_real(train.adam.beta2);
  if (key == "eps") return format_real(train.adam.eps);
  if (key == "precision") return precision == Precision::kF32 ? "f32" : "f64";
  if (key == "manifest") return manifest;
  if (key == "out") return out;
  if (key == "checkpoint") return checkpoint;
  if (key == "val_drivers") return std::to_string(val_drivers);
  if (key == "test_drivers") return std::to_string(test_drivers);
  for (const auto& [k, v] : config_entries(m)) {
    if (k == key) return v;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

fs::path default_manifest(const RunConfig& config) {
  if (!config.manifest.empty()) return config.manifest;
  if (const char* root = std::getenv("DRGAZE_DATA_DIR"); root && *root) {
    return fs::path(root) / "manifest.tsv";
  }
  throw ConfigError("no manifest given (use --manifest or set DRGAZE_DATA_DIR)");
}

// ---------------------------------------------------------------------------
// Images

Image read_ppm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open image " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
  const auto next_int = [&]() {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string comment;
      std::getline(is, comment);
      is >> std::ws;
    }
    long v = -1;
    is >> v;
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw FormatError(path.string() + ": unsupported PPM header");
  is.get();
  Image img;
  img.width = static_cast<std::size_t>(w);
  img.height = static_cast<std::size_t>(h);
  img.rgb.resize(img.width * img.height * 3);
  if (!is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()))) {
    throw FormatError(path.string() + ": truncated PPM data");
  }
  return img;
}

void write_ppm(const fs::path& path, const Image& image) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write image " + path.string());
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!os) throw FormatError("write failed for " + path.string());
}

Image read_road_image(const fs::path& path) {
  std::ifstream probe(path, std::ios::binary);
  char head[4] = {};
  probe.read(head, 4);
  if (probe.gcount() == 4 && std::equal(head, head + 4, kTensorMagic)) {
    const Tensor<float> t = load_tensor<float>(path);
    if (t.rank() != 3 || t.shape()[0] != 3) {
      throw FormatError(path.string() + ": road tensor must be [3,H,W], got " + shape_string(t.shape()));
    }
    Image img;
    img.height = t.shape()[1];
    img.width = t.shape()[2];
    img.rgb.resize(img.width * img.height * 3);
    const std::size_t plane = img.width * img.height;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t k = 0; k < plane; ++k) {
        const float v = std::clamp(t[c * plane + k], 0.0f, 255.0f);
        img.rgb[k * 3 + c] = static_cast<unsigned char>(std::lround(v));
      }
    }
    return img;
  }
  return read_ppm(path);
}

void draw_disc(Image& image, double x, double y, double radius, unsigned char r, unsigned char g,
               unsigned char b) {
  const auto lo_y = static_cast<long>(std::floor(y - radius));
  const auto hi_y = static_cast<long>(std::ceil(y + radius));
  const auto lo_x = static_cast<long>(std::floor(x - radius));
  const auto hi_x = static_cast<long>(std::ceil(x + radius));
  for (long py = std::max(0L, lo_y); py <= std::min(static_cast<long>(image.height) - 1, hi_y); ++py) {
    for (long px = std::max(0L, lo_x); px <= std::min(static_cast<long>(image.width) - 1, hi_x); ++px) {
      const double dx = static_cast<double>(px) - x;
      const double dy = static_cast<double>(py) - y;
      if (dx * dx + dy * dy > radius * radius) continue;
      unsigned char* p = &image.rgb[(static_cast<std::size_t>(py) * image.width + static_cast<std::size_t>(px)) * 3];
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
  }
}

double marker_radius(const Image& image) {
  return std::max(1.0, std::round(12.0 * static_cast<double>(image.width) / kFrameWidth));
}

namespace {

// ---------------------------------------------------------------------------
// Shared command plumbing

struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  CLI::Option* config_option = nullptr;
};

void add_config_options(CLI::App* app, ConfigOptions& opts) {
  opts.config_option = app->add_option("--config", opts.config_path, "key = value run configuration file");
  const RunConfig defaults;
  for (const auto& key : RunConfig::keys()) {
    auto* opt = app->add_option("--" + dashed(key), opts.values[key],
                                "overrides config key '" + key + "' (default: " + defaults.get(key) + ")");
    opts.options.emplace_back(key, opt);
  }
}

struct ResolvedConfig {
  RunConfig config;
  std::set<std::string> explicit_keys;
};

ResolvedConfig resolve(const ConfigOptions& opts) {
  ResolvedConfig r;
  if (!opts.config_path.empty()) {
    r.config = load_run_config(opts.config_path);
    std::ifstream is(opts.config_path);
    std::string line;
    while (std::getline(is, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const auto eq = line.find('=');
      if (eq != std::string::npos) r.explicit_keys.insert(trim(line.substr(0, eq)));
    }
  }
  for (const auto& [key, opt] : opts.options) {
    if (opt->count() == 0) continue;
    r.config.set(key, opts.values.at(key));
    r.explicit_keys.insert(key);
  }
  return r;
}

template <Real T>
struct PreparedData {
  NormalizationStats stats;
  Dataset<T> train;
  Dataset<T> validation;
  Dataset<T> test;
};

template <Real T>
PreparedData<T> prepare_data(const fs::path& manifest, const DatasetSplit& split,
                             const ModelConfig& model) {
  const Shape expected{model.eye.channels, model.eye.height, model.eye.width};
  std::vector<std::string> drivers;
  std::vector<Tensor<T>> images;
  std::vector<std::size_t> sizes;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    auto eyes = load_eye_images<T>(manifest, *part);
    for (std::size_t i = 0; i < eyes.size(); ++i) {
      if (eyes[i].shape() != expected) {
        throw ConfigError("eye image " + (*part)[i].eye_image + " has shape " +
                          shape_string(eyes[i].shape()) + " but the model expects " +
                          shape_string(expected));
      }
      drivers.push_back((*part)[i].driver_id);
      images.push_back(std::move(eyes[i]));
    }
    sizes.push_back(part->size());
  }
  // Partitions are driver-disjoint, so each driver's statistics come from its
  // own images only, whichever partition it sits in.
  PreparedData<T> data;
  data.stats = compute_normalization<T>(drivers, images);
  auto take = [&](std::size_t begin, std::size_t count) {
    return std::vector<Tensor<T>>(std::make_move_iterator(images.begin() + static_cast<std::ptrdiff_t>(begin)),
                                  std::make_move_iterator(images.begin() + static_cast<std::ptrdiff_t>(begin + count)));
  };
  data.train = make_dataset<T>(split.train, take(0, sizes[0]), data.stats);
  data.validation = make_dataset<T>(split.validation, take(sizes[0], sizes[1]), data.stats);
  data.test = make_dataset<T>(split.test, take(sizes[0] + sizes[1], sizes[2]), data.stats);
  return data;
}

Metadata run_metadata(const RunConfig& cfg) {
  Metadata meta;
  for (const auto* key : {"seed", "val_drivers", "test_drivers", "precision", "batch_size", "epochs",
                          "lr", "milestones", "gamma", "beta1", "beta2", "eps"}) {
    std::string value = cfg.get(key);
    if (value.empty()) value = "-";
    meta.emplace_back(key, value);
  }
  return meta;
}

std::string format_metric(double v) { return std::isnan(v) ? "nan" : format_real(v); }

// ---------------------------------------------------------------------------
// train

template <Real T>
int train_command(const RunConfig& cfg, std::ostream& out) {
  const fs::path manifest = default_manifest(cfg);
  if (!fs::exists(manifest)) throw ConfigError("manifest not found: " + manifest.string());
  cfg.train.validate();
  const auto records = load_manifest(manifest);
  if (records.empty()) throw ConfigError("manifest " + manifest.string() + " has no records");
  const DatasetSplit split = split_by_driver(records, cfg.val_drivers, cfg.test_drivers, cfg.train.seed);
  PreparedData<T> data = prepare_data<T>(manifest, split, cfg.train.model);

  const fs::path out_dir = cfg.out;
  fs::create_directories(out_dir);
  write_stats(out_dir / "norm_stats.tsv", data.stats);
  std::ofstream metrics(out_dir / "metrics.csv", std::ios::trunc);
  if (!metrics) throw ConfigError("cannot write " + (out_dir / "metrics.csv").string());
  metrics << "epoch,lr,train_l1,val_l1\n";
  out << "epoch,lr,train_l1,val_l1\n";

  TrainResult<T> result = train_loop<T>(cfg.train, data.train, data.validation, [&](const EpochMetrics& m) {
    const std::string line = std::to_string(m.epoch) + "," + format_real(m.lr) + "," +
                             format_metric(m.train_l1) + "," + format_metric(m.val_l1);
    metrics << line << '\n' << std::flush;
    out << line << '\n' << std::flush;
  });

  Metadata meta = run_metadata(cfg);
  Metadata final_meta = meta;
  final_meta.emplace_back("epoch", std::to_string(cfg.train.epochs - 1));
  Metadata best_meta = meta;
  best_meta.emplace_back("epoch", std::to_string(result.best_epoch));
  save_checkpoint(out_dir / "final.ckpt", result.final_model, final_meta);
  save_checkpoint(out_dir / "best.ckpt", result.best_model, best_meta);
  out << "trained " << result.optimizer_steps << " steps on " << data.train.size() << " samples; best epoch "
      << result.best_epoch << "; checkpoints in " << out_dir.string() << '\n';
  return static_cast<int>(ExitCode::kOk);
}

// ---------------------------------------------------------------------------
// eval

template <Real T>
int eval_command(const RunConfig& cfg, const std::set<std::string>& explicit_keys, std::ostream& out) {
  if (cfg.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  Metadata meta;
  DrGazeModel<T> model;
  try {
    model = load_checkpoint<T>(cfg.checkpoint, &meta);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  for (const auto& [key, value] : config_entries(model.config)) {
    if (explicit_keys.count(key) && cfg.get(key) != value) {
      throw ConfigError("config sets " + key + " = " + cfg.get(key) + " but checkpoint has " + value);
    }
  }
  RunConfig split_cfg = cfg;
  for (const auto& [key, value] : meta) {
    if ((key == "seed" || key == "val_drivers" || key == "test_drivers") && !explicit_keys.count(key)) {
      split_cfg.set(key, value);
    }
  }
  const fs::path manifest = default_manifest(cfg);
  if (!fs::exists(manifest)) throw ConfigError("manifest not found: " + manifest.string());
  const auto records = load_manifest(manifest);
  const DatasetSplit split =
      split_by_driver(records, split_cfg.val_drivers, split_cfg.test_drivers, split_cfg.train.seed);
  PreparedData<T> data = prepare_data<T>(manifest, split, model.config);

  const std::size_t bs = cfg.train.batch_size;
  const double train = evaluate_l1(model, data.train, bs);
  const double val = evaluate_l1(model, data.validation, bs);
  const double test = evaluate_l1(model, data.test, bs);
  out << std::left << std::setw(10) << "Method" << std::setw(24) << "Train error" << std::setw(24)
      << "Val. error" << "Test error" << '\n';
  out << std::setw(10) << "DR-Gaze" << std::setw(24) << format_metric(train) << std::setw(24)
      << format_metric(val) << format_metric(test) << '\n';
  return static_cast<int>(ExitCode::kOk);
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
  std::string eye;
  std::string features;
  std::string road;
  std::string truth;
  std::string stats;
  std::string driver;
};

template <Real T>
int predict_command(const RunConfig& cfg, const std::set<std::string>& explicit_keys,
                    const PredictOptions& opt, std::ostream& out, std::ostream& err) {
  if (cfg.checkpoint.empty()) throw ConfigError("predict needs --checkpoint");
  if (opt.eye.empty()) throw ConfigError("predict needs --eye");
  DrGazeModel<T> model;
  try {
    model = load_checkpoint<T>(cfg.checkpoint);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  Tensor<T> eye = load_tensor<T>(opt.eye);
  const Shape expected{model.config.eye.channels, model.config.eye.height, model.config.eye.width};
  if (eye.shape() != expected) {
    throw ConfigError("eye image shape " + shape_string(eye.shape()) + " does not match model input " +
                      shape_string(expected));
  }
  ChannelStats stats;
  if (!opt.stats.empty()) {
    if (opt.driver.empty()) throw ConfigError("--stats needs --driver");
    stats = read_stats(opt.stats).at(opt.driver);
  } else {
    stats = image_stats(eye);
  }
  normalize_image(eye, stats);

  const auto values = to_reals("feature-values", opt.features);
  if (values.size() != model.config.feature_inputs) {
    throw ConfigError("--feature-values needs " + std::to_string(model.config.feature_inputs) +
                      " comma-separated values, got " + std::to_string(values.size()));
  }
  Tensor<T> features({1, values.size()});
  for (std::size_t i = 0; i < values.size(); ++i) features[i] = static_cast<T>(values[i]);

  const Shape& es = eye.shape();
  const Tensor<T> pred = predict(model, eye.reshaped({1, es[0], es[1], es[2]}), features);
  const double x = pred[0], y = pred[1];
  out << "prediction " << format_real(x) << ' ' << format_real(y) << '\n';

  const double cx = std::clamp(x, 0.0, kFrameWidth - 1.0);
  const double cy = std::clamp(y, 0.0, kFrameHeight - 1.0);
  if (cx != x || cy != y) {
    err << "warning: prediction (" << format_real(x) << ", " << format_real(y)
        << ") lies outside the frame; marker clamped to (" << format_real(cx) << ", " << format_real(cy)
        << ")\n";
  }
  out << "marker " << format_real(cx) << ' ' << format_real(cy) << '\n';

  if (!opt.road.empty()) {
    Image road = read_road_image(opt.road);
    const double sx = static_cast<double>(road.width) / kFrameWidth;
    const double sy = static_cast<double>(road.height) / kFrameHeight;
    const double radius = marker_radius(road);
    if (!opt.truth.empty()) {
      const auto t = to_reals("truth", opt.truth);
      if (t.size() != 2) throw ConfigError("--truth needs x,y");
      draw_disc(road, t[0] * sx, t[1] * sy, radius, 0, 255, 0);
    }
    draw_disc(road, cx * sx, cy * sy, radius, 255, 0, 0);
    const fs::path target = explicit_keys.count("out") ? fs::path(cfg.out) : fs::path("overlay.ppm");
    write_ppm(target, road);
    out << "overlay " << target.string() << '\n';
  }
  return static_cast<int>(ExitCode::kOk);
}

// ---------------------------------------------------------------------------
// gradcheck

int gradcheck_command(double tolerance, std::uint64_t seed, std::ostream& out) {
  GradientCheckOptions opts;
  opts.seed = seed;
  const GradientCheckReport r = gradient_check(ModelConfig::tiny(), tolerance, opts);
  out << "checked " << r.checked_elements << " elements in " << r.checked_tensors << " tensors\n";
  out << "max relative error " << r.max_relative_error << " at " << r.worst_parameter << "[" << r.worst_index
      << "] (analytic " << r.worst_analytic << ", numeric " << r.worst_numeric << ")\n";
  out << (r.passed ? "PASS" : "FAIL") << " (tolerance " << tolerance << ")\n";
  if (!r.passed) {
    out << "gradient mismatch in " << r.worst_parameter << " element " << r.worst_index << '\n';
    return static_cast<int>(ExitCode::kVerificationFailed);
  }
  return static_cast<int>(ExitCode::kOk);
}

template <template <typename> class Command, typename... Args>
int dispatch(Precision p, Args&&... args) {
  if (p == Precision::kF64) return Command<double>::run(std::forward<Args>(args)...);
  return Command<float>::run(std::forward<Args>(args)...);
}

template <typename T>
struct TrainCmd {
  static int run(const RunConfig& c, std::ostream& o) { return train_command<T>(c, o); }
};
template <typename T>
struct EvalCmd {
  static int run(const RunConfig& c, const std::set<std::string>& k, std::ostream& o) {
    return eval_command<T>(c, k, o);
  }
};
template <typename T>
struct PredictCmd {
  static int run(const RunConfig& c, const std::set<std::string>& k, const PredictOptions& p,
                 std::ostream& o, std::ostream& e) {
    return predict_command<T>(c, k, p, o, e);
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"DR-Gaze driver gaze mapping: train, evaluate, predict and verify", "drgaze"};
  app.require_subcommand(1);

  ConfigOptions train_opts, eval_opts, predict_opts;
  auto* train = app.add_subcommand("train", "train a model on a manifest; writes checkpoints and metrics");
  add_config_options(train, train_opts);
  auto* eval = app.add_subcommand("eval", "report mean L1 on the train/val/test driver split");
  add_config_options(eval, eval_opts);
  auto* predict = app.add_subcommand("predict", "predict one gaze point and draw it on the road image");
  add_config_options(predict, predict_opts);
  PredictOptions popt;
  predict->add_option("--eye", popt.eye, "eye crop tensor [c,H,W] (DRGZ)");
  predict->add_option("--feature-values", popt.features, "13 comma-separated feature values");
  predict->add_option("--road", popt.road, "road image (PPM P6 or DRGZ [3,H,W])");
  predict->add_option("--truth", popt.truth, "ground-truth gaze x,y drawn in green");
  predict->add_option("--stats", popt.stats, "normalization stats file from training");
  predict->add_option("--driver", popt.driver, "driver id to look up in --stats");

  auto* grad = app.add_subcommand("gradcheck", "compare backprop against finite differences on the tiny config");
  double tolerance = 1e-4;
  std::uint64_t grad_seed = 7;
  grad->add_option("--tolerance", tolerance, "maximum allowed relative error")->capture_default_str();
  grad->add_option("--seed", grad_seed, "seed for parameters and inputs")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset (manifest + eye tensors)");
  SynthesisOptions sopt;
  std::string synth_out = "synthetic";
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();
  synth->add_option("--drivers", sopt.drivers, "number of drivers")->capture_default_str();
  synth->add_option("--samples", sopt.samples_per_driver, "samples per driver")->capture_default_str();
  synth->add_option("--seed", sopt.seed, "generator seed")->capture_default_str();
  synth->add_option("--channels", sopt.channels, "eye image channels")->capture_default_str();
  synth->add_option("--height", sopt.height, "eye image height")->capture_default_str();
  synth->add_option("--width", sopt.width, "eye image width")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? static_cast<int>(ExitCode::kOk) : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (train->parsed()) {
      const auto r = resolve(train_opts);
      return dispatch<TrainCmd>(r.config.precision, r.config, out);
    }
    if (eval->parsed()) {
      auto r = resolve(eval_opts);
      if (!r.explicit_keys.count("precision") && !r.config.checkpoint.empty() &&
          fs::exists(r.config.checkpoint)) {
        for (const auto& [k, v] : read_checkpoint_header(r.config.checkpoint).metadata) {
          if (k == "precision") r.config.set("precision", v);
        }
      }
      return dispatch<EvalCmd>(r.config.precision, r.config, r.explicit_keys, out);
    }
    if (predict->parsed()) {
      const auto r = resolve(predict_opts);
      return dispatch<PredictCmd>(r.config.precision, r.config, r.explicit_keys, popt, out, err);
    }
    if (grad->parsed()) return gradcheck_command(tolerance, grad_seed, out);
    if (synth->parsed()) {
      const SynthesisReport rep = synthesize_dataset(synth_out, sopt);
      out << "wrote " << rep.records.size() << " records for " << sopt.drivers << " drivers to "
          << rep.manifest.string() << '\n';
      out << "least-squares feature fit L1 " << format_real(rep.ols_l1) << '\n';
      return static_cast<int>(ExitCode::kOk);
    }
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kNumerical);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  }
  return static_cast<int>(ExitCode::kUsage);
}

}  // namespace drgaze::cli
