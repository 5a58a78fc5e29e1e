#include "disasterlens/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "disasterlens/errors.hpp"
#include "disasterlens/eval.hpp"
#include "disasterlens/image.hpp"
#include "disasterlens/parallel.hpp"
#include "disasterlens/synthetic.hpp"
#include "disasterlens/training.hpp"

namespace disasterlens::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kThreadsEnv = "DISASTERLENS_THREADS";

struct PipelineOptions {
  std::string arch;
  std::string weights;
  std::string manifest;
  std::string out = ".";
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool deterministic = false;
  std::vector<float> means{kImageNetMeans.begin(), kImageNetMeans.end()};
};

struct SplitOptions {
  std::optional<std::size_t> test_count;
  std::optional<double> train_fraction;
  bool stratified = false;
};

struct TrainOptions {
  std::size_t epochs = 35;
  std::size_t batch_size = 16;
  float lr = 0.01f;
  float momentum = 0.9f;
  bool no_augment = false;
  double max_translation = 0.1;
  bool no_transpose = false;
  bool no_hflip = false;
  bool no_vflip = false;
  double rgb_jitter = 0.1;
  bool zero_init_head = false;
};

void add_config_option(CLI::App* app) {
  // Consumed by expand_config before parsing; registered so --help documents it.
  static std::string ignored;
  app->add_option("--config", ignored, "key=value file; keys are long flag names, command-line flags override it");
}

void add_pipeline_options(CLI::App* app, PipelineOptions& o, bool need_manifest) {
  app->add_option("--arch", o.arch, "Architecture file")->required()->check(CLI::ExistingFile);
  app->add_option("--weights", o.weights, "Backbone weights (CNWF)")->required()->check(CLI::ExistingFile);
  auto* m = app->add_option("--manifest", o.manifest, "Dataset manifest CSV (path,label)")->check(CLI::ExistingFile);
  if (need_manifest) m->required();
  app->add_option("--out", o.out, "Output directory")->capture_default_str();
  app->add_option("--seed", o.seed, "Master seed for split, shuffle, augmentation and init")->capture_default_str();
  app->add_option("--threads", o.threads, std::string("Worker threads (0: $") + kThreadsEnv + " or all cores)")
      ->capture_default_str();
  app->add_flag("--deterministic", o.deterministic, "Reproducible outputs (wall-clock column written as 0)");
  app->add_option("--means", o.means, "Per-channel RGB means subtracted after resizing")
      ->expected(3)
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  add_config_option(app);
}

void add_split_options(CLI::App* app, SplitOptions& o) {
  auto* count = app->add_option("--test-count", o.test_count, "Exact number of test images");
  auto* frac = app->add_option("--train-fraction", o.train_fraction, "Fraction of images used for training");
  count->excludes(frac);
  app->add_flag("--stratified", o.stratified, "Stratify the split by class");
}

void add_train_options(CLI::App* app, TrainOptions& o) {
  app->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  app->add_option("--batch-size", o.batch_size, "Mini-batch size")->capture_default_str();
  app->add_option("--lr", o.lr, "SGD learning rate")->capture_default_str();
  app->add_option("--momentum", o.momentum, "SGD momentum")->capture_default_str();
  app->add_flag("--no-augment", o.no_augment, "Disable training-time augmentation");
  app->add_option("--max-translation", o.max_translation, "Max translation as a fraction of the side")
      ->capture_default_str();
  app->add_flag("--no-transpose", o.no_transpose, "Disable random transposes");
  app->add_flag("--no-hflip", o.no_hflip, "Disable random horizontal flips");
  app->add_flag("--no-vflip", o.no_vflip, "Disable random vertical flips");
  app->add_option("--rgb-jitter", o.rgb_jitter, "Stddev of the RGB lighting coefficients")->capture_default_str();
  app->add_flag("--zero-init-head", o.zero_init_head, "Zero-initialise the head instead of Glorot");
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv(kThreadsEnv)) {
    try {
      const auto n = std::stoul(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
      throw ConfigError(std::string(kThreadsEnv) + " must be a positive integer");
    }
  }
  return default_thread_count();
}

std::array<float, 3> means_of(const PipelineOptions& o) {
  if (o.means.size() != 3) throw ConfigError("--means takes exactly three values");
  return {o.means[0], o.means[1], o.means[2]};
}

std::size_t image_side(const ArchitectureSpec& spec) {
  const auto& in = spec.input();
  if (in.channels != 3 || in.height != in.width) {
    throw ConfigError("architecture input must be 3 x T x T, got " + std::to_string(in.channels) + " x " +
                      std::to_string(in.height) + " x " + std::to_string(in.width));
  }
  return in.height;
}

TrainConfig train_config(const TrainOptions& t, const PipelineOptions& p) {
  TrainConfig cfg;
  cfg.epochs = t.epochs;
  cfg.batch_size = t.batch_size;
  cfg.lr = t.lr;
  cfg.momentum = t.momentum;
  cfg.augment = !t.no_augment;
  cfg.augmentation.max_translation_fraction = t.max_translation;
  cfg.augmentation.enable_transpose = !t.no_transpose;
  cfg.augmentation.enable_horizontal_flip = !t.no_hflip;
  cfg.augmentation.enable_vertical_flip = !t.no_vflip;
  cfg.augmentation.rgb_jitter_stddev = t.rgb_jitter;
  cfg.augmentation.seed = derive_seed(p.seed, "augmentation");
  cfg.seed = derive_seed(p.seed, "train");
  cfg.deterministic = p.deterministic;
  cfg.head_init = t.zero_init_head ? HeadInit::zeros : HeadInit::glorot;
  cfg.threads = resolve_threads(p.threads);
  return cfg;
}

std::optional<SplitSpec> split_spec(const SplitOptions& s, std::uint64_t seed) {
  if (!s.test_count && !s.train_fraction) return std::nullopt;
  SplitSpec spec;
  spec.test_count = s.test_count;
  spec.train_fraction = s.train_fraction;
  spec.seed = derive_seed(seed, "split");
  spec.stratified = s.stratified;
  return spec;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void report_manifest(const Manifest& m, std::ostream& err) {
  err << "manifest: " << m.samples.size() << " images";
  for (std::size_t c = 0; c < kClassCount; ++c) err << (c ? ", " : " (") << class_name(c) << " " << m.class_counts[c];
  err << ")\n";
  if (m.missing_files > 0) err << "warning: " << m.missing_files << " listed files are missing and were skipped\n";
}

struct LoadedModel {
  ArchitectureSpec spec;
  ModelWeights weights;
};

LoadedModel load_model(const PipelineOptions& o) {
  LoadedModel m{load_arch(o.arch), load_weights(o.weights)};
  if (m.spec.class_count() != kClassCount) {
    throw ConfigError("architecture head has " + std::to_string(m.spec.class_count()) + " classes, expected " +
                      std::to_string(kClassCount));
  }
  return m;
}

// Backbone weights plus trained head entries; the result must bind fully.
Head attach_head(LoadedModel& model, const std::string& head_path) {
  const auto head_weights = load_weights(head_path);
  model.weights.merge(head_weights);
  bind_weights(model.spec, model.weights, true);
  return head_from_weights(model.spec, model.weights);
}

int cmd_train(const PipelineOptions& p, const SplitOptions& s, const TrainOptions& t, std::ostream& out,
              std::ostream& err) {
  auto model = load_model(p);
  const auto manifest = load_manifest(p.manifest);
  report_manifest(manifest, err);
  auto split = split_spec(s, p.seed);
  if (!split) throw ConfigError("train needs --test-count or --train-fraction");
  const auto [train_samples, test_samples] = split_dataset(manifest.samples, *split);
  const auto cfg = train_config(t, p);
  const auto side = image_side(model.spec);
  const auto train = load_examples(train_samples, side, means_of(p), cfg.threads);
  const auto test = load_examples(test_samples, side, means_of(p), cfg.threads);
  err << "split: " << train.size() << " train / " << test.size() << " test\n";

  const auto digest_before = backbone_digest(model.spec, model.weights);
  const auto result = train_head(model.spec, model.weights, train, test, cfg, [&](const EpochMetrics& m) {
    err << "epoch " << m.epoch << "/" << cfg.epochs << " loss " << m.loss << " precision " << m.precision << "\n";
  });
  if (backbone_digest(model.spec, model.weights) != digest_before) throw Error("backbone changed during training");

  fs::create_directories(p.out);
  const fs::path dir(p.out);
  save_weights(head_to_weights(model.spec, result.best_head()), dir / "head.cnwf");
  write_metrics_csv(dir / "metrics.csv", result.metrics);
  {
    auto f = open_output(dir / "curve.csv");
    write_curve_csv(f, epoch_curve(result.metrics));
  }
  write_manifest(dir / "train_split.csv", train_samples);
  write_manifest(dir / "test_split.csv", test_samples);

  const auto& best = result.metrics[result.best_epoch - 1];
  char line[160];
  std::snprintf(line, sizeof line, "best epoch %zu of %zu: precision %.6f\n", result.best_epoch, result.metrics.size(),
                best.precision);
  out << line;
  out << "wrote " << (dir / "head.cnwf").string() << ", " << (dir / "metrics.csv").string() << "\n";
  return 0;
}

int cmd_eval(const PipelineOptions& p, const SplitOptions& s, const std::string& head_path, std::ostream& out,
             std::ostream& err) {
  auto model = load_model(p);
  const Head head = attach_head(model, head_path);
  const auto manifest = load_manifest(p.manifest);
  report_manifest(manifest, err);
  std::vector<Sample> samples = manifest.samples;
  if (const auto split = split_spec(s, p.seed)) samples = split_dataset(manifest.samples, *split).second;
  const auto threads = resolve_threads(p.threads);
  const auto test = load_examples(samples, image_side(model.spec), means_of(p), threads);
  const auto result = evaluate(model.spec, model.weights, head, test, threads);
  const auto wrong = misclassifications(result, test);

  fs::create_directories(p.out);
  const fs::path dir(p.out);
  {
    auto f = open_output(dir / "confusion.txt");
    f << result.confusion.render();
  }
  {
    auto f = open_output(dir / "confusion.csv");
    result.confusion.write_csv(f);
  }
  {
    auto f = open_output(dir / "misclassified.csv");
    write_misclassification_csv(f, wrong);
  }
  char line[96];
  std::snprintf(line, sizeof line, "accuracy %.6f (%llu/%llu)\n", result.accuracy,
                static_cast<unsigned long long>(result.confusion.trace()),
                static_cast<unsigned long long>(result.confusion.total()));
  out << line << result.confusion.render();
  out << wrong.size() << " misclassified images listed in " << (dir / "misclassified.csv").string() << "\n";
  return 0;
}

int cmd_predict(const PipelineOptions& p, const std::string& head_path, const std::string& image, std::ostream& out) {
  auto model = load_model(p);
  const Head head = attach_head(model, head_path);
  const Tensor img = preprocess(decode_image(image), image_side(model.spec), means_of(p));
  const Tensor batch = img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
  const Tensor probs = forward_head(forward_features(model.spec, model.weights, batch), head);
  const auto label = argmax_rows(probs)[0];
  out << "predicted," << class_name(label) << "\n";
  char buf[96];
  for (std::size_t c = 0; c < probs.dim(1); ++c) {
    std::snprintf(buf, sizeof buf, "%s,%.6f\n", std::string(class_name(c)).c_str(), static_cast<double>(probs.at(0, c)));
    out << buf;
  }
  return 0;
}

int cmd_sweep(const PipelineOptions& p, const TrainOptions& t, const std::vector<double>& ratios, std::size_t repeats,
              bool stratified, std::ostream& out, std::ostream& err) {
  auto model = load_model(p);
  const auto manifest = load_manifest(p.manifest);
  report_manifest(manifest, err);
  SweepConfig cfg;
  cfg.ratios = ratios;
  cfg.repeats = repeats;
  cfg.stratified = stratified;
  cfg.train = train_config(t, p);
  cfg.train.seed = p.seed;
  const auto examples = load_examples(manifest.samples, image_side(model.spec), means_of(p), cfg.train.threads);
  const auto rows = split_sweep(model.spec, model.weights, examples, cfg);
  fs::create_directories(p.out);
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  auto f = open_output(fs::path(p.out) / "sweep.csv");
  f << csv.str();
  out << csv.str();
  return 0;
}

int cmd_curve(const std::string& metrics_path, const std::string& out_dir, std::ostream& out) {
  const auto metrics = read_metrics_csv(metrics_path);
  const auto rows = epoch_curve(metrics);
  std::ostringstream csv;
  write_curve_csv(csv, rows);
  fs::create_directories(out_dir);
  auto f = open_output(fs::path(out_dir) / "curve.csv");
  f << csv.str();
  out << csv.str();
  return 0;
}

int cmd_validate(const std::string& path, const std::string& arch, std::ostream& out) {
  const auto weights = load_weights(path);
  std::size_t frozen = 0, params = 0;
  for (const auto& e : weights.entries()) {
    frozen += e.frozen;
    params += e.tensor.size();
  }
  out << "ok: " << path << ": CNWF v" << kCnwfVersion << ", " << weights.size() << " entries (" << frozen
      << " frozen), " << params << " parameters, checksum valid\n";
  for (const auto& e : weights.entries()) {
    out << "  " << e.name << " " << shape_string(e.tensor.shape()) << (e.frozen ? " frozen" : " trainable") << "\n";
  }
  if (!arch.empty()) {
    const auto spec = load_arch(arch);
    const auto report = check_binding(spec, weights, false);
    if (!report.ok()) throw ShapeError("weights do not bind to " + arch + ": " + report.summary());
    out << "binds to " << arch << " with zero mismatches (feature dim " << spec.feature_dim() << ")\n";
  }
  return 0;
}

int cmd_make_synthetic(const std::string& out_dir, std::size_t per_class, std::size_t side, std::uint64_t seed,
                       std::ostream& out) {
  SyntheticConfig cfg;
  cfg.per_class = per_class;
  cfg.side = side;
  cfg.seed = derive_seed(seed, "synthetic-images");
  const auto files = write_synthetic_dataset(out_dir, cfg, derive_seed(seed, "synthetic-backbone"));
  out << "wrote " << per_class * kClassCount << " images, " << files.manifest.string() << ", " << files.arch.string()
      << ", " << files.weights.string() << "\n";
  return 0;
}

// Inserts `--key=value` tokens from a --config file right after the subcommand,
// so that explicit flags later on the command line take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::optional<std::string> config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (!config || args.empty()) return args;
  std::ifstream in(*config);
  if (!in) throw ConfigError("cannot open config file " + *config);
  std::vector<std::string> injected;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(*config + ": line " + std::to_string(line_no) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || key == "config") throw ConfigError(*config + ": line " + std::to_string(line_no) + ": bad key");
    injected.push_back("--" + key + "=" + value);
  }
  std::vector<std::string> out{args.front()};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"disasterlens: frozen-backbone transfer learning for aerial disaster scenes", "disasterlens"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  PipelineOptions train_p, eval_p, predict_p, sweep_p;
  SplitOptions train_s, eval_s;
  TrainOptions train_t, sweep_t;

  auto* train = app.add_subcommand("train", "Train the dense head on frozen backbone features");
  add_pipeline_options(train, train_p, true);
  add_split_options(train, train_s);
  add_train_options(train, train_t);

  std::string eval_head;
  auto* eval = app.add_subcommand("eval", "Accuracy, confusion matrix and misclassification report");
  add_pipeline_options(eval, eval_p, true);
  add_split_options(eval, eval_s);
  eval->add_option("--head", eval_head, "Trained head weights (CNWF)")->required()->check(CLI::ExistingFile);

  std::string predict_head, predict_image;
  auto* predict = app.add_subcommand("predict", "Classify one image");
  add_pipeline_options(predict, predict_p, false);
  predict->add_option("--head", predict_head, "Trained head weights (CNWF)")->required()->check(CLI::ExistingFile);
  predict->add_option("image", predict_image, "PPM or PNG image")->required()->check(CLI::ExistingFile);

  std::vector<double> ratios = kDefaultSweepRatios;
  std::size_t repeats = 1;
  bool sweep_stratified = false;
  auto* sweep = app.add_subcommand("sweep", "Accuracy across train/test split ratios");
  add_pipeline_options(sweep, sweep_p, true);
  add_train_options(sweep, sweep_t);
  sweep->add_option("--ratios", ratios, "Train fractions, comma separated")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->capture_default_str();
  sweep->add_option("--repeats", repeats, "Runs per ratio (mean and stddev reported)")->capture_default_str();
  sweep->add_flag("--stratified", sweep_stratified, "Stratify each split by class");

  std::string metrics_path, curve_out = ".";
  auto* curve = app.add_subcommand("curve", "Per-epoch precision table with the best epoch flagged");
  curve->add_option("--metrics", metrics_path, "metrics.csv written by train")->required()->check(CLI::ExistingFile);
  curve->add_option("--out", curve_out, "Output directory")->capture_default_str();
  add_config_option(curve);

  std::string validate_path, validate_arch;
  auto* validate = app.add_subcommand("validate-weights", "Check a CNWF file's integrity");
  validate->add_option("file", validate_path, "CNWF weights file")->required()->check(CLI::ExistingFile);
  validate->add_option("--arch", validate_arch, "Also check binding to this architecture")->check(CLI::ExistingFile);
  add_config_option(validate);

  std::string synth_out = "synthetic";
  std::size_t per_class = 100, side = 64;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("make-synthetic", "Write the procedural texture dataset and a random backbone");
  synth->add_option("--out", synth_out, "Output directory")->capture_default_str();
  synth->add_option("--per-class", per_class, "Images per class")->capture_default_str();
  synth->add_option("--size", side, "Image side (multiple of 8)")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();
  add_config_option(synth);

  try {
    std::vector<std::string> args;
    try {
      args = expand_config(raw_args);
    } catch (const ConfigError& e) {
      err << "error: " << e.what() << "\n";
      return 2;
    }
    try {
      std::vector<std::string> reversed(args.rbegin(), args.rend());
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? 0 : 2;
    }

    if (*train) return cmd_train(train_p, train_s, train_t, out, err);
    if (*eval) return cmd_eval(eval_p, eval_s, eval_head, out, err);
    if (*predict) return cmd_predict(predict_p, predict_head, predict_image, out);
    if (*sweep) return cmd_sweep(sweep_p, sweep_t, ratios, repeats, sweep_stratified, out, err);
    if (*curve) return cmd_curve(metrics_path, curve_out, out);
    if (*validate) return cmd_validate(validate_path, validate_arch, out);
    if (*synth) return cmd_make_synthetic(synth_out, per_class, side, synth_seed, out);
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace disasterlens::cli
