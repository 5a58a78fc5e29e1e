// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "disasterlens/cli.hpp"
#include "disasterlens/errors.hpp"
#include "disasterlens/eval.hpp"
#include "disasterlens/image.hpp"
#include "disasterlens/nn_ops.hpp"
#include "disasterlens/synthetic.hpp"
#include "disasterlens/training.hpp"
#include "test_support.hpp"

using namespace disasterlens;
using namespace disasterlens::testing;

namespace {

constexpr double kConvTolerance = 1e-5;
constexpr double kConvSeconds = 10.0;
constexpr std::size_t kConvCases = 100;

constexpr double kGradStep = 1e-3;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 10.0;
constexpr std::size_t kGradInstances = 50;

constexpr double kLnKTolerance = 1e-3;

constexpr std::size_t kSyntheticPerClass = 100;
constexpr std::size_t kSyntheticSide = 64;
constexpr double kSyntheticTrainFraction = 0.8;
constexpr std::size_t kSyntheticEpochs = 30;
constexpr double kSyntheticMinAccuracy = 0.90;
constexpr double kSyntheticSeconds = 300.0;

constexpr std::size_t kCurveEpochs = 35;
constexpr std::uint64_t kMasterSeed = 2024;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Check {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Check()>& body) {
  Check c;
  try {
    c = body();
  } catch (const std::exception& e) {
    c = {false, std::string("exception: ") + e.what()};
  }
  if (!c.pass) ++failures;
  std::printf("[%s] %s: %s\n", c.pass ? "PASS" : "FAIL", name.c_str(), c.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// Shared synthetic world: 500 texture images and a random frozen 3-block backbone.
struct World {
  ArchitectureSpec spec = small_backbone_arch(kSyntheticSide);
  ModelWeights weights = random_backbone_weights(spec, derive_seed(kMasterSeed, "backbone"));
  std::vector<Example> examples =
      synthetic_examples({kSyntheticPerClass, kSyntheticSide, derive_seed(kMasterSeed, "images")});
  std::vector<Example> train, test;
  World() {
    SplitSpec s;
    s.train_fraction = kSyntheticTrainFraction;
    s.seed = derive_seed(kMasterSeed, "split");
    const auto idx = split_indices(examples.size(), s);
    std::tie(train, test) = split_dataset(std::span<const Example>(examples), idx);
  }
  TrainConfig config(std::size_t epochs) const {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.seed = derive_seed(kMasterSeed, "train");
    cfg.augmentation.seed = derive_seed(kMasterSeed, "augmentation");
    cfg.deterministic = true;
    return cfg;
  }
};

double world_build_seconds = 0.0;

World& world() {
  static World w = [] {
    const auto t0 = Clock::now();
    World built;
    world_build_seconds = seconds_since(t0);
    return built;
  }();
  return w;
}

Check conv_oracle() {
  std::mt19937 gen(1);
  std::uniform_int_distribution<std::size_t> n_d(1, 2), cf(1, 4), side(1, 10), bit(0, 1);
  const auto t0 = Clock::now();
  double worst = 0.0, worst_ref = 0.0;
  std::size_t done = 0;
  while (done < kConvCases) {
    const std::size_t n = n_d(gen), c = cf(gen), f = cf(gen), h = side(gen), w = side(gen);
    const std::size_t k = bit(gen) ? 3 : 1, s = bit(gen) ? 2 : 1, p = bit(gen);
    if (h + 2 * p < k || w + 2 * p < k || (h + 2 * p - k) % s || (w + 2 * p - k) % s) continue;
    ++done;
    auto x = random_tensor({n, c, h, w}, gen);
    auto kern = random_tensor({f, c, k, k}, gen);
    auto bias = random_tensor({f}, gen);
    const auto fast = conv2d_forward(x, kern, bias, s, p);
    const auto ref = conv2d_reference(x, kern, bias, s, p);
    std::size_t ho = 0, wo = 0;
    const auto oracle = naive_conv(x, kern, bias, s, p, ho, wo);
    if (fast.shape() != ref.shape() || fast.size() != oracle.size()) return {false, "shape mismatch"};
    worst = std::max(worst, max_relative_error(fast, ref));
    worst_ref = std::max(worst_ref, max_relative_error(fast.data(), oracle));
  }
  const double secs = seconds_since(t0);
  return {worst <= kConvTolerance && worst_ref <= kConvTolerance && secs < kConvSeconds,
          fmt("%.0f cases, max rel err %.2e vs reference path, %.2e vs test oracle (tol 1e-5), %.2f s (limit 10 s)",
              static_cast<double>(done), worst, worst_ref, secs)};
}

Check gradient_checks() {
  std::mt19937 gen(2);
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::size_t inst = 0; inst < kGradInstances; ++inst) {
    const std::size_t n = 1 + gen() % 4, d = 1 + gen() % 8, k = 2 + gen() % 4;
    auto x = random_tensor({n, d}, gen);
    DenseParams p(random_tensor({d, k}, gen), random_tensor({k}, gen));
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = gen() % k;

    const auto logits = dense_forward(x, p);
    const auto dz = softmax_xent_grad(logits, labels);
    const auto g = dense_backward(x, p, dz);

    auto xd = to_double(x), wd = to_double(p.weights), bd = to_double(p.bias);
    auto loss = [&] { return head_loss(xd, wd, bd, n, d, k, labels); };
    worst = std::max(worst, max_relative_error(g.weights.data(), central_differences(wd, kGradStep, loss)));
    worst = std::max(worst, max_relative_error(g.bias.data(), central_differences(bd, kGradStep, loss)));
    worst = std::max(worst, max_relative_error(g.input.data(), central_differences(xd, kGradStep, loss)));

    auto zd = to_double(logits);
    std::vector<double> eye(k * k, 0.0), zero(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) eye[i * k + i] = 1.0;
    auto zloss = [&] { return head_loss(zd, eye, zero, n, k, k, labels); };
    worst = std::max(worst, max_relative_error(dz.data(), central_differences(zd, kGradStep, zloss)));
  }
  const double secs = seconds_since(t0);
  return {worst <= kGradTolerance && secs < kGradSeconds,
          fmt("%.0f instances, max rel err %.2e (tol 1e-4, step 1e-3), %.3f s (limit 10 s)",
              static_cast<double>(kGradInstances), worst, secs)};
}

Check first_epoch_loss() {
  const double ln5 = std::log(5.0);
  double worst = 0.0;
  std::size_t runs = 0;
  // full protocol on the synthetic world
  {
    auto& w = world();
    auto cfg = w.config(1);
    cfg.head_init = HeadInit::zeros;
    const auto r = train_head(w.spec, w.weights, w.train, w.test, cfg);
    worst = std::max(worst, std::abs(r.metrics[0].loss - ln5));
    ++runs;
  }
  // arbitrary feature sets of different sizes and scales
  std::mt19937 gen(3);
  for (std::size_t trial = 0; trial < 5; ++trial) {
    const std::size_t n = 5 + 37 * trial, d = 1 + 3 * trial;
    const float scale = std::pow(10.0f, static_cast<float>(trial) - 2.0f);
    auto x = random_tensor({n, d}, gen, -scale, scale);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = gen() % 5;
    Head head;
    head.layers.push_back(DenseParams::zeros(d, 5));
    TrainConfig cfg;
    cfg.epochs = 1;
    auto rows = [&x](std::span<const std::size_t> idx, std::size_t) {
      Tensor out({idx.size(), x.dim(1)});
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < x.dim(1); ++j) out.at(i, j) = x.at(idx[i], j);
      return out;
    };
    const auto r = fit_head(head, rows, labels, x, labels, cfg);
    worst = std::max(worst, std::abs(r.metrics[0].loss - ln5));
    ++runs;
  }
  return {worst <= kLnKTolerance,
          fmt("%.0f datasets, max |loss - ln 5| = %.2e (tol 1e-3)", static_cast<double>(runs), worst)};
}

struct EndToEnd {
  TrainResult result;
  EvalResult eval;
  double seconds = 0.0;
  std::string digest_before, digest_after;
  bool weights_unchanged = false;
};

const EndToEnd& end_to_end() {
  static EndToEnd e = [] {
    auto& w = world();
    EndToEnd out;
    const auto copy = w.weights;
    out.digest_before = backbone_digest(w.spec, w.weights);
    const auto t0 = Clock::now();
    out.result = train_head(w.spec, w.weights, w.train, w.test, w.config(kSyntheticEpochs));
    out.eval = evaluate(w.spec, w.weights, out.result.best_head(), w.test);
    out.seconds = seconds_since(t0);
    out.digest_after = backbone_digest(w.spec, w.weights);
    out.weights_unchanged = w.weights.bit_equal(copy);
    return out;
  }();
  return e;
}

Check synthetic_end_to_end() {
  auto& w = world();
  const auto& e = end_to_end();
  const double total = world_build_seconds + e.seconds;
  const auto& best = e.result.metrics[e.result.best_epoch - 1];
  const bool ok = w.examples.size() == 500 && best.precision >= kSyntheticMinAccuracy &&
                  e.eval.accuracy == best.precision && e.result.metrics.size() == kSyntheticEpochs &&
                  total < kSyntheticSeconds;
  std::ostringstream d;
  d << w.examples.size() << " images " << kSyntheticSide << "x" << kSyntheticSide << ", " << w.train.size() << "/"
    << w.test.size() << " split, best test accuracy " << best.precision << " at epoch " << e.result.best_epoch
    << " of " << kSyntheticEpochs << " (min 0.90), final " << e.result.metrics.back().precision << ", "
    << fmt("%.1f s (limit 300 s)", total);
  return {ok, d.str()};
}

Check sweep_harness() {
  auto& w = world();
  SweepConfig cfg;
  cfg.train = w.config(TrainConfig{}.epochs);
  cfg.train.seed = kMasterSeed;
  const auto t0 = Clock::now();
  const auto a = split_sweep(w.spec, w.weights, w.examples, cfg);
  const auto b = split_sweep(w.spec, w.weights, w.examples, cfg);
  std::ostringstream ca, cb;
  write_sweep_csv(ca, a);
  write_sweep_csv(cb, b);
  const std::string csv = ca.str();
  const auto rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1;
  double lo = 1.0, hi = 0.0;
  for (const auto& r : a) {
    lo = std::min(lo, r.accuracy);
    hi = std::max(hi, r.accuracy);
  }
  std::ostringstream d;
  d << rows << " rows, rerun " << (csv == cb.str() ? "byte-identical" : "DIFFERS") << ", accuracies";
  for (const auto& r : a) d << " " << r.ratio << ":" << r.accuracy;
  d << fmt(" (spread %.2f), %.1f s", hi - lo, seconds_since(t0));
  return {a.size() == 5 && rows == 5 && csv == cb.str(), d.str()};
}

struct CurveRun {
  TrainResult result;
  std::string digest_before, digest_after;
};

const CurveRun& curve_run() {
  static CurveRun c = [] {
    auto& w = world();
    CurveRun out;
    out.digest_before = backbone_digest(w.spec, w.weights);
    out.result = train_head(w.spec, w.weights, w.train, w.test, w.config(kCurveEpochs));
    out.digest_after = backbone_digest(w.spec, w.weights);
    return out;
  }();
  return c;
}

Check epoch_curve_best() {
  const auto& run = curve_run();
  auto metrics = run.result.metrics;
  const auto rows = epoch_curve(metrics);
  std::size_t flagged = 0, flag_epoch = 0;
  for (const auto& r : rows)
    if (r.best) {
      ++flagged;
      flag_epoch = r.epoch;
    }
  std::ostringstream csv;
  write_curve_csv(csv, rows);
  const auto text = csv.str();
  const auto csv_rows = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) - 1;

  // append strictly worse epochs and re-derive the flag each time
  bool stable = flag_epoch == run.result.best_epoch;
  const double best = metrics[flag_epoch - 1].precision;
  std::mt19937 gen(5);
  for (int i = 0; i < 20 && stable; ++i) {
    std::uniform_real_distribution<double> worse(0.0, best);
    double p = worse(gen);
    if (!(p < best)) p = std::nextafter(best, 0.0);
    metrics.push_back({metrics.size() + 1, 1.0, p, 0.0, 1.0});
    const auto again = epoch_curve(metrics);
    std::size_t count = 0, at = 0;
    for (const auto& r : again)
      if (r.best) {
        ++count;
        at = r.epoch;
      }
    stable = count == 1 && at == flag_epoch && select_best_epoch(metrics) == flag_epoch;
  }
  std::ostringstream d;
  d << run.result.metrics.size() << " metric rows, " << csv_rows << " curve rows, " << flagged
    << " flagged (epoch " << flag_epoch << "), flag " << (stable ? "unchanged" : "CHANGED")
    << " after appending 20 worse epochs";
  return {run.result.metrics.size() == kCurveEpochs && csv_rows == kCurveEpochs && flagged == 1 && stable, d.str()};
}

Check confusion_algebra() {
  auto& w = world();
  std::vector<EvalResult> evals{end_to_end().eval};
  evals.push_back(evaluate(w.spec, w.weights, curve_run().result.best_head(), w.test));
  for (std::uint64_t s = 0; s < 3; ++s) evals.push_back(evaluate(w.spec, w.weights, init_head(w.spec, HeadInit::glorot, s), w.test));
  std::vector<std::size_t> truth = labels_of(w.test);
  std::vector<Prediction> perfect;
  for (auto t : truth) perfect.push_back({t, t, 1.0f});
  const auto oracle = evaluate_predictions(perfect);

  bool ok = true;
  for (const auto& r : evals) {
    std::vector<std::uint64_t> counts(r.confusion.classes(), 0);
    for (auto t : truth) ++counts[t];
    for (std::size_t c = 0; c < r.confusion.classes(); ++c) ok = ok && r.confusion.row_sum(c) == counts[c];
    ok = ok && r.confusion.total() == w.test.size();
    ok = ok && r.accuracy == static_cast<double>(r.confusion.trace()) / static_cast<double>(r.confusion.total());
    ok = ok && misclassifications(r, w.test).size() + r.confusion.trace() == w.test.size();
  }
  bool diagonal = oracle.accuracy == 1.0;
  for (std::size_t i = 0; i < oracle.confusion.classes(); ++i)
    for (std::size_t j = 0; j < oracle.confusion.classes(); ++j)
      if (i != j) diagonal = diagonal && oracle.confusion.at(i, j) == 0;
  return {ok && diagonal, std::to_string(evals.size()) +
                              " evaluations: row sums = class counts, trace/total = accuracy exactly; perfect "
                              "predictor diagonal: " +
                              (diagonal ? "yes" : "no")};
}

Check frozen_backbone() {
  const auto& e = end_to_end();
  const auto& c = curve_run();
  const bool ok = e.digest_before == e.digest_after && c.digest_before == c.digest_after &&
                  e.digest_before == c.digest_before && e.weights_unchanged;
  return {ok, "SHA-256 " + e.digest_before.substr(0, 16) + "... identical before/after " +
                  std::to_string(kSyntheticEpochs) + "- and " + std::to_string(kCurveEpochs) + "-epoch runs"};
}

Check cnwf_round_trip() {
  std::mt19937 gen(6);
  TempDir dir("acceptance");
  std::size_t sets = 0, rejected = 0, corruptions = 0;
  bool identical = true;
  for (; sets < 25; ++sets) {
    ModelWeights w;
    const std::size_t entries = 1 + gen() % 8;
    for (std::size_t e = 0; e < entries; ++e) {
      Tensor::Shape shape;
      for (std::size_t r = 0, rank = 1 + gen() % 4; r < rank; ++r) shape.push_back(1 + gen() % 6);
      auto t = random_tensor(shape, gen, -100.0f, 100.0f);
      std::uniform_int_distribution<std::uint32_t> bits;
      t[0] = std::bit_cast<float>(bits(gen));  // arbitrary bit pattern, NaNs included
      w.set(std::to_string(e) + ".weights", std::move(t), gen() % 2);
    }
    const auto path = dir / "w.cnwf";
    save_weights(w, path);
    const auto back = load_weights(path);
    identical = identical && back.bit_equal(w);
    for (std::size_t e = 0; e < w.size(); ++e)
      identical = identical && back.entries()[e].frozen == w.entries()[e].frozen;

    auto bytes = encode_cnwf(w);
    for (int k = 0; k < 8; ++k) {
      auto bad = bytes;
      bad[4 + gen() % (bad.size() - 4)] ^= static_cast<std::uint8_t>(1u << (gen() % 8));
      ++corruptions;
      try {
        decode_cnwf(bad);
      } catch (const ChecksumError&) {
        ++rejected;
      }
    }
    auto truncated = bytes;
    truncated.resize(gen() % bytes.size());
    ++corruptions;
    try {
      decode_cnwf(truncated);
    } catch (const FormatError&) {
      ++rejected;
    }
  }
  std::ostringstream d;
  d << sets << " random sets round-tripped " << (identical ? "bit-identically" : "WITH DIFFERENCES") << ", "
    << rejected << "/" << corruptions << " corrupted encodings rejected";
  return {identical && rejected == corruptions, d.str()};
}

void exporter_integration() {
  const char* path = std::getenv("DISASTERLENS_VGG16_WEIGHTS");
  const std::string name = "[SECONDARY] exporter integration";
  if (!path || !*path) {
    std::printf("[SKIP] %s: DISASTERLENS_VGG16_WEIGHTS not set\n", name.c_str());
    return;
  }
  report(name, [&]() -> Check {
    const std::string arch = std::string(DISASTERLENS_DATA_DIR) + "/vgg16.arch";
    std::ostringstream out, err;
    const int code = cli::run({"validate-weights", path, "--arch", arch}, out, err);
    if (code != 0) return {false, "validate-weights exit " + std::to_string(code) + ": " + err.str()};
    const auto spec = load_arch(arch);
    const auto weights = load_weights(path);
    const auto binding = check_binding(spec, weights, false);
    if (!binding.mismatched.empty() || !binding.ok()) return {false, binding.summary()};
    Tensor image;
    if (const char* img = std::getenv("DISASTERLENS_TEST_IMAGE"); img && *img) {
      image = decode_image(img);
    } else {
      image = generate_texture_images({1, 224, 1})[0].image;
    }
    const auto x = stack_images(std::vector<Tensor>{preprocess(image, spec.input().height)});
    const auto f = forward_features(spec, weights, x);
    std::size_t nonzero = 0;
    bool finite = true;
    for (float v : f.data()) {
      finite = finite && std::isfinite(v);
      nonzero += v != 0.0f;
    }
    return {finite && nonzero > 0 && f.dim(1) == 25088,
            "binds with zero mismatches, feature length " + std::to_string(f.dim(1)) + ", " + std::to_string(nonzero) +
                " nonzero, finite: " + (finite ? "yes" : "no")};
  });
}

}  // namespace

int main() {
  report("[PRIMARY] convolution oracle equivalence", conv_oracle);
  report("[PRIMARY] gradient checks", gradient_checks);
  report("[PRIMARY] first-epoch loss law", first_epoch_loss);
  report("[PRIMARY] synthetic end-to-end", synthetic_end_to_end);
  report("[PRIMARY] split-sweep harness", sweep_harness);
  report("[PRIMARY] epoch curve and best epoch", epoch_curve_best);
  report("[PRIMARY] confusion-matrix algebra", confusion_algebra);
  report("[PRIMARY] frozen-backbone invariance", frozen_backbone);
  report("[PRIMARY] CNWF round trip", cnwf_round_trip);
  exporter_integration();
  std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
