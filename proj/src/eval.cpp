#include "disasterlens/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "disasterlens/errors.hpp"
#include "disasterlens/image.hpp"

namespace disasterlens {

namespace {

std::string label_text(std::size_t code) {
  return code < kClassCount ? std::string(class_name(code)) : std::to_string(code);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= classes_ || predicted >= classes_) {
    throw LabelError("confusion matrix: label pair (" + std::to_string(truth) + "," + std::to_string(predicted) +
                     ") outside " + std::to_string(classes_) + " classes");
  }
  ++counts_[truth * classes_ + predicted];
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < classes_; ++j) s += at(truth, j);
  return s;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t predicted) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < classes_; ++i) s += at(i, predicted);
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < classes_; ++i) s += at(i, i);
  return s;
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

double ConfusionMatrix::accuracy() const {
  const auto t = total();
  return t == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(t);
}

std::string ConfusionMatrix::render() const {
  auto row_label = [](std::size_t i) { return "[" + std::to_string(i) + "] " + label_text(i); };
  std::size_t name_width = 4;
  for (std::size_t i = 0; i < classes_; ++i) name_width = std::max(name_width, row_label(i).size());
  std::size_t cell = 6;
  for (auto v : counts_) cell = std::max(cell, std::to_string(v).size() + 1);

  std::ostringstream out;
  out << "true \\ predicted\n";
  out << std::string(name_width, ' ');
  for (std::size_t j = 0; j < classes_; ++j) {
    const auto h = "[" + std::to_string(j) + "]";
    out << std::string(cell - std::min(cell, h.size()), ' ') << h;
  }
  out << '\n';
  for (std::size_t i = 0; i < classes_; ++i) {
    const auto name = row_label(i);
    out << name << std::string(name_width - name.size(), ' ');
    for (std::size_t j = 0; j < classes_; ++j) {
      const auto v = std::to_string(at(i, j));
      out << std::string(cell - v.size(), ' ') << v;
    }
    out << '\n';
  }
  char acc[64];
  std::snprintf(acc, sizeof acc, "%.4f", accuracy());
  out << "accuracy " << trace() << "/" << total() << " = " << acc << '\n';
  return out.str();
}

void ConfusionMatrix::write_csv(std::ostream& out) const {
  out << "true";
  for (std::size_t j = 0; j < classes_; ++j) out << ',' << label_text(j);
  out << '\n';
  for (std::size_t i = 0; i < classes_; ++i) {
    out << label_text(i);
    for (std::size_t j = 0; j < classes_; ++j) out << ',' << at(i, j);
    out << '\n';
  }
}

ConfusionMatrix confusion_from(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                               std::size_t classes) {
  if (truth.size() != predicted.size()) throw LabelError("truth and prediction lists differ in length");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

EvalResult evaluate_predictions(std::span<const Prediction> predictions, std::size_t classes) {
  EvalResult r{0.0, ConfusionMatrix(classes), {predictions.begin(), predictions.end()}};
  for (const auto& p : predictions) r.confusion.add(p.truth, p.predicted);
  r.accuracy = r.confusion.accuracy();
  return r;
}

EvalResult evaluate(const ArchitectureSpec& spec, const ModelWeights& weights, const Head& head,
                    std::span<const Example> test, std::size_t threads) {
  if (test.empty()) throw Error("evaluate: test set is empty");
  std::vector<std::size_t> idx(test.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Tensor probs = forward_head(forward_features(spec, weights, stack_images(test, idx), threads), head);
  const auto predicted = argmax_rows(probs);
  std::vector<Prediction> preds(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) preds[i] = {test[i].label, predicted[i], probs.at(i, predicted[i])};
  return evaluate_predictions(preds, head.class_count());
}

std::vector<MisclassificationRow> misclassifications(const EvalResult& result, std::span<const Example> test) {
  if (result.predictions.size() != test.size()) throw Error("misclassifications: result does not match test set");
  std::vector<MisclassificationRow> rows;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& p = result.predictions[i];
    if (p.predicted != p.truth) rows.push_back({test[i].path, p.truth, p.predicted, p.probability});
  }
  return rows;
}

void write_misclassification_csv(std::ostream& out, std::span<const MisclassificationRow> rows) {
  out << "path,true,predicted,prob\n";
  char prob[32];
  for (const auto& r : rows) {
    std::snprintf(prob, sizeof prob, "%.6f", static_cast<double>(r.probability));
    out << csv_field(r.path) << ',' << label_text(r.truth) << ',' << label_text(r.predicted) << ',' << prob << '\n';
  }
}

std::vector<MisclassificationRow> misclassification_report(const ArchitectureSpec& spec, const ModelWeights& weights,
                                                           const Head& head, std::span<const Example> test,
                                                           const std::filesystem::path& out_dir,
                                                           std::size_t threads) {
  const auto rows = misclassifications(evaluate(spec, weights, head, test, threads), test);
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / "misclassified.csv", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (out_dir / "misclassified.csv").string());
  write_misclassification_csv(out, rows);
  return rows;
}

std::vector<CurveRow> epoch_curve(std::span<const EpochMetrics> metrics) {
  const auto best = select_best_epoch(metrics);
  std::vector<CurveRow> rows;
  bool flagged = false;
  for (const auto& m : metrics) {
    // Epoch numbers in a hand-edited file could repeat; flag only the first hit.
    const bool is_best = !flagged && m.epoch == best;
    flagged = flagged || is_best;
    rows.push_back({m.epoch, m.loss, m.precision, is_best});
  }
  return rows;
}

void write_curve_csv(std::ostream& out, std::span<const CurveRow> rows) {
  out << "epoch,loss,precision,best\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%d\n", r.epoch, r.loss, r.precision, r.best ? 1 : 0);
    out << buf;
  }
}

std::uint64_t sweep_run_seed(std::uint64_t master, std::size_t ratio_index, std::size_t repeat) {
  return derive_seed(master, "sweep", ratio_index, repeat);
}

std::vector<SweepRow> split_sweep(const ArchitectureSpec& spec, const ModelWeights& weights,
                                  std::span<const Example> examples, const SweepConfig& cfg) {
  if (cfg.ratios.empty()) throw ConfigError("sweep needs at least one ratio");
  if (cfg.repeats < 1) throw ConfigError("sweep repeats must be at least 1");
  for (double r : cfg.ratios) {
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("sweep ratio must lie in (0,1)");
  }
  const auto labels = labels_of(examples);
  std::vector<SweepRow> rows;
  for (std::size_t ri = 0; ri < cfg.ratios.size(); ++ri) {
    std::vector<double> accs;
    SweepRow row;
    row.ratio = cfg.ratios[ri];
    for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
      const auto seed = sweep_run_seed(cfg.train.seed, ri, rep);
      SplitSpec split;
      split.train_fraction = cfg.ratios[ri];
      split.seed = seed;
      split.stratified = cfg.stratified;
      const auto idx = split_indices(examples.size(), split, labels);
      const auto [train, test] = split_dataset(examples, idx);
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      tc.augmentation.seed = derive_seed(seed, "augmentation");
      const auto result = train_head(spec, weights, train, test, tc);
      accs.push_back(result.metrics[result.best_epoch - 1].precision);
      row.train_size = train.size();
      row.test_size = test.size();
    }
    const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    row.accuracy = mean;
    row.stddev = accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1)) : 0.0;
    row.repeats = accs.size();
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  const bool with_stddev = std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.repeats > 1; });
  out << (with_stddev ? "ratio,accuracy,stddev\n" : "ratio,accuracy\n");
  char buf[128];
  for (const auto& r : rows) {
    if (with_stddev) {
      std::snprintf(buf, sizeof buf, "%.2f,%.6f,%.6f\n", r.ratio, r.accuracy, r.stddev);
    } else {
      std::snprintf(buf, sizeof buf, "%.2f,%.6f\n", r.ratio, r.accuracy);
    }
    out << buf;
  }
}

}  // namespace disasterlens
