#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "disasterlens/data.hpp"
#include "disasterlens/model.hpp"
#include "disasterlens/training.hpp"

namespace disasterlens {

// Rows are true classes, columns are predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = kClassCount);

  void add(std::size_t truth, std::size_t predicted);

  std::size_t classes() const noexcept { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t column_sum(std::size_t predicted) const;
  std::uint64_t trace() const;
  std::uint64_t total() const;
  double accuracy() const;  // trace / total; 0 for an empty matrix

  // Fixed-width table with class names (or indices past the known names).
  std::string render() const;
  void write_csv(std::ostream& out) const;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_from(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                               std::size_t classes = kClassCount);

struct Prediction {
  std::size_t truth = 0;
  std::size_t predicted = 0;
  float probability = 0.0f;  // probability of the predicted class
};

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::vector<Prediction> predictions;  // in test-set order
};

// No augmentation: each image is scored once.
EvalResult evaluate(const ArchitectureSpec& spec, const ModelWeights& weights, const Head& head,
                    std::span<const Example> test, std::size_t threads = 1);
EvalResult evaluate_predictions(std::span<const Prediction> predictions, std::size_t classes = kClassCount);

struct MisclassificationRow {
  std::string path;
  std::size_t truth = 0;
  std::size_t predicted = 0;
  float probability = 0.0f;
};

std::vector<MisclassificationRow> misclassifications(const EvalResult& result, std::span<const Example> test);

// Evaluates, then writes `misclassified.csv` (path,true,predicted,prob) under out_dir.
std::vector<MisclassificationRow> misclassification_report(const ArchitectureSpec& spec, const ModelWeights& weights,
                                                           const Head& head, std::span<const Example> test,
                                                           const std::filesystem::path& out_dir,
                                                           std::size_t threads = 1);
void write_misclassification_csv(std::ostream& out, std::span<const MisclassificationRow> rows);

struct CurveRow {
  std::size_t epoch = 0;
  double loss = 0.0;
  double precision = 0.0;
  bool best = false;
};

// One row per epoch; exactly one (the earliest maximum of precision) is flagged.
std::vector<CurveRow> epoch_curve(std::span<const EpochMetrics> metrics);
void write_curve_csv(std::ostream& out, std::span<const CurveRow> rows);

struct SweepRow {
  double ratio = 0.0;
  double accuracy = 0.0;  // mean over repeats of the best-epoch test accuracy
  double stddev = 0.0;    // sample stddev over repeats; 0 for a single run
  std::size_t repeats = 1;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

inline const std::vector<double> kDefaultSweepRatios = {0.70, 0.75, 0.80, 0.85, 0.90};

struct SweepConfig {
  std::vector<double> ratios = kDefaultSweepRatios;
  std::size_t repeats = 1;
  bool stratified = false;
  TrainConfig train;  // train.seed is the master seed of the sweep
};

// Seed of the split and training run for (ratio index, repeat).
std::uint64_t sweep_run_seed(std::uint64_t master, std::size_t ratio_index, std::size_t repeat);

// For each ratio: split with a derived seed, train the full protocol, record the
// best-epoch test accuracy.
std::vector<SweepRow> split_sweep(const ArchitectureSpec& spec, const ModelWeights& weights,
                                  std::span<const Example> examples, const SweepConfig& cfg);

// `ratio,accuracy`, plus `stddev` when any row has more than one repeat.
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

}  // namespace disasterlens
