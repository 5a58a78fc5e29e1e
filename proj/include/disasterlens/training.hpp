#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "disasterlens/augment.hpp"
#include "disasterlens/data.hpp"
#include "disasterlens/model.hpp"

namespace disasterlens {

struct TrainConfig {
  std::size_t epochs = 35;
  std::size_t batch_size = 16;
  float lr = 0.01f;
  float momentum = 0.9f;
  bool augment = true;
  AugmentationConfig augmentation;
  std::uint64_t seed = 0;
  // Records zero wall-clock time so metrics are reproducible byte for byte.
  bool deterministic = false;
  HeadInit head_init = HeadInit::glorot;
  std::size_t threads = 1;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  // Mean cross-entropy over the epoch's training inputs, scored with the head as
  // it stood when the epoch began.
  double loss = 0.0;
  double precision = 0.0;  // fraction of test samples classified correctly
  double seconds = 0.0;
  // Mean of the per-batch losses seen during the epoch's updates.
  double running_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  std::vector<Head> snapshots;  // head after each epoch
  std::size_t best_epoch = 0;   // 1-based

  const Head& best_head() const { return snapshots.at(best_epoch - 1); }
};

// 1-based epoch with the highest test precision; the earliest wins ties.
std::size_t select_best_epoch(std::span<const EpochMetrics> metrics);

// Supplies training features [indices.size(), d] for the given samples in epoch `epoch`.
using FeatureBatchFn = std::function<Tensor(std::span<const std::size_t> indices, std::size_t epoch)>;
using EpochCallback = std::function<void(const EpochMetrics&)>;

// The optimisation loop over precomputed or generated features.
TrainResult fit_head(Head head, const FeatureBatchFn& train_features, std::span<const std::size_t> train_labels,
                     const Tensor& test_features, std::span<const std::size_t> test_labels, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = {});

// Full protocol: per epoch, shuffle; per batch, augment (when enabled), extract
// backbone features, update the head; then score the test set. The backbone is
// never modified.
TrainResult train_head(const ArchitectureSpec& spec, const ModelWeights& weights, std::span<const Example> train,
                       std::span<const Example> test, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// `epoch,loss,precision,seconds`
void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> metrics);
void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> metrics);
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

}  // namespace disasterlens
