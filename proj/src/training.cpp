#include "disasterlens/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <fstream>
#include <numeric>
#include <sstream>

#include "disasterlens/errors.hpp"
#include "disasterlens/image.hpp"
#include "disasterlens/parallel.hpp"

namespace disasterlens {

namespace {

double precision_of(const Head& head, const Tensor& features, std::span<const std::size_t> labels) {
  const auto predicted = argmax_rows(forward_head(features, head));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

bool all_finite(const Tensor& t) {
  for (float v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor gather_rows(const Tensor& all, std::span<const std::size_t> rows) {
  const std::size_t d = all.dim(1);
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) std::memcpy(out.raw() + i * d, all.raw() + rows[i] * d, d * sizeof(float));
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(lr >= 0.0f)) throw ConfigError("learning rate must be non-negative");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ConfigError("momentum must lie in [0,1)");
  augmentation.validate();
}

std::size_t select_best_epoch(std::span<const EpochMetrics> metrics) {
  if (metrics.empty()) throw Error("select_best_epoch: no epochs");
  std::size_t best = 0;
  for (std::size_t i = 1; i < metrics.size(); ++i)
    if (metrics[i].precision > metrics[best].precision) best = i;
  return metrics[best].epoch;
}

TrainResult fit_head(Head head, const FeatureBatchFn& train_features, std::span<const std::size_t> train_labels,
                     const Tensor& test_features, std::span<const std::size_t> test_labels, const TrainConfig& cfg,
                     const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_labels.empty()) throw TrainingError("training set is empty");
  if (test_labels.empty()) throw TrainingError("test set is empty");
  if (test_features.rank() != 2 || test_features.dim(0) != test_labels.size()) {
    throw ShapeError("test features " + shape_string(test_features.shape()) + " do not match " +
                     std::to_string(test_labels.size()) + " labels");
  }
  const std::size_t n = train_labels.size();
  TrainResult result;
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(cfg.seed, "shuffle", epoch);
    shuffle(std::span(order), rng);

    const Head epoch_start = head;
    double start_loss_sum = 0.0;
    double running_loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      std::vector<std::size_t> labels;
      labels.reserve(idx.size());
      for (auto i : idx) labels.push_back(train_labels[i]);

      const Tensor features = train_features(idx, epoch);
      if (features.rank() != 2 || features.dim(0) != idx.size()) {
        throw ShapeError("feature batch has shape " + shape_string(features.shape()));
      }
      const double batch = static_cast<double>(idx.size());
      start_loss_sum += cross_entropy(softmax(epoch_start.logits(features)), labels) * batch;

      // Forward through the dense stack, keeping each layer's input.
      std::vector<Tensor> inputs{features};
      for (std::size_t l = 0; l + 1 < head.layers.size(); ++l) inputs.push_back(dense_forward(inputs.back(), head.layers[l]));
      const Tensor logits = dense_forward(inputs.back(), head.layers.back());
      const double loss = cross_entropy(softmax(logits), labels);
      if (!std::isfinite(loss) || !all_finite(logits)) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + " (non-finite loss); lower the learning rate");
      }
      running_loss_sum += loss * batch;

      Tensor upstream = softmax_xent_grad(logits, labels);
      for (std::size_t l = head.layers.size(); l-- > 0;) {
        const auto grads = dense_backward(inputs[l], head.layers[l], upstream);
        upstream = grads.input;
        sgd_update(head.layers[l], grads, cfg.lr, cfg.momentum);
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.loss = start_loss_sum / static_cast<double>(n);
    m.running_loss = running_loss_sum / static_cast<double>(n);
    m.precision = precision_of(head, test_features, test_labels);
    m.seconds = cfg.deterministic
                    ? 0.0
                    : std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!std::isfinite(m.loss)) throw TrainingError("training diverged at epoch " + std::to_string(epoch));
    result.metrics.push_back(m);
    result.snapshots.push_back(head);
    if (on_epoch) on_epoch(m);
  }
  result.best_epoch = select_best_epoch(result.metrics);
  return result;
}

TrainResult train_head(const ArchitectureSpec& spec, const ModelWeights& weights, std::span<const Example> train,
                       std::span<const Example> test, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw TrainingError("training set is empty");
  if (test.empty()) throw TrainingError("test set is empty");
  bind_weights(spec, weights, false);
  for (const auto& e : train) {
    if (e.label >= spec.class_count()) throw LabelError("label " + std::to_string(e.label) + " exceeds head classes");
  }

  auto all_indices = [](std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
  };
  const Tensor test_features = forward_features(spec, weights, stack_images(test, all_indices(test.size())), cfg.threads);

  FeatureBatchFn features;
  if (cfg.augment) {
    features = [&](std::span<const std::size_t> idx, std::size_t epoch) {
      std::vector<Tensor> images(idx.size());
      parallel_for(idx.size(), cfg.threads, [&](std::size_t i) {
        auto rng = make_rng(cfg.augmentation.seed, "augment", epoch, idx[i]);
        images[i] = augment(train[idx[i]].image, cfg.augmentation, rng);
      });
      return forward_features(spec, weights, stack_images(images), cfg.threads);
    };
  } else {
    // Without augmentation the frozen backbone maps each image to fixed features.
    auto cache = std::make_shared<Tensor>(
        forward_features(spec, weights, stack_images(train, all_indices(train.size())), cfg.threads));
    features = [cache](std::span<const std::size_t> idx, std::size_t) { return gather_rows(*cache, idx); };
  }

  const auto train_labels = labels_of(train);
  const auto test_labels = labels_of(test);
  return fit_head(init_head(spec, cfg.head_init, cfg.seed), features, train_labels, test_features, test_labels, cfg,
                  on_epoch);
}

void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> metrics) {
  out << "epoch,loss,precision,seconds\n";
  char buf[128];
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.3f\n", m.epoch, m.loss, m.precision, m.seconds);
    out << buf;
  }
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> metrics) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_metrics_csv(out, metrics);
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<EpochMetrics> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line.rfind("epoch,loss,precision", 0) != 0) throw ParseError(line_no, "expected metrics header 'epoch,loss,precision,seconds'");
      continue;
    }
    std::istringstream fields(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (cells.size() < 3) throw ParseError(line_no, "expected at least 3 fields");
    try {
      EpochMetrics m;
      m.epoch = std::stoul(cells[0]);
      m.loss = std::stod(cells[1]);
      m.precision = std::stod(cells[2]);
      if (cells.size() > 3) m.seconds = std::stod(cells[3]);
      out.push_back(m);
    } catch (const std::logic_error&) {
      throw ParseError(line_no, "malformed number");
    }
  }
  return out;
}

}  // namespace disasterlens
