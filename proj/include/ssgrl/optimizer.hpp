#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ssgrl/data_io.hpp"
#include "ssgrl/model.hpp"

namespace ssgrl {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// ADAM with bias correction over a fixed parameter registry. Moment arrays
/// mirror their parameters and start at zero.
class Adam {
 public:
  Adam(NamedParams params, AdamConfig cfg);

  /// One update from the gradients currently in the parameters' grad slots.
  /// Throws NumericError naming the parameter on a non-finite gradient.
  void step();

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::int64_t step_count() const { return t_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  NamedParams params_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Divide-by-10 schedule: fires once the loss has gone `patience` epochs
/// without improving on the best seen by more than `rel_threshold`
/// relative, then re-arms.
class PlateauTracker {
 public:
  PlateauTracker(int patience, double rel_threshold)
      : patience_(patience), rel_threshold_(rel_threshold) {}

  /// Returns true when this epoch's loss triggers a decay.
  bool observe(double loss);

 private:
  int patience_;
  double rel_threshold_;
  double best_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 4;
  double lr = 1e-5;
  int plateau_patience = 5;
  double plateau_rel_threshold = 1e-4;
  std::uint64_t shuffle_seed = 1;
  // Written before aborting when the loss goes non-finite.
  std::optional<std::filesystem::path> diagnostic_checkpoint;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;        // 1-based
  double mean_loss = 0; // summed batch losses / sample count
  double lr = 0;        // value used during this epoch
  double wall_ms = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
};

/// Format one tab-separated log line: epoch, mean_loss, lr, wall_ms.
std::string format_epoch_log(const EpochLog& e);

/// Seeded-shuffle epoch loop: per batch, forward every sample onto one
/// tape, a summed cross-entropy backward pass, one ADAM step. The learning
/// rate decays by 10x on plateau. Deterministic given seeds (wall_ms
/// excepted). `log_stream`, when given, receives one line per epoch.
TrainResult train(Model& model, const Dataset& data, const EmbeddingTable& emb,
                  const CooccurrenceGraph& graph, const TrainConfig& cfg,
                  std::ostream* log_stream = nullptr);

/// Mean per-sample loss of the model on a dataset, no parameter updates.
double mean_loss(const Model& model, const Dataset& data,
                 const EmbeddingTable& emb, const CooccurrenceGraph& graph);

/// Per-sample probability rows, in dataset order.
std::vector<std::vector<double>> predict_probs(const Model& model,
                                               const Dataset& data,
                                               const EmbeddingTable& emb,
                                               const CooccurrenceGraph& graph);

}  // namespace ssgrl
