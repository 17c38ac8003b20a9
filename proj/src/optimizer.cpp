#include "ssgrl/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "ssgrl/errors.hpp"
#include "ssgrl/rng.hpp"

namespace ssgrl {

Adam::Adam(NamedParams params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t->data.size(), 0.0);
    v_.emplace_back(t->data.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto& [name, t] = params_[pi];
    auto& grad = t->grad_slot();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double g = grad[i];
      if (!std::isfinite(g))
        throw NumericError("adam: non-finite gradient in parameter '" + name +
                           "' at entry " + std::to_string(i));
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      t->data[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

bool PlateauTracker::observe(double loss) {
  const bool improved = loss < best_ * (1.0 - rel_threshold_);
  best_ = std::min(best_, loss);
  if (improved) {
    stale_ = 0;
    return false;
  }
  if (++stale_ >= patience_) {
    stale_ = 0;
    return true;
  }
  return false;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (plateau_patience < 1) throw ConfigError("train: patience must be >= 1");
}

std::string format_epoch_log(const EpochLog& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d\t%.17g\t%.17g\t%.3f", e.epoch,
                e.mean_loss, e.lr, e.wall_ms);
  return buf;
}

TrainResult train(Model& model, const Dataset& data, const EmbeddingTable& emb,
                  const CooccurrenceGraph& graph, const TrainConfig& cfg,
                  std::ostream* log_stream) {
  cfg.validate();
  if (data.samples.empty()) throw ConfigError("train: empty dataset");

  Adam adam(model.parameters(), AdamConfig{.lr = cfg.lr});
  PlateauTracker plateau(cfg.plateau_patience, cfg.plateau_rel_threshold);
  Rng rng(cfg.shuffle_seed);

  std::vector<std::size_t> order(data.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      try {
        ComputeGraph g;
        std::vector<TensorPtr> logit_rows;
        std::vector<std::vector<std::uint8_t>> labels;
        for (std::size_t i = start; i < end; ++i) {
          const auto& sample = data.samples[order[i]];
          logit_rows.push_back(model.forward(g, sample.fmap, emb, graph).logits);
          labels.push_back(sample.labels);
        }
        auto loss = batch_bce_loss(g, logit_rows, labels);
        if (!std::isfinite(loss->data[0]))
          throw NumericError("train: non-finite loss");
        model.zero_grad();
        g.backward(loss);
        adam.step();
        loss_sum += loss->data[0];
      } catch (const NumericError& e) {
        if (cfg.diagnostic_checkpoint) model.save(*cfg.diagnostic_checkpoint);
        throw NumericError(
            std::string(e.what()) + " (epoch " + std::to_string(epoch) +
            (cfg.diagnostic_checkpoint
                 ? ", diagnostic checkpoint written to " +
                       cfg.diagnostic_checkpoint->string()
                 : "") +
            ")");
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(data.samples.size());
    entry.lr = adam.lr();
    if (plateau.observe(entry.mean_loss)) adam.set_lr(adam.lr() / 10.0);
    entry.wall_ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - t0)
            .count();
    if (log_stream) *log_stream << format_epoch_log(entry) << "\n";
    result.log.push_back(entry);
  }
  return result;
}

double mean_loss(const Model& model, const Dataset& data,
                 const EmbeddingTable& emb, const CooccurrenceGraph& graph) {
  if (data.samples.empty()) throw ConfigError("mean_loss: empty dataset");
  double sum = 0.0;
  for (const auto& sample : data.samples) {
    ComputeGraph g;
    auto out = model.forward(g, sample.fmap, emb, graph);
    sum += batch_bce_loss(g, {out.logits}, {sample.labels})->data[0];
  }
  return sum / static_cast<double>(data.samples.size());
}

std::vector<std::vector<double>> predict_probs(const Model& model,
                                               const Dataset& data,
                                               const EmbeddingTable& emb,
                                               const CooccurrenceGraph& graph) {
  std::vector<std::vector<double>> probs;
  for (const auto& sample : data.samples) {
    ComputeGraph g;
    probs.push_back(model.forward(g, sample.fmap, emb, graph).probs);
  }
  return probs;
}

}  // namespace ssgrl
