#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssgrl/cooccurrence.hpp"
#include "ssgrl/decoupling.hpp"
#include "ssgrl/interaction.hpp"
#include "ssgrl/tensor.hpp"

namespace ssgrl {

/// Table-5 ablations: no_sd replaces decoupling with the pooled image
/// feature, no_sd_concat maps [pooled feature, x_c] to d_h, no_si skips
/// propagation and classifies the decoupled feature directly.
enum class Variant { full, no_sd, no_sd_concat, no_si };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct ModelConfig {
  int C = 4;
  int W = 2, H = 2;
  int N = 8;
  int d_s = 5;
  int d1 = 6, d2 = 6;
  int d_h = 8;
  int d_o = 8;
  int T = 2;
  Variant variant = Variant::full;
  std::uint64_t seed = 1;

  void validate() const;  // d_h == N so h^0 = f_c type-checks; dims >= 1
  bool operator==(const ModelConfig&) const = default;
};

struct ForwardResult {
  TensorPtr logits;            // 1 x C, on the caller's tape
  std::vector<double> scores;  // logit copies
  std::vector<double> probs;   // sigmoid(scores)

  // Filled when requested (and the variant has a decoupling stage).
  std::optional<AttentionMap> attention;
  // Debug dump: per-category value rows.
  std::vector<std::vector<double>> category_features;  // f_c
  std::vector<std::vector<double>> final_states;       // h^T
  std::vector<std::vector<double>> outputs;            // o_c
};

/// Full recognition head: decoupling -> propagation -> output/classifiers.
/// Owns every learnable tensor; embeddings and the co-occurrence graph are
/// read-only inputs to forward(). Parameters are drawn once at construction,
/// uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from the config seed.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  /// Canonical ordered registry, the order of initialization, checkpoint
  /// layout, and optimizer state.
  NamedParams parameters() const;

  /// parameters() minus the two attention-path biases whose gradient is
  /// exactly zero by softmax shift-invariance (fusion bias, coefficient
  /// bias); finite differences on those measure only rounding noise.
  NamedParams fd_parameters() const;

  void zero_grad();

  ForwardResult forward(ComputeGraph& g, const FeatureMap& fm,
                        const EmbeddingTable& emb,
                        const CooccurrenceGraph& graph,
                        bool want_debug = false) const;

  /// Binary checkpoint, little-endian: magic "SSGRL1", the config as
  /// fixed-width integers, then each parameter in canonical order as
  /// (u32 name length, name, u32 rank, u32 extents, f64 payload).
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

  const DecouplingParams& decoupling() const { return dec_; }
  const PropagationParams& propagation() const { return prop_; }

 private:
  Model(const ModelConfig& cfg, bool randomize);
  void allocate();
  bool has_decoupling() const;
  bool has_propagation() const;
  bool has_output_head() const;
  TensorPtr pooled_feature(ComputeGraph& g, const FeatureMap& fm) const;

  ModelConfig cfg_;
  DecouplingParams dec_;          // full, no_si
  TensorPtr init_W_, init_b_;     // no_sd_concat
  PropagationParams prop_;        // all but no_si
  TensorPtr out_W_, out_b_;       // all but no_si
  std::vector<TensorPtr> head_w_; // C unshared heads
  std::vector<TensorPtr> head_b_;
};

/// Eq.-12-style summed cross entropy for a batch: logit rows are stacked
/// into a batch x C matrix and reduced with the stable logit-form BCE.
TensorPtr batch_bce_loss(ComputeGraph& g,
                         const std::vector<TensorPtr>& sample_logits,
                         const std::vector<std::vector<std::uint8_t>>& labels);

double sigmoid_value(double x);

}  // namespace ssgrl
