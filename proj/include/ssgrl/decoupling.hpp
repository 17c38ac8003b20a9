#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ssgrl/tensor.hpp"

namespace ssgrl {

/// Spatial feature tensor of shape W x H x N, stored w-major then h then
/// channel. This is the ingestion boundary: the producing backbone is not
/// part of this library.
struct FeatureMap {
  int W = 0, H = 0, N = 0;
  TensorPtr values;  // shape {W, H, N}, finite, no grad

  static FeatureMap from(int W, int H, int N, std::vector<double> values);
  int locations() const { return W * H; }
  double at(int w, int h, int n) const {
    return values->data[(static_cast<std::size_t>(w) * H + h) * N + n];
  }
};

/// Frozen per-category semantic vectors, one row per category.
class EmbeddingTable {
 public:
  EmbeddingTable(std::vector<std::string> names, TensorPtr vectors);

  int C() const { return static_cast<int>(names_.size()); }
  int dim() const { return vectors_->cols(); }
  const std::vector<std::string>& names() const { return names_; }
  const TensorPtr& vectors() const { return vectors_; }
  /// Row c as a constant 1 x d_s tensor (cached).
  const TensorPtr& row(int c) const;

 private:
  std::vector<std::string> names_;
  TensorPtr vectors_;  // C x d_s
  mutable std::vector<TensorPtr> rows_;
};

/// Learnable parameters of the semantic-guided attention: the low-rank
/// bilinear fusion (U, V, P, b) and the coefficient head (attn_w, attn_b).
struct DecouplingParams {
  TensorPtr U;       // N x d1
  TensorPtr V;       // d_s x d1
  TensorPtr P;       // d1 x d2
  TensorPtr b;       // 1 x d2
  TensorPtr attn_w;  // d2 x 1
  TensorPtr attn_b;  // 1 x 1

  void validate(int N, int d_s, int d1, int d2) const;
};

/// Normalized attention grids, one per category; each grid has W*H entries
/// in w-major order and sums to 1.
struct AttentionMap {
  int W = 0, H = 0;
  std::vector<std::vector<double>> grids;  // C x (W*H)
};

struct DecoupleResult {
  std::vector<TensorPtr> features;   // C tensors of shape 1 x N
  std::vector<TensorPtr> attention;  // C tensors of shape W*H x 1
};

/// Low-rank bilinear fusion of one location's feature with one category's
/// semantic vector: tanh((f U) .* (x V)) P + b, as a 1 x d2 row.
TensorPtr fuse(ComputeGraph& g, const TensorPtr& f_wh, const TensorPtr& x_c,
               const DecouplingParams& params);

/// Raw coefficient at every location followed by softmax over all W*H
/// locations; returns the W*H x 1 normalized column for category c.
TensorPtr attention_coefficients(ComputeGraph& g, const FeatureMap& fm,
                                 const TensorPtr& x_c,
                                 const DecouplingParams& params);

/// Per-category attention pooling of the raw feature map: row c is
/// sum_wh a_{c,wh} f_wh. Pooling applies to the raw N-channel features so
/// the result matches the hidden-state dimension downstream.
DecoupleResult decouple(ComputeGraph& g, const FeatureMap& fm,
                        const EmbeddingTable& emb,
                        const DecouplingParams& params);

AttentionMap extract_attention(const DecoupleResult& result, int W, int H);

/// One text file per image: for each selected category, a block headed
/// "# category <name>" followed by H rows of W space-separated reals.
void write_attention_maps(const std::filesystem::path& path,
                          const std::vector<std::string>& names,
                          const AttentionMap& map,
                          const std::vector<int>& category_indices = {});

}  // namespace ssgrl
