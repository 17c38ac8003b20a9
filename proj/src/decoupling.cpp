#include "ssgrl/decoupling.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ssgrl/errors.hpp"

namespace ssgrl {

FeatureMap FeatureMap::from(int W, int H, int N, std::vector<double> values) {
  if (W < 1 || H < 1 || N < 1)
    throw DimError("feature map: extents must be positive, got " +
                   shape_str({W, H, N}));
  for (double v : values) {
    if (!std::isfinite(v))
      throw NumericError("feature map: non-finite value");
  }
  FeatureMap fm;
  fm.W = W;
  fm.H = H;
  fm.N = N;
  fm.values = Tensor::from({W, H, N}, std::move(values));
  return fm;
}

EmbeddingTable::EmbeddingTable(std::vector<std::string> names, TensorPtr vectors)
    : names_(std::move(names)), vectors_(std::move(vectors)) {
  if (vectors_->shape.size() != 2 ||
      vectors_->rows() != static_cast<int>(names_.size()))
    throw DimError("embedding table: expected one row per category, got " +
                   shape_str(vectors_->shape) + " for " +
                   std::to_string(names_.size()) + " categories");
  for (double v : vectors_->data) {
    if (!std::isfinite(v))
      throw NumericError("embedding table: non-finite value");
  }
  rows_.resize(names_.size());
}

const TensorPtr& EmbeddingTable::row(int c) const {
  auto& slot = rows_.at(static_cast<std::size_t>(c));
  if (!slot) {
    const int d = dim();
    std::vector<double> v(vectors_->data.begin() + static_cast<std::size_t>(c) * d,
                          vectors_->data.begin() + static_cast<std::size_t>(c + 1) * d);
    slot = Tensor::from({1, d}, std::move(v));
  }
  return slot;
}

void DecouplingParams::validate(int N, int d_s, int d1, int d2) const {
  auto expect = [](const TensorPtr& t, int r, int c, const char* name) {
    if (!t || t->shape != Shape{r, c})
      throw DimError(std::string("decoupling params: ") + name +
                     " must be " + shape_str({r, c}) +
                     (t ? ", got " + shape_str(t->shape) : ", missing"));
  };
  expect(U, N, d1, "U");
  expect(V, d_s, d1, "V");
  expect(P, d1, d2, "P");
  expect(b, 1, d2, "b");
  expect(attn_w, d2, 1, "attn_w");
  expect(attn_b, 1, 1, "attn_b");
}

TensorPtr fuse(ComputeGraph& g, const TensorPtr& f_wh, const TensorPtr& x_c,
               const DecouplingParams& params) {
  auto joint = g.tanh(g.mul(g.matmul(f_wh, params.U), g.matmul(x_c, params.V)));
  return g.add(g.matmul(joint, params.P), params.b);
}

// Same arithmetic as fuse, applied to all W*H locations at once: rows of a
// matmul are independent, so this is bitwise identical to fusing each
// location separately.
static TensorPtr fuse_all_locations(ComputeGraph& g, const TensorPtr& flat,
                                    int locations, const TensorPtr& x_c,
                                    const DecouplingParams& params) {
  auto fu = g.matmul(flat, params.U);
  auto xv = g.tile_rows(g.matmul(x_c, params.V), locations);
  auto joint = g.tanh(g.mul(fu, xv));
  return g.add(g.matmul(joint, params.P), g.tile_rows(params.b, locations));
}

TensorPtr attention_coefficients(ComputeGraph& g, const FeatureMap& fm,
                                 const TensorPtr& x_c,
                                 const DecouplingParams& params) {
  const int locations = fm.locations();
  auto flat = g.reshape(fm.values, {locations, fm.N});
  auto fused = fuse_all_locations(g, flat, locations, x_c, params);
  auto raw = g.add(g.matmul(fused, params.attn_w), params.attn_b);
  return g.softmax(raw, 0);
}

DecoupleResult decouple(ComputeGraph& g, const FeatureMap& fm,
                        const EmbeddingTable& emb,
                        const DecouplingParams& params) {
  if (emb.C() < 1) throw DimError("decouple: no categories");
  DecoupleResult result;
  auto flat = g.reshape(fm.values, {fm.locations(), fm.N});
  for (int c = 0; c < emb.C(); ++c) {
    auto a = attention_coefficients(g, fm, emb.row(c), params);
    result.attention.push_back(a);
    result.features.push_back(g.matmul(g.transpose(a), flat));
  }
  return result;
}

AttentionMap extract_attention(const DecoupleResult& result, int W, int H) {
  AttentionMap map;
  map.W = W;
  map.H = H;
  for (const auto& a : result.attention) map.grids.push_back(a->data);
  return map;
}

void write_attention_maps(const std::filesystem::path& path,
                          const std::vector<std::string>& names,
                          const AttentionMap& map,
                          const std::vector<int>& category_indices) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  std::vector<int> order = category_indices;
  if (order.empty())
    for (int c = 0; c < static_cast<int>(map.grids.size()); ++c)
      order.push_back(c);
  char buf[40];
  for (int c : order) {
    out << "# category " << names.at(static_cast<std::size_t>(c)) << "\n";
    const auto& grid = map.grids.at(static_cast<std::size_t>(c));
    for (int h = 0; h < map.H; ++h) {
      for (int w = 0; w < map.W; ++w) {
        if (w) out << " ";
        std::snprintf(buf, sizeof buf, "%.17g",
                      grid[static_cast<std::size_t>(w) * map.H + h]);
        out << buf;
      }
      out << "\n";
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace ssgrl
