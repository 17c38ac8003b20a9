#pragma once

#include <vector>

#include "ssgrl/cooccurrence.hpp"
#include "ssgrl/tensor.hpp"

namespace ssgrl {

/// Gate and candidate parameters of the GRU-style node update (no biases).
/// Messages are 2*d_h wide (in/out aggregations concatenated), so the
/// message-side matrices are 2d_h x d_h and the state-side ones d_h x d_h.
struct PropagationParams {
  TensorPtr Wz, Uz;  // update gate
  TensorPtr Wr, Ur;  // reset gate
  TensorPtr W, U;    // candidate state

  void validate(int d_h) const;
};

/// Node states after t propagation steps; row c is h_c^t as a 1 x d_h row.
struct HiddenStates {
  int t = 0;
  std::vector<TensorPtr> h;

  int C() const { return static_cast<int>(h.size()); }
};

/// h_c^0 = f_c, an exact copy. The feature dimension must equal d_h.
HiddenStates init_states(const std::vector<TensorPtr>& category_features,
                         int d_h);

/// Message for node c from the t-1 snapshot:
/// [ sum_c' a(c,c') h_c' , sum_c' a(c',c) h_c' ], one 1 x 2d_h row per node.
std::vector<TensorPtr> aggregate(ComputeGraph& g, const HiddenStates& states,
                                 const CooccurrenceGraph& graph);

/// z = sigmoid(msg Wz + h Uz); r = sigmoid(msg Wr + h Ur);
/// cand = tanh(msg W + (r .* h) U); h' = (1-z) .* h + z .* cand.
TensorPtr gated_update(ComputeGraph& g, const TensorPtr& msg,
                       const TensorPtr& h_prev,
                       const PropagationParams& params);

/// T synchronous rounds of aggregate + gated_update; every node reads only
/// the t-1 snapshot. T = 0 returns the initial states unchanged.
HiddenStates propagate(ComputeGraph& g, const HiddenStates& init,
                       const CooccurrenceGraph& graph,
                       const PropagationParams& params, int T);

}  // namespace ssgrl
