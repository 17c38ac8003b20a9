#include "ssgrl/interaction.hpp"

#include "ssgrl/errors.hpp"

namespace ssgrl {

void PropagationParams::validate(int d_h) const {
  auto expect = [](const TensorPtr& t, int r, int c, const char* name) {
    if (!t || t->shape != Shape{r, c})
      throw DimError(std::string("propagation params: ") + name + " must be " +
                     shape_str({r, c}) +
                     (t ? ", got " + shape_str(t->shape) : ", missing"));
  };
  expect(Wz, 2 * d_h, d_h, "Wz");
  expect(Uz, d_h, d_h, "Uz");
  expect(Wr, 2 * d_h, d_h, "Wr");
  expect(Ur, d_h, d_h, "Ur");
  expect(W, 2 * d_h, d_h, "W");
  expect(U, d_h, d_h, "U");
}

HiddenStates init_states(const std::vector<TensorPtr>& category_features,
                         int d_h) {
  HiddenStates states;
  states.t = 0;
  for (const auto& f : category_features) {
    if (f->shape != Shape{1, d_h})
      throw DimError("init_states: feature must be " + shape_str({1, d_h}) +
                     ", got " + shape_str(f->shape));
    states.h.push_back(f);
  }
  return states;
}

std::vector<TensorPtr> aggregate(ComputeGraph& g, const HiddenStates& states,
                                 const CooccurrenceGraph& graph) {
  const int C = states.C();
  if (graph.C() != C)
    throw DimError("aggregate: graph has " + std::to_string(graph.C()) +
                   " nodes, states have " + std::to_string(C));
  std::vector<TensorPtr> messages;
  messages.reserve(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    TensorPtr in, out;
    for (int cp = 0; cp < C; ++cp) {
      const auto& h = states.h[static_cast<std::size_t>(cp)];
      auto in_term = g.scale(h, graph.a(c, cp));
      auto out_term = g.scale(h, graph.a(cp, c));
      in = in ? g.add(in, in_term) : in_term;
      out = out ? g.add(out, out_term) : out_term;
    }
    messages.push_back(g.concat(in, out, 1));
  }
  return messages;
}

TensorPtr gated_update(ComputeGraph& g, const TensorPtr& msg,
                       const TensorPtr& h_prev,
                       const PropagationParams& params) {
  auto z = g.sigmoid(g.add(g.matmul(msg, params.Wz), g.matmul(h_prev, params.Uz)));
  auto r = g.sigmoid(g.add(g.matmul(msg, params.Wr), g.matmul(h_prev, params.Ur)));
  auto cand = g.tanh(
      g.add(g.matmul(msg, params.W), g.matmul(g.mul(r, h_prev), params.U)));
  auto keep = g.mul(g.sub(Tensor::scalar(1.0), z), h_prev);
  return g.add(keep, g.mul(z, cand));
}

HiddenStates propagate(ComputeGraph& g, const HiddenStates& init,
                       const CooccurrenceGraph& graph,
                       const PropagationParams& params, int T) {
  if (T < 0) throw ConfigError("propagate: negative step count");
  HiddenStates states = init;
  for (int t = 1; t <= T; ++t) {
    auto messages = aggregate(g, states, graph);
    HiddenStates next;
    next.t = t;
    next.h.reserve(states.h.size());
    for (int c = 0; c < states.C(); ++c)
      next.h.push_back(gated_update(g, messages[static_cast<std::size_t>(c)],
                                    states.h[static_cast<std::size_t>(c)],
                                    params));
    states = std::move(next);
  }
  return states;
}

}  // namespace ssgrl
