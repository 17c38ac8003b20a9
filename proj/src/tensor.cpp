#include "ssgrl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ssgrl {

namespace {

bool g_tanh_backward_fault = false;

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(what) + ": non-finite input value");
    }
  }
}

// outer x axis x inner decomposition for axis-wise loops on row-major data.
struct AxisSplit {
  std::int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.extent = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i)
    s.inner *= shape[i];
  return s;
}

}  // namespace

void set_tanh_backward_fault(bool enabled) { g_tanh_backward_fault = enabled; }

std::int64_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1},
                         [](std::int64_t acc, int e) { return acc * e; });
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

TensorPtr Tensor::zeros(Shape shape, bool requires_grad) {
  return from(std::move(shape), {}, requires_grad);
}

TensorPtr Tensor::full(Shape shape, double value, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  std::fill(t->data.begin(), t->data.end(), value);
  return t;
}

TensorPtr Tensor::from(Shape shape, std::vector<double> values,
                       bool requires_grad) {
  for (int e : shape) {
    if (e < 0) throw DimError("negative extent in shape " + shape_str(shape));
  }
  const auto n = shape_numel(shape);
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  if (values.empty()) {
    t->data.assign(static_cast<std::size_t>(n), 0.0);
  } else {
    if (static_cast<std::int64_t>(values.size()) != n) {
      throw DimError("data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(t->shape));
    }
    t->data = std::move(values);
  }
  t->requires_grad = requires_grad;
  if (requires_grad) t->grad.assign(t->data.size(), 0.0);
  return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
  return from({1, 1}, {value}, requires_grad);
}

TensorPtr Tensor::eye(int n) {
  auto t = zeros({n, n});
  for (int i = 0; i < n; ++i) t->at(i, i) = 1.0;
  return t;
}

std::int64_t Tensor::numel() const { return shape_numel(shape); }

double& Tensor::at(int i, int j) {
  return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols()) +
              static_cast<std::size_t>(j)];
}

double Tensor::at(int i, int j) const {
  return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols()) +
              static_cast<std::size_t>(j)];
}

void Tensor::zero_grad() {
  if (requires_grad) grad.assign(data.size(), 0.0);
}

std::vector<double>& Tensor::grad_slot() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

TensorPtr ComputeGraph::record(const char* name,
                               const std::vector<TensorPtr>& inputs,
                               TensorPtr output,
                               std::function<void()> backward) {
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in->requires_grad;
  output->requires_grad = needs_grad;
  if (needs_grad) {
    output->grad_slot();
    tape_.push_back({name, output, std::move(backward)});
  }
  return output;
}

TensorPtr ComputeGraph::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->cols() != b->rows()) {
    throw DimError("matmul: incompatible shapes " + shape_str(a->shape) +
                   " and " + shape_str(b->shape));
  }
  const int m = a->rows(), k = a->cols(), n = b->cols();
  auto out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a->at(i, p) * b->at(p, j);
      out->at(i, j) = acc;
    }
  }
  return record("matmul", {a, b}, out, [a, b, out, m, k, n] {
    // dA = dC . B^T, dB = A^T . dC
    if (a->requires_grad) {
      auto& ga = a->grad_slot();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += out->grad[static_cast<std::size_t>(i) * n + j] * b->at(p, j);
          ga[static_cast<std::size_t>(i) * k + p] += acc;
        }
    }
    if (b->requires_grad) {
      auto& gb = b->grad_slot();
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) acc += a->at(i, p) * out->grad[static_cast<std::size_t>(i) * n + j];
          gb[static_cast<std::size_t>(p) * n + j] += acc;
        }
    }
  });
}

TensorPtr ComputeGraph::elementwise(EwOp op, const TensorPtr& a,
                                    const TensorPtr& b) {
  switch (op) {
    case EwOp::tanh:
      return tanh(a);
    case EwOp::sigmoid:
      return sigmoid(a);
    case EwOp::mul:
      return mul(a, b);
    case EwOp::add:
      return add(a, b);
    case EwOp::sub:
      return sub(a, b);
  }
  throw ConfigError("elementwise: unknown op");
}

// Binary pointwise with scalar broadcast on either side; no other
// broadcasting. Returns {out, a_is_scalar, b_is_scalar}.
namespace {
struct BinPlan {
  Shape shape;
  bool a_scalar, b_scalar;
};
BinPlan bin_plan(const char* name, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape == b->shape) return {a->shape, false, false};
  if (b->is_scalar()) return {a->shape, false, true};
  if (a->is_scalar()) return {b->shape, true, false};
  throw DimError(std::string(name) + ": shape mismatch " +
                 shape_str(a->shape) + " vs " + shape_str(b->shape));
}
}  // namespace

TensorPtr ComputeGraph::add(const TensorPtr& a, const TensorPtr& b) {
  const auto plan = bin_plan("add", a, b);
  auto out = Tensor::zeros(plan.shape);
  const std::size_t n = out->data.size();
  for (std::size_t i = 0; i < n; ++i)
    out->data[i] = (plan.a_scalar ? a->data[0] : a->data[i]) +
                   (plan.b_scalar ? b->data[0] : b->data[i]);
  return record("add", {a, b}, out, [a, b, out, plan, n] {
    if (a->requires_grad) {
      auto& g = a->grad_slot();
      if (plan.a_scalar)
        for (std::size_t i = 0; i < n; ++i) g[0] += out->grad[i];
      else
        for (std::size_t i = 0; i < n; ++i) g[i] += out->grad[i];
    }
    if (b->requires_grad) {
      auto& g = b->grad_slot();
      if (plan.b_scalar)
        for (std::size_t i = 0; i < n; ++i) g[0] += out->grad[i];
      else
        for (std::size_t i = 0; i < n; ++i) g[i] += out->grad[i];
    }
  });
}

TensorPtr ComputeGraph::sub(const TensorPtr& a, const TensorPtr& b) {
  const auto plan = bin_plan("sub", a, b);
  auto out = Tensor::zeros(plan.shape);
  const std::size_t n = out->data.size();
  for (std::size_t i = 0; i < n; ++i)
    out->data[i] = (plan.a_scalar ? a->data[0] : a->data[i]) -
                   (plan.b_scalar ? b->data[0] : b->data[i]);
  return record("sub", {a, b}, out, [a, b, out, plan, n] {
    if (a->requires_grad) {
      auto& g = a->grad_slot();
      if (plan.a_scalar)
        for (std::size_t i = 0; i < n; ++i) g[0] += out->grad[i];
      else
        for (std::size_t i = 0; i < n; ++i) g[i] += out->grad[i];
    }
    if (b->requires_grad) {
      auto& g = b->grad_slot();
      if (plan.b_scalar)
        for (std::size_t i = 0; i < n; ++i) g[0] -= out->grad[i];
      else
        for (std::size_t i = 0; i < n; ++i) g[i] -= out->grad[i];
    }
  });
}

TensorPtr ComputeGraph::mul(const TensorPtr& a, const TensorPtr& b) {
  const auto plan = bin_plan("mul", a, b);
  auto out = Tensor::zeros(plan.shape);
  const std::size_t n = out->data.size();
  for (std::size_t i = 0; i < n; ++i)
    out->data[i] = (plan.a_scalar ? a->data[0] : a->data[i]) *
                   (plan.b_scalar ? b->data[0] : b->data[i]);
  return record("mul", {a, b}, out, [a, b, out, plan, n] {
    if (a->requires_grad) {
      auto& g = a->grad_slot();
      for (std::size_t i = 0; i < n; ++i) {
        const double db = plan.b_scalar ? b->data[0] : b->data[i];
        g[plan.a_scalar ? 0 : i] += out->grad[i] * db;
      }
    }
    if (b->requires_grad) {
      auto& g = b->grad_slot();
      for (std::size_t i = 0; i < n; ++i) {
        const double da = plan.a_scalar ? a->data[0] : a->data[i];
        g[plan.b_scalar ? 0 : i] += out->grad[i] * da;
      }
    }
  });
}

TensorPtr ComputeGraph::tanh(const TensorPtr& a) {
  auto out = Tensor::zeros(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i)
    out->data[i] = std::tanh(a->data[i]);
  return record("tanh", {a}, out, [a, out] {
    if (!a->requires_grad) return;
    auto& g = a->grad_slot();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = out->data[i];
      const double dydx = g_tanh_backward_fault ? (1.0 - y) : (1.0 - y * y);
      g[i] += out->grad[i] * dydx;
    }
  });
}

TensorPtr ComputeGraph::sigmoid(const TensorPtr& a) {
  auto out = Tensor::zeros(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) {
    const double x = a->data[i];
    out->data[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
  }
  return record("sigmoid", {a}, out, [a, out] {
    if (!a->requires_grad) return;
    auto& g = a->grad_slot();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = out->data[i];
      g[i] += out->grad[i] * y * (1.0 - y);
    }
  });
}

TensorPtr ComputeGraph::softmax(const TensorPtr& a, int axis) {
  if (axis < 0 || axis >= static_cast<int>(a->shape.size()))
    throw DimError("softmax: axis " + std::to_string(axis) +
                   " out of range for shape " + shape_str(a->shape));
  if (a->shape[static_cast<std::size_t>(axis)] == 0)
    throw DimError("softmax: empty axis");
  check_finite(a->data, "softmax");
  const auto sp = split_at(a->shape, axis);
  auto out = Tensor::zeros(a->shape);
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t in = 0; in < sp.inner; ++in) {
      const std::int64_t base = o * sp.extent * sp.inner + in;
      double mx = a->data[static_cast<std::size_t>(base)];
      for (std::int64_t e = 1; e < sp.extent; ++e)
        mx = std::max(mx, a->data[static_cast<std::size_t>(base + e * sp.inner)]);
      double denom = 0.0;
      for (std::int64_t e = 0; e < sp.extent; ++e) {
        const auto idx = static_cast<std::size_t>(base + e * sp.inner);
        out->data[idx] = std::exp(a->data[idx] - mx);
        denom += out->data[idx];
      }
      for (std::int64_t e = 0; e < sp.extent; ++e)
        out->data[static_cast<std::size_t>(base + e * sp.inner)] /= denom;
    }
  }
  return record("softmax", {a}, out, [a, out, sp] {
    if (!a->requires_grad) return;
    auto& g = a->grad_slot();
    // dx_i = y_i * (dout_i - sum_j dout_j y_j) per lane
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t in = 0; in < sp.inner; ++in) {
        const std::int64_t base = o * sp.extent * sp.inner + in;
        double dot = 0.0;
        for (std::int64_t e = 0; e < sp.extent; ++e) {
          const auto idx = static_cast<std::size_t>(base + e * sp.inner);
          dot += out->grad[idx] * out->data[idx];
        }
        for (std::int64_t e = 0; e < sp.extent; ++e) {
          const auto idx = static_cast<std::size_t>(base + e * sp.inner);
          g[idx] += out->data[idx] * (out->grad[idx] - dot);
        }
      }
    }
  });
}

TensorPtr ComputeGraph::concat(const TensorPtr& a, const TensorPtr& b,
                               int axis) {
  if (a->shape.size() != b->shape.size())
    throw DimError("concat: rank mismatch " + shape_str(a->shape) + " vs " +
                   shape_str(b->shape));
  if (axis < 0 || axis >= static_cast<int>(a->shape.size()))
    throw DimError("concat: axis " + std::to_string(axis) +
                   " out of range for shape " + shape_str(a->shape));
  for (std::size_t i = 0; i < a->shape.size(); ++i) {
    if (static_cast<int>(i) != axis && a->shape[i] != b->shape[i])
      throw DimError("concat: extents differ off the concat axis, " +
                     shape_str(a->shape) + " vs " + shape_str(b->shape));
  }
  Shape out_shape = a->shape;
  out_shape[static_cast<std::size_t>(axis)] += b->shape[static_cast<std::size_t>(axis)];
  auto out = Tensor::zeros(out_shape);
  const auto sa = split_at(a->shape, axis);
  const auto sb = split_at(b->shape, axis);
  const std::int64_t row_a = sa.extent * sa.inner;
  const std::int64_t row_b = sb.extent * sb.inner;
  for (std::int64_t o = 0; o < sa.outer; ++o) {
    std::copy_n(a->data.begin() + o * row_a, row_a,
                out->data.begin() + o * (row_a + row_b));
    std::copy_n(b->data.begin() + o * row_b, row_b,
                out->data.begin() + o * (row_a + row_b) + row_a);
  }
  return record("concat", {a, b}, out, [a, b, out, sa, row_a, row_b] {
    for (std::int64_t o = 0; o < sa.outer; ++o) {
      const std::int64_t base = o * (row_a + row_b);
      if (a->requires_grad) {
        auto& g = a->grad_slot();
        for (std::int64_t i = 0; i < row_a; ++i)
          g[static_cast<std::size_t>(o * row_a + i)] +=
              out->grad[static_cast<std::size_t>(base + i)];
      }
      if (b->requires_grad) {
        auto& g = b->grad_slot();
        for (std::int64_t i = 0; i < row_b; ++i)
          g[static_cast<std::size_t>(o * row_b + i)] +=
              out->grad[static_cast<std::size_t>(base + row_a + i)];
      }
    }
  });
}

TensorPtr ComputeGraph::transpose(const TensorPtr& a) {
  if (a->shape.size() != 2)
    throw DimError("transpose: expected rank 2, got " + shape_str(a->shape));
  const int m = a->rows(), n = a->cols();
  auto out = Tensor::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out->at(j, i) = a->at(i, j);
  return record("transpose", {a}, out, [a, out, m, n] {
    if (!a->requires_grad) return;
    auto& g = a->grad_slot();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        g[static_cast<std::size_t>(i) * n + j] +=
            out->grad[static_cast<std::size_t>(j) * m + i];
  });
}

TensorPtr ComputeGraph::reshape(const TensorPtr& a, Shape shape) {
  if (shape_numel(shape) != a->numel())
    throw DimError("reshape: element count mismatch " + shape_str(a->shape) +
                   " -> " + shape_str(shape));
  auto out = Tensor::from(std::move(shape), a->data);
  return record("reshape", {a}, out, [a, out] {
    if (!a->requires_grad) return;
    auto& g = a->grad_slot();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i];
  });
}

TensorPtr ComputeGraph::tile_rows(const TensorPtr& a, int m) {
  if (a->shape.size() != 2 || a->rows() != 1)
    throw DimError("tile_rows: expected a 1xD row, got " + shape_str(a->shape));
  const int d = a->cols();
  auto out = Tensor::zeros({m, d});
  for (int r = 0; r < m; ++r)
    std::copy_n(a->data.begin(), d, out->data.begin() + static_cast<std::size_t>(r) * d);
  return record("tile_rows", {a}, out, [a, out, m, d] {
    if (!a->requires_grad) return;
    auto& g = a->grad_slot();
    for (int r = 0; r < m; ++r)
      for (int j = 0; j < d; ++j)
        g[static_cast<std::size_t>(j)] +=
            out->grad[static_cast<std::size_t>(r) * d + j];
  });
}

TensorPtr ComputeGraph::sum(const TensorPtr& a) {
  double acc = 0.0;
  for (double x : a->data) acc += x;
  auto out = Tensor::scalar(acc);
  return record("sum", {a}, out, [a, out] {
    if (!a->requires_grad) return;
    auto& g = a->grad_slot();
    for (double& gi : g) gi += out->grad[0];
  });
}

TensorPtr ComputeGraph::scale(const TensorPtr& a, double c) {
  auto out = Tensor::zeros(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = c * a->data[i];
  return record("scale", {a}, out, [a, out, c] {
    if (!a->requires_grad) return;
    auto& g = a->grad_slot();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * out->grad[i];
  });
}

TensorPtr ComputeGraph::bce_with_logits(const TensorPtr& logits,
                                        const std::vector<double>& targets) {
  if (static_cast<std::int64_t>(targets.size()) != logits->numel())
    throw DimError("bce_with_logits: " + std::to_string(targets.size()) +
                   " targets for logits " + shape_str(logits->shape));
  check_finite(logits->data, "bce_with_logits");
  for (double y : targets) {
    if (y != 0.0 && y != 1.0)
      throw ConfigError("bce_with_logits: targets must be 0 or 1");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double s = logits->data[i];
    loss += std::max(s, 0.0) - s * targets[i] + std::log1p(std::exp(-std::abs(s)));
  }
  auto out = Tensor::scalar(loss);
  auto y = targets;
  return record("bce_with_logits", {logits}, out, [logits, out, y = std::move(y)] {
    if (!logits->requires_grad) return;
    auto& g = logits->grad_slot();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = logits->data[i];
      const double p = s >= 0.0 ? 1.0 / (1.0 + std::exp(-s))
                                : std::exp(s) / (1.0 + std::exp(s));
      g[i] += out->grad[0] * (p - y[i]);
    }
  });
}

void ComputeGraph::backward(const TensorPtr& root) {
  if (!root->is_scalar())
    throw DimError("backward: root must be scalar, got " +
                   shape_str(root->shape));
  if (!root->requires_grad)
    throw ConfigError("backward: root does not require grad");
  root->grad_slot()[0] += 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) it->backward();
}

double bce_from_probs(const std::vector<double>& probs,
                      const std::vector<double>& targets) {
  if (probs.size() != targets.size())
    throw DimError("bce_from_probs: length mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
    if (!std::isfinite(probs[i]) || probs[i] < 0.0 || probs[i] > 1.0)
      throw NumericError("bce_from_probs: probability outside [0,1]");
    loss -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  return loss;
}

GradCheckReport grad_check(const std::function<TensorPtr(ComputeGraph&)>& f,
                           const NamedParams& params, double h) {
  if (h <= 0.0) throw ConfigError("grad_check: step must be positive");

  const auto eval_value = [&f]() {
    ComputeGraph g;
    auto loss = f(g);
    if (!loss->is_scalar())
      throw DimError("grad_check: f must return a scalar");
    if (!std::isfinite(loss->data[0]))
      throw NumericError("grad_check: non-finite loss");
    return loss->data[0];
  };

  // Analytic pass.
  for (const auto& [name, p] : params) p->zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    ComputeGraph g;
    auto loss = f(g);
    if (!loss->is_scalar())
      throw DimError("grad_check: f must return a scalar");
    if (!std::isfinite(loss->data[0]))
      throw NumericError("grad_check: non-finite loss");
    g.backward(loss);
    for (const auto& [name, p] : params) analytic.push_back(p->grad_slot());
  }

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& [name, p] = params[pi];
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const double saved = p->data[i];
      p->data[i] = saved + h;
      const double up = eval_value();
      p->data[i] = saved - h;
      const double down = eval_value();
      p->data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace ssgrl
