#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ssgrl/errors.hpp"

namespace ssgrl {

using Shape = std::vector<int>;

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense row-major f64 tensor with an optional same-shape gradient slot.
/// Gradients accumulate (+=) during backward and are zeroed explicitly.
class Tensor {
 public:
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // same length as data when requires_grad

  static TensorPtr zeros(Shape shape, bool requires_grad = false);
  static TensorPtr full(Shape shape, double value, bool requires_grad = false);
  static TensorPtr from(Shape shape, std::vector<double> values,
                        bool requires_grad = false);
  static TensorPtr scalar(double value, bool requires_grad = false);
  static TensorPtr eye(int n);

  std::int64_t numel() const;
  bool is_scalar() const { return numel() == 1; }
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }

  double& at(int i, int j);
  double at(int i, int j) const;

  void zero_grad();

  // Accumulation target; allocates lazily.
  std::vector<double>& grad_slot();
};

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

enum class EwOp { tanh, sigmoid, mul, add, sub };

/// Tape of executed primitive operations. Operations append in execution
/// order (inputs always precede their consumers) and backward() replays the
/// tape once, in reverse. Single-threaded during construction and backward.
class ComputeGraph {
 public:
  // Primitive forward ops; each registers its backward rule on the tape.
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr tanh(const TensorPtr& a);
  TensorPtr sigmoid(const TensorPtr& a);
  TensorPtr elementwise(EwOp op, const TensorPtr& a,
                        const TensorPtr& b = nullptr);
  TensorPtr softmax(const TensorPtr& a, int axis);
  TensorPtr concat(const TensorPtr& a, const TensorPtr& b, int axis);
  TensorPtr transpose(const TensorPtr& a);
  TensorPtr reshape(const TensorPtr& a, Shape shape);
  TensorPtr tile_rows(const TensorPtr& a, int m);
  TensorPtr sum(const TensorPtr& a);
  TensorPtr scale(const TensorPtr& a, double c);

  /// Summed binary cross entropy over all entries, computed from logits in
  /// the stable max(s,0) - s*y + log(1+exp(-|s|)) form. Backward is the
  /// analytic sigmoid(s) - y.
  TensorPtr bce_with_logits(const TensorPtr& logits,
                            const std::vector<double>& targets);

  /// Seeds d(root)/d(root) = 1 and replays the tape in reverse, visiting
  /// every recorded operation exactly once. root must be scalar.
  void backward(const TensorPtr& root);

  std::size_t num_ops() const { return tape_.size(); }
  void clear() { tape_.clear(); }

 private:
  struct OpRecord {
    const char* name;
    TensorPtr output;
    std::function<void()> backward;
  };
  std::vector<OpRecord> tape_;

  TensorPtr record(const char* name, const std::vector<TensorPtr>& inputs,
                   TensorPtr output, std::function<void()> backward);
};

/// Summed binary cross entropy from probabilities, value only (no tape);
/// probabilities are clamped to [1e-12, 1-1e-12] inside the logs.
double bce_from_probs(const std::vector<double>& probs,
                      const std::vector<double>& targets);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

using NamedParams = std::vector<std::pair<std::string, TensorPtr>>;

/// Central-difference check of the analytic gradient of f over every entry
/// of every parameter. f must build its computation on the supplied graph
/// and return a scalar. Relative error uses max(|analytic|, |numeric|, 1e-8)
/// as denominator; the worst entry is reported.
GradCheckReport grad_check(const std::function<TensorPtr(ComputeGraph&)>& f,
                           const NamedParams& params, double h = 1e-5);

/// Test hook: when enabled, tanh's backward rule is deliberately wrong
/// (1 - y instead of 1 - y^2) so harness sensitivity can be exercised.
void set_tanh_backward_fault(bool enabled);

}  // namespace ssgrl
