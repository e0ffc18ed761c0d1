#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stm/matrix.hpp"
#include "stm/rng.hpp"

namespace stm {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Affine layer: weight is out x in.
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }
};

std::vector<double> dense_forward(const DenseLayer& layer,
                                  std::span<const double> x);

// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> x);

// Elementwise ln(1 + e^x), stable for large |x|.
std::vector<double> softplus(std::span<const double> x);

// Derivative of softplus: logistic sigmoid.
double sigmoid(double x);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(std::size_t n, double learning_rate = 2e-3)
      : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

// In-place Adam update with bias correction. Throws NumericError on
// non-finite gradients.
void adam_step(std::vector<double>& params, std::span<const double> grads,
               AdamState& state);

// Max relative error between an analytic gradient and central finite
// differences: max_i |a_i - b_i| / max(1e-8, |a_i| + |b_i|).
double finite_diff_check(
    const std::function<double(const std::vector<double>&)>& loss,
    const std::function<std::vector<double>(const std::vector<double>&)>& grad,
    const std::vector<double>& point, double h);

}  // namespace stm
