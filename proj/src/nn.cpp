#include "stm/nn.hpp"

#include <algorithm>
#include <cmath>

namespace stm {

std::vector<double> dense_forward(const DenseLayer& layer,
                                  std::span<const double> x) {
  if (x.size() != layer.in_dim()) {
    throw DimensionError("dense_forward: input length " +
                         std::to_string(x.size()) + " != layer input " +
                         std::to_string(layer.in_dim()));
  }
  std::vector<double> out(layer.out_dim());
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    double acc = layer.bias[r];
    const double* w = layer.weight.row(r);
    for (std::size_t c = 0; c < layer.in_dim(); ++c) acc += w[c] * x[c];
    out[r] = acc;
  }
  return out;
}

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

std::vector<double> softplus(std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // ln(1+e^x) = max(x,0) + log1p(e^{-|x|})
    out[i] = std::max(x[i], 0.0) + std::log1p(std::exp(-std::abs(x[i])));
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void adam_step(std::vector<double>& params, std::span<const double> grads,
               AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size()) {
    throw DimensionError("adam_step: shape mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

double finite_diff_check(
    const std::function<double(const std::vector<double>&)>& loss,
    const std::function<std::vector<double>(const std::vector<double>&)>& grad,
    const std::vector<double>& point, double h) {
  const std::vector<double> analytic = grad(point);
  std::vector<double> p = point;
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    p[i] = point[i] + h;
    const double up = loss(p);
    p[i] = point[i] - h;
    const double down = loss(p);
    p[i] = point[i];
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max(1e-8, std::abs(numeric) + std::abs(analytic[i]));
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace stm
