#pragma once

#include "coldguess/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace coldguess {

/// Ordered, named collection of trainable matrices.
template <class T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Matrix<T> value;
  };

  std::size_t add(std::string name, Matrix<T> value) {
    if (find(name) != npos) throw std::invalid_argument("duplicate parameter '" + name + "'");
    entries_.push_back({std::move(name), std::move(value)});
    return entries_.size() - 1;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t find(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    return npos;
  }
  std::size_t index(std::string_view name) const {
    const std::size_t i = find(name);
    if (i == npos) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
    return i;
  }

  std::size_t size() const { return entries_.size(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Matrix<T>& at(std::string_view name) { return entries_[index(name)].value; }
  const Matrix<T>& at(std::string_view name) const { return entries_[index(name)].value; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
  }

  template <class U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const Entry& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  bool operator==(const ParameterSet& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name != o.entries_[i].name || !(entries_[i].value == o.entries_[i].value)) return false;
    return true;
  }

  /// Places every parameter on the tape as a gradient leaf; element i of the
  /// result corresponds to entry i.
  std::vector<Var<T>> bind(Tape<T>& tape) const {
    std::vector<Var<T>> out;
    out.reserve(entries_.size());
    for (const Entry& e : entries_) out.push_back(tape.parameter(e.value));
    return out;
  }

 private:
  std::vector<Entry> entries_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <class T>
Matrix<T> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  Matrix<T> m(fan_in, fan_out);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (T& v : m.data) v = static_cast<T>(dist(rng));
  return m;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Matrix<T>> first_moment;
  std::vector<Matrix<T>> second_moment;
};

/// One Adam update with bias correction. Moments are created on the first call.
template <class T>
void adam_step(ParameterSet<T>& params, const std::vector<Matrix<T>>& grads, AdamState<T>& state) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient count does not match parameters");
  if (state.first_moment.empty()) {
    for (const auto& e : params) {
      state.first_moment.emplace_back(e.value.rows, e.value.cols);
      state.second_moment.emplace_back(e.value.rows, e.value.cols);
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: state does not match parameters");
  const AdamConfig& c = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix<T>& p = params[k].value;
    const Matrix<T>& g = grads[k];
    Matrix<T>& m = state.first_moment[k];
    Matrix<T>& v = state.second_moment[k];
    if (!p.same_shape(g) || !p.same_shape(m))
      throw ShapeError("adam_step: shape mismatch for '" + params[k].name + "'");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g.data[i]);
      const double mi = c.beta1 * static_cast<double>(m.data[i]) + (1.0 - c.beta1) * gi;
      const double vi = c.beta2 * static_cast<double>(v.data[i]) + (1.0 - c.beta2) * gi * gi;
      m.data[i] = static_cast<T>(mi);
      v.data[i] = static_cast<T>(vi);
      const double update = c.lr * (mi / bc1) / (std::sqrt(vi / bc2) + c.eps);
      p.data[i] = static_cast<T>(static_cast<double>(p.data[i]) - update);
    }
  }
}

template <class T>
void sgd_step(ParameterSet<T>& params, const std::vector<Matrix<T>>& grads, double lr) {
  if (grads.size() != params.size()) throw ShapeError("sgd_step: gradient count does not match parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix<T>& p = params[k].value;
    if (!p.same_shape(grads[k])) throw ShapeError("sgd_step: shape mismatch for '" + params[k].name + "'");
    for (std::size_t i = 0; i < p.size(); ++i)
      p.data[i] = static_cast<T>(static_cast<double>(p.data[i]) - lr * static_cast<double>(grads[k].data[i]));
  }
}

/// Scalar loss built on a fresh tape from parameters already bound to it.
template <class T>
using LossFn = std::function<Var<T>(Tape<T>&, const std::vector<Var<T>>&)>;

/// Runs the loss once with recording and returns the gradient of every parameter.
template <class T>
std::vector<Matrix<T>> compute_gradients(const LossFn<T>& f, const ParameterSet<T>& params, double* loss_out = nullptr) {
  Tape<T> tape(true);
  const auto leaves = params.bind(tape);
  Var<T> loss = f(tape, leaves);
  // A loss that does not depend on any parameter has zero gradient everywhere.
  if (tape.requires_grad(loss)) tape.backward(loss);
  if (loss_out) *loss_out = static_cast<double>(loss.value().data[0]);
  std::vector<Matrix<T>> grads;
  grads.reserve(leaves.size());
  for (Var<T> v : leaves) grads.push_back(tape.grad(v));
  return grads;
}

template <class T>
double evaluate_loss(const LossFn<T>& f, const ParameterSet<T>& params) {
  Tape<T> tape(false);
  const auto leaves = params.bind(tape);
  return static_cast<double>(f(tape, leaves).value().data[0]);
}

struct GradientCheckResult {
  /// Largest per-tensor relative error ||analytic - numeric|| / max(||analytic||, ||numeric||).
  double max_relative_error = 0.0;
  /// Largest single-coordinate absolute difference.
  double max_abs_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates = 0;
};

/// Compares backward() gradients against central differences
/// (f(theta + h) - f(theta - h)) / 2h taken coordinate by coordinate, with the
/// difference quotient formed in double precision. Each parameter tensor is
/// scored by the norm-wise relative error of its gradient block; tensors whose
/// analytic and numeric gradients are both exactly zero score 0.
namespace detail {

// Norm-wise relative error per tensor between `analytic` and central differences of `f`.
template <class T, class U>
GradientCheckResult compare_with_differences(const std::vector<Matrix<T>>& analytic, const LossFn<U>& f,
                                             ParameterSet<U> probe, double h) {
  GradientCheckResult result;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    Matrix<U>& p = probe[k].value;
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const U original = p.data[i];
      p.data[i] = static_cast<U>(static_cast<double>(original) + h);
      const double up = evaluate_loss(f, probe);
      const double step_up = static_cast<double>(p.data[i]) - static_cast<double>(original);
      p.data[i] = static_cast<U>(static_cast<double>(original) - h);
      const double down = evaluate_loss(f, probe);
      const double step_down = static_cast<double>(original) - static_cast<double>(p.data[i]);
      p.data[i] = original;
      // Divide by the step actually realized in U, which differs from 2h in f32.
      const double numeric = (up - down) / (step_up + step_down);
      const double a = static_cast<double>(analytic[k].data[i]);
      diff_sq += (a - numeric) * (a - numeric);
      a_sq += a * a;
      n_sq += numeric * numeric;
      result.max_abs_error = std::max(result.max_abs_error, std::abs(a - numeric));
      ++result.coordinates;
    }
    const double denom = std::max(std::sqrt(a_sq), std::sqrt(n_sq));
    const double rel = denom > 0.0 ? std::sqrt(diff_sq) / denom : 0.0;
    if (rel >= result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = probe[k].name;
    }
  }
  return result;
}

}  // namespace detail

template <class T>
GradientCheckResult finite_diff_check(const LossFn<T>& f, const ParameterSet<T>& params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  return detail::compare_with_differences(compute_gradients(f, params), f, params, h);
}

// Backward gradients of `f` against central differences of `reference`, the same loss
// evaluated in double at the same parameter values.
template <class T>
GradientCheckResult finite_diff_check(const LossFn<T>& f, const LossFn<double>& reference,
                                      const ParameterSet<T>& params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  return detail::compare_with_differences(compute_gradients(f, params), reference,
                                          params.template cast<double>(), h);
}

}  // namespace coldguess
