#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffnet/error.hpp"

namespace diffnet {

#ifdef DIFFNET_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

// Dense row-major matrix. Rows index entities (users, items, batch samples)
// or output features of a weight; a row is always contiguous.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, Real value = Real(0))
        : rows_(rows), cols_(cols), v_(rows * cols, value) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    Real& operator()(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
    Real operator()(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }

    std::span<Real> row(std::size_t r) { return {v_.data() + r * cols_, cols_}; }
    std::span<const Real> row(std::size_t r) const { return {v_.data() + r * cols_, cols_}; }
    std::span<Real> flat() { return v_; }
    std::span<const Real> flat() const { return v_; }
    Real* data() { return v_.data(); }
    const Real* data() const { return v_.data(); }

    void fill(Real x);
    bool all_finite() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<Real> v_;
};

Real dot(std::span<const Real> a, std::span<const Real> b);
Real squared_norm(std::span<const Real> a);
void axpy(Real alpha, std::span<const Real> x, std::span<Real> y);  // y += alpha * x

// y = W x + b; bias may be empty. Shapes: W is out x in.
void affine(const Matrix& w, std::span<const Real> x, std::span<const Real> bias,
            std::span<Real> y);

// dx += W^T dy
void matvec_transpose_acc(const Matrix& w, std::span<const Real> dy, std::span<Real> dx);

// dW += dy (outer) x
void outer_acc(Matrix& dw, std::span<const Real> dy, std::span<const Real> x);

// ---------------------------------------------------------------------------
// activations

enum class Activation { identity, sigmoid, relu };

Activation activation_from_string(std::string_view name);  // throws ConfigError
std::string_view to_string(Activation k);

Real activate(Activation k, Real x);
void activate_inplace(Activation k, std::span<Real> xs);
// derivative at the pre-activation input; relu'(0) is taken as 0
Real activation_derivative(Activation k, Real x);
// chain rule using only activation outputs: g_i *= s'(s^{-1}(out_i))
void scale_by_activation_grad(Activation k, std::span<const Real> out, std::span<Real> g);

// ---------------------------------------------------------------------------
// named tensors

struct NamedTensor {
    std::string name;
    Matrix value;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Ordered collection of named tensors. Iteration order is insertion order and
// is part of the determinism contract (the optimizer walks it in order).
class ParamSet {
public:
    Matrix& add(std::string name, Matrix value);  // duplicate name throws
    Matrix* find(std::string_view name);
    const Matrix* find(std::string_view name) const;
    Matrix& at(std::string_view name);  // missing name throws
    const Matrix& at(std::string_view name) const;

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    ParamSet zeros_like() const;
    void set_zero();
    std::size_t total_values() const;
    bool all_finite() const;

    friend bool operator==(const ParamSet&, const ParamSet&) = default;

private:
    std::vector<NamedTensor> entries_;
};

using GradientSet = ParamSet;

// ---------------------------------------------------------------------------
// optimizer

struct AdamConfig {
    Real learning_rate = Real(0.001);
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real epsilon = Real(1e-8);
};

class AdamState {
public:
    AdamState() = default;
    AdamState(const ParamSet& shapes, AdamConfig cfg);

    // one update; params and grads must both match the construction shapes
    void step(ParamSet& params, const GradientSet& grads);

    std::int64_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    const std::vector<Matrix>& first_moments() const { return m_; }
    const std::vector<Matrix>& second_moments() const { return v_; }
    void restore(std::vector<Matrix> m, std::vector<Matrix> v, std::int64_t t);

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<Matrix> m_, v_;
};

// in-place Adam update; non-finite gradients throw
void adam_step(ParamSet& params, const GradientSet& grads, AdamState& state);

// ---------------------------------------------------------------------------
// batch normalization

struct BatchNormState {
    std::vector<Real> running_mean;  // per feature
    std::vector<Real> running_var;
    Real momentum = Real(0.1);
    Real epsilon = Real(1e-5);
    bool training = true;

    BatchNormState() = default;
    explicit BatchNormState(std::size_t features)
        : running_mean(features, Real(0)), running_var(features, Real(1)) {}
};

struct BatchNormTrace {
    Matrix xhat;                   // normalized inputs
    std::vector<Real> inv_std;     // 1 / sqrt(var + eps) actually applied
    bool used_batch_stats = false;
};

// Normalizes each column (rows are batch samples, columns are features), then
// applies the per-feature scale and shift. Training mode uses biased batch
// variance and nudges the running statistics:
//   running <- (1 - momentum) * running + momentum * batch.
// Inference mode applies the running statistics unchanged. A batch with fewer
// than 2 rows cannot supply statistics; training mode then falls back to the
// running statistics and warns.
Matrix batchnorm_apply(BatchNormState& state, std::span<const Real> scale,
                       std::span<const Real> shift, const Matrix& batch,
                       BatchNormTrace* trace = nullptr);

// Backward through the matching batchnorm_apply call. Returns d(input);
// dscale/dshift are accumulated.
Matrix batchnorm_backward(const BatchNormTrace& trace, std::span<const Real> scale,
                          const Matrix& dout, std::span<Real> dscale_acc,
                          std::span<Real> dshift_acc);

}  // namespace diffnet
