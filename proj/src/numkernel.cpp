#include "diffnet/numkernel.hpp"

#include <algorithm>
#include <cmath>

#include "diffnet/log.hpp"

namespace diffnet {

void Matrix::fill(Real x) { std::fill(v_.begin(), v_.end(), x); }

bool Matrix::all_finite() const {
    for (Real x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

Real dot(std::span<const Real> a, std::span<const Real> b) {
    Real s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Real squared_norm(std::span<const Real> a) { return dot(a, a); }

void axpy(Real alpha, std::span<const Real> x, std::span<Real> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void affine(const Matrix& w, std::span<const Real> x, std::span<const Real> bias,
            std::span<Real> y) {
    if (w.cols() != x.size() || w.rows() != y.size())
        throw DimError("affine: weight is " + std::to_string(w.rows()) + "x" +
                       std::to_string(w.cols()) + " but input has " +
                       std::to_string(x.size()) + " and output " + std::to_string(y.size()));
    if (!bias.empty() && bias.size() != y.size())
        throw DimError("affine: bias length mismatch");
    for (std::size_t r = 0; r < w.rows(); ++r) {
        Real s = bias.empty() ? Real(0) : bias[r];
        s += dot(w.row(r), x);
        y[r] = s;
    }
}

void matvec_transpose_acc(const Matrix& w, std::span<const Real> dy, std::span<Real> dx) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
        Real g = dy[r];
        if (g == Real(0)) continue;
        axpy(g, w.row(r), dx);
    }
}

void outer_acc(Matrix& dw, std::span<const Real> dy, std::span<const Real> x) {
    for (std::size_t r = 0; r < dw.rows(); ++r) {
        Real g = dy[r];
        if (g == Real(0)) continue;
        axpy(g, x, dw.row(r));
    }
}

// ---------------------------------------------------------------------------
// activations

Activation activation_from_string(std::string_view name) {
    if (name == "identity") return Activation::identity;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + std::string(name) +
                      "' (expected identity, sigmoid or relu)");
}

std::string_view to_string(Activation k) {
    switch (k) {
        case Activation::identity: return "identity";
        case Activation::sigmoid: return "sigmoid";
        case Activation::relu: return "relu";
    }
    return "?";
}

Real activate(Activation k, Real x) {
    switch (k) {
        case Activation::identity: return x;
        case Activation::sigmoid: {
            // evaluate through exp of a non-positive argument only
            if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
            Real e = std::exp(x);
            return e / (Real(1) + e);
        }
        case Activation::relu: return x > 0 ? x : Real(0);
    }
    return x;
}

void activate_inplace(Activation k, std::span<Real> xs) {
    for (Real& x : xs) x = activate(k, x);
}

Real activation_derivative(Activation k, Real x) {
    switch (k) {
        case Activation::identity: return Real(1);
        case Activation::sigmoid: {
            Real s = activate(Activation::sigmoid, x);
            return s * (Real(1) - s);
        }
        case Activation::relu: return x > 0 ? Real(1) : Real(0);
    }
    return Real(1);
}

void scale_by_activation_grad(Activation k, std::span<const Real> out, std::span<Real> g) {
    switch (k) {
        case Activation::identity: return;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= out[i] * (Real(1) - out[i]);
            return;
        case Activation::relu:
            for (std::size_t i = 0; i < g.size(); ++i)
                if (out[i] <= 0) g[i] = 0;
            return;
    }
}

// ---------------------------------------------------------------------------
// ParamSet

Matrix& ParamSet::add(std::string name, Matrix value) {
    if (find(name)) throw Error("ParamSet: duplicate tensor '" + name + "'");
    entries_.push_back({std::move(name), std::move(value)});
    return entries_.back().value;
}

Matrix* ParamSet::find(std::string_view name) {
    for (auto& e : entries_)
        if (e.name == name) return &e.value;
    return nullptr;
}

const Matrix* ParamSet::find(std::string_view name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e.value;
    return nullptr;
}

Matrix& ParamSet::at(std::string_view name) {
    if (Matrix* m = find(name)) return *m;
    throw Error("ParamSet: no tensor named '" + std::string(name) + "'");
}

const Matrix& ParamSet::at(std::string_view name) const {
    if (const Matrix* m = find(name)) return *m;
    throw Error("ParamSet: no tensor named '" + std::string(name) + "'");
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (const auto& e : entries_) out.add(e.name, Matrix(e.value.rows(), e.value.cols()));
    return out;
}

void ParamSet::set_zero() {
    for (auto& e : entries_) e.value.fill(Real(0));
}

std::size_t ParamSet::total_values() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

bool ParamSet::all_finite() const {
    for (const auto& e : entries_)
        if (!e.value.all_finite()) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Adam

AdamState::AdamState(const ParamSet& shapes, AdamConfig cfg) : cfg_(cfg) {
    m_.reserve(shapes.size());
    v_.reserve(shapes.size());
    for (const auto& e : shapes) {
        m_.emplace_back(e.value.rows(), e.value.cols());
        v_.emplace_back(e.value.rows(), e.value.cols());
    }
}

void AdamState::restore(std::vector<Matrix> m, std::vector<Matrix> v, std::int64_t t) {
    if (m.size() != m_.size() || v.size() != v_.size())
        throw DimError("AdamState::restore: moment count mismatch");
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i].rows() != m_[i].rows() || m[i].cols() != m_[i].cols() ||
            v[i].rows() != v_[i].rows() || v[i].cols() != v_[i].cols())
            throw DimError("AdamState::restore: moment shape mismatch");
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
}

void AdamState::step(ParamSet& params, const GradientSet& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw DimError("adam_step: tensor count differs from optimizer state");
    ++t_;
    const Real b1 = cfg_.beta1, b2 = cfg_.beta2;
    const Real corr1 = Real(1) - std::pow(b1, Real(t_));
    const Real corr2 = Real(1) - std::pow(b2, Real(t_));
    std::size_t idx = 0;
    auto g_it = grads.begin();
    for (auto& p : params) {
        const Matrix& g = g_it->value;
        if (p.name != g_it->name || p.value.size() != g.size())
            throw DimError("adam_step: gradient set does not match parameters");
        if (!g.all_finite())
            throw Error("adam_step: non-finite gradient in tensor '" + p.name + "'");
        Matrix& m = m_[idx];
        Matrix& v = v_[idx];
        Real* pv = p.value.data();
        const Real* gv = g.data();
        Real* mv = m.data();
        Real* vv = v.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            mv[i] = b1 * mv[i] + (Real(1) - b1) * gv[i];
            vv[i] = b2 * vv[i] + (Real(1) - b2) * gv[i] * gv[i];
            Real mhat = mv[i] / corr1;
            Real vhat = vv[i] / corr2;
            pv[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
        ++idx;
        ++g_it;
    }
}

void adam_step(ParamSet& params, const GradientSet& grads, AdamState& state) {
    state.step(params, grads);
}

// ---------------------------------------------------------------------------
// batch normalization

Matrix batchnorm_apply(BatchNormState& state, std::span<const Real> scale,
                       std::span<const Real> shift, const Matrix& batch,
                       BatchNormTrace* trace) {
    const std::size_t f = state.running_mean.size();
    if (batch.cols() != f || scale.size() != f || shift.size() != f)
        throw DimError("batchnorm_apply: feature count mismatch");

    const std::size_t n = batch.rows();
    bool use_batch = state.training && n >= 2;
    if (state.training && n < 2)
        logging::warn("batchnorm: %zu-row batch in training mode, using running statistics",
                      n);

    std::vector<Real> mean(f), var(f);
    if (use_batch) {
        for (std::size_t c = 0; c < f; ++c) {
            Real s = 0;
            for (std::size_t r = 0; r < n; ++r) s += batch(r, c);
            mean[c] = s / Real(n);
        }
        for (std::size_t c = 0; c < f; ++c) {
            Real s = 0;
            for (std::size_t r = 0; r < n; ++r) {
                Real d = batch(r, c) - mean[c];
                s += d * d;
            }
            var[c] = s / Real(n);  // biased
        }
        for (std::size_t c = 0; c < f; ++c) {
            state.running_mean[c] =
                (Real(1) - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
            state.running_var[c] =
                (Real(1) - state.momentum) * state.running_var[c] + state.momentum * var[c];
        }
    } else {
        mean.assign(state.running_mean.begin(), state.running_mean.end());
        var.assign(state.running_var.begin(), state.running_var.end());
    }

    std::vector<Real> inv_std(f);
    for (std::size_t c = 0; c < f; ++c)
        inv_std[c] = Real(1) / std::sqrt(var[c] + state.epsilon);

    Matrix out(n, batch.cols());
    Matrix xhat(n, batch.cols());
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < f; ++c) {
            Real xh = (batch(r, c) - mean[c]) * inv_std[c];
            xhat(r, c) = xh;
            out(r, c) = scale[c] * xh + shift[c];
        }
    }

    if (trace) {
        trace->xhat = std::move(xhat);
        trace->inv_std = std::move(inv_std);
        trace->used_batch_stats = use_batch;
    }
    return out;
}

Matrix batchnorm_backward(const BatchNormTrace& trace, std::span<const Real> scale,
                          const Matrix& dout, std::span<Real> dscale_acc,
                          std::span<Real> dshift_acc) {
    const std::size_t n = dout.rows(), f = dout.cols();
    if (trace.xhat.rows() != n || trace.xhat.cols() != f)
        throw DimError("batchnorm_backward: trace does not match gradient shape");

    for (std::size_t c = 0; c < f; ++c) {
        Real ds = 0, db = 0;
        for (std::size_t r = 0; r < n; ++r) {
            ds += dout(r, c) * trace.xhat(r, c);
            db += dout(r, c);
        }
        dscale_acc[c] += ds;
        dshift_acc[c] += db;
    }

    Matrix dx(n, f);
    if (!trace.used_batch_stats) {
        // statistics were constants; the map was a per-feature affine function
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < f; ++c)
                dx(r, c) = dout(r, c) * scale[c] * trace.inv_std[c];
        return dx;
    }

    // dx = (scale * inv_std) * (dout - mean(dout) - xhat * mean(dout * xhat))
    for (std::size_t c = 0; c < f; ++c) {
        Real mean_dout = 0, mean_dout_xhat = 0;
        for (std::size_t r = 0; r < n; ++r) {
            mean_dout += dout(r, c);
            mean_dout_xhat += dout(r, c) * trace.xhat(r, c);
        }
        mean_dout /= Real(n);
        mean_dout_xhat /= Real(n);
        const Real k = scale[c] * trace.inv_std[c];
        for (std::size_t r = 0; r < n; ++r)
            dx(r, c) = k * (dout(r, c) - mean_dout - trace.xhat(r, c) * mean_dout_xhat);
    }
    return dx;
}

}  // namespace diffnet
