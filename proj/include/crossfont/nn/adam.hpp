#pragma once

#include <cmath>
#include <vector>

#include "crossfont/core/autograd.hpp"
#include "crossfont/nn/module.hpp"

namespace crossfont {

/// Linear decay from the peak rate to zero across the step budget.
template <typename T>
T linear_decay_lr(T peak, long step, long total_steps) {
    if (total_steps <= 0) return peak;
    T frac = T(1) - static_cast<T>(step) / static_cast<T>(total_steps);
    if (frac < 0) frac = 0;
    return peak * frac;
}

template <typename T>
class Adam {
public:
    Adam() = default;
    explicit Adam(ParamRegistry<T>* params, T beta1 = T(0.9), T beta2 = T(0.999),
                  T eps = T(1e-8))
        : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.reserve(params->size());
        v_.reserve(params->size());
        for (auto& p : params->params()) {
            m_.push_back(Tensor<T>::zeros(p.shape()));
            v_.push_back(Tensor<T>::zeros(p.shape()));
        }
    }

    long step_count() const { return t_; }

    /// Applies one update from the gradient map. Parameters absent from the
    /// map (frozen or untouched by the loss) keep their moments untouched.
    void step(const GradMap<T>& grads, T lr) {
        ++t_;
        T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
        T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
        auto& ps = params_->params();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            auto it = grads.find(ps[i].node());
            if (it == grads.end()) continue;
            const Tensor<T>& g = it->second.value();
            require(g.shape() == ps[i].shape(), "Adam: gradient shape mismatch for " +
                                                    params_->names()[i]);
            T* m = m_[i].data();
            T* v = v_[i].data();
            T* p = ps[i].value().data();
            const T* gp = g.data();
            for (long j = 0; j < g.size(); ++j) {
                m[j] = beta1_ * m[j] + (T(1) - beta1_) * gp[j];
                v[j] = beta2_ * v[j] + (T(1) - beta2_) * gp[j] * gp[j];
                T mhat = m[j] / bc1;
                T vhat = v[j] / bc2;
                p[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    std::vector<Tensor<T>>& moment1() { return m_; }
    std::vector<Tensor<T>>& moment2() { return v_; }
    const std::vector<Tensor<T>>& moment1() const { return m_; }
    const std::vector<Tensor<T>>& moment2() const { return v_; }
    void set_step_count(long t) { t_ = t; }

private:
    ParamRegistry<T>* params_ = nullptr;
    std::vector<Tensor<T>> m_, v_;
    T beta1_ = T(0.9), beta2_ = T(0.999), eps_ = T(1e-8);
    long t_ = 0;
};

}  // namespace crossfont
