#pragma once

// Adam with bias correction and optional cosine decay of the learning rate.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "zdcfm/kernels.hpp"
#include "zdcfm/tensor.hpp"

namespace zdcfm {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool cosine_decay = false;
    int64_t total_steps = 0;  // required when cosine_decay
};

template <class T>
class Adam {
public:
    Adam(AdamConfig cfg, const std::vector<TensorT<T>*>& params) : cfg_(cfg), params_(params) {
        if (cfg_.lr <= 0) throw std::runtime_error("adam: learning rate must be positive");
        if (cfg_.beta1 <= 0 || cfg_.beta1 >= 1 || cfg_.beta2 <= 0 || cfg_.beta2 >= 1)
            throw std::runtime_error("adam: betas must lie in (0,1)");
        if (cfg_.cosine_decay && cfg_.total_steps <= 0)
            throw std::runtime_error("adam: cosine decay needs total_steps");
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (auto* p : params_) {
            m_.push_back(TensorT<T>::zeros(p->shape));
            v_.push_back(TensorT<T>::zeros(p->shape));
        }
    }

    int64_t step_count() const { return step_; }

    // lr * 0.5 (1 + cos(pi step/total)); evaluated at the pre-increment step index
    double effective_lr(int64_t step) const {
        if (!cfg_.cosine_decay) return cfg_.lr;
        double frac = static_cast<double>(step) / static_cast<double>(cfg_.total_steps);
        if (frac > 1.0) frac = 1.0;
        return cfg_.lr * 0.5 * (1.0 + std::cos(M_PI * frac));
    }

    void step(const std::vector<const TensorT<T>*>& grads) {
        if (grads.size() != params_.size()) throw std::runtime_error("adam: gradient list size mismatch");
        double lr_t = effective_lr(step_);
        ++step_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (size_t i = 0; i < params_.size(); ++i) {
            TensorT<T>& p = *params_[i];
            const TensorT<T>& g = *grads[i];
            if (!p.same_shape(g)) throw std::runtime_error("adam: gradient shape mismatch");
            TensorT<T>& m = m_[i];
            TensorT<T>& v = v_[i];
            int64_t n = p.numel();
            const double b1 = cfg_.beta1, b2 = cfg_.beta2, eps = cfg_.eps;
            T* pd = p.data.data();
            T* md = m.data.data();
            T* vd = v.data.data();
            const T* gd = g.data.data();
#pragma omp parallel for schedule(static) if (kern::parallel_enabled() && n > 4096)
            for (int64_t j = 0; j < n; ++j) {
                double gj = static_cast<double>(gd[j]);
                double mj = b1 * static_cast<double>(md[j]) + (1.0 - b1) * gj;
                double vj = b2 * static_cast<double>(vd[j]) + (1.0 - b2) * gj * gj;
                md[j] = static_cast<T>(mj);
                vd[j] = static_cast<T>(vj);
                double mhat = mj / bc1;
                double vhat = vj / bc2;
                pd[j] = static_cast<T>(static_cast<double>(pd[j]) - lr_t * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }

private:
    AdamConfig cfg_;
    std::vector<TensorT<T>*> params_;
    std::vector<TensorT<T>> m_, v_;
    int64_t step_ = 0;
};

}  // namespace zdcfm
