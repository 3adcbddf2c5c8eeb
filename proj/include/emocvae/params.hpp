#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "emocvae/autodiff.hpp"
#include "emocvae/rng.hpp"

namespace emocvae {

// Named parameter registry. Creation order is fixed by construction code, so
// seeded initialization and optimizer sweeps are fully deterministic.
class ParamStore {
  public:
    // get-or-create; an existing name is returned as-is (this is how two
    // transformer stacks share weights when configured to)
    Tensor create(const std::string& name, int rows, int cols, Rng& rng, double init_scale) {
        auto it = index_.find(name);
        if (it != index_.end()) {
            const Tensor& t = items_[it->second].second;
            if (t->val.rows != rows || t->val.cols != cols)
                throw std::invalid_argument("param shape conflict: " + name);
            return t;
        }
        Mat m(rows, cols);
        if (init_scale != 0.0)
            for (auto& x : m.a) x = rng.normal() * init_scale;
        Tensor t = make_param(std::move(m));
        index_.emplace(name, items_.size());
        items_.emplace_back(name, t);
        return t;
    }

    Tensor create_const(const std::string& name, int rows, int cols, double value) {
        auto it = index_.find(name);
        if (it != index_.end()) return items_[it->second].second;
        Mat m(rows, cols);
        m.fill(value);
        Tensor t = make_param(std::move(m));
        index_.emplace(name, items_.size());
        items_.emplace_back(name, t);
        return t;
    }

    Tensor get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("no such param: " + name);
        return items_[it->second].second;
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }
    size_t size() const { return items_.size(); }
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

    void zero_grads() {
        for (auto& [name, t] : items_) t->grad.fill(0.0);
    }

    bool grads_finite() const {
        for (const auto& [name, t] : items_)
            if (!t->grad.all_finite()) return false;
        return true;
    }

    std::string digest() const {
        Fnv1a f;
        for (const auto& [name, t] : items_) {
            f.update(name);
            f.update(t->val.a.data(), t->val.a.size() * sizeof(double));
        }
        return f.hex();
    }

  private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, size_t> index_;
};

// Adam with bias correction; state is keyed positionally over the store.
class AdamOptimizer {
  public:
    explicit AdamOptimizer(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& params) {
        ++t_;
        if (m_.size() != params.size()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (size_t i = 0; i < params.size(); ++i) {
                const auto& val = params.items()[i].second->val;
                if (m_[i].rows == 0) {
                    m_[i] = Mat(val.rows, val.cols);
                    v_[i] = Mat(val.rows, val.cols);
                }
            }
        }
        double bc1 = 1.0 - std::pow(beta1_, double(t_));
        double bc2 = 1.0 - std::pow(beta2_, double(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor p = params.items()[i].second;
            Mat& m = m_[i];
            Mat& v = v_[i];
            for (size_t k = 0; k < p->val.a.size(); ++k) {
                double g = p->grad.a[k];
                m.a[k] = beta1_ * m.a[k] + (1.0 - beta1_) * g;
                v.a[k] = beta2_ * v.a[k] + (1.0 - beta2_) * g * g;
                double mhat = m.a[k] / bc1;
                double vhat = v.a[k] / bc2;
                p->val.a[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

  private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Mat> m_, v_;
};

}  // namespace emocvae
