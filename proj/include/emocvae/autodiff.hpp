#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "emocvae/mat.hpp"

namespace emocvae {

// Reverse-mode autodiff over Mat values. A forward pass builds a DAG of
// shared_ptr nodes; backward() walks it once in reverse topological order.
// Parameter nodes are long-lived and accumulate gradients across examples;
// everything else is created fresh per forward pass.
struct Node;
using Tensor = std::shared_ptr<Node>;

struct Node {
    Mat val;
    Mat grad;  // sized lazily; persists for parameters
    bool needs_grad = false;
    bool is_param = false;
    std::vector<Tensor> parents;
    std::function<void(Node&)> backfn;

    void ensure_grad() {
        if (grad.rows != val.rows || grad.cols != val.cols) grad = Mat(val.rows, val.cols);
    }
};

inline Tensor make_constant(Mat m) {
    auto n = std::make_shared<Node>();
    n->val = std::move(m);
    return n;
}

// While a NoGradGuard is alive, ops compute values only: no graph is
// retained and backward() cannot reach parameters through them.
inline bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev; }
};

inline Tensor make_param(Mat m) {
    auto n = std::make_shared<Node>();
    n->val = std::move(m);
    n->needs_grad = true;
    n->is_param = true;
    n->ensure_grad();
    return n;
}

namespace detail {

inline Tensor new_op(Mat val, std::vector<Tensor> parents, std::function<void(Node&)> backfn) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    if (grad_enabled()) {
        for (const auto& p : parents)
            if (p->needs_grad) n->needs_grad = true;
    }
    if (n->needs_grad) {
        n->parents = std::move(parents);
        n->backfn = std::move(backfn);
    }
    return n;
}

}  // namespace detail

// ---- elementwise / linear ops ----

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("add: shape mismatch");
    Mat out = a->val;
    add_inplace(out, b->val);
    return detail::new_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->needs_grad) { a->ensure_grad(); add_inplace(a->grad, n.grad); }
        if (b->needs_grad) { b->ensure_grad(); add_inplace(b->grad, n.grad); }
    });
}

// A (n x d) + broadcast row b (1 x d)
inline Tensor add_rowvec(const Tensor& a, const Tensor& b) {
    if (b->val.rows != 1 || b->val.cols != a->val.cols)
        throw std::invalid_argument("add_rowvec: shape mismatch");
    Mat out = a->val;
    for (int r = 0; r < out.rows; ++r) {
        double* orow = out.row(r);
        const double* brow = b->val.row(0);
        for (int c = 0; c < out.cols; ++c) orow[c] += brow[c];
    }
    return detail::new_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->needs_grad) { a->ensure_grad(); add_inplace(a->grad, n.grad); }
        if (b->needs_grad) {
            b->ensure_grad();
            for (int r = 0; r < n.grad.rows; ++r) {
                const double* g = n.grad.row(r);
                double* bg = b->grad.row(0);
                for (int c = 0; c < n.grad.cols; ++c) bg[c] += g[c];
            }
        }
    });
}

inline Tensor scale(const Tensor& a, double c) {
    Mat out = a->val;
    for (auto& x : out.a) x *= c;
    return detail::new_op(std::move(out), {a}, [a, c](Node& n) {
        if (!a->needs_grad) return;
        a->ensure_grad();
        add_inplace(a->grad, n.grad, c);
    });
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("hadamard: shape mismatch");
    Mat out = a->val;
    for (size_t i = 0; i < out.a.size(); ++i) out.a[i] *= b->val.a[i];
    return detail::new_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->needs_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.a.size(); ++i) a->grad.a[i] += n.grad.a[i] * b->val.a[i];
        }
        if (b->needs_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.a.size(); ++i) b->grad.a[i] += n.grad.a[i] * a->val.a[i];
        }
    });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a->val.cols != b->val.rows) throw std::invalid_argument("matmul: shape mismatch");
    return detail::new_op(matmul(a->val, b->val), {a, b}, [a, b](Node& n) {
        if (a->needs_grad) { a->ensure_grad(); matmul_nt_acc(n.grad, b->val, a->grad); }
        if (b->needs_grad) { b->ensure_grad(); matmul_tn_acc(a->val, n.grad, b->grad); }
    });
}

// A * B^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a->val.cols != b->val.cols) throw std::invalid_argument("matmul_nt: shape mismatch");
    return detail::new_op(matmul_nt(a->val, b->val), {a, b}, [a, b](Node& n) {
        if (a->needs_grad) { a->ensure_grad(); matmul_acc(n.grad, b->val, a->grad); }
        if (b->needs_grad) { b->ensure_grad(); matmul_tn_acc(n.grad, a->val, b->grad); }
    });
}

inline Tensor tanh_t(const Tensor& a) {
    Mat out = a->val;
    for (auto& x : out.a) x = std::tanh(x);
    auto outcopy = out;  // value needed in backward
    return detail::new_op(std::move(out), {a}, [a, outcopy](Node& n) {
        if (!a->needs_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.a.size(); ++i) {
            double t = outcopy.a[i];
            a->grad.a[i] += n.grad.a[i] * (1.0 - t * t);
        }
    });
}

inline Tensor gelu(const Tensor& a) {
    Mat out = a->val;
    for (auto& x : out.a) x = 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
    return detail::new_op(std::move(out), {a}, [a](Node& n) {
        if (!a->needs_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.a.size(); ++i) {
            double x = a->val.a[i];
            double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
            double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
            a->grad.a[i] += n.grad.a[i] * (cdf + x * pdf);
        }
    });
}

inline Tensor exp_t(const Tensor& a) {
    Mat out = a->val;
    for (auto& x : out.a) x = std::exp(x);
    auto outcopy = out;
    return detail::new_op(std::move(out), {a}, [a, outcopy](Node& n) {
        if (!a->needs_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.a.size(); ++i) a->grad.a[i] += n.grad.a[i] * outcopy.a[i];
    });
}

// gradient passes through where the input lies inside [lo, hi]
inline Tensor clamp_t(const Tensor& a, double lo, double hi) {
    Mat out = a->val;
    for (auto& x : out.a) x = std::min(hi, std::max(lo, x));
    return detail::new_op(std::move(out), {a}, [a, lo, hi](Node& n) {
        if (!a->needs_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.a.size(); ++i) {
            double x = a->val.a[i];
            if (x >= lo && x <= hi) a->grad.a[i] += n.grad.a[i];
        }
    });
}

// ---- structural ops ----

// Gather rows of a by id; id < 0 yields a zero row (no gradient flows there).
inline Tensor row_select(const Tensor& a, const std::vector<int>& ids) {
    Mat out(int(ids.size()), a->val.cols);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0) continue;
        if (ids[i] >= a->val.rows) throw std::out_of_range("row_select: id out of range");
        std::copy(a->val.row(ids[i]), a->val.row(ids[i]) + a->val.cols, out.row(int(i)));
    }
    return detail::new_op(std::move(out), {a}, [a, ids](Node& n) {
        if (!a->needs_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] < 0) continue;
            const double* g = n.grad.row(int(i));
            double* ag = a->grad.row(ids[i]);
            for (int c = 0; c < n.grad.cols; ++c) ag[c] += g[c];
        }
    });
}

// out = a with row r incremented by the 1 x d tensor `row`
inline Tensor add_row_at(const Tensor& a, int r, const Tensor& row) {
    if (row->val.rows != 1 || row->val.cols != a->val.cols || r < 0 || r >= a->val.rows)
        throw std::invalid_argument("add_row_at: bad shape or index");
    Mat out = a->val;
    for (int c = 0; c < out.cols; ++c) out.at(r, c) += row->val.at(0, c);
    return detail::new_op(std::move(out), {a, row}, [a, row, r](Node& n) {
        if (a->needs_grad) { a->ensure_grad(); add_inplace(a->grad, n.grad); }
        if (row->needs_grad) {
            row->ensure_grad();
            const double* g = n.grad.row(r);
            for (int c = 0; c < n.grad.cols; ++c) row->grad.at(0, c) += g[c];
        }
    });
}

inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
    if (c0 < 0 || c1 > a->val.cols || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    Mat out(a->val.rows, c1 - c0);
    for (int r = 0; r < out.rows; ++r)
        std::copy(a->val.row(r) + c0, a->val.row(r) + c1, out.row(r));
    return detail::new_op(std::move(out), {a}, [a, c0](Node& n) {
        if (!a->needs_grad) return;
        a->ensure_grad();
        for (int r = 0; r < n.grad.rows; ++r) {
            const double* g = n.grad.row(r);
            double* ag = a->grad.row(r) + c0;
            for (int c = 0; c < n.grad.cols; ++c) ag[c] += g[c];
        }
    });
}

inline Tensor slice_rows(const Tensor& a, int r0, int r1) {
    if (r0 < 0 || r1 > a->val.rows || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
    Mat out(r1 - r0, a->val.cols);
    for (int r = r0; r < r1; ++r)
        std::copy(a->val.row(r), a->val.row(r) + a->val.cols, out.row(r - r0));
    return detail::new_op(std::move(out), {a}, [a, r0](Node& n) {
        if (!a->needs_grad) return;
        a->ensure_grad();
        for (int r = 0; r < n.grad.rows; ++r) {
            const double* g = n.grad.row(r);
            double* ag = a->grad.row(r + r0);
            for (int c = 0; c < n.grad.cols; ++c) ag[c] += g[c];
        }
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    int rows = parts[0]->val.rows, cols = 0;
    for (const auto& p : parts) {
        if (p->val.rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += p->val.cols;
    }
    Mat out(rows, cols);
    int off = 0;
    for (const auto& p : parts) {
        for (int r = 0; r < rows; ++r)
            std::copy(p->val.row(r), p->val.row(r) + p->val.cols, out.row(r) + off);
        off += p->val.cols;
    }
    return detail::new_op(std::move(out), parts, [parts](Node& n) {
        int off2 = 0;
        for (const auto& p : parts) {
            if (p->needs_grad) {
                p->ensure_grad();
                for (int r = 0; r < n.grad.rows; ++r) {
                    const double* g = n.grad.row(r) + off2;
                    double* pg = p->grad.row(r);
                    for (int c = 0; c < p->val.cols; ++c) pg[c] += g[c];
                }
            }
            off2 += p->val.cols;
        }
    });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    int cols = parts[0]->val.cols, rows = 0;
    for (const auto& p : parts) {
        if (p->val.cols != cols) throw std::invalid_argument("concat_rows: col mismatch");
        rows += p->val.rows;
    }
    Mat out(rows, cols);
    int off = 0;
    for (const auto& p : parts) {
        for (int r = 0; r < p->val.rows; ++r)
            std::copy(p->val.row(r), p->val.row(r) + cols, out.row(off + r));
        off += p->val.rows;
    }
    return detail::new_op(std::move(out), parts, [parts, cols](Node& n) {
        int off2 = 0;
        for (const auto& p : parts) {
            if (p->needs_grad) {
                p->ensure_grad();
                for (int r = 0; r < p->val.rows; ++r) {
                    const double* g = n.grad.row(off2 + r);
                    double* pg = p->grad.row(r);
                    for (int c = 0; c < cols; ++c) pg[c] += g[c];
                }
            }
            off2 += p->val.rows;
        }
    });
}

inline Tensor mean_rows(const Tensor& a) {
    Mat out(1, a->val.cols);
    for (int r = 0; r < a->val.rows; ++r) {
        const double* arow = a->val.row(r);
        for (int c = 0; c < a->val.cols; ++c) out.at(0, c) += arow[c];
    }
    double inv = 1.0 / double(a->val.rows);
    for (auto& x : out.a) x *= inv;
    return detail::new_op(std::move(out), {a}, [a, inv](Node& n) {
        if (!a->needs_grad) return;
        a->ensure_grad();
        for (int r = 0; r < a->val.rows; ++r) {
            double* ag = a->grad.row(r);
            const double* g = n.grad.row(0);
            for (int c = 0; c < a->val.cols; ++c) ag[c] += inv * g[c];
        }
    });
}

// ---- normalization / attention / losses ----

inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
    int d = x->val.cols;
    if (gain->val.cols != d || bias->val.cols != d)
        throw std::invalid_argument("layer_norm: shape mismatch");
    Mat out(x->val.rows, d);
    Mat xhat(x->val.rows, d);
    std::vector<double> inv_sigma(size_t(x->val.rows));
    for (int r = 0; r < x->val.rows; ++r) {
        const double* xr = x->val.row(r);
        double mu = 0.0;
        for (int c = 0; c < d; ++c) mu += xr[c];
        mu /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= d;
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[size_t(r)] = is;
        for (int c = 0; c < d; ++c) {
            double xh = (xr[c] - mu) * is;
            xhat.at(r, c) = xh;
            out.at(r, c) = xh * gain->val.at(0, c) + bias->val.at(0, c);
        }
    }
    return detail::new_op(std::move(out), {x, gain, bias},
                          [x, gain, bias, xhat, inv_sigma](Node& n) {
        int d2 = x->val.cols;
        for (int r = 0; r < n.grad.rows; ++r) {
            const double* g = n.grad.row(r);
            const double* xh = xhat.row(r);
            if (gain->needs_grad) {
                gain->ensure_grad();
                for (int c = 0; c < d2; ++c) gain->grad.at(0, c) += g[c] * xh[c];
            }
            if (bias->needs_grad) {
                bias->ensure_grad();
                for (int c = 0; c < d2; ++c) bias->grad.at(0, c) += g[c];
            }
            if (x->needs_grad) {
                x->ensure_grad();
                double m1 = 0.0, m2 = 0.0;
                for (int c = 0; c < d2; ++c) {
                    double gg = g[c] * gain->val.at(0, c);
                    m1 += gg;
                    m2 += gg * xh[c];
                }
                m1 /= d2;
                m2 /= d2;
                double* xg = x->grad.row(r);
                double is = inv_sigma[size_t(r)];
                for (int c = 0; c < d2; ++c) {
                    double gg = g[c] * gain->val.at(0, c);
                    xg[c] += is * (gg - m1 - xh[c] * m2);
                }
            }
        }
    });
}

// Row-wise softmax restricted to allowed entries; disallowed entries get an
// exact 0 so masked positions can never influence downstream values. Rows
// with nothing allowed come out all-zero.
inline Tensor masked_softmax_rows(const Tensor& s, std::shared_ptr<const std::vector<uint8_t>> allow) {
    int n = s->val.rows, m = s->val.cols;
    if (allow->size() != size_t(n) * size_t(m))
        throw std::invalid_argument("masked_softmax_rows: mask size mismatch");
    Mat out(n, m);
    for (int r = 0; r < n; ++r) {
        const double* sr = s->val.row(r);
        const uint8_t* ar = allow->data() + size_t(r) * size_t(m);
        double mx = -1e300;
        bool any = false;
        for (int c = 0; c < m; ++c)
            if (ar[c]) { any = true; mx = std::max(mx, sr[c]); }
        if (!any) continue;
        double z = 0.0;
        for (int c = 0; c < m; ++c)
            if (ar[c]) z += std::exp(sr[c] - mx);
        double* orow = out.row(r);
        for (int c = 0; c < m; ++c)
            if (ar[c]) orow[c] = std::exp(sr[c] - mx) / z;
    }
    auto outcopy = out;
    return detail::new_op(std::move(out), {s}, [s, allow, outcopy](Node& nd) {
        if (!s->needs_grad) return;
        s->ensure_grad();
        int n2 = nd.grad.rows, m2 = nd.grad.cols;
        for (int r = 0; r < n2; ++r) {
            const double* g = nd.grad.row(r);
            const double* o = outcopy.row(r);
            const uint8_t* ar = allow->data() + size_t(r) * size_t(m2);
            double dot = 0.0;
            for (int c = 0; c < m2; ++c)
                if (ar[c]) dot += g[c] * o[c];
            double* sg = s->grad.row(r);
            for (int c = 0; c < m2; ++c)
                if (ar[c]) sg[c] += o[c] * (g[c] - dot);
        }
    });
}

// Sum over rows with target >= 0 of -log softmax(row)[target]; 1x1 output.
inline Tensor cross_entropy_sum(const Tensor& logits, const std::vector<int>& targets) {
    int n = logits->val.rows, m = logits->val.cols;
    if (targets.size() != size_t(n)) throw std::invalid_argument("cross_entropy_sum: target size");
    double loss = 0.0;
    for (int r = 0; r < n; ++r) {
        int t = targets[size_t(r)];
        if (t < 0) continue;
        if (t >= m) throw std::out_of_range("cross_entropy_sum: target out of range");
        const double* lr = logits->val.row(r);
        double mx = lr[0];
        for (int c = 1; c < m; ++c) mx = std::max(mx, lr[c]);
        double z = 0.0;
        for (int c = 0; c < m; ++c) z += std::exp(lr[c] - mx);
        loss += std::log(z) + mx - lr[t];
    }
    Mat out(1, 1);
    out.at(0, 0) = loss;
    return detail::new_op(std::move(out), {logits}, [logits, targets](Node& nd) {
        if (!logits->needs_grad) return;
        logits->ensure_grad();
        double g = nd.grad.at(0, 0);
        int n2 = logits->val.rows, m2 = logits->val.cols;
        for (int r = 0; r < n2; ++r) {
            int t = targets[size_t(r)];
            if (t < 0) continue;
            const double* lr = logits->val.row(r);
            double mx = lr[0];
            for (int c = 1; c < m2; ++c) mx = std::max(mx, lr[c]);
            double z = 0.0;
            for (int c = 0; c < m2; ++c) z += std::exp(lr[c] - mx);
            double* lg = logits->grad.row(r);
            for (int c = 0; c < m2; ++c) {
                double p = std::exp(lr[c] - mx) / z;
                lg[c] += g * (p - (c == t ? 1.0 : 0.0));
            }
        }
    });
}

inline Tensor log_softmax_rows(const Tensor& a) {
    int n = a->val.rows, m = a->val.cols;
    Mat out(n, m);
    for (int r = 0; r < n; ++r) {
        const double* ar = a->val.row(r);
        double mx = ar[0];
        for (int c = 1; c < m; ++c) mx = std::max(mx, ar[c]);
        double z = 0.0;
        for (int c = 0; c < m; ++c) z += std::exp(ar[c] - mx);
        double lz = std::log(z) + mx;
        for (int c = 0; c < m; ++c) out.at(r, c) = ar[c] - lz;
    }
    auto outcopy = out;
    return detail::new_op(std::move(out), {a}, [a, outcopy](Node& nd) {
        if (!a->needs_grad) return;
        a->ensure_grad();
        int n2 = nd.grad.rows, m2 = nd.grad.cols;
        for (int r = 0; r < n2; ++r) {
            const double* g = nd.grad.row(r);
            double gsum = 0.0;
            for (int c = 0; c < m2; ++c) gsum += g[c];
            double* ag = a->grad.row(r);
            const double* o = outcopy.row(r);
            for (int c = 0; c < m2; ++c) ag[c] += g[c] - std::exp(o[c]) * gsum;
        }
    });
}

// Closed-form KL(q || p) between diagonal Gaussians given as 1 x d (mu, log var)
// rows. Output is 1x1.
inline Tensor gaussian_kl(const Tensor& mu_q, const Tensor& lv_q, const Tensor& mu_p,
                          const Tensor& lv_p) {
    int d = mu_q->val.cols;
    if (lv_q->val.cols != d || mu_p->val.cols != d || lv_p->val.cols != d)
        throw std::invalid_argument("gaussian_kl: dim mismatch");
    double kl = 0.0;
    for (int c = 0; c < d; ++c) {
        double mq = mu_q->val.at(0, c), lq = lv_q->val.at(0, c);
        double mp = mu_p->val.at(0, c), lp = lv_p->val.at(0, c);
        kl += 0.5 * (lp - lq + (std::exp(lq) + (mq - mp) * (mq - mp)) * std::exp(-lp) - 1.0);
    }
    Mat out(1, 1);
    out.at(0, 0) = kl;
    return detail::new_op(std::move(out), {mu_q, lv_q, mu_p, lv_p},
                          [mu_q, lv_q, mu_p, lv_p](Node& nd) {
        double g = nd.grad.at(0, 0);
        int d2 = mu_q->val.cols;
        for (int c = 0; c < d2; ++c) {
            double mq = mu_q->val.at(0, c), lq = lv_q->val.at(0, c);
            double mp = mu_p->val.at(0, c), lp = lv_p->val.at(0, c);
            double ep = std::exp(-lp);
            if (mu_q->needs_grad) { mu_q->ensure_grad(); mu_q->grad.at(0, c) += g * (mq - mp) * ep; }
            if (mu_p->needs_grad) { mu_p->ensure_grad(); mu_p->grad.at(0, c) -= g * (mq - mp) * ep; }
            if (lv_q->needs_grad) {
                lv_q->ensure_grad();
                lv_q->grad.at(0, c) += g * 0.5 * (std::exp(lq) * ep - 1.0);
            }
            if (lv_p->needs_grad) {
                lv_p->ensure_grad();
                lv_p->grad.at(0, c) += g * 0.5 * (1.0 - (std::exp(lq) + (mq - mp) * (mq - mp)) * ep);
            }
        }
    });
}

inline Tensor sum_all(const Tensor& a) {
    Mat out(1, 1);
    for (double x : a->val.a) out.at(0, 0) += x;
    return detail::new_op(std::move(out), {a}, [a](Node& n) {
        if (!a->needs_grad) return;
        a->ensure_grad();
        double g = n.grad.at(0, 0);
        for (auto& x : a->grad.a) x += g;
    });
}

// weighted sum of 1x1 tensors
inline Tensor weighted_sum(const std::vector<std::pair<double, Tensor>>& terms) {
    if (terms.empty()) throw std::invalid_argument("weighted_sum: empty");
    Mat out(1, 1);
    std::vector<Tensor> parents;
    for (const auto& [w, t] : terms) {
        out.at(0, 0) += w * t->val.at(0, 0);
        parents.push_back(t);
    }
    auto terms_copy = terms;
    return detail::new_op(std::move(out), parents, [terms_copy](Node& nd) {
        double g = nd.grad.at(0, 0);
        for (const auto& [w, t] : terms_copy) {
            if (!t->needs_grad) continue;
            t->ensure_grad();
            t->grad.at(0, 0) += g * w;
        }
    });
}

// ---- backward driver ----

inline void backward(const Tensor& loss, double seed = 1.0) {
    if (loss->val.rows != 1 || loss->val.cols != 1)
        throw std::invalid_argument("backward: loss must be scalar");
    // iterative post-order DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->needs_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // zero non-parameter grads before accumulation
    for (Node* n : order)
        if (!n->is_param) n->grad = Mat(n->val.rows, n->val.cols);
    loss->grad.at(0, 0) = seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backfn) n->backfn(*n);
    }
}

}  // namespace emocvae
