#include "uwkit/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace uwkit::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

std::atomic<int64_t> g_next_id{1};

Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw) {
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = req;
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    if (req) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(bw);
    }
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw ShapeError(std::string(op) + ": shape mismatch " + a->value.shape_str() + " vs " +
                         b->value.shape_str());
}

CMatMap as_mat(const Tensor& t, int64_t rows, int64_t cols) {
    return CMatMap(t.data.data(), rows, cols);
}

MatMap as_mat(Tensor& t, int64_t rows, int64_t cols) { return MatMap(t.data.data(), rows, cols); }

// Elementwise unary op factory.
template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
    Tensor out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = f(a->value[i]);
    return make(std::move(out), {a}, [a, df](Node& self) {
        if (!a->requires_grad) return;
        Tensor& ga = a->ensure_grad();
        const int64_t n = self.value.numel();
        for (int64_t i = 0; i < n; ++i) ga[i] += self.grad[i] * df(a->value[i], self.value[i]);
    });
}

}  // namespace

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return n;
}

void backward(const Var& root) {
    if (root->value.numel() != 1) throw ShapeError("backward: root must be a scalar");
    if (!root->requires_grad) return;

    // Reachable grad-requiring nodes, processed in reverse creation order
    // (parents are always created before children).
    std::vector<Node*> nodes;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(nodes.begin(), nodes.end(), [](Node* a, Node* b) { return a->id > b->id; });

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (Node* n : nodes) {
        if (n->backward_fn && n->has_grad_buffer()) n->backward_fn(*n);
    }
}

// ---- arithmetic -------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
    return make(std::move(out), {a, b}, [a, b](Node& self) {
        const int64_t n = self.value.numel();
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < n; ++i) ga[i] += self.grad[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t i = 0; i < n; ++i) gb[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
    return make(std::move(out), {a, b}, [a, b](Node& self) {
        const int64_t n = self.value.numel();
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < n; ++i) ga[i] += self.grad[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t i = 0; i < n; ++i) gb[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
    return make(std::move(out), {a, b}, [a, b](Node& self) {
        const int64_t n = self.value.numel();
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < n; ++i) ga[i] += self.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t i = 0; i < n; ++i) gb[i] += self.grad[i] * a->value[i];
        }
    });
}

Var scale(const Var& a, double c) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * c;
    return make(std::move(out), {a}, [a, c](Node& self) {
        if (!a->requires_grad) return;
        Tensor& ga = a->ensure_grad();
        for (int64_t i = 0; i < self.value.numel(); ++i) ga[i] += self.grad[i] * c;
    });
}

Var add_scalar(const Var& a, double c) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + c;
    return make(std::move(out), {a}, [a](Node& self) {
        if (!a->requires_grad) return;
        Tensor& ga = a->ensure_grad();
        for (int64_t i = 0; i < self.value.numel(); ++i) ga[i] += self.grad[i];
    });
}

Var sum_list(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("sum_list: empty list");
    Tensor out(xs[0]->value.shape);
    for (const auto& x : xs) {
        check_same_shape(xs[0], x, "sum_list");
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += x->value[i];
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    return make(std::move(out), parents, [xs](Node& self) {
        for (const auto& x : xs) {
            if (!x->requires_grad) continue;
            Tensor& gx = x->ensure_grad();
            for (int64_t i = 0; i < self.value.numel(); ++i) gx[i] += self.grad[i];
        }
    });
}

// ---- linear algebra ---------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(1) != b->value.dim(0))
        throw ShapeError("matmul: incompatible shapes " + a->value.shape_str() + " x " +
                         b->value.shape_str());
    const int64_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    Tensor out({m, n});
    as_mat(out, m, n) = as_mat(a->value, m, k) * as_mat(b->value, k, n);
    return make(std::move(out), {a, b}, [a, b, m, k, n](Node& self) {
        CMatMap g(self.grad.data.data(), m, n);
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            as_mat(ga, m, k) += g * as_mat(b->value, k, n).transpose();
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            as_mat(gb, k, n) += as_mat(a->value, m, k).transpose() * g;
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    if (x->value.ndim() != 2 || w->value.ndim() != 2 || x->value.dim(1) != w->value.dim(1))
        throw ShapeError("linear: incompatible shapes " + x->value.shape_str() + " with weight " +
                         w->value.shape_str());
    const int64_t m = x->value.dim(0), k = x->value.dim(1), n = w->value.dim(0);
    if (b && b->value.numel() != n) throw ShapeError("linear: bias size mismatch");
    Tensor out({m, n});
    as_mat(out, m, n) = as_mat(x->value, m, k) * as_mat(w->value, n, k).transpose();
    if (b) {
        for (int64_t r = 0; r < m; ++r)
            for (int64_t c = 0; c < n; ++c) out.at(r, c) += b->value[c];
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make(std::move(out), parents, [x, w, b, m, k, n](Node& self) {
        CMatMap g(self.grad.data.data(), m, n);
        if (x->requires_grad) {
            Tensor& gx = x->ensure_grad();
            as_mat(gx, m, k) += g * as_mat(w->value, n, k);
        }
        if (w->requires_grad) {
            Tensor& gw = w->ensure_grad();
            as_mat(gw, n, k) += g.transpose() * as_mat(x->value, m, k);
        }
        if (b && b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t r = 0; r < m; ++r)
                for (int64_t c = 0; c < n; ++c) gb[c] += self.grad.at(r, c);
        }
    });
}

Var transpose(const Var& a) {
    if (a->value.ndim() != 2) throw ShapeError("transpose: expects 2-D");
    const int64_t m = a->value.dim(0), n = a->value.dim(1);
    Tensor out({n, m});
    for (int64_t r = 0; r < m; ++r)
        for (int64_t c = 0; c < n; ++c) out.at(c, r) = a->value.at(r, c);
    return make(std::move(out), {a}, [a, m, n](Node& self) {
        if (!a->requires_grad) return;
        Tensor& ga = a->ensure_grad();
        for (int64_t r = 0; r < m; ++r)
            for (int64_t c = 0; c < n; ++c) ga.at(r, c) += self.grad.at(c, r);
    });
}

// ---- activations ------------------------------------------------------------

Var relu(const Var& a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
    return unary(
        a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var elu(const Var& a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
        [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var gelu(const Var& a) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [](double x, double) {
            const double phi = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            return phi + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
        });
}

Var sigmoid(const Var& a) {
    return unary(
        a,
        [](double x) {
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
    return unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

// ---- normalization / attention ------------------------------------------------

Var softmax_rows(const Var& x) {
    if (x->value.ndim() != 2) throw ShapeError("softmax_rows: expects 2-D");
    const int64_t m = x->value.dim(0), n = x->value.dim(1);
    Tensor out({m, n});
    for (int64_t r = 0; r < m; ++r) {
        double mx = x->value.at(r, 0);
        for (int64_t c = 1; c < n; ++c) mx = std::max(mx, x->value.at(r, c));
        double z = 0.0;
        for (int64_t c = 0; c < n; ++c) {
            out.at(r, c) = std::exp(x->value.at(r, c) - mx);
            z += out.at(r, c);
        }
        for (int64_t c = 0; c < n; ++c) out.at(r, c) /= z;
    }
    return make(std::move(out), {x}, [x, m, n](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t r = 0; r < m; ++r) {
            double dot = 0.0;
            for (int64_t c = 0; c < n; ++c) dot += self.grad.at(r, c) * self.value.at(r, c);
            for (int64_t c = 0; c < n; ++c)
                gx.at(r, c) += self.value.at(r, c) * (self.grad.at(r, c) - dot);
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    if (x->value.ndim() != 2) throw ShapeError("layer_norm: expects 2-D");
    const int64_t m = x->value.dim(0), n = x->value.dim(1);
    if (gamma->value.numel() != n || beta->value.numel() != n)
        throw ShapeError("layer_norm: affine size mismatch");
    Tensor out({m, n});
    Tensor xhat({m, n});
    Tensor inv_sigma({m});
    for (int64_t r = 0; r < m; ++r) {
        double mu = 0.0;
        for (int64_t c = 0; c < n; ++c) mu += x->value.at(r, c);
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t c = 0; c < n; ++c) {
            const double d = x->value.at(r, c) - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = is;
        for (int64_t c = 0; c < n; ++c) {
            xhat.at(r, c) = (x->value.at(r, c) - mu) * is;
            out.at(r, c) = gamma->value[c] * xhat.at(r, c) + beta->value[c];
        }
    }
    return make(std::move(out), {x, gamma, beta},
                [x, gamma, beta, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), m,
                 n](Node& self) {
                    if (gamma->requires_grad) {
                        Tensor& gg = gamma->ensure_grad();
                        for (int64_t r = 0; r < m; ++r)
                            for (int64_t c = 0; c < n; ++c)
                                gg[c] += self.grad.at(r, c) * xhat.at(r, c);
                    }
                    if (beta->requires_grad) {
                        Tensor& gb = beta->ensure_grad();
                        for (int64_t r = 0; r < m; ++r)
                            for (int64_t c = 0; c < n; ++c) gb[c] += self.grad.at(r, c);
                    }
                    if (x->requires_grad) {
                        Tensor& gx = x->ensure_grad();
                        const double inv_n = 1.0 / static_cast<double>(n);
                        for (int64_t r = 0; r < m; ++r) {
                            double mean_d = 0.0, mean_dx = 0.0;
                            for (int64_t c = 0; c < n; ++c) {
                                const double d = self.grad.at(r, c) * gamma->value[c];
                                mean_d += d;
                                mean_dx += d * xhat.at(r, c);
                            }
                            mean_d *= inv_n;
                            mean_dx *= inv_n;
                            for (int64_t c = 0; c < n; ++c) {
                                const double d = self.grad.at(r, c) * gamma->value[c];
                                gx.at(r, c) +=
                                    inv_sigma[r] * (d - mean_d - xhat.at(r, c) * mean_dx);
                            }
                        }
                    }
                });
}

// ---- shape ops ----------------------------------------------------------------

Var reshape(const Var& a, std::vector<int64_t> shape) {
    Tensor out = a->value.reshaped(std::move(shape));
    return make(std::move(out), {a}, [a](Node& self) {
        if (!a->requires_grad) return;
        Tensor& ga = a->ensure_grad();
        for (int64_t i = 0; i < self.value.numel(); ++i) ga[i] += self.grad[i];
    });
}

Var slice_cols(const Var& x, int64_t c0, int64_t len) {
    if (x->value.ndim() != 2) throw ShapeError("slice_cols: expects 2-D");
    const int64_t m = x->value.dim(0), n = x->value.dim(1);
    if (c0 < 0 || c0 + len > n) throw ShapeError("slice_cols: out of range");
    Tensor out({m, len});
    for (int64_t r = 0; r < m; ++r)
        for (int64_t c = 0; c < len; ++c) out.at(r, c) = x->value.at(r, c0 + c);
    return make(std::move(out), {x}, [x, c0, len, m](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t r = 0; r < m; ++r)
            for (int64_t c = 0; c < len; ++c) gx.at(r, c0 + c) += self.grad.at(r, c);
    });
}

Var slice_rows(const Var& x, int64_t r0, int64_t len) {
    if (x->value.ndim() != 2) throw ShapeError("slice_rows: expects 2-D");
    const int64_t m = x->value.dim(0), n = x->value.dim(1);
    if (r0 < 0 || r0 + len > m) throw ShapeError("slice_rows: out of range");
    Tensor out({len, n});
    for (int64_t r = 0; r < len; ++r)
        for (int64_t c = 0; c < n; ++c) out.at(r, c) = x->value.at(r0 + r, c);
    return make(std::move(out), {x}, [x, r0, len, n](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t r = 0; r < len; ++r)
            for (int64_t c = 0; c < n; ++c) gx.at(r0 + r, c) += self.grad.at(r, c);
    });
}

Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: empty list");
    const int64_t m = xs[0]->value.dim(0);
    int64_t total = 0;
    for (const auto& x : xs) {
        if (x->value.ndim() != 2 || x->value.dim(0) != m)
            throw ShapeError("concat_cols: row mismatch");
        total += x->value.dim(1);
    }
    Tensor out({m, total});
    int64_t off = 0;
    for (const auto& x : xs) {
        const int64_t n = x->value.dim(1);
        for (int64_t r = 0; r < m; ++r)
            for (int64_t c = 0; c < n; ++c) out.at(r, off + c) = x->value.at(r, c);
        off += n;
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    return make(std::move(out), parents, [xs, m](Node& self) {
        int64_t off = 0;
        for (const auto& x : xs) {
            const int64_t n = x->value.dim(1);
            if (x->requires_grad) {
                Tensor& gx = x->ensure_grad();
                for (int64_t r = 0; r < m; ++r)
                    for (int64_t c = 0; c < n; ++c) gx.at(r, c) += self.grad.at(r, off + c);
            }
            off += n;
        }
    });
}

Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_rows: empty list");
    const int64_t n = xs[0]->value.dim(1);
    int64_t total = 0;
    for (const auto& x : xs) {
        if (x->value.ndim() != 2 || x->value.dim(1) != n)
            throw ShapeError("concat_rows: col mismatch");
        total += x->value.dim(0);
    }
    Tensor out({total, n});
    int64_t off = 0;
    for (const auto& x : xs) {
        const int64_t m = x->value.dim(0);
        for (int64_t r = 0; r < m; ++r)
            for (int64_t c = 0; c < n; ++c) out.at(off + r, c) = x->value.at(r, c);
        off += m;
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    return make(std::move(out), parents, [xs, n](Node& self) {
        int64_t off = 0;
        for (const auto& x : xs) {
            const int64_t m = x->value.dim(0);
            if (x->requires_grad) {
                Tensor& gx = x->ensure_grad();
                for (int64_t r = 0; r < m; ++r)
                    for (int64_t c = 0; c < n; ++c) gx.at(r, c) += self.grad.at(off + r, c);
            }
            off += m;
        }
    });
}

Var gather_rows(const Var& x, const std::vector<int>& idx) {
    if (x->value.ndim() != 2) throw ShapeError("gather_rows: expects 2-D");
    const int64_t m = x->value.dim(0), n = x->value.dim(1);
    Tensor out({static_cast<int64_t>(idx.size()), n});
    for (size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] < 0 || idx[r] >= m) throw ShapeError("gather_rows: index out of range");
        for (int64_t c = 0; c < n; ++c)
            out.at(static_cast<int64_t>(r), c) = x->value.at(idx[r], c);
    }
    return make(std::move(out), {x}, [x, idx, n](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (size_t r = 0; r < idx.size(); ++r)
            for (int64_t c = 0; c < n; ++c)
                gx.at(idx[r], c) += self.grad.at(static_cast<int64_t>(r), c);
    });
}

Var row_zero(const Var& x, const std::vector<uint8_t>& zero_row) {
    if (x->value.ndim() != 2) throw ShapeError("row_zero: expects 2-D");
    const int64_t m = x->value.dim(0), n = x->value.dim(1);
    if (static_cast<int64_t>(zero_row.size()) != m) throw ShapeError("row_zero: flag size mismatch");
    Tensor out({m, n});
    for (int64_t r = 0; r < m; ++r)
        for (int64_t c = 0; c < n; ++c) out.at(r, c) = zero_row[r] ? 0.0 : x->value.at(r, c);
    return make(std::move(out), {x}, [x, zero_row, m, n](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t r = 0; r < m; ++r) {
            if (zero_row[r]) continue;
            for (int64_t c = 0; c < n; ++c) gx.at(r, c) += self.grad.at(r, c);
        }
    });
}

// ---- reductions / losses --------------------------------------------------------

Var sum_all(const Var& x) {
    double s = 0.0;
    for (int64_t i = 0; i < x->value.numel(); ++i) s += x->value[i];
    return make(Tensor::scalar(s), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[0];
    });
}

Var mean_all(const Var& x) {
    const double inv_n = 1.0 / static_cast<double>(x->value.numel());
    double s = 0.0;
    for (int64_t i = 0; i < x->value.numel(); ++i) s += x->value[i];
    return make(Tensor::scalar(s * inv_n), {x}, [x, inv_n](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[0] * inv_n;
    });
}

Var mse_loss(const Var& a, const Var& b) {
    check_same_shape(a, b, "mse_loss");
    const int64_t n = a->value.numel();
    const double inv_n = 1.0 / static_cast<double>(n);
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = a->value[i] - b->value[i];
        s += d * d;
    }
    return make(Tensor::scalar(s * inv_n), {a, b}, [a, b, n, inv_n](Node& self) {
        const double g = self.grad[0] * 2.0 * inv_n;
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < n; ++i) ga[i] += g * (a->value[i] - b->value[i]);
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t i = 0; i < n; ++i) gb[i] -= g * (a->value[i] - b->value[i]);
        }
    });
}

Var softmax_ce_loss(const Var& logits, const std::vector<int>& labels) {
    if (logits->value.ndim() != 2) throw ShapeError("softmax_ce_loss: expects 2-D");
    const int64_t m = logits->value.dim(0), n = logits->value.dim(1);
    if (static_cast<int64_t>(labels.size()) != m)
        throw ShapeError("softmax_ce_loss: label count mismatch");
    Tensor probs({m, n});
    double loss = 0.0;
    for (int64_t r = 0; r < m; ++r) {
        if (labels[r] < 0 || labels[r] >= n) throw ShapeError("softmax_ce_loss: label out of range");
        double mx = logits->value.at(r, 0);
        for (int64_t c = 1; c < n; ++c) mx = std::max(mx, logits->value.at(r, c));
        double z = 0.0;
        for (int64_t c = 0; c < n; ++c) {
            probs.at(r, c) = std::exp(logits->value.at(r, c) - mx);
            z += probs.at(r, c);
        }
        for (int64_t c = 0; c < n; ++c) probs.at(r, c) /= z;
        loss -= std::log(std::max(probs.at(r, labels[r]), 1e-300));
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    return make(Tensor::scalar(loss * inv_m), {logits},
                [logits, labels, probs = std::move(probs), m, n, inv_m](Node& self) {
                    if (!logits->requires_grad) return;
                    Tensor& gx = logits->ensure_grad();
                    const double g = self.grad[0] * inv_m;
                    for (int64_t r = 0; r < m; ++r)
                        for (int64_t c = 0; c < n; ++c) {
                            const double t = (c == labels[r]) ? 1.0 : 0.0;
                            gx.at(r, c) += g * (probs.at(r, c) - t);
                        }
                });
}

Var bce_with_logits_loss(const Var& logits, const Tensor& targets) {
    if (!logits->value.same_shape(targets))
        throw ShapeError("bce_with_logits_loss: target shape mismatch");
    const int64_t n = logits->value.numel();
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double x = logits->value[i], t = targets[i];
        loss += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
    }
    return make(Tensor::scalar(loss * inv_n), {logits}, [logits, targets, n, inv_n](Node& self) {
        if (!logits->requires_grad) return;
        Tensor& gx = logits->ensure_grad();
        const double g = self.grad[0] * inv_n;
        for (int64_t i = 0; i < n; ++i) {
            const double x = logits->value[i];
            const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            gx[i] += g * (s - targets[i]);
        }
    });
}

Var smooth_l1_loss(const Var& pred, const Tensor& target, double beta) {
    if (!pred->value.same_shape(target)) throw ShapeError("smooth_l1_loss: target shape mismatch");
    const int64_t n = pred->value.numel();
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = pred->value[i] - target[i];
        loss += std::abs(d) < beta ? 0.5 * d * d / beta : std::abs(d) - 0.5 * beta;
    }
    return make(Tensor::scalar(loss * inv_n), {pred}, [pred, target, beta, n, inv_n](Node& self) {
        if (!pred->requires_grad) return;
        Tensor& gx = pred->ensure_grad();
        const double g = self.grad[0] * inv_n;
        for (int64_t i = 0; i < n; ++i) {
            const double d = pred->value[i] - target[i];
            gx[i] += g * (std::abs(d) < beta ? d / beta : (d > 0.0 ? 1.0 : -1.0));
        }
    });
}

// ---- conv / spatial ----------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->value.ndim() != 3 || w->value.ndim() != 4)
        throw ShapeError("conv2d: expects x[h,w,c], w[kh,kw,cin,cout]");
    const int64_t h = x->value.dim(0), wd = x->value.dim(1), cin = x->value.dim(2);
    const int64_t kh = w->value.dim(0), kw = w->value.dim(1), cout = w->value.dim(3);
    if (w->value.dim(2) != cin) throw ShapeError("conv2d: input channel mismatch");
    const int64_t oh = (h + 2 * pad - kh) / stride + 1;
    const int64_t ow = (wd + 2 * pad - kw) / stride + 1;
    const int64_t cols = kh * kw * cin;

    // im2col
    Tensor col({oh * ow, cols});
    for (int64_t oy = 0; oy < oh; ++oy) {
        for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t row = oy * ow + ox;
            int64_t cc = 0;
            for (int64_t ky = 0; ky < kh; ++ky) {
                const int64_t iy = oy * stride + ky - pad;
                for (int64_t kx = 0; kx < kw; ++kx) {
                    const int64_t ix = ox * stride + kx - pad;
                    if (iy >= 0 && iy < h && ix >= 0 && ix < wd) {
                        for (int64_t c = 0; c < cin; ++c)
                            col.at(row, cc + c) = x->value.at(iy, ix, c);
                    }
                    cc += cin;
                }
            }
        }
    }
    Tensor out({oh, ow, cout});
    as_mat(out, oh * ow, cout) = as_mat(col, oh * ow, cols) * as_mat(w->value, cols, cout);
    if (b) {
        if (b->value.numel() != cout) throw ShapeError("conv2d: bias size mismatch");
        for (int64_t i = 0; i < oh * ow; ++i)
            for (int64_t c = 0; c < cout; ++c) out.data[i * cout + c] += b->value[c];
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make(std::move(out), parents,
                [x, w, b, col = std::move(col), h, wd, cin, kh, kw, cout, oh, ow, cols, stride,
                 pad](Node& self) {
                    CMatMap g(self.grad.data.data(), oh * ow, cout);
                    if (w->requires_grad) {
                        Tensor& gw = w->ensure_grad();
                        as_mat(gw, cols, cout) += as_mat(col, oh * ow, cols).transpose() * g;
                    }
                    if (b && b->requires_grad) {
                        Tensor& gb = b->ensure_grad();
                        for (int64_t i = 0; i < oh * ow; ++i)
                            for (int64_t c = 0; c < cout; ++c)
                                gb[c] += self.grad.data[i * cout + c];
                    }
                    if (x->requires_grad) {
                        RowMat gcol = g * as_mat(w->value, cols, cout).transpose();
                        Tensor& gx = x->ensure_grad();
                        for (int64_t oy = 0; oy < oh; ++oy) {
                            for (int64_t ox = 0; ox < ow; ++ox) {
                                const int64_t row = oy * ow + ox;
                                int64_t cc = 0;
                                for (int64_t ky = 0; ky < kh; ++ky) {
                                    const int64_t iy = oy * stride + ky - pad;
                                    for (int64_t kx = 0; kx < kw; ++kx) {
                                        const int64_t ix = ox * stride + kx - pad;
                                        if (iy >= 0 && iy < h && ix >= 0 && ix < wd) {
                                            for (int64_t c = 0; c < cin; ++c)
                                                gx.at(iy, ix, c) += gcol(row, cc + c);
                                        }
                                        cc += cin;
                                    }
                                }
                            }
                        }
                    }
                });
}

Var conv_transpose2x(const Var& x, const Var& w, const Var& b) {
    if (x->value.ndim() != 3 || w->value.ndim() != 4 || w->value.dim(0) != 2 || w->value.dim(1) != 2)
        throw ShapeError("conv_transpose2x: expects x[h,w,c], w[2,2,cin,cout]");
    const int64_t h = x->value.dim(0), wd = x->value.dim(1), cin = x->value.dim(2);
    const int64_t cout = w->value.dim(3);
    if (w->value.dim(2) != cin) throw ShapeError("conv_transpose2x: channel mismatch");
    Tensor out({2 * h, 2 * wd, cout});
    // Kernel 2 stride 2: each output pixel depends on exactly one input pixel.
    for (int64_t dy = 0; dy < 2; ++dy) {
        for (int64_t dx = 0; dx < 2; ++dx) {
            CMatMap wsub(w->value.data.data() + (dy * 2 + dx) * cin * cout, cin, cout);
            RowMat o = as_mat(x->value, h * wd, cin) * wsub;
            for (int64_t r = 0; r < h; ++r)
                for (int64_t c = 0; c < wd; ++c)
                    for (int64_t f = 0; f < cout; ++f)
                        out.at(2 * r + dy, 2 * c + dx, f) = o(r * wd + c, f);
        }
    }
    if (b) {
        if (b->value.numel() != cout) throw ShapeError("conv_transpose2x: bias size mismatch");
        for (int64_t i = 0; i < 4 * h * wd; ++i)
            for (int64_t f = 0; f < cout; ++f) out.data[i * cout + f] += b->value[f];
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make(std::move(out), parents, [x, w, b, h, wd, cin, cout](Node& self) {
        for (int64_t dy = 0; dy < 2; ++dy) {
            for (int64_t dx = 0; dx < 2; ++dx) {
                RowMat gsub(h * wd, cout);
                for (int64_t r = 0; r < h; ++r)
                    for (int64_t c = 0; c < wd; ++c)
                        for (int64_t f = 0; f < cout; ++f)
                            gsub(r * wd + c, f) = self.grad.at(2 * r + dy, 2 * c + dx, f);
                if (x->requires_grad) {
                    CMatMap wsub(w->value.data.data() + (dy * 2 + dx) * cin * cout, cin, cout);
                    Tensor& gx = x->ensure_grad();
                    as_mat(gx, h * wd, cin) += gsub * wsub.transpose();
                }
                if (w->requires_grad) {
                    Tensor& gw = w->ensure_grad();
                    MatMap gwsub(gw.data.data() + (dy * 2 + dx) * cin * cout, cin, cout);
                    gwsub += as_mat(x->value, h * wd, cin).transpose() * gsub;
                }
            }
        }
        if (b && b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t i = 0; i < 4 * h * wd; ++i)
                for (int64_t f = 0; f < cout; ++f) gb[f] += self.grad.data[i * cout + f];
        }
    });
}

Var upsample_bilinear(const Var& x, int out_h, int out_w) {
    if (x->value.ndim() != 3) throw ShapeError("upsample_bilinear: expects [h,w,c]");
    const int64_t h = x->value.dim(0), wd = x->value.dim(1), c = x->value.dim(2);
    struct Tap {
        int64_t y0, y1, x0, x1;
        double wy, wx;
    };
    std::vector<Tap> taps(static_cast<size_t>(out_h) * out_w);
    const double sy = static_cast<double>(h) / out_h, sx = static_cast<double>(wd) / out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
        for (int64_t ox = 0; ox < out_w; ++ox) {
            double fy = (oy + 0.5) * sy - 0.5;
            double fx = (ox + 0.5) * sx - 0.5;
            fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
            fx = std::clamp(fx, 0.0, static_cast<double>(wd - 1));
            Tap t;
            t.y0 = static_cast<int64_t>(std::floor(fy));
            t.x0 = static_cast<int64_t>(std::floor(fx));
            t.y1 = std::min(t.y0 + 1, h - 1);
            t.x1 = std::min(t.x0 + 1, wd - 1);
            t.wy = fy - static_cast<double>(t.y0);
            t.wx = fx - static_cast<double>(t.x0);
            taps[static_cast<size_t>(oy) * out_w + ox] = t;
        }
    }
    Tensor out({out_h, out_w, c});
    for (int64_t oy = 0; oy < out_h; ++oy)
        for (int64_t ox = 0; ox < out_w; ++ox) {
            const Tap& t = taps[static_cast<size_t>(oy) * out_w + ox];
            for (int64_t ch = 0; ch < c; ++ch) {
                const double v00 = x->value.at(t.y0, t.x0, ch), v01 = x->value.at(t.y0, t.x1, ch);
                const double v10 = x->value.at(t.y1, t.x0, ch), v11 = x->value.at(t.y1, t.x1, ch);
                out.at(oy, ox, ch) = (1 - t.wy) * ((1 - t.wx) * v00 + t.wx * v01) +
                                     t.wy * ((1 - t.wx) * v10 + t.wx * v11);
            }
        }
    return make(std::move(out), {x}, [x, taps = std::move(taps), out_h, out_w, c](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t oy = 0; oy < out_h; ++oy)
            for (int64_t ox = 0; ox < out_w; ++ox) {
                const Tap& t = taps[static_cast<size_t>(oy) * out_w + ox];
                for (int64_t ch = 0; ch < c; ++ch) {
                    const double g = self.grad.at(oy, ox, ch);
                    gx.at(t.y0, t.x0, ch) += g * (1 - t.wy) * (1 - t.wx);
                    gx.at(t.y0, t.x1, ch) += g * (1 - t.wy) * t.wx;
                    gx.at(t.y1, t.x0, ch) += g * t.wy * (1 - t.wx);
                    gx.at(t.y1, t.x1, ch) += g * t.wy * t.wx;
                }
            }
    });
}

Var global_max_pool(const Var& x) {
    if (x->value.ndim() != 3) throw ShapeError("global_max_pool: expects [h,w,c]");
    const int64_t hw = x->value.dim(0) * x->value.dim(1), c = x->value.dim(2);
    Tensor out({c});
    std::vector<int64_t> argmax(static_cast<size_t>(c));
    for (int64_t ch = 0; ch < c; ++ch) {
        double best = x->value.data[ch];
        int64_t bi = 0;
        for (int64_t i = 1; i < hw; ++i) {
            const double v = x->value.data[i * c + ch];
            if (v > best) {
                best = v;
                bi = i;
            }
        }
        out[ch] = best;
        argmax[static_cast<size_t>(ch)] = bi;
    }
    return make(std::move(out), {x}, [x, argmax = std::move(argmax), c](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t ch = 0; ch < c; ++ch)
            gx.data[argmax[static_cast<size_t>(ch)] * c + ch] += self.grad[ch];
    });
}

Var global_avg_pool(const Var& x) {
    if (x->value.ndim() != 3) throw ShapeError("global_avg_pool: expects [h,w,c]");
    const int64_t hw = x->value.dim(0) * x->value.dim(1), c = x->value.dim(2);
    const double inv = 1.0 / static_cast<double>(hw);
    Tensor out({c});
    for (int64_t i = 0; i < hw; ++i)
        for (int64_t ch = 0; ch < c; ++ch) out[ch] += x->value.data[i * c + ch];
    for (int64_t ch = 0; ch < c; ++ch) out[ch] *= inv;
    return make(std::move(out), {x}, [x, hw, c, inv](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = x->ensure_grad();
        for (int64_t i = 0; i < hw; ++i)
            for (int64_t ch = 0; ch < c; ++ch) gx.data[i * c + ch] += self.grad[ch] * inv;
    });
}

Var channel_scale(const Var& x, const Var& g) {
    if (x->value.ndim() != 3 || g->value.numel() != x->value.dim(2))
        throw ShapeError("channel_scale: gate size mismatch");
    const int64_t hw = x->value.dim(0) * x->value.dim(1), c = x->value.dim(2);
    Tensor out(x->value.shape);
    for (int64_t i = 0; i < hw; ++i)
        for (int64_t ch = 0; ch < c; ++ch) out.data[i * c + ch] = x->value.data[i * c + ch] * g->value[ch];
    return make(std::move(out), {x, g}, [x, g, hw, c](Node& self) {
        if (x->requires_grad) {
            Tensor& gx = x->ensure_grad();
            for (int64_t i = 0; i < hw; ++i)
                for (int64_t ch = 0; ch < c; ++ch)
                    gx.data[i * c + ch] += self.grad.data[i * c + ch] * g->value[ch];
        }
        if (g->requires_grad) {
            Tensor& gg = g->ensure_grad();
            for (int64_t i = 0; i < hw; ++i)
                for (int64_t ch = 0; ch < c; ++ch)
                    gg[ch] += self.grad.data[i * c + ch] * x->value.data[i * c + ch];
        }
    });
}

Var roi_align(const Var& x, const Tensor& boxes, double spatial_scale, int out_size) {
    if (x->value.ndim() != 3) throw ShapeError("roi_align: expects [h,w,c]");
    if (boxes.ndim() != 2 || boxes.dim(1) != 4) throw ShapeError("roi_align: boxes must be [n,4]");
    const int64_t h = x->value.dim(0), wd = x->value.dim(1), c = x->value.dim(2);
    const int64_t nb = boxes.dim(0), os = out_size;

    struct Tap {
        int64_t y0, y1, x0, x1;
        double wy, wx;
    };
    // Samples per bin axis adapt to the bin footprint (ceil of the bin size
    // in feature pixels, capped at 2): a bin covering one feature pixel takes
    // its single centered sample, bigger bins average a 2x2 grid. Degenerate
    // boxes collapse to a single sample at their corner point.
    std::vector<Tap> taps;
    std::vector<int> samples_per_box(static_cast<size_t>(nb));
    std::vector<int64_t> tap_offset(static_cast<size_t>(nb));
    auto sample_tap = [&](double fy, double fx) {
        Tap t;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        fx = std::clamp(fx, 0.0, static_cast<double>(wd - 1));
        t.y0 = static_cast<int64_t>(std::floor(fy));
        t.x0 = static_cast<int64_t>(std::floor(fx));
        t.y1 = std::min(t.y0 + 1, h - 1);
        t.x1 = std::min(t.x0 + 1, wd - 1);
        t.wy = fy - static_cast<double>(t.y0);
        t.wx = fx - static_cast<double>(t.x0);
        return t;
    };
    for (int64_t ib = 0; ib < nb; ++ib) {
        const double bx1 = boxes.at(ib, 0) * spatial_scale, by1 = boxes.at(ib, 1) * spatial_scale;
        const double bx2 = boxes.at(ib, 2) * spatial_scale, by2 = boxes.at(ib, 3) * spatial_scale;
        const double bw = bx2 - bx1, bh = by2 - by1;
        const bool degenerate = !(bw > 0.0 && bh > 0.0);
        const int ny = degenerate ? 1 : std::clamp(static_cast<int>(std::ceil(bh / os)), 1, 2);
        const int nx = degenerate ? 1 : std::clamp(static_cast<int>(std::ceil(bw / os)), 1, 2);
        samples_per_box[static_cast<size_t>(ib)] = ny * nx;
        tap_offset[static_cast<size_t>(ib)] = static_cast<int64_t>(taps.size());
        for (int64_t by = 0; by < os; ++by)
            for (int64_t bx = 0; bx < os; ++bx) {
                if (degenerate) {
                    taps.push_back(sample_tap(by1 - 0.5, bx1 - 0.5));
                    continue;
                }
                for (int sy = 0; sy < ny; ++sy)
                    for (int sx = 0; sx < nx; ++sx) {
                        const double py = by1 + (by + (sy + 0.5) / ny) * bh / os - 0.5;
                        const double px = bx1 + (bx + (sx + 0.5) / nx) * bw / os - 0.5;
                        taps.push_back(sample_tap(py, px));
                    }
            }
    }
    Tensor out({nb, os, os, c});
    for (int64_t ib = 0; ib < nb; ++ib) {
        const int ns = samples_per_box[static_cast<size_t>(ib)];
        const double inv_ns = 1.0 / ns;
        for (int64_t bin = 0; bin < os * os; ++bin) {
            const int64_t base = tap_offset[static_cast<size_t>(ib)] + bin * ns;
            for (int64_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int s = 0; s < ns; ++s) {
                    const Tap& t = taps[static_cast<size_t>(base + s)];
                    acc += (1 - t.wy) * ((1 - t.wx) * x->value.at(t.y0, t.x0, ch) +
                                         t.wx * x->value.at(t.y0, t.x1, ch)) +
                           t.wy * ((1 - t.wx) * x->value.at(t.y1, t.x0, ch) +
                                   t.wx * x->value.at(t.y1, t.x1, ch));
                }
                out.data[(ib * os * os + bin) * c + ch] = acc * inv_ns;
            }
        }
    }
    return make(std::move(out), {x},
                [x, taps = std::move(taps), samples_per_box = std::move(samples_per_box),
                 tap_offset = std::move(tap_offset), nb, os, c](Node& self) {
                    if (!x->requires_grad) return;
                    Tensor& gx = x->ensure_grad();
                    for (int64_t ib = 0; ib < nb; ++ib) {
                        const int ns = samples_per_box[static_cast<size_t>(ib)];
                        const double inv_ns = 1.0 / ns;
                        for (int64_t bin = 0; bin < os * os; ++bin) {
                            const int64_t base = tap_offset[static_cast<size_t>(ib)] + bin * ns;
                            for (int64_t ch = 0; ch < c; ++ch) {
                                const double g = self.grad.data[(ib * os * os + bin) * c + ch] * inv_ns;
                                for (int s = 0; s < ns; ++s) {
                                    const Tap& t = taps[static_cast<size_t>(base + s)];
                                    gx.at(t.y0, t.x0, ch) += g * (1 - t.wy) * (1 - t.wx);
                                    gx.at(t.y0, t.x1, ch) += g * (1 - t.wy) * t.wx;
                                    gx.at(t.y1, t.x0, ch) += g * t.wy * (1 - t.wx);
                                    gx.at(t.y1, t.x1, ch) += g * t.wy * t.wx;
                                }
                            }
                        }
                    }
                });
}

Var gat_aggregate(const Var& u, const Var& si, const Var& sj,
                  const std::vector<std::vector<int>>& neighbors, double slope) {
    if (u->value.ndim() != 2) throw ShapeError("gat_aggregate: u must be 2-D");
    const int64_t n = u->value.dim(0), c = u->value.dim(1);
    if (static_cast<int64_t>(neighbors.size()) != n || si->value.numel() != n ||
        sj->value.numel() != n)
        throw ShapeError("gat_aggregate: size mismatch");

    // Flattened attention weights and pre-activation logits per edge.
    std::vector<double> attn, pre;
    std::vector<size_t> offsets(static_cast<size_t>(n) + 1, 0);
    for (int64_t i = 0; i < n; ++i) offsets[static_cast<size_t>(i) + 1] = offsets[static_cast<size_t>(i)] + neighbors[static_cast<size_t>(i)].size();
    attn.resize(offsets[static_cast<size_t>(n)]);
    pre.resize(offsets[static_cast<size_t>(n)]);

    Tensor out({n, c});
    for (int64_t i = 0; i < n; ++i) {
        const auto& nbr = neighbors[static_cast<size_t>(i)];
        if (nbr.empty()) throw ShapeError("gat_aggregate: empty neighborhood");
        const size_t off = offsets[static_cast<size_t>(i)];
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t e = 0; e < nbr.size(); ++e) {
            const double p = si->value[i] + sj->value[nbr[e]];
            pre[off + e] = p;
            const double z = p > 0.0 ? p : slope * p;
            attn[off + e] = z;
            mx = std::max(mx, z);
        }
        double zsum = 0.0;
        for (size_t e = 0; e < nbr.size(); ++e) {
            attn[off + e] = std::exp(attn[off + e] - mx);
            zsum += attn[off + e];
        }
        for (size_t e = 0; e < nbr.size(); ++e) attn[off + e] /= zsum;
        for (size_t e = 0; e < nbr.size(); ++e) {
            const double a = attn[off + e];
            const int j = nbr[e];
            for (int64_t ch = 0; ch < c; ++ch) out.at(i, ch) += a * u->value.at(j, ch);
        }
    }
    return make(std::move(out), {u, si, sj},
                [u, si, sj, neighbors, attn = std::move(attn), pre = std::move(pre),
                 offsets = std::move(offsets), slope, n, c](Node& self) {
                    for (int64_t i = 0; i < n; ++i) {
                        const auto& nbr = neighbors[static_cast<size_t>(i)];
                        const size_t off = offsets[static_cast<size_t>(i)];
                        // d_attn per edge, then softmax backward to logits.
                        std::vector<double> da(nbr.size());
                        double dot = 0.0;
                        for (size_t e = 0; e < nbr.size(); ++e) {
                            double d = 0.0;
                            for (int64_t ch = 0; ch < c; ++ch)
                                d += self.grad.at(i, ch) * u->value.at(nbr[e], ch);
                            da[e] = d;
                            dot += attn[off + e] * d;
                        }
                        if (u->requires_grad) {
                            Tensor& gu = u->ensure_grad();
                            for (size_t e = 0; e < nbr.size(); ++e) {
                                const double a = attn[off + e];
                                for (int64_t ch = 0; ch < c; ++ch)
                                    gu.at(nbr[e], ch) += a * self.grad.at(i, ch);
                            }
                        }
                        const bool want_si = si->requires_grad, want_sj = sj->requires_grad;
                        if (want_si || want_sj) {
                            if (want_si) si->ensure_grad();
                            if (want_sj) sj->ensure_grad();
                            for (size_t e = 0; e < nbr.size(); ++e) {
                                const double dz = attn[off + e] * (da[e] - dot);
                                const double dp = dz * (pre[off + e] > 0.0 ? 1.0 : slope);
                                if (want_si) si->grad[i] += dp;
                                if (want_sj) sj->grad[nbr[e]] += dp;
                            }
                        }
                    }
                });
}

double scalar_value(const Var& v) {
    if (v->value.numel() != 1) throw ShapeError("scalar_value: not a scalar");
    return v->value[0];
}

}  // namespace uwkit::ag
