// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/autograd.hpp"

#include "aes3d/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

namespace aes3d::ag {

namespace {

thread_local bool g_grad_enabled = true;

bool any_requires_grad(std::initializer_list<const Var*> vars) {
    for (const Var* v : vars) {
        if ((*v)->requires_grad) return true;
    }
    return false;
}

Var make_node(Matrix value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool needs = false;
        for (const auto& p : parents) needs = needs || p->requires_grad;
        if (needs) {
            node->requires_grad = true;
            node->parents = std::move(parents);
            node->backward_fn = std::move(fn);
        }
    }
    return node;
}

void check(bool ok, const char* op, const std::string& detail) {
    if (!ok) throw ContractError(fmt::format("{}: {}", op, detail));
}

} // namespace

void Node::accumulate(const Matrix& g) {
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return node;
}

Var param(Parameter& p) {
    auto node = std::make_shared<Node>();
    node->value = p.value;
    node->param = &p;
    node->requires_grad = g_grad_enabled;
    return node;
}

void backward(const Var& root) {
    check(root->value.rows() == 1 && root->value.cols() == 1, "backward", "root must be a scalar");
    if (!root->requires_grad) return;

    // Iterative post-order DFS for a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad = Matrix::Ones(1, 1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->grad.size() == 0) continue;
        if (node->param) {
            Parameter& p = *node->param;
            if (p.grad.size() == 0) p.zero_grad();
            p.grad += node->grad;
        } else if (node->backward_fn) {
            node->backward_fn(*node);
        }
    }
    // Release intermediate gradients so the graph can be reused or dropped cheaply.
    for (Node* node : order) {
        if (node != root.get()) node->grad.resize(0, 0);
    }
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    check(a->value.cols() == b->value.rows(), "matmul",
          fmt::format("{}x{} times {}x{}", a->value.rows(), a->value.cols(), b->value.rows(), b->value.cols()));
    Matrix out = a->value * b->value;
    return make_node(std::move(out), {a, b}, [](Node& n) {
        const Var& a = n.parents[0];
        const Var& b = n.parents[1];
        if (a->requires_grad) a->accumulate(n.grad * b->value.transpose());
        if (b->requires_grad) b->accumulate(a->value.transpose() * n.grad);
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    check(x->value.cols() == weight->value.rows(), "linear",
          fmt::format("input width {} vs weight rows {}", x->value.cols(), weight->value.rows()));
    check(bias->value.rows() == 1 && bias->value.cols() == weight->value.cols(), "linear", "bias shape");
    Matrix out = x->value * weight->value;
    out.rowwise() += bias->value.row(0);
    return make_node(std::move(out), {x, weight, bias}, [](Node& n) {
        const Var& x = n.parents[0];
        const Var& w = n.parents[1];
        const Var& b = n.parents[2];
        if (x->requires_grad) x->accumulate(n.grad * w->value.transpose());
        if (w->requires_grad) w->accumulate(x->value.transpose() * n.grad);
        if (b->requires_grad) b->accumulate(n.grad.colwise().sum());
    });
}

Var add(const Var& a, const Var& b) {
    const bool same = a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols();
    const bool row_broadcast = !same && b->value.rows() == 1 && b->value.cols() == a->value.cols();
    check(same || row_broadcast, "add",
          fmt::format("{}x{} + {}x{}", a->value.rows(), a->value.cols(), b->value.rows(), b->value.cols()));
    Matrix out = a->value;
    if (same) {
        out += b->value;
    } else {
        out.rowwise() += b->value.row(0);
    }
    return make_node(std::move(out), {a, b}, [row_broadcast](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->requires_grad) {
            if (row_broadcast) {
                n.parents[1]->accumulate(n.grad.colwise().sum());
            } else {
                n.parents[1]->accumulate(n.grad);
            }
        }
    });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var scale(const Var& a, double c) {
    return make_node(a->value * c, {a}, [c](Node& n) { n.parents[0]->accumulate(n.grad * c); });
}

Var gelu(const Var& x) {
    // Exact erf form: x * Phi(x).
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    Matrix out = x->value.unaryExpr([inv_sqrt2](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); });
    return make_node(std::move(out), {x}, [inv_sqrt2](Node& n) {
        const Matrix& xv = n.parents[0]->value;
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        Matrix d = xv.unaryExpr([&](double v) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
        });
        n.parents[0]->accumulate(n.grad.cwiseProduct(d));
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Eigen::Index rows = x->value.rows();
    const Eigen::Index cols = x->value.cols();
    check(gamma->value.cols() == cols && beta->value.cols() == cols, "layer_norm", "affine width mismatch");
    Matrix xhat(rows, cols);
    Eigen::VectorXd inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto row = x->value.row(r);
        const double mean = row.mean();
        const double var = (row.array() - mean).square().mean();
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (row.array() - mean) * inv_std[r];
    }
    Matrix out = xhat;
    out.array().rowwise() *= gamma->value.row(0).array();
    out.rowwise() += beta->value.row(0);
    return make_node(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
                         const Var& x = n.parents[0];
                         const Var& gamma = n.parents[1];
                         const Var& beta = n.parents[2];
                         if (gamma->requires_grad) gamma->accumulate(n.grad.cwiseProduct(xhat).colwise().sum());
                         if (beta->requires_grad) beta->accumulate(n.grad.colwise().sum());
                         if (x->requires_grad) {
                             Matrix dxhat = n.grad;
                             dxhat.array().rowwise() *= gamma->value.row(0).array();
                             const double inv_cols = 1.0 / static_cast<double>(dxhat.cols());
                             Matrix dx(dxhat.rows(), dxhat.cols());
                             for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                                 const double m1 = dxhat.row(r).sum() * inv_cols;
                                 const double m2 = dxhat.row(r).dot(xhat.row(r)) * inv_cols;
                                 dx.row(r) = inv_std[r] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                             }
                             x->accumulate(dx);
                         }
                     });
}

Var attention(const Var& q, const Var& k, const Var& v, std::span<const char> key_valid, int heads) {
    const Eigen::Index nq = q->value.rows();
    const Eigen::Index nk = k->value.rows();
    const Eigen::Index dim = q->value.cols();
    check(k->value.cols() == dim && v->value.cols() == dim && v->value.rows() == nk, "attention", "q/k/v shapes");
    check(heads >= 1 && dim % heads == 0, "attention", "width not divisible by head count");
    check(key_valid.empty() || static_cast<Eigen::Index>(key_valid.size()) == nk, "attention", "mask length");
    const Eigen::Index dh = dim / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool masked = !key_valid.empty() && std::any_of(key_valid.begin(), key_valid.end(), [](char c) { return !c; });

    Matrix out = Matrix::Zero(nq, dim);
    const bool record = g_grad_enabled && any_requires_grad({&q, &k, &v});
    std::vector<Matrix> probs;
    if (record) probs.reserve(static_cast<std::size_t>(heads));

    for (int h = 0; h < heads; ++h) {
        const auto qh = q->value.middleCols(h * dh, dh);
        const auto kh = k->value.middleCols(h * dh, dh);
        const auto vh = v->value.middleCols(h * dh, dh);
        Matrix s = (qh * kh.transpose()) * inv_scale;
        for (Eigen::Index r = 0; r < nq; ++r) {
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index c = 0; c < nk; ++c) {
                if (masked && !key_valid[static_cast<std::size_t>(c)]) continue;
                mx = std::max(mx, s(r, c));
            }
            if (mx == -std::numeric_limits<double>::infinity()) {
                s.row(r).setZero();
                continue;
            }
            double total = 0.0;
            for (Eigen::Index c = 0; c < nk; ++c) {
                if (masked && !key_valid[static_cast<std::size_t>(c)]) {
                    s(r, c) = 0.0;
                } else {
                    s(r, c) = std::exp(s(r, c) - mx);
                    total += s(r, c);
                }
            }
            s.row(r) /= total;
        }
        out.middleCols(h * dh, dh).noalias() = s * vh;
        if (record) probs.push_back(std::move(s));
    }

    return make_node(std::move(out), {q, k, v}, [probs = std::move(probs), heads, dh, inv_scale](Node& n) {
        const Var& q = n.parents[0];
        const Var& k = n.parents[1];
        const Var& v = n.parents[2];
        Matrix dq = Matrix::Zero(q->value.rows(), q->value.cols());
        Matrix dk = Matrix::Zero(k->value.rows(), k->value.cols());
        Matrix dv = Matrix::Zero(v->value.rows(), v->value.cols());
        for (int h = 0; h < heads; ++h) {
            const Matrix& p = probs[static_cast<std::size_t>(h)];
            const auto go = n.grad.middleCols(h * dh, dh);
            const auto qh = q->value.middleCols(h * dh, dh);
            const auto kh = k->value.middleCols(h * dh, dh);
            const auto vh = v->value.middleCols(h * dh, dh);
            dv.middleCols(h * dh, dh).noalias() += p.transpose() * go;
            Matrix dp = go * vh.transpose();
            Eigen::VectorXd row_dot = (dp.cwiseProduct(p)).rowwise().sum();
            Matrix ds = p.cwiseProduct(dp.colwise() - row_dot) * inv_scale;
            dq.middleCols(h * dh, dh).noalias() += ds * kh;
            dk.middleCols(h * dh, dh).noalias() += ds.transpose() * qh;
        }
        if (q->requires_grad) q->accumulate(dq);
        if (k->requires_grad) k->accumulate(dk);
        if (v->requires_grad) v->accumulate(dv);
    });
}

Var dropout(const Var& x, double p, std::mt19937_64& rng) {
    if (p <= 0.0) return x;
    check(p < 1.0, "dropout", "probability must be below 1");
    std::bernoulli_distribution keep(1.0 - p);
    const double s = 1.0 / (1.0 - p);
    Matrix mask(x->value.rows(), x->value.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : 0.0;
    Matrix out = x->value.cwiseProduct(mask);
    return make_node(std::move(out), {x},
                     [mask = std::move(mask)](Node& n) { n.parents[0]->accumulate(n.grad.cwiseProduct(mask)); });
}

Var concat_rows(std::span<const Var> parts) {
    check(!parts.empty(), "concat_rows", "no inputs");
    const Eigen::Index cols = parts.front()->value.cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        check(p->value.cols() == cols, "concat_rows", "column mismatch");
        rows += p->value.rows();
    }
    Matrix out(rows, cols);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p->value.rows()) = p->value;
        r += p->value.rows();
    }
    return make_node(std::move(out), {parts.begin(), parts.end()}, [](Node& n) {
        Eigen::Index r = 0;
        for (const auto& p : n.parents) {
            const Eigen::Index pr = p->value.rows();
            if (p->requires_grad) p->accumulate(n.grad.middleRows(r, pr));
            r += pr;
        }
    });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
    check(static_cast<Eigen::Index>(begin + count) <= x->value.rows(), "slice_rows", "range out of bounds");
    const auto b = static_cast<Eigen::Index>(begin);
    const auto c = static_cast<Eigen::Index>(count);
    Matrix out = x->value.middleRows(b, c);
    return make_node(std::move(out), {x}, [b, c](Node& n) {
        const Var& x = n.parents[0];
        Matrix g = Matrix::Zero(x->value.rows(), x->value.cols());
        g.middleRows(b, c) = n.grad;
        x->accumulate(g);
    });
}

Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x->value.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        check(static_cast<Eigen::Index>(rows[i]) < x->value.rows(), "gather_rows", "row index out of bounds");
        out.row(static_cast<Eigen::Index>(i)) = x->value.row(static_cast<Eigen::Index>(rows[i]));
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return make_node(std::move(out), {x}, [idx = std::move(idx)](Node& n) {
        const Var& x = n.parents[0];
        Matrix g = Matrix::Zero(x->value.rows(), x->value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            g.row(static_cast<Eigen::Index>(idx[i])) += n.grad.row(static_cast<Eigen::Index>(i));
        }
        x->accumulate(g);
    });
}

Var sum_all(const Var& x) {
    Matrix out(1, 1);
    out(0, 0) = x->value.sum();
    return make_node(std::move(out), {x}, [](Node& n) {
        const Var& x = n.parents[0];
        x->accumulate(Matrix::Constant(x->value.rows(), x->value.cols(), n.grad(0, 0)));
    });
}

Var masked_mean_rows(const Var& x, std::span<const char> mask) {
    const Eigen::Index rows = x->value.rows();
    check(mask.empty() || static_cast<Eigen::Index>(mask.size()) == rows, "masked_mean_rows", "mask length");
    std::vector<Eigen::Index> members;
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (mask.empty() || mask[static_cast<std::size_t>(r)]) members.push_back(r);
    }
    check(!members.empty(), "masked_mean_rows", "no rows selected");
    Matrix out = Matrix::Zero(1, x->value.cols());
    for (auto r : members) out += x->value.row(r);
    const double inv = 1.0 / static_cast<double>(members.size());
    out *= inv;
    return make_node(std::move(out), {x}, [members = std::move(members), inv](Node& n) {
        const Var& x = n.parents[0];
        Matrix g = Matrix::Zero(x->value.rows(), x->value.cols());
        for (auto r : members) g.row(r) = n.grad.row(0) * inv;
        x->accumulate(g);
    });
}

Var cell_pool(const Var& tokens, const std::vector<std::vector<std::size_t>>& cells, const Var& empty_token,
              CellPooling mode) {
    const Eigen::Index dim = tokens->value.cols();
    check(empty_token->value.rows() == 1 && empty_token->value.cols() == dim, "cell_pool", "empty token shape");
    const auto n_cells = static_cast<Eigen::Index>(cells.size());
    Matrix out(n_cells, dim);
    // For max pooling remember which member row supplied each column.
    std::vector<std::vector<std::size_t>> argmax(cells.size());
    for (Eigen::Index m = 0; m < n_cells; ++m) {
        const auto& members = cells[static_cast<std::size_t>(m)];
        if (members.empty()) {
            out.row(m) = empty_token->value.row(0);
            continue;
        }
        RowVector mean = RowVector::Zero(dim);
        for (std::size_t i : members) mean += tokens->value.row(static_cast<Eigen::Index>(i));
        mean /= static_cast<double>(members.size());
        if (mode == CellPooling::Mean) {
            out.row(m) = mean;
            continue;
        }
        auto& am = argmax[static_cast<std::size_t>(m)];
        am.assign(static_cast<std::size_t>(dim), members.front());
        RowVector mx = tokens->value.row(static_cast<Eigen::Index>(members.front()));
        for (std::size_t j = 1; j < members.size(); ++j) {
            const auto row = tokens->value.row(static_cast<Eigen::Index>(members[j]));
            for (Eigen::Index c = 0; c < dim; ++c) {
                if (row[c] > mx[c]) {
                    mx[c] = row[c];
                    am[static_cast<std::size_t>(c)] = members[j];
                }
            }
        }
        out.row(m) = mean + mx;
    }
    return make_node(std::move(out), {tokens, empty_token},
                     [cells, argmax = std::move(argmax), mode](Node& n) {
                         const Var& tokens = n.parents[0];
                         const Var& empty = n.parents[1];
                         const Eigen::Index dim = tokens->value.cols();
                         Matrix gt = Matrix::Zero(tokens->value.rows(), dim);
                         Matrix ge = Matrix::Zero(1, dim);
                         for (std::size_t m = 0; m < cells.size(); ++m) {
                             const auto g = n.grad.row(static_cast<Eigen::Index>(m));
                             const auto& members = cells[m];
                             if (members.empty()) {
                                 ge.row(0) += g;
                                 continue;
                             }
                             const double inv = 1.0 / static_cast<double>(members.size());
                             for (std::size_t i : members) gt.row(static_cast<Eigen::Index>(i)) += g * inv;
                             if (mode == CellPooling::MeanMax) {
                                 for (Eigen::Index c = 0; c < dim; ++c) {
                                     gt(static_cast<Eigen::Index>(argmax[m][static_cast<std::size_t>(c)]), c) += g[c];
                                 }
                             }
                         }
                         if (tokens->requires_grad) tokens->accumulate(gt);
                         if (empty->requires_grad) empty->accumulate(ge);
                     });
}

Var subset_softmax(const Var& utilities, std::span<const std::size_t> selected, double tau) {
    check(tau > 0.0, "subset_softmax", "temperature must be positive");
    check(!selected.empty(), "subset_softmax", "empty selection");
    const Eigen::Index v = utilities->value.size();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j : selected) mx = std::max(mx, utilities->value.data()[j] / tau);
    Matrix alpha = Matrix::Zero(1, v);
    double total = 0.0;
    for (std::size_t j : selected) {
        const double e = std::exp(utilities->value.data()[j] / tau - mx);
        alpha(0, static_cast<Eigen::Index>(j)) = e;
        total += e;
    }
    alpha /= total;
    std::vector<std::size_t> sel(selected.begin(), selected.end());
    return make_node(alpha, {utilities}, [alpha, sel = std::move(sel), tau](Node& n) {
        const Var& u = n.parents[0];
        double inner = 0.0;
        for (std::size_t j : sel) inner += alpha(0, static_cast<Eigen::Index>(j)) * n.grad(0, static_cast<Eigen::Index>(j));
        Matrix g = Matrix::Zero(u->value.rows(), u->value.cols());
        for (std::size_t j : sel) {
            const auto jj = static_cast<Eigen::Index>(j);
            g.data()[j] = alpha(0, jj) * (n.grad(0, jj) - inner) / tau;
        }
        u->accumulate(g);
    });
}

Var scalar_fn(std::span<const Var> inputs, ScalarFn fn) {
    std::vector<double> values;
    values.reserve(inputs.size());
    for (const auto& in : inputs) {
        check(in->value.size() == 1, "scalar_fn", "inputs must be 1x1");
        values.push_back(in->value(0, 0));
    }
    std::vector<double> grads(values.size(), 0.0);
    Matrix out(1, 1);
    out(0, 0) = fn(values, grads);
    return make_node(std::move(out), {inputs.begin(), inputs.end()}, [grads = std::move(grads)](Node& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            if (n.parents[i]->requires_grad) n.parents[i]->accumulate(Matrix::Constant(1, 1, grads[i] * n.grad(0, 0)));
        }
    });
}

} // namespace aes3d::ag
