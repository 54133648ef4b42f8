// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

// Minimal reverse-mode automatic differentiation over dense row-major matrices.
//
// Every op returns a Var (shared node). When gradient recording is enabled, nodes keep
// their parents and a backward closure; backward() runs them in reverse topological order.
// Parameters are leaves that accumulate into Parameter::grad across calls until zeroed.
namespace aes3d::ag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    std::size_t size() const { return static_cast<std::size_t>(value.size()); }
    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Matrix& g);
};

using Var = std::shared_ptr<Node>;

/// Whether new ops record their backward pass on this thread.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

Var constant(Matrix value);
Var param(Parameter& p);

/// Seeds d(root)/d(root) = 1 (root must be 1x1) and propagates to every reachable parameter.
void backward(const Var& root);

// Linear algebra
Var matmul(const Var& a, const Var& b);
Var linear(const Var& x, const Var& weight, const Var& bias); // x·W + b, bias is 1 x out
Var add(const Var& a, const Var& b);                          // same shape, or b broadcast as a row
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var gelu(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Multi-head scaled dot-product attention. q: nq x D, k/v: nk x D; key_valid masks keys
/// (empty span = all valid). Query rows with no valid key produce zeros.
Var attention(const Var& q, const Var& k, const Var& v, std::span<const char> key_valid, int heads);

/// Inverted dropout with a fixed Bernoulli mask drawn from rng. Identity when p == 0.
Var dropout(const Var& x, double p, std::mt19937_64& rng);

// Shape manipulation
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& x, std::size_t begin, std::size_t count);
Var gather_rows(const Var& x, std::span<const std::size_t> rows);
Var sum_all(const Var& x);

/// Mean over rows flagged in `mask` (all rows when empty). Result is 1 x cols.
Var masked_mean_rows(const Var& x, std::span<const char> mask);

enum class CellPooling { MeanMax, Mean };

/// Pools rows of `tokens` per grid cell. cells[m] lists member rows of cell m; empty cells
/// take the 1 x D `empty_token`. Output is cells.size() x D.
Var cell_pool(const Var& tokens, const std::vector<std::vector<std::size_t>>& cells, const Var& empty_token,
              CellPooling mode);

/// Softmax over exp(u/tau) restricted to `selected`; zero elsewhere. utilities is 1 x V or V x 1,
/// output is 1 x V. Membership is constant with respect to the gradient.
Var subset_softmax(const Var& utilities, std::span<const std::size_t> selected, double tau);

/// Generic scalar-valued function of several 1x1 inputs with a caller-supplied gradient.
using ScalarFn = std::function<double(std::span<const double> inputs, std::span<double> grad_out)>;
Var scalar_fn(std::span<const Var> inputs, ScalarFn fn);

} // namespace aes3d::ag
