// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/nn.hpp"

#include "aes3d/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace aes3d::nn {

Parameter& ParameterStore::create(const std::string& name, Matrix init) {
    if (index_.count(name)) {
        throw ConfigError(fmt::format("duplicate parameter name '{}'", name));
    }
    index_[name] = params_.size();
    auto& p = params_.emplace_back();
    p.name = name;
    p.value = std::move(init);
    p.zero_grad();
    return p;
}

Parameter* ParameterStore::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double ParameterStore::grad_norm() const {
    double sq = 0.0;
    for (const auto& p : params_) {
        if (p.grad.size()) sq += p.grad.squaredNorm();
    }
    return std::sqrt(sq);
}

Var Context::maybe_dropout(const Var& x) const {
    if (!training || dropout <= 0.0 || rng == nullptr) return x;
    return ag::dropout(x, dropout, *rng);
}

Matrix Init::uniform(Eigen::Index rows, Eigen::Index cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

Matrix Init::normal(Eigen::Index rows, Eigen::Index cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, Init& init) : in_(in), out_(out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight_ = &store.create(name + ".weight", init.uniform(in, out, bound));
    bias_ = &store.create(name + ".bias", init.uniform(1, out, bound));
}

Var Linear::operator()(const Var& x) const { return ag::linear(x, ag::param(*weight_), ag::param(*bias_)); }

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, int dim) {
    gamma_ = &store.create(name + ".gamma", Matrix::Ones(1, dim));
    beta_ = &store.create(name + ".beta", Matrix::Zero(1, dim));
}

Var LayerNorm::operator()(const Var& x) const { return ag::layer_norm(x, ag::param(*gamma_), ag::param(*beta_)); }

Mlp::Mlp(ParameterStore& store, const std::string& name, int in, int hidden, int out, Init& init)
    : fc1_(store, name + ".fc1", in, hidden, init), fc2_(store, name + ".fc2", hidden, out, init) {}

Var Mlp::operator()(const Var& x, const Context& ctx) const {
    return fc2_(ctx.maybe_dropout(ag::gelu(fc1_(x))));
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, int dim, int heads, Init& init)
    : q_(store, name + ".q", dim, dim, init),
      k_(store, name + ".k", dim, dim, init),
      v_(store, name + ".v", dim, dim, init),
      o_(store, name + ".o", dim, dim, init),
      heads_(heads) {
    if (heads < 1 || dim % heads != 0) {
        throw ConfigError(fmt::format("{}: width {} is not divisible by {} heads", name, dim, heads));
    }
}

Var MultiHeadAttention::operator()(const Var& queries, const Var& keys_values, std::span<const char> key_valid) const {
    return o_(ag::attention(q_(queries), k_(keys_values), v_(keys_values), key_valid, heads_));
}

TransformerBlock::TransformerBlock(ParameterStore& store, const std::string& name, int dim, int heads,
                                   double mlp_ratio, Init& init)
    : ln1_(store, name + ".ln1", dim),
      ln2_(store, name + ".ln2", dim),
      attn_(store, name + ".attn", dim, heads, init),
      mlp_(store, name + ".mlp", dim, static_cast<int>(std::lround(dim * mlp_ratio)), dim, init) {}

Var TransformerBlock::operator()(const Var& x, std::span<const char> key_valid, const Context& ctx) const {
    const Var normed = ln1_(x);
    Var h = ag::add(x, ctx.maybe_dropout(attn_(normed, normed, key_valid)));
    return ag::add(h, ctx.maybe_dropout(mlp_(ln2_(h), ctx)));
}

TransformerStack::TransformerStack(ParameterStore& store, const std::string& name, int blocks, int dim, int heads,
                                   double mlp_ratio, Init& init) {
    blocks_.reserve(static_cast<std::size_t>(blocks));
    for (int b = 0; b < blocks; ++b) {
        blocks_.emplace_back(store, fmt::format("{}.block{}", name, b), dim, heads, mlp_ratio, init);
    }
    final_ = LayerNorm(store, name + ".norm", dim);
}

Var TransformerStack::operator()(Var x, std::span<const char> key_valid, const Context& ctx) const {
    for (const auto& block : blocks_) x = block(x, key_valid, ctx);
    return final_(x);
}

AttentionPool::AttentionPool(ParameterStore& store, const std::string& name, int dim, int heads, Init& init) {
    query_ = &store.create(name + ".query", init.normal(1, dim, 0.02));
    attn_ = MultiHeadAttention(store, name + ".attn", dim, heads, init);
}

Var AttentionPool::operator()(const Var& tokens, std::span<const char> key_valid) const {
    return attn_(ag::param(*query_), tokens, key_valid);
}

} // namespace aes3d::nn
