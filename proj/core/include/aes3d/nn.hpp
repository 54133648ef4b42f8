// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "aes3d/autograd.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <random>
#include <span>
#include <string>

namespace aes3d::nn {

using ag::Matrix;
using ag::Parameter;
using ag::Var;

/// Owns every trainable tensor of a model, keyed by a dotted name. Addresses are stable.
class ParameterStore {
public:
    Parameter& create(const std::string& name, Matrix init);

    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;

    std::deque<Parameter>& parameters() { return params_; }
    const std::deque<Parameter>& parameters() const { return params_; }

    std::size_t scalar_count() const;
    void zero_grad();
    /// Euclidean norm over all gradients.
    double grad_norm() const;

private:
    std::deque<Parameter> params_;
    std::map<std::string, std::size_t> index_;
};

/// Per-forward execution state. Dropout draws from `rng` only when training.
struct Context {
    bool training = false;
    double dropout = 0.0;
    std::mt19937_64* rng = nullptr;

    Var maybe_dropout(const Var& x) const;
};

/// Initialization stream used while constructing modules.
struct Init {
    std::mt19937_64 rng;
    explicit Init(std::uint64_t seed) : rng(seed) {}

    Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound);
    Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev);
};

class Linear {
public:
    Linear() = default;
    Linear(ParameterStore& store, const std::string& name, int in, int out, Init& init);
    Var operator()(const Var& x) const;
    int in_features() const { return in_; }
    int out_features() const { return out_; }

private:
    Parameter* weight_ = nullptr; // in x out
    Parameter* bias_ = nullptr;   // 1 x out
    int in_ = 0, out_ = 0;
};

class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(ParameterStore& store, const std::string& name, int dim);
    Var operator()(const Var& x) const;

private:
    Parameter* gamma_ = nullptr;
    Parameter* beta_ = nullptr;
};

/// Linear -> GELU -> Linear.
class Mlp {
public:
    Mlp() = default;
    Mlp(ParameterStore& store, const std::string& name, int in, int hidden, int out, Init& init);
    Var operator()(const Var& x, const Context& ctx) const;

private:
    Linear fc1_, fc2_;
};

class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(ParameterStore& store, const std::string& name, int dim, int heads, Init& init);
    Var operator()(const Var& queries, const Var& keys_values, std::span<const char> key_valid) const;

private:
    Linear q_, k_, v_, o_;
    int heads_ = 1;
};

/// Pre-norm transformer block: x + Attn(LN(x)), then x + Mlp(LN(x)).
class TransformerBlock {
public:
    TransformerBlock() = default;
    TransformerBlock(ParameterStore& store, const std::string& name, int dim, int heads, double mlp_ratio, Init& init);
    Var operator()(const Var& x, std::span<const char> key_valid, const Context& ctx) const;

private:
    LayerNorm ln1_, ln2_;
    MultiHeadAttention attn_;
    Mlp mlp_;
};

/// Stack of transformer blocks followed by a final LayerNorm.
class TransformerStack {
public:
    TransformerStack() = default;
    TransformerStack(ParameterStore& store, const std::string& name, int blocks, int dim, int heads, double mlp_ratio,
                     Init& init);
    Var operator()(Var x, std::span<const char> key_valid, const Context& ctx) const;

private:
    std::vector<TransformerBlock> blocks_;
    LayerNorm final_;
};

/// Single learned query attending over a token set; returns 1 x dim.
class AttentionPool {
public:
    AttentionPool() = default;
    AttentionPool(ParameterStore& store, const std::string& name, int dim, int heads, Init& init);
    Var operator()(const Var& tokens, std::span<const char> key_valid) const;

private:
    Parameter* query_ = nullptr;
    MultiHeadAttention attn_;
};

} // namespace aes3d::nn
