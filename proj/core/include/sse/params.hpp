#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "sse/matrix.hpp"
#include "sse/rng.hpp"

namespace sse {

enum class TensorKind { Weight, Bias };

/// Feed-forward classifier parameters: dims like {784, 300, 100, 10}.
struct FnnParams {
    std::vector<std::size_t> dims;
    std::vector<Matrix> weights;  // layer l: dims[l] x dims[l+1]
    std::vector<Matrix> biases;   // 1 x dims[l+1]

    static FnnParams zeros(const std::vector<std::size_t>& dims);
    /// Weights uniform in +-sqrt(6 / (in + out)), biases zero.
    static FnnParams glorot(const std::vector<std::size_t>& dims, RngStream& rng);

    std::size_t layer_count() const { return weights.size(); }
    std::size_t input_dim() const { return dims.front(); }
    std::size_t num_classes() const { return dims.back(); }
};

/// LSTM language-model parameters. Canonical per-layer storage is the tied
/// weight matrix of shape (in_l + n_l) x 4*n_l with gate column blocks in
/// the order [i | u | f | o]; i, f, o are sigmoid gates and u is the tanh
/// cell candidate. Untied per-gate matrices are views into these blocks.
///
/// With shared_embedding the softmax weight is the transpose view of the
/// embedding (requires emb_dim == hidden.back()); softmax_w stays empty.
struct LstmLmParams {
    std::size_t vocab = 0;
    std::size_t emb_dim = 0;
    std::vector<std::size_t> hidden;
    bool shared_embedding = false;

    Matrix embedding;             // vocab x emb_dim
    std::vector<Matrix> lstm_w;   // (in_l + n_l) x 4*n_l
    std::vector<Matrix> lstm_b;   // 1 x 4*n_l
    Matrix softmax_w;             // hidden.back() x vocab; empty when shared
    Matrix softmax_b;             // 1 x vocab

    static LstmLmParams zeros(std::size_t vocab, std::size_t emb_dim,
                              const std::vector<std::size_t>& hidden, bool shared_embedding);
    /// All weights uniform in [-init_range, init_range], all biases zero
    /// (forget gate included).
    static LstmLmParams uniform(std::size_t vocab, std::size_t emb_dim,
                                const std::vector<std::size_t>& hidden, bool shared_embedding,
                                double init_range, RngStream& rng);

    std::size_t layer_count() const { return lstm_w.size(); }
    std::size_t layer_input_dim(std::size_t l) const { return l == 0 ? emb_dim : hidden[l - 1]; }
};

using ModelParams = std::variant<FnnParams, LstmLmParams>;

/// One named tensor of a model. The enumeration order is the stable tensor
/// id space used by groups, masks and containers:
///   FNN:  fc0.w, fc0.b, fc1.w, fc1.b, ...
///   LSTM: embedding, lstm0.w, lstm0.b, ..., softmax.w (unless shared), softmax.b
struct TensorView {
    std::string name;
    Matrix* tensor;
    TensorKind kind;
};
struct ConstTensorView {
    std::string name;
    const Matrix* tensor;
    TensorKind kind;
};

std::vector<TensorView> tensor_views(ModelParams& m);
std::vector<ConstTensorView> tensor_views(const ModelParams& m);

ModelParams zeros_like(const ModelParams& m);
void set_zero(ModelParams& m);

/// y += a * x (shapes must match).
void axpy(double a, const ModelParams& x, ModelParams& y);
void scale(ModelParams& m, double a);

double global_norm(const ModelParams& m);
/// Scales m down to max_norm when its global norm exceeds it; returns the
/// pre-clip norm.
double clip_global_norm(ModelParams& m, double max_norm);

/// Number of prunable weights (TensorKind::Weight entries; biases excluded).
/// This is also the parameter count reported everywhere.
std::size_t weight_count(const ModelParams& m);
std::size_t nonzero_weight_count(const ModelParams& m);

bool all_finite(const ModelParams& m);
double max_abs_difference(const ModelParams& a, const ModelParams& b);

}  // namespace sse
