#include "sse/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sse {
namespace {

void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

}  // namespace

FnnParams FnnParams::zeros(const std::vector<std::size_t>& dims) {
    require(dims.size() >= 2, "FnnParams: need at least input and output dims");
    for (std::size_t d : dims) require(d > 0, "FnnParams: zero layer width");
    FnnParams p;
    p.dims = dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        p.weights.emplace_back(dims[l], dims[l + 1]);
        p.biases.emplace_back(1, dims[l + 1]);
    }
    return p;
}

FnnParams FnnParams::glorot(const std::vector<std::size_t>& dims, RngStream& rng) {
    FnnParams p = zeros(dims);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        const double bound = std::sqrt(6.0 / double(dims[l] + dims[l + 1]));
        for (double& w : p.weights[l].flat()) w = (2.0 * rng.next_double() - 1.0) * bound;
    }
    return p;
}

LstmLmParams LstmLmParams::zeros(std::size_t vocab, std::size_t emb_dim,
                                 const std::vector<std::size_t>& hidden, bool shared_embedding) {
    require(vocab > 0 && emb_dim > 0, "LstmLmParams: vocab and emb_dim must be positive");
    require(!hidden.empty(), "LstmLmParams: need at least one LSTM layer");
    for (std::size_t n : hidden) require(n > 0, "LstmLmParams: zero hidden width");
    if (shared_embedding)
        require(emb_dim == hidden.back(),
                "LstmLmParams: shared embedding requires emb_dim == last hidden size");
    LstmLmParams p;
    p.vocab = vocab;
    p.emb_dim = emb_dim;
    p.hidden = hidden;
    p.shared_embedding = shared_embedding;
    p.embedding = Matrix(vocab, emb_dim);
    for (std::size_t l = 0; l < hidden.size(); ++l) {
        const std::size_t in = l == 0 ? emb_dim : hidden[l - 1];
        p.lstm_w.emplace_back(in + hidden[l], 4 * hidden[l]);
        p.lstm_b.emplace_back(1, 4 * hidden[l]);
    }
    if (!shared_embedding) p.softmax_w = Matrix(hidden.back(), vocab);
    p.softmax_b = Matrix(1, vocab);
    return p;
}

LstmLmParams LstmLmParams::uniform(std::size_t vocab, std::size_t emb_dim,
                                   const std::vector<std::size_t>& hidden, bool shared_embedding,
                                   double init_range, RngStream& rng) {
    require(init_range > 0.0, "LstmLmParams: init_range must be positive");
    LstmLmParams p = zeros(vocab, emb_dim, hidden, shared_embedding);
    auto fill = [&](Matrix& m) {
        for (double& w : m.flat()) w = (2.0 * rng.next_double() - 1.0) * init_range;
    };
    fill(p.embedding);
    for (Matrix& w : p.lstm_w) fill(w);
    if (!p.shared_embedding) fill(p.softmax_w);
    return p;
}

std::vector<TensorView> tensor_views(ModelParams& m) {
    std::vector<TensorView> out;
    if (auto* f = std::get_if<FnnParams>(&m)) {
        for (std::size_t l = 0; l < f->weights.size(); ++l) {
            const std::string base = "fc" + std::to_string(l);
            out.push_back({base + ".w", &f->weights[l], TensorKind::Weight});
            out.push_back({base + ".b", &f->biases[l], TensorKind::Bias});
        }
    } else {
        auto* p = std::get_if<LstmLmParams>(&m);
        out.push_back({"embedding", &p->embedding, TensorKind::Weight});
        for (std::size_t l = 0; l < p->lstm_w.size(); ++l) {
            const std::string base = "lstm" + std::to_string(l);
            out.push_back({base + ".w", &p->lstm_w[l], TensorKind::Weight});
            out.push_back({base + ".b", &p->lstm_b[l], TensorKind::Bias});
        }
        if (!p->shared_embedding) out.push_back({"softmax.w", &p->softmax_w, TensorKind::Weight});
        out.push_back({"softmax.b", &p->softmax_b, TensorKind::Bias});
    }
    return out;
}

std::vector<ConstTensorView> tensor_views(const ModelParams& m) {
    std::vector<ConstTensorView> out;
    for (const TensorView& v : tensor_views(const_cast<ModelParams&>(m)))
        out.push_back({v.name, v.tensor, v.kind});
    return out;
}

ModelParams zeros_like(const ModelParams& m) {
    if (const auto* f = std::get_if<FnnParams>(&m)) return FnnParams::zeros(f->dims);
    const auto& p = std::get<LstmLmParams>(m);
    return LstmLmParams::zeros(p.vocab, p.emb_dim, p.hidden, p.shared_embedding);
}

void set_zero(ModelParams& m) {
    for (TensorView v : tensor_views(m)) v.tensor->set_zero();
}

void axpy(double a, const ModelParams& x, ModelParams& y) {
    auto xs = tensor_views(x);
    auto ys = tensor_views(y);
    if (xs.size() != ys.size()) throw std::invalid_argument("axpy: model structure mismatch");
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto& xf = xs[i].tensor->flat();
        auto yf = ys[i].tensor->flat();
        if (xf.size() != yf.size() || xs[i].name != ys[i].name)
            throw std::invalid_argument("axpy: tensor mismatch at " + xs[i].name);
        for (std::size_t k = 0; k < xf.size(); ++k) yf[k] += a * xf[k];
    }
}

void scale(ModelParams& m, double a) {
    for (TensorView v : tensor_views(m))
        for (double& w : v.tensor->flat()) w *= a;
}

double global_norm(const ModelParams& m) {
    double ss = 0.0;
    for (ConstTensorView v : tensor_views(m))
        for (double w : v.tensor->flat()) ss += w * w;
    return std::sqrt(ss);
}

double clip_global_norm(ModelParams& m, double max_norm) {
    if (max_norm <= 0.0) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
    const double norm = global_norm(m);
    if (norm > max_norm) scale(m, max_norm / norm);
    return norm;
}

std::size_t weight_count(const ModelParams& m) {
    std::size_t n = 0;
    for (ConstTensorView v : tensor_views(m))
        if (v.kind == TensorKind::Weight) n += v.tensor->size();
    return n;
}

std::size_t nonzero_weight_count(const ModelParams& m) {
    std::size_t n = 0;
    for (ConstTensorView v : tensor_views(m))
        if (v.kind == TensorKind::Weight)
            for (double w : v.tensor->flat())
                if (w != 0.0) ++n;
    return n;
}

bool all_finite(const ModelParams& m) {
    for (ConstTensorView v : tensor_views(m))
        if (!v.tensor->all_finite()) return false;
    return true;
}

double max_abs_difference(const ModelParams& a, const ModelParams& b) {
    auto as = tensor_views(a);
    auto bs = tensor_views(b);
    if (as.size() != bs.size())
        throw std::invalid_argument("max_abs_difference: model structure mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < as.size(); ++i) {
        const auto& af = as[i].tensor->flat();
        const auto& bf = bs[i].tensor->flat();
        if (af.size() != bf.size())
            throw std::invalid_argument("max_abs_difference: tensor mismatch at " + as[i].name);
        for (std::size_t k = 0; k < af.size(); ++k)
            worst = std::max(worst, std::abs(af[k] - bf[k]));
    }
    return worst;
}

}  // namespace sse
