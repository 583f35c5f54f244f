#include "sse/fnn.hpp"

#include <cmath>
#include <stdexcept>

namespace sse {
namespace {

void check_labels(const std::vector<int>& labels, std::size_t batch, std::size_t classes) {
    if (labels.size() != batch) throw std::invalid_argument("fnn: label count != batch size");
    for (int y : labels)
        if (y < 0 || std::size_t(y) >= classes)
            throw std::invalid_argument("fnn: label out of range");
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double keep, RngStream& rng) {
    Matrix m(rows, cols);
    const double inv = 1.0 / keep;
    for (double& v : m.flat()) v = rng.next_double() < keep ? inv : 0.0;
    return m;
}

void hadamard_inplace(Matrix& a, const Matrix& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a.flat()[i] *= b.flat()[i];
}

}  // namespace

Matrix fnn_forward(const FnnParams& p, const Matrix& input, FnnCache* cache,
                   const DropoutSpec& dropout, RngStream* rng) {
    dropout.validate();
    if (input.cols() != p.input_dim()) throw std::invalid_argument("fnn_forward: input dim mismatch");
    if (dropout.active() && rng == nullptr)
        throw std::invalid_argument("fnn_forward: dropout requires an rng stream");

    FnnCache local;
    FnnCache& c = cache ? *cache : local;
    c.activations.clear();
    c.pre_act.clear();
    c.drop_masks.clear();
    c.activations.push_back(input);

    Matrix x = input;
    const std::size_t L = p.layer_count();
    for (std::size_t l = 0; l + 1 < L; ++l) {
        Matrix z = matmul(x, p.weights[l]);
        add_row_vector(z, p.biases[l]);
        c.pre_act.push_back(z);
        for (double& v : z.flat()) v = v > 0.0 ? v : 0.0;
        if (dropout.active()) {
            Matrix mask = dropout_mask(z.rows(), z.cols(), dropout.keep_prob, *rng);
            hadamard_inplace(z, mask);
            c.drop_masks.push_back(std::move(mask));
        }
        c.activations.push_back(z);
        x = std::move(z);
    }
    c.logits = matmul(x, p.weights[L - 1]);
    add_row_vector(c.logits, p.biases[L - 1]);
    c.probs = softmax_rows(c.logits);
    return c.probs;
}

double fnn_loss(const FnnParams& p, const Matrix& input, const std::vector<int>& labels) {
    FnnCache cache;
    fnn_forward(p, input, &cache);
    check_labels(labels, input.rows(), p.num_classes());
    // Computed from logits with a shifted log-sum-exp for stability.
    double total = 0.0;
    for (std::size_t r = 0; r < cache.logits.rows(); ++r) {
        const double* z = cache.logits.row(r);
        double zmax = z[0];
        for (std::size_t j = 1; j < cache.logits.cols(); ++j) zmax = std::max(zmax, z[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cache.logits.cols(); ++j) sum += std::exp(z[j] - zmax);
        total += std::log(sum) + zmax - z[labels[r]];
    }
    return total / double(input.rows());
}

double fnn_backward(const FnnParams& p, const FnnCache& cache, const std::vector<int>& labels,
                    double scale, FnnParams& grad) {
    const std::size_t batch = cache.probs.rows();
    check_labels(labels, batch, p.num_classes());
    if (grad.dims != p.dims) throw std::invalid_argument("fnn_backward: grad shape mismatch");

    double loss = 0.0;
    // delta = scale * d(meanCE)/d(logits) = scale * (probs - onehot) / batch;
    // folding scale in here propagates it to every accumulated gradient.
    Matrix delta = cache.probs;
    for (std::size_t r = 0; r < batch; ++r) {
        loss -= std::log(std::max(cache.probs(r, std::size_t(labels[r])), 1e-300));
        delta(r, std::size_t(labels[r])) -= 1.0;
    }
    loss /= double(batch);
    for (double& v : delta.flat()) v *= scale / double(batch);

    const std::size_t L = p.layer_count();
    for (std::size_t l = L; l-- > 0;) {
        matmul_tn_into(cache.activations[l], delta, grad.weights[l], /*accumulate=*/true);
        for (std::size_t j = 0; j < delta.cols(); ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < delta.rows(); ++r) s += delta(r, j);
            grad.biases[l](0, j) += s;
        }
        if (l == 0) break;
        Matrix dx = matmul_nt(delta, p.weights[l]);
        if (!cache.drop_masks.empty()) hadamard_inplace(dx, cache.drop_masks[l - 1]);
        const Matrix& z = cache.pre_act[l - 1];
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (z.flat()[i] <= 0.0) dx.flat()[i] = 0.0;
        delta = std::move(dx);
    }
    return loss;
}

std::vector<int> predict_classes(const Matrix& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < probs.cols(); ++j)
            if (probs(r, j) > probs(r, best)) best = j;
        out[r] = int(best);
    }
    return out;
}

double classification_error(const Matrix& probs, const std::vector<int>& labels) {
    if (labels.size() != probs.rows())
        throw std::invalid_argument("classification_error: label count mismatch");
    const std::vector<int> pred = predict_classes(probs);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (pred[i] != labels[i]) ++wrong;
    return double(wrong) / double(labels.size());
}

}  // namespace sse
