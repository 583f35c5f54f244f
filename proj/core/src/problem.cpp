#include "sse/problem.hpp"

#include <numeric>
#include <stdexcept>

namespace sse {

FnnClassificationProblem::FnnClassificationProblem(FnnParams init, Matrix inputs,
                                                   std::vector<int> labels,
                                                   std::size_t batch_size, DropoutSpec dropout,
                                                   std::uint64_t seed)
    : params_(std::move(init)),
      inputs_(std::move(inputs)),
      labels_(std::move(labels)),
      batch_size_(batch_size),
      dropout_(dropout),
      rng_(seed) {
    dropout_.validate();
    if (inputs_.rows() != labels_.size())
        throw std::invalid_argument("FnnClassificationProblem: image/label count mismatch");
    if (inputs_.rows() == 0) throw std::invalid_argument("FnnClassificationProblem: empty dataset");
    if (batch_size_ == 0) throw std::invalid_argument("FnnClassificationProblem: batch_size == 0");
    order_.resize(labels_.size());
    std::iota(order_.begin(), order_.end(), std::size_t(0));
}

std::size_t FnnClassificationProblem::batch_count() const {
    return (labels_.size() + batch_size_ - 1) / batch_size_;
}

void FnnClassificationProblem::begin_epoch(std::size_t) { rng_.shuffle(order_); }

double FnnClassificationProblem::batch_gradient(std::size_t batch_index, double scale,
                                                ModelParams& grad) {
    if (batch_index >= batch_count())
        throw std::invalid_argument("FnnClassificationProblem: batch index out of range");
    const std::size_t lo = batch_index * batch_size_;
    const std::size_t hi = std::min(lo + batch_size_, labels_.size());
    Matrix batch(hi - lo, inputs_.cols());
    std::vector<int> labels(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
        const std::size_t src = order_[i];
        const double* from = inputs_.row(src);
        double* to = batch.row(i - lo);
        for (std::size_t j = 0; j < inputs_.cols(); ++j) to[j] = from[j];
        labels[i - lo] = labels_[src];
    }
    const auto& p = std::get<FnnParams>(params_);
    FnnCache cache;
    fnn_forward(p, batch, &cache, dropout_, &rng_);
    return fnn_backward(p, cache, labels, scale, std::get<FnnParams>(grad));
}

LstmLmProblem::LstmLmProblem(LstmLmParams init, std::vector<TokenBatch> windows,
                             DropoutSpec dropout, std::uint64_t seed)
    : params_(std::move(init)), windows_(std::move(windows)), dropout_(dropout), rng_(seed) {
    dropout_.validate();
    if (windows_.empty()) throw std::invalid_argument("LstmLmProblem: no windows");
    for (const TokenBatch& w : windows_) {
        if (w.batch != windows_.front().batch)
            throw std::invalid_argument("LstmLmProblem: inconsistent window batch sizes");
        token_count_ += w.batch * w.steps;
    }
    state_ = make_state(std::get<LstmLmParams>(params_), windows_.front().batch);
}

void LstmLmProblem::begin_epoch(std::size_t) { reset_state(state_); }

double LstmLmProblem::batch_gradient(std::size_t batch_index, double scale, ModelParams& grad) {
    if (batch_index >= windows_.size())
        throw std::invalid_argument("LstmLmProblem: batch index out of range");
    const auto& p = std::get<LstmLmParams>(params_);
    LstmLmCache cache;
    lstm_lm_forward(p, windows_[batch_index], state_, &cache, dropout_, &rng_);
    return lstm_lm_backward(p, windows_[batch_index], cache, scale, std::get<LstmLmParams>(grad));
}

}  // namespace sse
