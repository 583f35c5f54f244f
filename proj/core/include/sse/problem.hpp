#pragma once

#include <cstdint>
#include <vector>

#include "sse/dropout.hpp"
#include "sse/fnn.hpp"
#include "sse/lstm.hpp"
#include "sse/params.hpp"
#include "sse/rng.hpp"

namespace sse {

/// A model bound to its training data. Training drivers see one interface:
/// epochs of batches, each yielding a mean-NLL gradient. Batches must be
/// visited in order 0..batch_count()-1 within an epoch (the LM problem
/// carries recurrent state across consecutive windows).
class TrainingProblem {
  public:
    virtual ~TrainingProblem() = default;

    virtual ModelParams& params() = 0;
    virtual const ModelParams& params() const = 0;

    /// N, the dataset size entering the posterior's likelihood scaling
    /// (examples for classification, target tokens for language modeling).
    virtual std::size_t dataset_size() const = 0;
    virtual std::size_t batch_count() const = 0;
    virtual void begin_epoch(std::size_t epoch) = 0;

    /// Accumulates scale * d(batch mean NLL)/d(theta) into grad and returns
    /// the batch's mean NLL.
    virtual double batch_gradient(std::size_t batch_index, double scale, ModelParams& grad) = 0;
};

/// Minibatch softmax classification with per-epoch seeded shuffling.
class FnnClassificationProblem : public TrainingProblem {
  public:
    FnnClassificationProblem(FnnParams init, Matrix inputs, std::vector<int> labels,
                             std::size_t batch_size, DropoutSpec dropout, std::uint64_t seed);

    ModelParams& params() override { return params_; }
    const ModelParams& params() const override { return params_; }
    std::size_t dataset_size() const override { return labels_.size(); }
    std::size_t batch_count() const override;
    void begin_epoch(std::size_t epoch) override;
    double batch_gradient(std::size_t batch_index, double scale, ModelParams& grad) override;

  private:
    ModelParams params_;
    Matrix inputs_;
    std::vector<int> labels_;
    std::size_t batch_size_;
    DropoutSpec dropout_;
    RngStream rng_;
    std::vector<std::size_t> order_;
};

/// Truncated-BPTT language modeling over precomputed contiguous windows; the
/// recurrent state resets at the start of every epoch and carries between
/// consecutive windows within it.
class LstmLmProblem : public TrainingProblem {
  public:
    LstmLmProblem(LstmLmParams init, std::vector<TokenBatch> windows, DropoutSpec dropout,
                  std::uint64_t seed);

    ModelParams& params() override { return params_; }
    const ModelParams& params() const override { return params_; }
    std::size_t dataset_size() const override { return token_count_; }
    std::size_t batch_count() const override { return windows_.size(); }
    void begin_epoch(std::size_t epoch) override;
    double batch_gradient(std::size_t batch_index, double scale, ModelParams& grad) override;

  private:
    ModelParams params_;
    std::vector<TokenBatch> windows_;
    std::size_t token_count_ = 0;
    DropoutSpec dropout_;
    RngStream rng_;
    LmState state_;
};

}  // namespace sse
