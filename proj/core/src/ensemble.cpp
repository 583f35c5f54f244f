#include "sse/ensemble.hpp"

#include <cmath>
#include <stdexcept>

namespace sse {
namespace {

const FnnParams& as_fnn(const ModelParams& m) {
    const auto* f = std::get_if<FnnParams>(&m);
    if (!f) throw std::invalid_argument("ensemble: member is not an FNN");
    return *f;
}

const LstmLmParams& as_lm(const ModelParams& m) {
    const auto* p = std::get_if<LstmLmParams>(&m);
    if (!p) throw std::invalid_argument("ensemble: member is not an LSTM LM");
    return *p;
}

void check_members(const std::vector<ModelParams>& members) {
    if (members.empty()) throw std::invalid_argument("ensemble: no members");
}

/// Per-member target probabilities, tokens flattened across windows in
/// [window][t * batch + b] order.
std::vector<std::vector<double>> member_target_probs(const std::vector<ModelParams>& members,
                                                     const std::vector<TokenBatch>& windows) {
    check_members(members);
    if (windows.empty()) throw std::invalid_argument("ensemble: no evaluation windows");
    const std::size_t vocab = as_lm(members.front()).vocab;
    std::vector<std::vector<double>> probs(members.size());
    for (std::size_t m = 0; m < members.size(); ++m) {
        const LstmLmParams& p = as_lm(members[m]);
        if (p.vocab != vocab) throw std::invalid_argument("ensemble: member vocabulary mismatch");
        LmState state = make_state(p, windows.front().batch);
        for (const TokenBatch& w : windows)
            lstm_lm_forward(p, w, state, nullptr, {}, nullptr, &probs[m]);
    }
    return probs;
}

std::vector<double> curve_from_probs(const std::vector<std::vector<double>>& probs) {
    const std::size_t tokens = probs.front().size();
    std::vector<double> mix(tokens, 0.0);
    std::vector<double> curve;
    for (std::size_t m = 0; m < probs.size(); ++m) {
        if (probs[m].size() != tokens)
            throw std::invalid_argument("ensemble: member token count mismatch");
        double nll = 0.0;
        for (std::size_t t = 0; t < tokens; ++t) {
            mix[t] += probs[m][t];
            nll -= std::log(std::max(mix[t] / double(m + 1), 1e-300));
        }
        curve.push_back(std::exp(nll / double(tokens)));
    }
    return curve;
}

}  // namespace

Matrix ensemble_probs(const std::vector<ModelParams>& members, const Matrix& inputs) {
    check_members(members);
    Matrix acc;
    for (std::size_t m = 0; m < members.size(); ++m) {
        const Matrix p = fnn_forward(as_fnn(members[m]), inputs);
        if (m == 0) {
            acc = p;
        } else {
            if (p.rows() != acc.rows() || p.cols() != acc.cols())
                throw std::invalid_argument("ensemble: member output shape mismatch");
            for (std::size_t i = 0; i < acc.size(); ++i) acc.flat()[i] += p.flat()[i];
        }
    }
    const double inv = 1.0 / double(members.size());
    for (double& v : acc.flat()) v *= inv;
    return acc;
}

double ensemble_classification_error(const std::vector<ModelParams>& members, const Matrix& inputs,
                                     const std::vector<int>& labels) {
    return classification_error(ensemble_probs(members, inputs), labels);
}

std::vector<double> ensemble_error_curve(const std::vector<ModelParams>& members,
                                         const Matrix& inputs, const std::vector<int>& labels) {
    check_members(members);
    Matrix acc;
    std::vector<double> curve;
    for (std::size_t m = 0; m < members.size(); ++m) {
        const Matrix p = fnn_forward(as_fnn(members[m]), inputs);
        if (m == 0) {
            acc = p;
        } else {
            for (std::size_t i = 0; i < acc.size(); ++i) acc.flat()[i] += p.flat()[i];
        }
        Matrix avg = acc;
        const double inv = 1.0 / double(m + 1);
        for (double& v : avg.flat()) v *= inv;
        curve.push_back(classification_error(avg, labels));
    }
    return curve;
}

double ensemble_perplexity(const std::vector<ModelParams>& members,
                           const std::vector<TokenBatch>& windows) {
    return curve_from_probs(member_target_probs(members, windows)).back();
}

std::vector<double> ensemble_perplexity_curve(const std::vector<ModelParams>& members,
                                              const std::vector<TokenBatch>& windows) {
    return curve_from_probs(member_target_probs(members, windows));
}

}  // namespace sse
