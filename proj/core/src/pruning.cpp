#include "sse/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sse/errors.hpp"

namespace sse {
namespace {

constexpr const char* kGateLetters[4] = {"i", "u", "f", "o"};

void require_consistent(const PruneMask& mask, const ModelParams& model) {
    if (!mask_consistent(mask, model))
        throw std::invalid_argument("mask/model inconsistency: a pruned coordinate is nonzero");
}

/// Row/column occupancy of the sub-view [r0,r1) x [c0,c1); ids are view-local.
MatrixIndexLists view_lists(const Matrix& m, std::string name, std::size_t r0, std::size_t r1,
                            std::size_t c0, std::size_t c1) {
    std::vector<std::uint8_t> row_used(r1 - r0, 0), col_used(c1 - c0, 0);
    for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c)
            if (m(r, c) != 0.0) {
                row_used[r - r0] = 1;
                col_used[c - c0] = 1;
            }
    MatrixIndexLists out;
    out.name = std::move(name);
    for (std::size_t i = 0; i < row_used.size(); ++i)
        if (row_used[i]) out.kept_rows.push_back(i);
    for (std::size_t i = 0; i < col_used.size(); ++i)
        if (col_used[i]) out.kept_cols.push_back(i);
    return out;
}

MatrixIndexLists whole_lists(const Matrix& m, std::string name) {
    return view_lists(m, std::move(name), 0, m.rows(), 0, m.cols());
}

/// The softmax view on shared storage is the transposed embedding.
MatrixIndexLists transposed_lists(const Matrix& m, std::string name) {
    MatrixIndexLists raw = whole_lists(m, std::move(name));
    std::swap(raw.kept_rows, raw.kept_cols);
    return raw;
}

bool row_all_zero(const Matrix& m, std::size_t r) {
    for (std::size_t c = 0; c < m.cols(); ++c)
        if (m(r, c) != 0.0) return false;
    return true;
}

bool col_all_zero(const Matrix& m, std::size_t c) {
    for (std::size_t r = 0; r < m.rows(); ++r)
        if (m(r, c) != 0.0) return false;
    return true;
}

/// Weight coordinates of ISS unit k in layer l are all exactly zero.
bool unit_removable(const LstmLmParams& p, std::size_t l, std::size_t k) {
    const Matrix& w = p.lstm_w[l];
    const std::size_t in = p.layer_input_dim(l);
    const std::size_t n = p.hidden[l];
    if (!row_all_zero(w, in + k)) return false;
    for (std::size_t gate = 0; gate < 4; ++gate)
        if (!col_all_zero(w, gate * n + k)) return false;
    if (l + 1 < p.layer_count()) return row_all_zero(p.lstm_w[l + 1], k);
    if (p.shared_embedding) return col_all_zero(p.embedding, k);
    return row_all_zero(p.softmax_w, k);
}

void copy_submatrix(const Matrix& src, Matrix& dst, const std::vector<std::size_t>& rows,
                    const std::vector<std::size_t>& cols) {
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) dst(i, j) = src(rows[i], cols[j]);
}

std::vector<std::size_t> iota_ids(std::size_t n) {
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t(0));
    return ids;
}

SparsityReport base_report(const ModelParams& model) {
    SparsityReport rep;
    rep.total_params = weight_count(model);
    rep.nonzero_params = nonzero_weight_count(model);
    rep.sparsity =
        rep.total_params == 0 ? 0.0 : 1.0 - double(rep.nonzero_params) / double(rep.total_params);
    return rep;
}

void finish_flops(SparsityReport& rep) {
    rep.total_flops = 0;
    for (const auto& [name, f] : rep.matrix_flops) rep.total_flops += f;
}

}  // namespace

const MatrixIndexLists* IndexLists::find(const std::string& name) const {
    for (const MatrixIndexLists& m : matrices)
        if (m.name == name) return &m;
    return nullptr;
}

double compute_threshold(const ModelParams& model, double target_sparsity) {
    if (!(target_sparsity >= 0.0) || target_sparsity >= 1.0)
        throw ConfigError("compute_threshold: target_sparsity must be in [0, 1)");
    std::vector<double> magnitudes;
    for (ConstTensorView v : tensor_views(model))
        if (v.kind == TensorKind::Weight)
            for (double w : v.tensor->flat()) magnitudes.push_back(std::abs(w));
    if (magnitudes.empty()) return 0.0;
    const std::size_t k = std::size_t(target_sparsity * double(magnitudes.size()));
    if (k == 0) return 0.5 * *std::min_element(magnitudes.begin(), magnitudes.end());
    std::nth_element(magnitudes.begin(), magnitudes.begin() + (k - 1), magnitudes.end());
    return magnitudes[k - 1];
}

PruneMask prune(ModelParams& model, double threshold) {
    if (!(threshold >= 0.0)) throw std::invalid_argument("prune: threshold must be >= 0");
    PruneMask mask = PruneMask::all_kept(model);
    auto views = tensor_views(model);
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (views[i].kind != TensorKind::Weight) continue;
        auto flat = views[i].tensor->flat();
        for (std::size_t k = 0; k < flat.size(); ++k)
            if (std::abs(flat[k]) <= threshold) {
                flat[k] = 0.0;
                mask.kept[i][k] = 0;
            }
    }
    return mask;
}

IndexLists extract_index_lists(const ModelParams& model, const PruneMask& mask,
                               GroupStrategy strategy) {
    require_consistent(mask, model);
    IndexLists out;

    if (strategy == GroupStrategy::FnnOutgoing) {
        const auto* f = std::get_if<FnnParams>(&model);
        if (!f) throw ConfigError("fnn-outgoing index lists require an FNN model");
        for (std::size_t l = 0; l < f->weights.size(); ++l)
            out.matrices.push_back(whole_lists(f->weights[l], "fc" + std::to_string(l) + ".w"));
        return out;
    }
    if (strategy != GroupStrategy::LstmUntied && strategy != GroupStrategy::LstmTiedW)
        throw ConfigError("index lists are defined for fnn-outgoing, lstm-untied and lstm-tied; "
                          "ISS strategies use the reduced-model extraction");
    const auto* p = std::get_if<LstmLmParams>(&model);
    if (!p) throw ConfigError(strategy_name(strategy) + " index lists require an LSTM model");

    for (std::size_t l = 0; l < p->layer_count(); ++l) {
        const Matrix& w = p->lstm_w[l];
        const std::string base = "lstm" + std::to_string(l) + ".w";
        const std::size_t in = p->layer_input_dim(l);
        const std::size_t n = p->hidden[l];
        if (strategy == GroupStrategy::LstmTiedW) {
            out.matrices.push_back(whole_lists(w, base));
        } else {
            for (std::size_t gate = 0; gate < 4; ++gate) {
                out.matrices.push_back(view_lists(w, base + ".x" + kGateLetters[gate], 0, in,
                                                  gate * n, (gate + 1) * n));
                out.matrices.push_back(view_lists(w, base + ".h" + kGateLetters[gate], in, in + n,
                                                  gate * n, (gate + 1) * n));
            }
        }
    }
    if (p->shared_embedding)
        out.matrices.push_back(transposed_lists(p->embedding, "softmax.w"));
    else
        out.matrices.push_back(whole_lists(p->softmax_w, "softmax.w"));
    return out;
}

ReducedLstm extract_reduced_lstm(const LstmLmParams& model, const PruneMask& mask,
                                 GroupStrategy strategy) {
    const bool iss = strategy == GroupStrategy::LstmIss;
    const bool iss_embed = strategy == GroupStrategy::LstmIssEmbedCols;
    const bool iss_se = strategy == GroupStrategy::LstmIssSharedEmbed;
    if (!iss && !iss_embed && !iss_se)
        throw ConfigError("reduced-model extraction is defined for the ISS strategies");
    if (iss_se != model.shared_embedding)
        throw ConfigError("reduced-model extraction: strategy/storage mismatch");
    {
        ModelParams wrapped = model;
        require_consistent(mask, wrapped);
    }

    ReducedLstm red;
    const std::size_t L = model.layer_count();
    for (std::size_t l = 0; l < L; ++l) {
        std::vector<std::size_t> kept;
        for (std::size_t k = 0; k < model.hidden[l]; ++k)
            if (!unit_removable(model, l, k)) kept.push_back(k);
        if (kept.empty()) throw std::runtime_error("reduction removed every unit of a layer");
        red.kept_units.push_back(std::move(kept));
    }
    if (iss) {
        red.kept_embed = iota_ids(model.emb_dim);
    } else if (iss_embed) {
        for (std::size_t c = 0; c < model.emb_dim; ++c)
            if (!col_all_zero(model.embedding, c)) red.kept_embed.push_back(c);
        if (red.kept_embed.empty()) throw std::runtime_error("reduction removed every embedding column");
    } else {
        red.kept_embed = red.kept_units.back();
    }

    std::vector<std::size_t> hidden_red;
    for (const auto& kept : red.kept_units) hidden_red.push_back(kept.size());
    red.params = LstmLmParams::zeros(model.vocab, red.kept_embed.size(), hidden_red,
                                     model.shared_embedding);

    copy_submatrix(model.embedding, red.params.embedding, iota_ids(model.vocab), red.kept_embed);
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t in = model.layer_input_dim(l);
        const std::size_t n = model.hidden[l];
        const std::size_t n_red = red.kept_units[l].size();
        const std::vector<std::size_t>& input_ids = l == 0 ? red.kept_embed : red.kept_units[l - 1];
        std::vector<std::size_t> rows = input_ids;
        for (std::size_t k : red.kept_units[l]) rows.push_back(in + k);
        std::vector<std::size_t> cols;
        for (std::size_t gate = 0; gate < 4; ++gate)
            for (std::size_t k : red.kept_units[l]) cols.push_back(gate * n + k);
        copy_submatrix(model.lstm_w[l], red.params.lstm_w[l], rows, cols);
        for (std::size_t gate = 0; gate < 4; ++gate)
            for (std::size_t j = 0; j < n_red; ++j)
                red.params.lstm_b[l](0, gate * n_red + j) =
                    model.lstm_b[l](0, gate * n + red.kept_units[l][j]);
    }
    if (!model.shared_embedding)
        copy_submatrix(model.softmax_w, red.params.softmax_w, red.kept_units.back(),
                       iota_ids(model.vocab));
    red.params.softmax_b = model.softmax_b;
    return red;
}

SparsityReport count_flops(const ModelParams& model) {
    SparsityReport rep = base_report(model);
    if (const auto* f = std::get_if<FnnParams>(&model)) {
        for (std::size_t l = 0; l < f->weights.size(); ++l) {
            const MatrixIndexLists v = whole_lists(f->weights[l], "fc" + std::to_string(l) + ".w");
            rep.matrix_flops.emplace_back(v.name, 2 * v.kept_rows.size() * v.kept_cols.size());
        }
    } else {
        const auto& p = std::get<LstmLmParams>(model);
        for (std::size_t l = 0; l < p.layer_count(); ++l) {
            const MatrixIndexLists v = whole_lists(p.lstm_w[l], "lstm" + std::to_string(l) + ".w");
            rep.matrix_flops.emplace_back(v.name, 2 * v.kept_rows.size() * v.kept_cols.size());
        }
        const MatrixIndexLists v = p.shared_embedding
                                       ? transposed_lists(p.embedding, "softmax.w")
                                       : whole_lists(p.softmax_w, "softmax.w");
        rep.matrix_flops.emplace_back(v.name, 2 * v.kept_rows.size() * v.kept_cols.size());
    }
    finish_flops(rep);
    return rep;
}

SparsityReport count_flops(const ModelParams& model, const IndexLists& lists) {
    SparsityReport rep = base_report(model);
    for (const MatrixIndexLists& m : lists.matrices)
        rep.matrix_flops.emplace_back(m.name, 2 * m.kept_rows.size() * m.kept_cols.size());
    finish_flops(rep);
    return rep;
}

SparsityReport reduced_report(const ReducedLstm& reduced) {
    SparsityReport rep = count_flops(ModelParams(reduced.params));
    rep.reduced_sizes.push_back(reduced.kept_embed.size());
    for (const auto& kept : reduced.kept_units) rep.reduced_sizes.push_back(kept.size());
    return rep;
}

ModelParams retrain(TrainingProblem& problem, const PruneMask& mask, std::size_t epochs,
                    const LrSchedule& schedule, double clip_norm,
                    const GroupingSpec* prior_groups, const GspConfig& prior_cfg) {
    if (!mask_consistent(mask, problem.params()))
        throw std::invalid_argument("retrain: model is not pruned by the given mask");
    sgd_train(problem, epochs, schedule, clip_norm, &mask, prior_groups, prior_cfg);
    return problem.params();
}

Matrix fnn_forward_lists(const FnnParams& p, const IndexLists& lists, const Matrix& input) {
    if (input.cols() != p.input_dim())
        throw std::invalid_argument("fnn_forward_lists: input dim mismatch");
    const std::size_t B = input.rows();
    Matrix x = input;
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        const MatrixIndexLists* m = lists.find("fc" + std::to_string(l) + ".w");
        if (!m) throw std::invalid_argument("fnn_forward_lists: missing lists for layer");
        const Matrix& w = p.weights[l];
        Matrix z(B, w.cols());
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t r : m->kept_rows) {
                const double sv = x(b, r);
                for (std::size_t c : m->kept_cols) z(b, c) += sv * w(r, c);
            }
        add_row_vector(z, p.biases[l]);
        if (l + 1 < p.layer_count())
            for (double& v : z.flat()) v = v > 0.0 ? v : 0.0;
        x = std::move(z);
    }
    return softmax_rows(x);
}

double lstm_lm_forward_lists(const LstmLmParams& p, const IndexLists& lists,
                             const TokenBatch& tb, LmState& state,
                             std::vector<double>* target_probs) {
    if (tb.batch == 0 || tb.steps == 0 || tb.inputs.size() != tb.batch * tb.steps ||
        tb.targets.size() != tb.inputs.size())
        throw std::invalid_argument("lstm_lm_forward_lists: bad token batch");
    const std::size_t B = tb.batch;
    const std::size_t L = p.layer_count();
    const bool tied = lists.find("lstm0.w") != nullptr;
    const MatrixIndexLists* sm = lists.find("softmax.w");
    if (!sm) throw std::invalid_argument("lstm_lm_forward_lists: missing softmax lists");

    double total_nll = 0.0;
    for (std::size_t t = 0; t < tb.steps; ++t) {
        Matrix x(B, p.emb_dim);
        for (std::size_t b = 0; b < B; ++b) {
            const int tok = tb.inputs[t * B + b];
            if (tok < 0 || std::size_t(tok) >= p.vocab)
                throw std::invalid_argument("lstm_lm_forward_lists: token id out of range");
            const double* src = p.embedding.row(std::size_t(tok));
            for (std::size_t j = 0; j < p.emb_dim; ++j) x(b, j) = src[j];
        }

        for (std::size_t l = 0; l < L; ++l) {
            const Matrix& w = p.lstm_w[l];
            const std::size_t in = p.layer_input_dim(l);
            const std::size_t n = p.hidden[l];
            const std::string base = "lstm" + std::to_string(l) + ".w";
            Matrix z(B, 4 * n);

            if (tied) {
                const MatrixIndexLists* m = lists.find(base);
                if (!m) throw std::invalid_argument("lstm_lm_forward_lists: missing lists for " + base);
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t r : m->kept_rows) {
                        const double sv = r < in ? x(b, r) : state.h[l](b, r - in);
                        for (std::size_t c : m->kept_cols) z(b, c) += sv * w(r, c);
                    }
            } else {
                for (std::size_t gate = 0; gate < 4; ++gate) {
                    const MatrixIndexLists* mx = lists.find(base + ".x" + kGateLetters[gate]);
                    const MatrixIndexLists* mh = lists.find(base + ".h" + kGateLetters[gate]);
                    if (!mx || !mh)
                        throw std::invalid_argument("lstm_lm_forward_lists: missing lists for " + base);
                    for (std::size_t b = 0; b < B; ++b) {
                        for (std::size_t r : mx->kept_rows) {
                            const double sv = x(b, r);
                            for (std::size_t c : mx->kept_cols)
                                z(b, gate * n + c) += sv * w(r, gate * n + c);
                        }
                        for (std::size_t r : mh->kept_rows) {
                            const double sv = state.h[l](b, r);
                            for (std::size_t c : mh->kept_cols)
                                z(b, gate * n + c) += sv * w(in + r, gate * n + c);
                        }
                    }
                }
            }
            add_row_vector(z, p.lstm_b[l]);

            Matrix c, tanh_c, h;
            lstm_activate(z, state.c[l], c, tanh_c, h);
            state.c[l] = std::move(c);
            state.h[l] = h;
            x = std::move(h);
        }

        Matrix logits(B, p.vocab);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t r : sm->kept_rows) {
                const double sv = x(b, r);
                if (p.shared_embedding)
                    for (std::size_t c : sm->kept_cols) logits(b, c) += sv * p.embedding(c, r);
                else
                    for (std::size_t c : sm->kept_cols) logits(b, c) += sv * p.softmax_w(r, c);
            }
        add_row_vector(logits, p.softmax_b);
        const Matrix probs = softmax_rows(logits);
        for (std::size_t b = 0; b < B; ++b) {
            const int y = tb.targets[t * B + b];
            if (y < 0 || std::size_t(y) >= p.vocab)
                throw std::invalid_argument("lstm_lm_forward_lists: target id out of range");
            const double py = probs(b, std::size_t(y));
            total_nll -= std::log(std::max(py, 1e-300));
            if (target_probs) target_probs->push_back(py);
        }
    }
    return total_nll / double(B * tb.steps);
}

}  // namespace sse
