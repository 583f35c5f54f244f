#include "sse/grouping.hpp"

#include <stdexcept>

#include "sse/errors.hpp"

namespace sse {
namespace {

std::uint32_t tensor_id(const std::vector<ConstTensorView>& views, const std::string& name) {
    for (std::size_t i = 0; i < views.size(); ++i)
        if (views[i].name == name) return std::uint32_t(i);
    throw std::logic_error("grouping: tensor not found: " + name);
}

Coord at(std::uint32_t tensor, std::size_t r, std::size_t c, std::size_t cols) {
    return Coord{tensor, std::uint32_t(r * cols + c)};
}

void fnn_outgoing(const FnnParams& f, const std::vector<ConstTensorView>& views,
                  GroupingSpec& spec) {
    for (std::size_t l = 0; l < f.weights.size(); ++l) {
        const std::uint32_t tw = tensor_id(views, "fc" + std::to_string(l) + ".w");
        const std::size_t cols = f.weights[l].cols();
        for (std::size_t r = 0; r < f.weights[l].rows(); ++r) {
            Group g;
            g.coords.reserve(cols);
            for (std::size_t c = 0; c < cols; ++c) g.coords.push_back(at(tw, r, c, cols));
            spec.groups.push_back(std::move(g));
        }
    }
}

void lstm_untied(const LstmLmParams& p, const std::vector<ConstTensorView>& views,
                 GroupingSpec& spec) {
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        const std::uint32_t tw = tensor_id(views, "lstm" + std::to_string(l) + ".w");
        const std::size_t rows = p.layer_input_dim(l) + p.hidden[l];
        const std::size_t n = p.hidden[l];
        const std::size_t cols = 4 * n;
        for (std::size_t gate = 0; gate < 4; ++gate) {
            for (std::size_t r = 0; r < rows; ++r) {
                Group g;
                g.coords.reserve(n);
                for (std::size_t k = 0; k < n; ++k) g.coords.push_back(at(tw, r, gate * n + k, cols));
                spec.groups.push_back(std::move(g));
            }
            for (std::size_t k = 0; k < n; ++k) {
                Group g;
                g.coords.reserve(rows);
                for (std::size_t r = 0; r < rows; ++r) g.coords.push_back(at(tw, r, gate * n + k, cols));
                spec.groups.push_back(std::move(g));
            }
        }
    }
}

void lstm_tied(const LstmLmParams& p, const std::vector<ConstTensorView>& views,
               GroupingSpec& spec) {
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        const std::uint32_t tw = tensor_id(views, "lstm" + std::to_string(l) + ".w");
        const std::size_t rows = p.layer_input_dim(l) + p.hidden[l];
        const std::size_t cols = 4 * p.hidden[l];
        for (std::size_t r = 0; r < rows; ++r) {
            Group g;
            g.coords.reserve(cols);
            for (std::size_t c = 0; c < cols; ++c) g.coords.push_back(at(tw, r, c, cols));
            spec.groups.push_back(std::move(g));
        }
        for (std::size_t c = 0; c < cols; ++c) {
            Group g;
            g.coords.reserve(rows);
            for (std::size_t r = 0; r < rows; ++r) g.coords.push_back(at(tw, r, c, cols));
            spec.groups.push_back(std::move(g));
        }
    }
}

void output_row_col_groups(const LstmLmParams& p, const std::vector<ConstTensorView>& views,
                           GroupingSpec& spec) {
    const std::uint32_t te = tensor_id(views, "embedding");
    for (std::size_t c = 0; c < p.emb_dim; ++c) {
        Group g;
        g.coords.reserve(p.vocab);
        for (std::size_t v = 0; v < p.vocab; ++v) g.coords.push_back(at(te, v, c, p.emb_dim));
        spec.groups.push_back(std::move(g));
    }
    if (p.shared_embedding) return;  // embedding columns double as softmax rows
    const std::uint32_t ts = tensor_id(views, "softmax.w");
    for (std::size_t r = 0; r < p.hidden.back(); ++r) {
        Group g;
        g.coords.reserve(p.vocab);
        for (std::size_t v = 0; v < p.vocab; ++v) g.coords.push_back(at(ts, r, v, p.vocab));
        spec.groups.push_back(std::move(g));
    }
}

void lstm_iss(const LstmLmParams& p, const std::vector<ConstTensorView>& views,
              GroupingSpec& spec, bool embed_cols) {
    const std::size_t L = p.layer_count();
    const std::uint32_t te = tensor_id(views, "embedding");
    for (std::size_t l = 0; l < L; ++l) {
        const std::uint32_t tw = tensor_id(views, "lstm" + std::to_string(l) + ".w");
        const std::uint32_t tb = tensor_id(views, "lstm" + std::to_string(l) + ".b");
        const std::size_t in = p.layer_input_dim(l);
        const std::size_t n = p.hidden[l];
        const std::size_t cols = 4 * n;
        for (std::size_t k = 0; k < n; ++k) {
            Group g;
            // Recurrent row in+k of W(l).
            for (std::size_t c = 0; c < cols; ++c) g.coords.push_back(at(tw, in + k, c, cols));
            // The four gate columns, skipping the cells already in the row.
            for (std::size_t gate = 0; gate < 4; ++gate)
                for (std::size_t r = 0; r < in + n; ++r)
                    if (r != in + k) g.coords.push_back(at(tw, r, gate * n + k, cols));
            // The four bias entries.
            for (std::size_t gate = 0; gate < 4; ++gate)
                g.coords.push_back(Coord{tb, std::uint32_t(gate * n + k)});
            // Where the unit's output goes: next layer's input row, or the
            // softmax row (embedding column on shared storage).
            if (l + 1 < L) {
                const std::uint32_t tn = tensor_id(views, "lstm" + std::to_string(l + 1) + ".w");
                const std::size_t ncols = 4 * p.hidden[l + 1];
                for (std::size_t c = 0; c < ncols; ++c) g.coords.push_back(at(tn, k, c, ncols));
            } else if (p.shared_embedding) {
                for (std::size_t v = 0; v < p.vocab; ++v)
                    g.coords.push_back(at(te, v, k, p.emb_dim));
            } else {
                const std::uint32_t ts = tensor_id(views, "softmax.w");
                for (std::size_t v = 0; v < p.vocab; ++v) g.coords.push_back(at(ts, k, v, p.vocab));
            }
            spec.groups.push_back(std::move(g));
        }
    }
    if (embed_cols) {
        for (std::size_t c = 0; c < p.emb_dim; ++c) {
            Group g;
            g.coords.reserve(p.vocab);
            for (std::size_t v = 0; v < p.vocab; ++v) g.coords.push_back(at(te, v, c, p.emb_dim));
            spec.groups.push_back(std::move(g));
        }
    }
}

}  // namespace

GroupStrategy strategy_from_string(const std::string& s) {
    if (s == "fnn-outgoing") return GroupStrategy::FnnOutgoing;
    if (s == "lstm-untied") return GroupStrategy::LstmUntied;
    if (s == "lstm-tied") return GroupStrategy::LstmTiedW;
    if (s == "lstm-iss") return GroupStrategy::LstmIss;
    if (s == "lstm-iss-embed") return GroupStrategy::LstmIssEmbedCols;
    if (s == "lstm-iss-se") return GroupStrategy::LstmIssSharedEmbed;
    throw ConfigError("unknown grouping strategy: " + s);
}

std::string strategy_name(GroupStrategy s) {
    switch (s) {
        case GroupStrategy::FnnOutgoing: return "fnn-outgoing";
        case GroupStrategy::LstmUntied: return "lstm-untied";
        case GroupStrategy::LstmTiedW: return "lstm-tied";
        case GroupStrategy::LstmIss: return "lstm-iss";
        case GroupStrategy::LstmIssEmbedCols: return "lstm-iss-embed";
        case GroupStrategy::LstmIssSharedEmbed: return "lstm-iss-se";
    }
    throw std::logic_error("strategy_name: unreachable");
}

GroupingSpec build_groups(const ModelParams& model, GroupStrategy strategy, bool output_groups) {
    GroupingSpec spec;
    spec.strategy = strategy;
    const auto views = tensor_views(model);

    if (strategy == GroupStrategy::FnnOutgoing) {
        const auto* f = std::get_if<FnnParams>(&model);
        if (!f) throw ConfigError("fnn-outgoing grouping requires an FNN model");
        fnn_outgoing(*f, views, spec);
        return spec;
    }

    const auto* p = std::get_if<LstmLmParams>(&model);
    if (!p) throw ConfigError(strategy_name(strategy) + " grouping requires an LSTM model");
    switch (strategy) {
        case GroupStrategy::LstmUntied:
            lstm_untied(*p, views, spec);
            if (output_groups) output_row_col_groups(*p, views, spec);
            break;
        case GroupStrategy::LstmTiedW:
            lstm_tied(*p, views, spec);
            if (output_groups) output_row_col_groups(*p, views, spec);
            break;
        case GroupStrategy::LstmIss:
        case GroupStrategy::LstmIssEmbedCols:
            if (p->shared_embedding)
                throw ConfigError(strategy_name(strategy) + " requires split embedding/softmax storage");
            lstm_iss(*p, views, spec, strategy == GroupStrategy::LstmIssEmbedCols);
            break;
        case GroupStrategy::LstmIssSharedEmbed:
            if (!p->shared_embedding)
                throw ConfigError("lstm-iss-se requires shared embedding/softmax storage");
            lstm_iss(*p, views, spec, /*embed_cols=*/false);
            break;
        default:
            throw std::logic_error("build_groups: unreachable");
    }
    return spec;
}

}  // namespace sse
