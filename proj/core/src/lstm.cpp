#include "sse/lstm.hpp"

#include <cmath>
#include <stdexcept>

namespace sse {
namespace {

constexpr std::size_t kGateI = 0;
constexpr std::size_t kGateU = 1;
constexpr std::size_t kGateF = 2;
constexpr std::size_t kGateO = 3;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_batch(const TokenBatch& tb, std::size_t vocab) {
    if (tb.batch == 0 || tb.steps == 0)
        throw std::invalid_argument("lstm: empty token batch");
    if (tb.inputs.size() != tb.batch * tb.steps || tb.targets.size() != tb.inputs.size())
        throw std::invalid_argument("lstm: token batch layout mismatch");
    for (int t : tb.inputs)
        if (t < 0 || std::size_t(t) >= vocab) throw std::invalid_argument("lstm: input token id out of range");
    for (int t : tb.targets)
        if (t < 0 || std::size_t(t) >= vocab) throw std::invalid_argument("lstm: target token id out of range");
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

void add_colsum_into(const Matrix& m, Matrix& row) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, j);
        row(0, j) += s;
    }
}

}  // namespace

LmState make_state(const LstmLmParams& p, std::size_t batch) {
    LmState s;
    for (std::size_t n : p.hidden) {
        s.h.emplace_back(batch, n);
        s.c.emplace_back(batch, n);
    }
    return s;
}

void reset_state(LmState& s) {
    for (Matrix& m : s.h) m.set_zero();
    for (Matrix& m : s.c) m.set_zero();
}

void lstm_activate(Matrix& gates, const Matrix& c_prev, Matrix& c, Matrix& tanh_c, Matrix& h) {
    const std::size_t n = c_prev.cols();
    const std::size_t B = gates.rows();
    if (gates.cols() != 4 * n || c_prev.rows() != B)
        throw std::invalid_argument("lstm_activate: shape mismatch");
    c = Matrix(B, n);
    tanh_c = Matrix(B, n);
    h = Matrix(B, n);
    for (std::size_t r = 0; r < B; ++r) {
        double* g = gates.row(r);
        for (std::size_t k = 0; k < n; ++k) {
            const double i = sigmoid(g[kGateI * n + k]);
            const double u = std::tanh(g[kGateU * n + k]);
            const double f = sigmoid(g[kGateF * n + k]);
            const double o = sigmoid(g[kGateO * n + k]);
            g[kGateI * n + k] = i;
            g[kGateU * n + k] = u;
            g[kGateF * n + k] = f;
            g[kGateO * n + k] = o;
            const double cv = f * c_prev(r, k) + i * u;
            const double tc = std::tanh(cv);
            c(r, k) = cv;
            tanh_c(r, k) = tc;
            h(r, k) = o * tc;
        }
    }
}

void lstm_cell(const Matrix& w, const Matrix& b, const Matrix& cat, const Matrix& c_prev,
               Matrix& gates, Matrix& c, Matrix& tanh_c, Matrix& h) {
    const std::size_t n = c_prev.cols();
    if (w.cols() != 4 * n || cat.cols() != w.rows() || b.cols() != 4 * n)
        throw std::invalid_argument("lstm_cell: shape mismatch");
    gates = matmul(cat, w);
    add_row_vector(gates, b);
    lstm_activate(gates, c_prev, c, tanh_c, h);
}

double lstm_lm_forward(const LstmLmParams& p, const TokenBatch& tb, LmState& state,
                       LstmLmCache* cache, const DropoutSpec& dropout, RngStream* rng,
                       std::vector<double>* target_probs) {
    dropout.validate();
    check_batch(tb, p.vocab);
    if (dropout.active() && rng == nullptr)
        throw std::invalid_argument("lstm_lm_forward: dropout requires an rng stream");
    const std::size_t L = p.layer_count();
    if (state.h.size() != L || state.c.size() != L)
        throw std::invalid_argument("lstm_lm_forward: state layer count mismatch");
    const std::size_t B = tb.batch;
    for (std::size_t l = 0; l < L; ++l)
        if (state.h[l].rows() != B || state.h[l].cols() != p.hidden[l])
            throw std::invalid_argument("lstm_lm_forward: state shape mismatch");

    if (cache) cache->steps.assign(tb.steps, LstmStepCache{});
    double total_nll = 0.0;

    for (std::size_t t = 0; t < tb.steps; ++t) {
        LstmStepCache local;
        LstmStepCache& sc = cache ? cache->steps[t] : local;
        sc.cat.resize(L);
        sc.gates.resize(L);
        sc.c_prev.resize(L);
        sc.c.resize(L);
        sc.tanh_c.resize(L);
        if (dropout.active()) sc.out_mask.resize(L);

        // Embedding lookup for this step's tokens.
        Matrix x(B, p.emb_dim);
        for (std::size_t r = 0; r < B; ++r) {
            const int tok = tb.inputs[t * B + r];
            const double* src = p.embedding.row(std::size_t(tok));
            double* dst = x.row(r);
            for (std::size_t j = 0; j < p.emb_dim; ++j) dst[j] = src[j];
        }
        if (dropout.active()) {
            sc.emb_mask = dropout_mask(B, p.emb_dim, dropout.keep_prob, *rng);
            hadamard_inplace(x, sc.emb_mask);
        }

        for (std::size_t l = 0; l < L; ++l) {
            const std::size_t in = p.layer_input_dim(l);
            const std::size_t n = p.hidden[l];
            Matrix cat(B, in + n);
            for (std::size_t r = 0; r < B; ++r) {
                double* dst = cat.row(r);
                const double* xs = x.row(r);
                const double* hs = state.h[l].row(r);
                for (std::size_t j = 0; j < in; ++j) dst[j] = xs[j];
                for (std::size_t j = 0; j < n; ++j) dst[in + j] = hs[j];
            }
            sc.c_prev[l] = state.c[l];
            Matrix h_new;
            lstm_cell(p.lstm_w[l], p.lstm_b[l], cat, state.c[l], sc.gates[l], sc.c[l],
                      sc.tanh_c[l], h_new);
            sc.cat[l] = std::move(cat);
            state.c[l] = sc.c[l];
            state.h[l] = h_new;
            x = std::move(h_new);
            if (dropout.active()) {
                sc.out_mask[l] = dropout_mask(B, n, dropout.keep_prob, *rng);
                hadamard_inplace(x, sc.out_mask[l]);
            }
        }

        sc.top = std::move(x);
        Matrix logits = p.shared_embedding ? matmul_nt(sc.top, p.embedding)
                                           : matmul(sc.top, p.softmax_w);
        add_row_vector(logits, p.softmax_b);
        sc.probs = softmax_rows(logits);
        for (std::size_t r = 0; r < B; ++r) {
            const double py = sc.probs(r, std::size_t(tb.targets[t * B + r]));
            total_nll -= std::log(std::max(py, 1e-300));
            if (target_probs) target_probs->push_back(py);
        }
    }
    return total_nll / double(B * tb.steps);
}

double lstm_lm_backward(const LstmLmParams& p, const TokenBatch& tb, const LstmLmCache& cache,
                        double scale, LstmLmParams& grad) {
    check_batch(tb, p.vocab);
    if (cache.steps.size() != tb.steps)
        throw std::invalid_argument("lstm_lm_backward: cache does not match batch");
    const std::size_t L = p.layer_count();
    const std::size_t B = tb.batch;
    const bool dropped = !cache.steps.front().out_mask.empty();
    const double token_scale = scale / double(B * tb.steps);

    std::vector<Matrix> dh_carry, dc_carry;
    for (std::size_t n : p.hidden) {
        dh_carry.emplace_back(B, n);
        dc_carry.emplace_back(B, n);
    }

    double total_nll = 0.0;
    for (std::size_t t = tb.steps; t-- > 0;) {
        const LstmStepCache& sc = cache.steps[t];

        // dlogits = token_scale * (probs - onehot(target)).
        Matrix dlogits = sc.probs;
        for (std::size_t r = 0; r < B; ++r) {
            const std::size_t y = std::size_t(tb.targets[t * B + r]);
            total_nll -= std::log(std::max(sc.probs(r, y), 1e-300));
            dlogits(r, y) -= 1.0;
        }
        for (double& v : dlogits.flat()) v *= token_scale;

        Matrix dx;  // gradient wrt the (dropped) output feeding the next stage
        if (p.shared_embedding) {
            matmul_tn_into(dlogits, sc.top, grad.embedding, /*accumulate=*/true);
            dx = matmul(dlogits, p.embedding);
        } else {
            matmul_tn_into(sc.top, dlogits, grad.softmax_w, /*accumulate=*/true);
            dx = matmul_nt(dlogits, p.softmax_w);
        }
        add_colsum_into(dlogits, grad.softmax_b);

        for (std::size_t l = L; l-- > 0;) {
            const std::size_t in = p.layer_input_dim(l);
            const std::size_t n = p.hidden[l];

            // dh = (grad through this layer's output dropout) + carry from t+1.
            Matrix dh = std::move(dx);
            if (dropped) hadamard_inplace(dh, sc.out_mask[l]);
            for (std::size_t i = 0; i < dh.size(); ++i) dh.flat()[i] += dh_carry[l].flat()[i];

            Matrix dz(B, 4 * n);
            for (std::size_t r = 0; r < B; ++r) {
                const double* g = sc.gates[l].row(r);
                double* dzr = dz.row(r);
                for (std::size_t k = 0; k < n; ++k) {
                    const double i = g[kGateI * n + k];
                    const double u = g[kGateU * n + k];
                    const double f = g[kGateF * n + k];
                    const double o = g[kGateO * n + k];
                    const double tc = sc.tanh_c[l](r, k);
                    const double dhv = dh(r, k);
                    const double dc = dhv * o * (1.0 - tc * tc) + dc_carry[l](r, k);
                    dzr[kGateI * n + k] = dc * u * i * (1.0 - i);
                    dzr[kGateU * n + k] = dc * i * (1.0 - u * u);
                    dzr[kGateF * n + k] = dc * sc.c_prev[l](r, k) * f * (1.0 - f);
                    dzr[kGateO * n + k] = dhv * tc * o * (1.0 - o);
                    dc_carry[l](r, k) = dc * f;
                }
            }

            matmul_tn_into(sc.cat[l], dz, grad.lstm_w[l], /*accumulate=*/true);
            add_colsum_into(dz, grad.lstm_b[l]);
            const Matrix dcat = matmul_nt(dz, p.lstm_w[l]);
            dx = Matrix(B, in);
            for (std::size_t r = 0; r < B; ++r)
                for (std::size_t j = 0; j < in; ++j) dx(r, j) = dcat(r, j);
            for (std::size_t r = 0; r < B; ++r)
                for (std::size_t j = 0; j < n; ++j) dh_carry[l](r, j) = dcat(r, in + j);
        }

        // dx is now the gradient wrt the dropped embedding output.
        if (dropped) hadamard_inplace(dx, sc.emb_mask);
        for (std::size_t r = 0; r < B; ++r) {
            const std::size_t tok = std::size_t(tb.inputs[t * B + r]);
            double* dst = grad.embedding.row(tok);
            const double* src = dx.row(r);
            for (std::size_t j = 0; j < p.emb_dim; ++j) dst[j] += src[j];
        }
    }
    return total_nll / double(B * tb.steps);
}

}  // namespace sse
