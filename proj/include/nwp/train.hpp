#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nwp/corpus.hpp"
#include "nwp/model.hpp"

namespace nwp {

struct TrainConfig {
    double lr = 0.001;          // initial Adam learning rate
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double decay_factor = 0.5;  // lr multiplier on a no-improvement epoch
    int max_epochs = 10;
    double clip_norm = 5.0;     // global-norm gradient clip; <= 0 disables
    uint64_t seed = 0;          // batch shuffling
    int batch_size = 32;
    int max_len = 40;           // sentences truncated to this many ids
    double min_lr = 1e-6;       // stop once lr decays below this
    double divergence_factor = 10.0; // abort when val PP exceeds this x initial
};

template <typename T>
struct AdamState {
    Gradients<T> m, v;
    int64_t t = 0;
};

template <typename T>
AdamState<T> make_adam_state(const LmParams<T>& params) {
    return AdamState<T>{zeros_like(params), zeros_like(params), 0};
}

// -log p(target) from log-probabilities. target < 0 marks a masked position
// and contributes 0.
template <typename T>
double nll_loss(std::span<const T> log_probs, int target) {
    if (target < 0) return 0.0;
    if (target >= static_cast<int>(log_probs.size()))
        throw IndexError("nll_loss: target out of range");
    return -static_cast<double>(log_probs[static_cast<size_t>(target)]);
}

struct StepLossStats {
    double loss_sum = 0;     // total loss over this step's lanes
    double hard_nll_sum = 0; // hard cross-entropy component (perplexity basis)
    int tokens = 0;
};

// Per-step token loss over a lockstep batch. on_step receives the logits for
// predicting position step+1 (rows = still-active lanes) and must write
// d(loss)/d(logits), summed over tokens (the trainer divides by token count).
template <typename T>
class SequenceLoss {
public:
    virtual ~SequenceLoss() = default;
    virtual void begin_batch(const Batch& batch) { (void)batch; }
    virtual StepLossStats on_step(int step, const Mat<T>& logits,
                                  std::span<const int32_t> targets, Mat<T>& dlogits) = 0;
};

// Plain cross-entropy against the true next word.
template <typename T>
class HardTargetLoss : public SequenceLoss<T> {
public:
    StepLossStats on_step(int /*step*/, const Mat<T>& logits, std::span<const int32_t> targets,
                          Mat<T>& dlogits) override {
        StepLossStats stats;
        const int n = logits.cols;
        for (int b = 0; b < logits.rows; ++b) {
            const T* z = logits.row(b);
            T* dz = dlogits.row(b);
            const SoftmaxStats<T> s = softmax_into(z, n, dz); // dz = softmax(z)
            const int target = targets[static_cast<size_t>(b)];
            const double logp = static_cast<double>(z[target]) - static_cast<double>(s.max) -
                                std::log(static_cast<double>(s.sumexp));
            dz[target] -= T(1);
            stats.loss_sum += -logp;
            stats.hard_nll_sum += -logp;
            ++stats.tokens;
        }
        return stats;
    }
};

template <typename T>
struct BackwardResult {
    Gradients<T> grads;
    double loss = 0;     // mean per-token loss
    double hard_nll = 0; // mean per-token hard CE
    int64_t tokens = 0;
    double grad_norm = 0; // global norm before clipping
};

namespace detail {

template <typename T>
Mat<T> top_rows(const Mat<T>& m, int a) {
    if (a == m.rows) return m;
    Mat<T> out(a, m.cols);
    std::copy_n(m.data.begin(), static_cast<size_t>(a) * m.cols, out.data.begin());
    return out;
}

template <typename T>
void add_top_rows(Mat<T>& dst, const Mat<T>& src) {
    for (int b = 0; b < src.rows; ++b) {
        T* d = dst.row(b);
        const T* s = src.row(b);
        for (int j = 0; j < src.cols; ++j) d[j] += s[j];
    }
}

template <typename T>
void add_col_sums(Mat<T>& bias, const Mat<T>& m) {
    T* out = bias.row(0);
    for (int b = 0; b < m.rows; ++b) {
        const T* row = m.row(b);
        for (int j = 0; j < m.cols; ++j) out[j] += row[j];
    }
}

} // namespace detail

// Exact backpropagation through time over one batch. Gradients are of the
// mean per-token loss and flow through the factored parameterizations by the
// chain rule. Returns clipped gradients when clip_norm > 0.
template <typename T>
BackwardResult<T> backward(const LmParams<T>& params, const Batch& batch,
                           SequenceLoss<T>& loss_fn, double clip_norm) {
    const Hyperparams& hp = params.hyper;
    const int d = hp.dim;
    const int steps = batch.max_len - 1;

    BackwardResult<T> res{zeros_like(params)};
    loss_fn.begin_batch(batch);

    std::vector<Mat<T>> xs(static_cast<size_t>(steps));
    std::vector<Mat<T>> dlogits(static_cast<size_t>(steps));
    std::vector<EmbedCache<T>> ecache(static_cast<size_t>(steps));
    std::vector<LstmStepCache<T>> cell(static_cast<size_t>(steps));
    std::vector<OutputCache<T>> ocache(static_cast<size_t>(steps));
    std::vector<std::vector<int32_t>> in_ids(static_cast<size_t>(steps));

    // ---- forward, caching what the reverse sweep needs
    Mat<T> h0, c0;
    double loss_sum = 0, hard_sum = 0;
    int64_t tokens = 0;
    int used_steps = 0;
    for (int t = 0; t < steps; ++t) {
        const int active = batch.active_at(t);
        if (active == 0) break;
        auto& ids = in_ids[static_cast<size_t>(t)];
        std::vector<int32_t> targets(static_cast<size_t>(active));
        ids.resize(static_cast<size_t>(active));
        for (int b = 0; b < active; ++b) {
            ids[static_cast<size_t>(b)] = batch.token(b, t);
            targets[static_cast<size_t>(b)] = batch.token(b, t + 1);
        }
        embed_rows(params, ids, xs[static_cast<size_t>(t)], &ecache[static_cast<size_t>(t)]);
        if (t == 0) {
            h0 = Mat<T>(active, d);
            c0 = Mat<T>(active, d);
        }
        const Mat<T>& h_prev = (t == 0) ? h0 : cell[static_cast<size_t>(t - 1)].h;
        const Mat<T>& c_prev = (t == 0) ? c0 : cell[static_cast<size_t>(t - 1)].c;
        lstm_step_rows(params, xs[static_cast<size_t>(t)], h_prev, c_prev,
                       cell[static_cast<size_t>(t)]);

        Mat<T> logits;
        logits_rows(params, cell[static_cast<size_t>(t)].h, logits, &ocache[static_cast<size_t>(t)]);
        dlogits[static_cast<size_t>(t)] = Mat<T>(active, hp.vocab_size);
        const StepLossStats stats =
            loss_fn.on_step(t, logits, targets, dlogits[static_cast<size_t>(t)]);
        if (!std::isfinite(stats.loss_sum))
            throw TrainingError("backward: non-finite loss at step " + std::to_string(t) +
                                " (batch of " + std::to_string(batch.size) + " sentences)");
        loss_sum += stats.loss_sum;
        hard_sum += stats.hard_nll_sum;
        tokens += stats.tokens;
        used_steps = t + 1;
    }

    if (tokens == 0) return res; // nothing to learn from: zero gradients

    // ---- reverse sweep
    Gradients<T>& g = res.grads;
    Mat<T> dh_next(0, 0), dc_next(0, 0);
    for (int t = used_steps - 1; t >= 0; --t) {
        const Mat<T>& x = xs[static_cast<size_t>(t)];
        const int active = x.rows;
        const LstmStepCache<T>& cc = cell[static_cast<size_t>(t)];
        const Mat<T>& dl = dlogits[static_cast<size_t>(t)];

        Mat<T> dh(active, d);
        // output layer backward
        switch (params.parameterization) {
            case Parameterization::kDense: {
                gemm_nn(dh, dl, params.w_softmax);
                gemm_tn(g.w_softmax, dl, cc.h);
                break;
            }
            case Parameterization::kShared: {
                const Mat<T>& q = ocache[static_cast<size_t>(t)].q;
                Mat<T> dq(active, hp.shared_dim);
                gemm_nt(dq, dl, params.w_shared);
                gemm_tn(g.w_shared, q, dl);
                gemm_nt(dh, dq, params.p_softmax);
                gemm_tn(g.p_softmax, cc.h, dq);
                break;
            }
            case Parameterization::kSharedLowRank: {
                const Mat<T>& q = ocache[static_cast<size_t>(t)].q;
                const Mat<T>& u = ocache[static_cast<size_t>(t)].u;
                Mat<T> du(active, hp.rank);
                gemm_nt(du, dl, params.w_b);
                gemm_tn(g.w_b, u, dl);
                Mat<T> dq(active, hp.shared_dim);
                gemm_nt(dq, du, params.w_a);
                gemm_tn(g.w_a, q, du);
                gemm_nt(dh, dq, params.p_softmax);
                gemm_tn(g.p_softmax, cc.h, dq);
                break;
            }
        }
        detail::add_col_sums(g.b_softmax, dl);
        if (dh_next.rows > 0) detail::add_top_rows(dh, dh_next);

        // LSTM cell backward
        const Mat<T>& c_prev_full = (t == 0) ? c0 : cell[static_cast<size_t>(t - 1)].c;
        Mat<T> dc(active, d);
        if (dc_next.rows > 0) detail::add_top_rows(dc, dc_next);
        std::array<Mat<T>, 4> dz;
        for (int gate = 0; gate < 4; ++gate) dz[static_cast<size_t>(gate)] = Mat<T>(active, d);
        Mat<T> dc_prev(active, d);
        for (int b = 0; b < active; ++b) {
            const T* i = cc.act[kGateIn].row(b);
            const T* f = cc.act[kGateForget].row(b);
            const T* o = cc.act[kGateOut].row(b);
            const T* gg = cc.act[kGateCell].row(b);
            const T* tc = cc.tanh_c.row(b);
            const T* cp = c_prev_full.row(b);
            const T* dhr = dh.row(b);
            T* dcr = dc.row(b);
            T* dzi = dz[kGateIn].row(b);
            T* dzf = dz[kGateForget].row(b);
            T* dzo = dz[kGateOut].row(b);
            T* dzg = dz[kGateCell].row(b);
            T* dcp = dc_prev.row(b);
            for (int j = 0; j < d; ++j) {
                const T dout = dhr[j] * tc[j];
                dcr[j] += dhr[j] * o[j] * (T(1) - tc[j] * tc[j]);
                const T di = dcr[j] * gg[j];
                const T dg = dcr[j] * i[j];
                const T df = dcr[j] * cp[j];
                dcp[j] = dcr[j] * f[j];
                dzi[j] = di * i[j] * (T(1) - i[j]);
                dzf[j] = df * f[j] * (T(1) - f[j]);
                dzo[j] = dout * o[j] * (T(1) - o[j]);
                dzg[j] = dg * (T(1) - gg[j] * gg[j]);
            }
        }
        const Mat<T> h_prev =
            detail::top_rows((t == 0) ? h0 : cell[static_cast<size_t>(t - 1)].h, active);
        Mat<T> dx(active, d);
        Mat<T> dh_prev(active, d);
        for (int gate = 0; gate < 4; ++gate) {
            const Mat<T>& dzg = dz[static_cast<size_t>(gate)];
            gemm_tn(g.w_in[gate], dzg, x);
            gemm_tn(g.w_rec[gate], dzg, h_prev);
            detail::add_col_sums(g.b_gate[gate], dzg);
            gemm_nn(dx, dzg, params.w_in[gate]);
            gemm_nn(dh_prev, dzg, params.w_rec[gate]);
        }

        // embedding backward
        const auto& ids = in_ids[static_cast<size_t>(t)];
        switch (params.parameterization) {
            case Parameterization::kDense: {
                for (int b = 0; b < active; ++b) {
                    const T* dxr = dx.row(b);
                    const int col = ids[static_cast<size_t>(b)];
                    for (int r = 0; r < d; ++r) g.w_embed(r, col) += dxr[r];
                }
                break;
            }
            case Parameterization::kShared: {
                const Mat<T>& m1 = ecache[static_cast<size_t>(t)].m1;
                gemm_tn(g.p_embed, dx, m1);
                Mat<T> dm1(active, hp.shared_dim);
                gemm_nn(dm1, dx, params.p_embed);
                for (int b = 0; b < active; ++b) {
                    const T* row = dm1.row(b);
                    const int col = ids[static_cast<size_t>(b)];
                    for (int r = 0; r < hp.shared_dim; ++r) g.w_shared(r, col) += row[r];
                }
                break;
            }
            case Parameterization::kSharedLowRank: {
                const Mat<T>& m1 = ecache[static_cast<size_t>(t)].m1;
                const Mat<T>& e = ecache[static_cast<size_t>(t)].e;
                gemm_tn(g.p_embed, dx, m1);
                Mat<T> dm1(active, hp.shared_dim);
                gemm_nn(dm1, dx, params.p_embed);
                gemm_tn(g.w_a, dm1, e);
                Mat<T> de(active, hp.rank);
                gemm_nn(de, dm1, params.w_a);
                for (int b = 0; b < active; ++b) {
                    const T* row = de.row(b);
                    const int col = ids[static_cast<size_t>(b)];
                    for (int r = 0; r < hp.rank; ++r) g.w_b(r, col) += row[r];
                }
                break;
            }
        }
        dh_next = std::move(dh_prev);
        dc_next = std::move(dc_prev);
    }

    // mean over tokens, then global-norm clip
    const T inv = T(1) / static_cast<T>(tokens);
    double sq = 0;
    for (auto& [name, mat] : named_tensors(g)) {
        for (T& v : mat->data) {
            v *= inv;
            sq += static_cast<double>(v) * static_cast<double>(v);
        }
    }
    res.grad_norm = std::sqrt(sq);
    if (clip_norm > 0 && res.grad_norm > clip_norm) {
        const T scale = static_cast<T>(clip_norm / res.grad_norm);
        for (auto& [name, mat] : named_tensors(g))
            for (T& v : mat->data) v *= scale;
    }
    res.loss = loss_sum / static_cast<double>(tokens);
    res.hard_nll = hard_sum / static_cast<double>(tokens);
    res.tokens = tokens;
    return res;
}

// Standard Adam with bias correction.
template <typename T>
void adam_step(LmParams<T>& params, const Gradients<T>& grads, AdamState<T>& state,
               const TrainConfig& cfg) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    auto ptensors = named_tensors(params);
    auto gtensors = named_tensors(const_cast<Gradients<T>&>(grads));
    auto mtensors = named_tensors(state.m);
    auto vtensors = named_tensors(state.v);
    for (size_t i = 0; i < ptensors.size(); ++i) {
        Mat<T>& p = *ptensors[i].second;
        const Mat<T>& gm = *gtensors[i].second;
        Mat<T>& m = *mtensors[i].second;
        Mat<T>& v = *vtensors[i].second;
        for (size_t j = 0; j < p.data.size(); ++j) {
            const double gj = static_cast<double>(gm.data[j]);
            const double mj = cfg.beta1 * static_cast<double>(m.data[j]) + (1.0 - cfg.beta1) * gj;
            const double vj = cfg.beta2 * static_cast<double>(v.data[j]) + (1.0 - cfg.beta2) * gj * gj;
            m.data[j] = static_cast<T>(mj);
            v.data[j] = static_cast<T>(vj);
            const double update = cfg.lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg.eps);
            p.data[j] = static_cast<T>(static_cast<double>(p.data[j]) - update);
        }
    }
}

struct EpochStats {
    int epoch = 0;
    double train_pp = 0;
    double val_pp = 0;
    double lr = 0; // rate in effect during the epoch
    bool rollback = false;
};

std::string format_epoch_line(const EpochStats& s);

struct TrainResult {
    LmParams<float> model; // checkpoint with the best validation perplexity
    std::vector<EpochStats> history;
    double best_val_pp = 0;
};

using EpochLogger = std::function<void(const EpochStats&)>;

// Epoch loop with learning-rate decay and checkpoint roll-back: after an epoch
// whose validation perplexity does not improve on the best seen, the best
// checkpoint is restored and lr is multiplied by decay_factor. Stops after
// max_epochs or once lr < min_lr; aborts with TrainingError when validation
// perplexity exceeds divergence_factor x the starting value.
TrainResult run_training(LmParams<float> model, const EncodedCorpus& train_corpus,
                         const EncodedCorpus& val_corpus, const TrainConfig& cfg,
                         SequenceLoss<float>& loss_fn, const EpochLogger& logger = {});

} // namespace nwp
