#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nwp/corpus.hpp"
#include "nwp/error.hpp"
#include "nwp/fastmath.hpp"
#include "nwp/matrix.hpp"
#include "nwp/rng.hpp"

namespace nwp {

// How the embedding and softmax weights are parameterized.
//   Dense:         independent W_embed (d x |V|) and W_softmax (|V| x d)
//   Shared:        one W_shared (k x |V|) adapted by projections P_embed,
//                  P_softmax (both d x k)
//   SharedLowRank: W_shared replaced by the factors A (k x r') * B (r' x |V|)
enum class Parameterization { kDense = 0, kShared = 1, kSharedLowRank = 2 };

inline const char* to_string(Parameterization p) {
    switch (p) {
        case Parameterization::kDense: return "dense";
        case Parameterization::kShared: return "shared";
        case Parameterization::kSharedLowRank: return "shared_lowrank";
    }
    return "?";
}

// Storage dtype of the tensors. kF16 means every value is exactly
// representable in binary16; compute always happens in 32-bit.
enum class Dtype { kF32 = 0, kF16 = 1 };

inline const char* to_string(Dtype d) { return d == Dtype::kF32 ? "f32" : "f16"; }
inline int dtype_bytes(Dtype d) { return d == Dtype::kF32 ? 4 : 2; }

struct Hyperparams {
    int dim = 600;        // d: embedding dimension == LSTM hidden units
    int vocab_size = 0;   // |V| including reserved tokens
    int shared_dim = 0;   // k (shared parameterizations; defaults to dim)
    int rank = 0;         // r' (SharedLowRank only; 0 = absent)
};

// LSTM gate order used throughout: input, forget, output, cell candidate.
enum Gate { kGateIn = 0, kGateForget = 1, kGateOut = 2, kGateCell = 3 };
inline constexpr std::array<const char*, 4> kGateNames = {"i", "f", "o", "g"};

template <typename T>
struct LmParams {
    Parameterization parameterization = Parameterization::kDense;
    Hyperparams hyper;
    Dtype dtype = Dtype::kF32;

    Mat<T> w_embed;   // d x |V|      (Dense)
    Mat<T> w_softmax; // |V| x d      (Dense)
    Mat<T> w_shared;  // k x |V|      (Shared)
    Mat<T> w_a;       // k x r'       (SharedLowRank)
    Mat<T> w_b;       // r' x |V|     (SharedLowRank)
    Mat<T> p_embed;   // d x k        (Shared, SharedLowRank)
    Mat<T> p_softmax; // d x k        (Shared, SharedLowRank)
    Mat<T> b_softmax; // 1 x |V|

    std::array<Mat<T>, 4> w_in;   // per gate, d x d input weights
    std::array<Mat<T>, 4> w_rec;  // per gate, d x d recurrent weights
    std::array<Mat<T>, 4> b_gate; // per gate, 1 x d

    template <typename U>
    LmParams<U> cast() const {
        LmParams<U> out;
        out.parameterization = parameterization;
        out.hyper = hyper;
        out.dtype = dtype;
        out.w_embed = w_embed.template cast<U>();
        out.w_softmax = w_softmax.template cast<U>();
        out.w_shared = w_shared.template cast<U>();
        out.w_a = w_a.template cast<U>();
        out.w_b = w_b.template cast<U>();
        out.p_embed = p_embed.template cast<U>();
        out.p_softmax = p_softmax.template cast<U>();
        out.b_softmax = b_softmax.template cast<U>();
        for (int g = 0; g < 4; ++g) {
            out.w_in[g] = w_in[g].template cast<U>();
            out.w_rec[g] = w_rec[g].template cast<U>();
            out.b_gate[g] = b_gate[g].template cast<U>();
        }
        return out;
    }
};

// Gradients mirror the parameter tensors one for one.
template <typename T>
using Gradients = LmParams<T>;

inline void validate_hyper(Parameterization p, const Hyperparams& h) {
    if (h.dim < 1) throw RangeError("hyperparams: dim must be >= 1");
    if (h.vocab_size < Vocabulary::kReserved + 1)
        throw RangeError("hyperparams: vocab_size must be >= 5");
    if (p != Parameterization::kDense && h.shared_dim < 1)
        throw RangeError("hyperparams: shared_dim must be >= 1");
    if (p == Parameterization::kSharedLowRank) {
        const int cap = std::min(h.shared_dim, h.vocab_size);
        if (h.rank < 1 || h.rank > cap)
            throw RangeError("hyperparams: rank must be in [1, min(k, vocab_size)]");
    }
}

// The trainable tensors of a model, in a fixed order. Names double as the
// tensor names in the serialized format.
template <typename T>
std::vector<std::pair<std::string, Mat<T>*>> named_tensors(LmParams<T>& p) {
    std::vector<std::pair<std::string, Mat<T>*>> out;
    switch (p.parameterization) {
        case Parameterization::kDense:
            out.emplace_back("w_embed", &p.w_embed);
            out.emplace_back("w_softmax", &p.w_softmax);
            break;
        case Parameterization::kShared:
            out.emplace_back("w_shared", &p.w_shared);
            out.emplace_back("p_embed", &p.p_embed);
            out.emplace_back("p_softmax", &p.p_softmax);
            break;
        case Parameterization::kSharedLowRank:
            out.emplace_back("w_a", &p.w_a);
            out.emplace_back("w_b", &p.w_b);
            out.emplace_back("p_embed", &p.p_embed);
            out.emplace_back("p_softmax", &p.p_softmax);
            break;
    }
    out.emplace_back("b_softmax", &p.b_softmax);
    for (int g = 0; g < 4; ++g) {
        out.emplace_back(std::string("lstm.w_") + kGateNames[g], &p.w_in[g]);
        out.emplace_back(std::string("lstm.u_") + kGateNames[g], &p.w_rec[g]);
        out.emplace_back(std::string("lstm.b_") + kGateNames[g], &p.b_gate[g]);
    }
    return out;
}

template <typename T>
std::vector<std::pair<std::string, const Mat<T>*>> named_tensors(const LmParams<T>& p) {
    std::vector<std::pair<std::string, const Mat<T>*>> out;
    for (auto& [name, mat] : named_tensors(const_cast<LmParams<T>&>(p)))
        out.emplace_back(name, mat);
    return out;
}

// Allocates all tensors for the parameterization with zero values.
template <typename T>
LmParams<T> allocate_params(Parameterization p, Hyperparams h) {
    if (p != Parameterization::kDense && h.shared_dim == 0) h.shared_dim = h.dim;
    validate_hyper(p, h);
    LmParams<T> out;
    out.parameterization = p;
    out.hyper = h;
    const int d = h.dim;
    const int v = h.vocab_size;
    const int k = h.shared_dim;
    switch (p) {
        case Parameterization::kDense:
            out.w_embed = Mat<T>(d, v);
            out.w_softmax = Mat<T>(v, d);
            break;
        case Parameterization::kShared:
            out.w_shared = Mat<T>(k, v);
            out.p_embed = Mat<T>(d, k);
            out.p_softmax = Mat<T>(d, k);
            break;
        case Parameterization::kSharedLowRank:
            out.w_a = Mat<T>(k, h.rank);
            out.w_b = Mat<T>(h.rank, v);
            out.p_embed = Mat<T>(d, k);
            out.p_softmax = Mat<T>(d, k);
            break;
    }
    out.b_softmax = Mat<T>(1, v);
    for (int g = 0; g < 4; ++g) {
        out.w_in[g] = Mat<T>(d, d);
        out.w_rec[g] = Mat<T>(d, d);
        out.b_gate[g] = Mat<T>(1, d);
    }
    return out;
}

template <typename T>
Gradients<T> zeros_like(const LmParams<T>& p) {
    return allocate_params<T>(p.parameterization, p.hyper);
}

// Weight matrices uniform in [-0.1, 0.1) (the usual init for this LSTM
// family), biases zero. Reproducible from the seed.
inline LmParams<float> init_params(Parameterization p, const Hyperparams& h, uint64_t seed) {
    LmParams<float> out = allocate_params<float>(p, h);
    Rng rng(seed);
    for (auto& [name, mat] : named_tensors(out)) {
        if (name.find("b_") != std::string::npos) continue; // biases stay zero
        fill_uniform(*mat, rng, -0.1f, 0.1f);
    }
    return out;
}

inline LmParams<float> init_dense(const Hyperparams& h, uint64_t seed) {
    return init_params(Parameterization::kDense, h, seed);
}

template <typename T>
struct LstmState {
    std::vector<T> h, c;
    explicit LstmState(int dim) : h(static_cast<size_t>(dim), T(0)), c(static_cast<size_t>(dim), T(0)) {}
    void reset() {
        std::fill(h.begin(), h.end(), T(0));
        std::fill(c.begin(), c.end(), T(0));
    }
};

// ---------------------------------------------------------------------------
// Single-token operations
// ---------------------------------------------------------------------------

// Embedding of one word: the word's column of W_embed, reconstructed through
// the projections in the factored parameterizations.
template <typename T>
std::vector<T> embed(const LmParams<T>& p, int word_id) {
    const Hyperparams& h = p.hyper;
    if (word_id < 0 || word_id >= h.vocab_size) throw IndexError("embed: word id out of range");
    std::vector<T> x(static_cast<size_t>(h.dim));
    switch (p.parameterization) {
        case Parameterization::kDense:
            p.w_embed.copy_column(word_id, x);
            break;
        case Parameterization::kShared: {
            std::vector<T> col(static_cast<size_t>(h.shared_dim));
            p.w_shared.copy_column(word_id, col);
            matvec(p.p_embed, std::span<const T>(col), std::span<T>(x));
            break;
        }
        case Parameterization::kSharedLowRank: {
            std::vector<T> bcol(static_cast<size_t>(h.rank));
            p.w_b.copy_column(word_id, bcol);
            std::vector<T> col(static_cast<size_t>(h.shared_dim));
            matvec(p.w_a, std::span<const T>(bcol), std::span<T>(col));
            matvec(p.p_embed, std::span<const T>(col), std::span<T>(x));
            break;
        }
    }
    return x;
}

// One LSTM cell update:
//   i = sigm(W_i x + U_i h + b_i)   f = sigm(W_f x + U_f h + b_f)
//   o = sigm(W_o x + U_o h + b_o)   g = tanh(W_g x + U_g h + b_g)
//   c' = f . c + i . g              h' = o . tanh(c')
template <typename T>
void lstm_step(const LmParams<T>& p, std::span<const T> x, LstmState<T>& state) {
    const int d = p.hyper.dim;
    if (static_cast<int>(x.size()) != d) throw ShapeError("lstm_step: input dimension mismatch");
    if (!all_finite(x) || !all_finite(std::span<const T>(state.h)) ||
        !all_finite(std::span<const T>(state.c)))
        throw DomainError("lstm_step: non-finite input");

    std::array<std::vector<T>, 4> acts;
    std::vector<T> tmp(static_cast<size_t>(d));
    for (int g = 0; g < 4; ++g) {
        acts[g].resize(static_cast<size_t>(d));
        matvec(p.w_in[g], x, std::span<T>(acts[g]));
        matvec(p.w_rec[g], std::span<const T>(state.h), std::span<T>(tmp));
        const T* bias = p.b_gate[g].row(0);
        for (int j = 0; j < d; ++j) {
            const T z = acts[g][j] + tmp[j] + bias[j];
            acts[g][j] = (g == kGateCell) ? std::tanh(z) : sigmoid(z);
        }
    }
    for (int j = 0; j < d; ++j) {
        state.c[j] = acts[kGateForget][j] * state.c[j] + acts[kGateIn][j] * acts[kGateCell][j];
        state.h[j] = acts[kGateOut][j] * std::tanh(state.c[j]);
    }
}

// Logits over the vocabulary. The factored paths never materialize the
// |V| x d product: Shared computes W_shared^T (P_softmax^T h) + b and
// SharedLowRank computes B^T (A^T (P_softmax^T h)) + b.
template <typename T>
std::vector<T> output_logits(const LmParams<T>& p, std::span<const T> h) {
    const Hyperparams& hp = p.hyper;
    if (static_cast<int>(h.size()) != hp.dim) throw ShapeError("output_logits: dimension mismatch");
    std::vector<T> logits(static_cast<size_t>(hp.vocab_size));
    switch (p.parameterization) {
        case Parameterization::kDense:
            matvec(p.w_softmax, h, std::span<T>(logits));
            break;
        case Parameterization::kShared: {
            std::vector<T> q(static_cast<size_t>(hp.shared_dim));
            matvec_t(p.p_softmax, h, std::span<T>(q));
            matvec_t(p.w_shared, std::span<const T>(q), std::span<T>(logits));
            break;
        }
        case Parameterization::kSharedLowRank: {
            std::vector<T> q(static_cast<size_t>(hp.shared_dim));
            matvec_t(p.p_softmax, h, std::span<T>(q));
            std::vector<T> u(static_cast<size_t>(hp.rank));
            matvec_t(p.w_a, std::span<const T>(q), std::span<T>(u));
            matvec_t(p.w_b, std::span<const T>(u), std::span<T>(logits));
            break;
        }
    }
    const T* bias = p.b_softmax.row(0);
    for (int i = 0; i < hp.vocab_size; ++i) logits[i] += bias[i];
    return logits;
}

// Row softmax with max subtraction. Returns {max, sum of shifted exps}; out
// may alias nothing. out[i] = exp(z[i]-max)/sum.
template <typename T>
struct SoftmaxStats {
    T max;
    T sumexp;
};

template <typename T>
SoftmaxStats<T> softmax_into(const T* z, int n, T* out) {
    T m = z[0];
    for (int i = 1; i < n; ++i) m = std::max(m, z[i]);
    T s = 0;
    for (int i = 0; i < n; ++i) {
        const T e = exp_of(z[i] - m);
        out[i] = e;
        s += e;
    }
    const T inv = T(1) / s;
    for (int i = 0; i < n; ++i) out[i] *= inv;
    return {m, s};
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
    if (logits.empty()) throw ShapeError("softmax: empty input");
    if (!all_finite(logits)) throw DomainError("softmax: non-finite input");
    std::vector<T> p(logits.size());
    softmax_into(logits.data(), static_cast<int>(logits.size()), p.data());
    return p;
}

// vector conveniences (span deduction does not see through std::vector)
template <typename T>
void lstm_step(const LmParams<T>& p, const std::vector<T>& x, LstmState<T>& state) {
    lstm_step(p, std::span<const T>(x), state);
}
template <typename T>
std::vector<T> output_logits(const LmParams<T>& p, const std::vector<T>& h) {
    return output_logits(p, std::span<const T>(h));
}
template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
    return softmax(std::span<const T>(logits));
}

// log p[target] computed from logits without materializing the softmax.
template <typename T>
T log_softmax_at(std::span<const T> logits, int target) {
    T m = logits[0];
    for (T z : logits) m = std::max(m, z);
    T s = 0;
    for (T z : logits) s += exp_of(z - m);
    return logits[target] - m - std::log(s);
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

struct Prediction {
    int word_id;
    float prob;
};

// Top-n next words from a hidden state, restricted to non-reserved words whose
// surface starts with `prefix`. Ordered by probability descending, ties by
// ascending word id. Empty prefix ranks the whole vocabulary.
std::vector<Prediction> predict_from_state(const LmParams<float>& params, const Vocabulary& vocab,
                                           const LstmState<float>& state, std::string_view prefix,
                                           int top_n);

// Runs the LSTM over `context_ids` (callers start contexts with <s>) and ranks
// continuations as above.
std::vector<Prediction> predict(const LmParams<float>& params, const Vocabulary& vocab,
                                std::span<const int32_t> context_ids, std::string_view prefix,
                                int top_n);

// ---------------------------------------------------------------------------
// Cost accounting
// ---------------------------------------------------------------------------

// Multiply-accumulate counts for one prediction step. Column lookups are free;
// every product against a projection or factor is counted.
//   lstm   = 8 d^2
//   embed  : Dense 0 | Shared d*k | SharedLowRank k*r' + d*k
//   output : Dense d*|V| | Shared d*k + k*|V| | SharedLowRank d*k + k*r' + r'*|V|
struct MacCount {
    int64_t embed = 0;
    int64_t lstm = 0;
    int64_t output = 0;
    int64_t total() const { return embed + lstm + output; }
};

inline MacCount mac_count(Parameterization p, const Hyperparams& h) {
    const int64_t d = h.dim, v = h.vocab_size, k = h.shared_dim, r = h.rank;
    MacCount mc;
    mc.lstm = 8 * d * d;
    switch (p) {
        case Parameterization::kDense:
            mc.embed = 0;
            mc.output = d * v;
            break;
        case Parameterization::kShared:
            mc.embed = d * k;
            mc.output = d * k + k * v;
            break;
        case Parameterization::kSharedLowRank:
            mc.embed = k * r + d * k;
            mc.output = d * k + k * r + r * v;
            break;
    }
    return mc;
}

template <typename T>
MacCount mac_count(const LmParams<T>& p) {
    return mac_count(p.parameterization, p.hyper);
}

// ---------------------------------------------------------------------------
// Batched forward primitives (lockstep over the rows of a batch)
// ---------------------------------------------------------------------------

// Per-step cache of the intermediates the backward pass needs.
template <typename T>
struct EmbedCache {
    Mat<T> m1; // A x k: shared-matrix columns (Shared) or A*W_b columns mapped through W_a (SharedLowRank)
    Mat<T> e;  // A x r': W_b columns (SharedLowRank)
};

// x (A x d) = embeddings of ids[0..A-1]; fills the cache for factored paths.
template <typename T>
void embed_rows(const LmParams<T>& p, std::span<const int32_t> ids, Mat<T>& x,
                EmbedCache<T>* cache = nullptr) {
    const int a = static_cast<int>(ids.size());
    const Hyperparams& h = p.hyper;
    x = Mat<T>(a, h.dim);
    switch (p.parameterization) {
        case Parameterization::kDense:
            for (int b = 0; b < a; ++b)
                for (int r = 0; r < h.dim; ++r) x(b, r) = p.w_embed(r, ids[b]);
            break;
        case Parameterization::kShared: {
            Mat<T> m1(a, h.shared_dim);
            for (int b = 0; b < a; ++b)
                for (int r = 0; r < h.shared_dim; ++r) m1(b, r) = p.w_shared(r, ids[b]);
            gemm_nt(x, m1, p.p_embed); // x = m1 * P_embed^T
            if (cache) cache->m1 = std::move(m1);
            break;
        }
        case Parameterization::kSharedLowRank: {
            Mat<T> e(a, h.rank);
            for (int b = 0; b < a; ++b)
                for (int r = 0; r < h.rank; ++r) e(b, r) = p.w_b(r, ids[b]);
            Mat<T> m1(a, h.shared_dim);
            gemm_nt(m1, e, p.w_a);     // m1 = e * W_a^T
            gemm_nt(x, m1, p.p_embed); // x = m1 * P_embed^T
            if (cache) {
                cache->e = std::move(e);
                cache->m1 = std::move(m1);
            }
            break;
        }
    }
}

template <typename T>
struct LstmStepCache {
    std::array<Mat<T>, 4> act; // post-activation gates, A x d
    Mat<T> c;                  // A x d
    Mat<T> h;                  // A x d
    Mat<T> tanh_c;             // A x d
};

// One lockstep LSTM update over the first `x.rows` lanes. h_prev/c_prev may
// have more rows than x (lanes past the end have already finished).
template <typename T>
void lstm_step_rows(const LmParams<T>& p, const Mat<T>& x, const Mat<T>& h_prev,
                    const Mat<T>& c_prev, LstmStepCache<T>& out) {
    const int a = x.rows;
    const int d = p.hyper.dim;
    for (int g = 0; g < 4; ++g) {
        out.act[g] = Mat<T>(a, d);
        Mat<T>& z = out.act[g];
        for (int b = 0; b < a; ++b) {
            const T* bias = p.b_gate[g].row(0);
            T* zrow = z.row(b);
            for (int j = 0; j < d; ++j) zrow[j] = bias[j];
        }
        // z += x * W_g^T + h_prev * U_g^T
        gemm_nt(z, x, p.w_in[g]);
        if (a == h_prev.rows) {
            gemm_nt(z, h_prev, p.w_rec[g]);
        } else {
            Mat<T> hp(a, d);
            for (int b = 0; b < a; ++b) std::copy_n(h_prev.row(b), d, hp.row(b));
            gemm_nt(z, hp, p.w_rec[g]);
        }
        for (T& v : z.data) v = (g == kGateCell) ? std::tanh(v) : sigmoid(v);
    }
    out.c = Mat<T>(a, d);
    out.h = Mat<T>(a, d);
    out.tanh_c = Mat<T>(a, d);
    for (int b = 0; b < a; ++b) {
        const T* i = out.act[kGateIn].row(b);
        const T* f = out.act[kGateForget].row(b);
        const T* o = out.act[kGateOut].row(b);
        const T* g = out.act[kGateCell].row(b);
        const T* cp = c_prev.row(b);
        T* c = out.c.row(b);
        T* tc = out.tanh_c.row(b);
        T* h = out.h.row(b);
        for (int j = 0; j < d; ++j) {
            c[j] = f[j] * cp[j] + i[j] * g[j];
            tc[j] = std::tanh(c[j]);
            h[j] = o[j] * tc[j];
        }
    }
}

template <typename T>
struct OutputCache {
    Mat<T> q; // A x k
    Mat<T> u; // A x r'
};

// logits (A x |V|) for a block of hidden states (A x d).
template <typename T>
void logits_rows(const LmParams<T>& p, const Mat<T>& h, Mat<T>& logits,
                 OutputCache<T>* cache = nullptr) {
    const int a = h.rows;
    const Hyperparams& hp = p.hyper;
    logits = Mat<T>(a, hp.vocab_size);
    for (int b = 0; b < a; ++b) std::copy_n(p.b_softmax.row(0), hp.vocab_size, logits.row(b));
    switch (p.parameterization) {
        case Parameterization::kDense:
            gemm_nt(logits, h, p.w_softmax);
            break;
        case Parameterization::kShared: {
            Mat<T> q(a, hp.shared_dim);
            gemm_nn(q, h, p.p_softmax);
            gemm_nn(logits, q, p.w_shared);
            if (cache) cache->q = std::move(q);
            break;
        }
        case Parameterization::kSharedLowRank: {
            Mat<T> q(a, hp.shared_dim);
            gemm_nn(q, h, p.p_softmax);
            Mat<T> u(a, hp.rank);
            gemm_nn(u, q, p.w_a);
            gemm_nn(logits, u, p.w_b);
            if (cache) {
                cache->q = std::move(q);
                cache->u = std::move(u);
            }
            break;
        }
    }
}

} // namespace nwp
