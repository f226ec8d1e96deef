#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nwp/corpus.hpp"
#include "nwp/model.hpp"
#include "nwp/svd.hpp"

namespace nwp {

// Truncated factor pair W ~= a * b with a = U*Sigma (m x rank) and
// b = leading rows of Vt (rank x n).
struct LowRankPair {
    Matrix a;
    Matrix b;
};

LowRankPair low_rank_factors(const Matrix& w, int rank);

// Fresh Shared model: one k x |V| shared matrix plus the two d x k projection
// matrices (k defaults to d), LSTM tensors, zero biases. Weights uniform in
// [-0.1, 0.1) from rng.
LmParams<float> build_shared(Hyperparams hyper, Rng& rng);

// Replaces W_shared by its rank-r' SVD truncation (Sigma folded entirely into
// the left factor); every other tensor is copied. Requires a Shared model.
LmParams<float> factorize_shared(const LmParams<float>& params, int rank);

// Rounds every tensor element to the nearest binary16 value and tags the
// model's storage dtype as f16. Inference still computes in 32-bit; only the
// serialized payload shrinks to 2 bytes per element. Idempotent.
LmParams<float> quantize_model(const LmParams<float>& params);

struct TensorSize {
    std::string name;
    int64_t params = 0;
    int64_t bytes = 0; // payload at the storage dtype
};

struct SizeReport {
    std::vector<TensorSize> tensors;
    int64_t header_bytes = 0; // file overhead: magic, header, vocab, metadata
    int64_t total_bytes = 0;  // == byte count save_model writes
};

SizeReport size_report(const LmParams<float>& params, const Vocabulary& vocab);

// rate = baseline bytes / model bytes. Throws DomainError on zero sizes.
double report_compression(const SizeReport& baseline, const SizeReport& model);

// key=value lines: one `tensor=... params=... bytes=...` per tensor, then
// `total_bytes=...` and, with a baseline, `compression_rate=...` (2 decimals).
void write_size_report(std::ostream& os, const SizeReport& report,
                       const SizeReport* baseline = nullptr);

// Embedding + softmax weight parameters, excluding the softmax bias:
//   Dense 2*d*|V|, Shared k*|V| + 2*d*k, SharedLowRank r'*(k+|V|) + 2*d*k.
int64_t embedding_softmax_weight_count(const LmParams<float>& params);

} // namespace nwp
