#include "nwp/compress.hpp"

#include <cmath>
#include <ostream>

#include "nwp/half.hpp"
#include "nwp/modelstore.hpp"

namespace nwp {

LowRankPair low_rank_factors(const Matrix& w, int rank) {
    const SvdResult s = svd(w);
    LowRankPair pair;
    truncated_factors(s, rank, pair.a, pair.b);
    return pair;
}

LmParams<float> build_shared(Hyperparams hyper, Rng& rng) {
    if (hyper.shared_dim == 0) hyper.shared_dim = hyper.dim;
    hyper.rank = 0;
    LmParams<float> params = allocate_params<float>(Parameterization::kShared, hyper);
    for (auto& [name, mat] : named_tensors(params)) {
        if (name.find("b_") != std::string::npos) continue;
        fill_uniform(*mat, rng, -0.1f, 0.1f);
    }
    return params;
}

LmParams<float> factorize_shared(const LmParams<float>& params, int rank) {
    if (params.parameterization != Parameterization::kShared)
        throw DomainError("factorize_shared: model is not Shared-parameterized");
    const int cap = std::min(params.hyper.shared_dim, params.hyper.vocab_size);
    if (rank < 1 || rank > cap)
        throw RangeError("factorize_shared: rank must be in [1, " + std::to_string(cap) + "]");

    Hyperparams hyper = params.hyper;
    hyper.rank = rank;
    LmParams<float> out = allocate_params<float>(Parameterization::kSharedLowRank, hyper);
    const LowRankPair pair = low_rank_factors(params.w_shared, rank);
    out.w_a = pair.a;
    out.w_b = pair.b;
    out.p_embed = params.p_embed;
    out.p_softmax = params.p_softmax;
    out.b_softmax = params.b_softmax;
    for (int g = 0; g < 4; ++g) {
        out.w_in[g] = params.w_in[g];
        out.w_rec[g] = params.w_rec[g];
        out.b_gate[g] = params.b_gate[g];
    }
    out.dtype = Dtype::kF32; // factor values are fresh f32, whatever came in
    return out;
}

LmParams<float> quantize_model(const LmParams<float>& params) {
    LmParams<float> out = params;
    for (auto& [name, mat] : named_tensors(out))
        for (float& v : mat->data) v = f16_round(v);
    out.dtype = Dtype::kF16;
    return out;
}

SizeReport size_report(const LmParams<float>& params, const Vocabulary& vocab) {
    const FileLayout layout = file_layout(params, vocab);
    SizeReport report;
    for (const auto& t : layout.tensors)
        report.tensors.push_back({t.name, t.params, t.payload_bytes});
    report.header_bytes = layout.overhead_bytes;
    report.total_bytes = layout.total_bytes;
    return report;
}

double report_compression(const SizeReport& baseline, const SizeReport& model) {
    if (baseline.total_bytes <= 0 || model.total_bytes <= 0)
        throw DomainError("report_compression: zero-size report");
    return static_cast<double>(baseline.total_bytes) / static_cast<double>(model.total_bytes);
}

void write_size_report(std::ostream& os, const SizeReport& report, const SizeReport* baseline) {
    for (const auto& t : report.tensors)
        os << "tensor=" << t.name << " params=" << t.params << " bytes=" << t.bytes << "\n";
    os << "total_bytes=" << report.total_bytes << "\n";
    if (baseline) {
        const double rate = report_compression(*baseline, report);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", rate);
        os << "compression_rate=" << buf << "\n";
    }
}

int64_t embedding_softmax_weight_count(const LmParams<float>& params) {
    const int64_t d = params.hyper.dim;
    const int64_t v = params.hyper.vocab_size;
    const int64_t k = params.hyper.shared_dim;
    const int64_t r = params.hyper.rank;
    switch (params.parameterization) {
        case Parameterization::kDense: return 2 * d * v;
        case Parameterization::kShared: return k * v + 2 * d * k;
        case Parameterization::kSharedLowRank: return r * (k + v) + 2 * d * k;
    }
    return 0;
}

} // namespace nwp
