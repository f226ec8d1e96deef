#include "nwp/model.hpp"

namespace nwp {

std::vector<Prediction> predict_from_state(const LmParams<float>& params, const Vocabulary& vocab,
                                           const LstmState<float>& state, std::string_view prefix,
                                           int top_n) {
    if (top_n < 1) throw RangeError("predict: top_n must be >= 1");
    if (vocab.size() != params.hyper.vocab_size)
        throw ShapeError("predict: vocabulary size does not match the model");

    const std::vector<float> logits = output_logits(params, std::span<const float>(state.h));
    std::vector<float> probs(logits.size());
    softmax_into(logits.data(), static_cast<int>(logits.size()), probs.data());

    std::vector<Prediction> candidates;
    for (int id = Vocabulary::kReserved; id < vocab.size(); ++id) {
        if (!prefix.empty() && !vocab.word(id).starts_with(prefix)) continue;
        candidates.push_back({id, probs[static_cast<size_t>(id)]});
    }
    const auto better = [](const Prediction& a, const Prediction& b) {
        if (a.prob != b.prob) return a.prob > b.prob;
        return a.word_id < b.word_id;
    };
    const size_t keep = std::min<size_t>(static_cast<size_t>(top_n), candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<ptrdiff_t>(keep),
                      candidates.end(), better);
    candidates.resize(keep);
    return candidates;
}

std::vector<Prediction> predict(const LmParams<float>& params, const Vocabulary& vocab,
                                std::span<const int32_t> context_ids, std::string_view prefix,
                                int top_n) {
    if (context_ids.empty()) throw DomainError("predict: empty context");
    LstmState<float> state(params.hyper.dim);
    for (int32_t id : context_ids) {
        const std::vector<float> x = embed(params, id);
        lstm_step(params, std::span<const float>(x), state);
    }
    return predict_from_state(params, vocab, state, prefix, top_n);
}

} // namespace nwp
