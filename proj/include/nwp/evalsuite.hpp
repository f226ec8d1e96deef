#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nwp/corpus.hpp"
#include "nwp/model.hpp"

namespace nwp {

// Word perplexity over an encoded test set: exp(-(1/N) sum log p(w_i|w_<i)).
// N counts every predicted position, i.e. everything after <s> including
// </s>. LSTM state resets at each sentence start.
double perplexity(const LmParams<float>& params, const EncodedCorpus& corpus);

// Keystroke ledger of a typing session driven by the model's predictions.
//   baseline cost of a word = characters + one terminator tap
//   accepted prediction at j typed characters = j + 1 taps (the selection tap
//   inserts the word and its trailing space); --free-accept drops the tap
//   WPR hit = the word appears in the empty-prefix (j = 0) prediction list
struct TypingReport {
    int64_t baseline_keystrokes = 0;
    int64_t used_keystrokes = 0;
    double kss_percent = 0; // 100 * (baseline - used) / baseline
    int64_t words_total = 0;
    int64_t wpr_hits = 0;
    double wpr_percent = 0; // 100 * hits / words_total
    int top_n = 0;
};

// Simulates typing `sentences` (surface tokens, already lowercased/split).
// Context always advances with the true word: OOV words enter the context as
// <unk> (digit tokens as <num>) and can never be predicted.
TypingReport simulate_typing(const LmParams<float>& params, const Vocabulary& vocab,
                             const std::vector<std::vector<std::string>>& sentences, int top_n,
                             bool free_accept = false);

struct BenchReport {
    int iterations = 0;
    double mean_ms = 0;
    double p95_ms = 0;
    int64_t mac = 0; // analytic multiply-accumulate count per prediction
};

// Wall-clock of a single next-word prediction (embed + one LSTM step + logits
// + top-n selection) from a fixed context. At least 10 warm-up runs are
// discarded; iterations must be >= 100.
BenchReport bench_predict(const LmParams<float>& params, const Vocabulary& vocab,
                          std::span<const int32_t> context_ids, int iterations, int top_n = 3);

// Number of keystrokes for a word: unicode code points + implicit terminator.
int64_t keystroke_length(std::string_view word);

} // namespace nwp
