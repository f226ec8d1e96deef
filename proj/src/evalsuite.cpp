#include "nwp/evalsuite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace nwp {

double perplexity(const LmParams<float>& params, const EncodedCorpus& corpus) {
    if (corpus.sentences.empty()) throw DomainError("perplexity: empty corpus");

    int max_len = 2;
    for (const auto& s : corpus.sentences) max_len = std::max(max_len, static_cast<int>(s.size()));

    double logp_sum = 0;
    int64_t targets = 0;
    for (const Batch& batch : make_batches(corpus, 64, max_len, /*seed=*/0)) {
        const int steps = batch.max_len - 1;
        Mat<float> h_prev, c_prev;
        for (int t = 0; t < steps; ++t) {
            const int active = batch.active_at(t);
            if (active == 0) break;
            std::vector<int32_t> ids(static_cast<size_t>(active));
            for (int b = 0; b < active; ++b) ids[static_cast<size_t>(b)] = batch.token(b, t);

            Mat<float> x;
            embed_rows(params, ids, x);
            if (t == 0) {
                h_prev = Mat<float>(active, params.hyper.dim);
                c_prev = Mat<float>(active, params.hyper.dim);
            }
            LstmStepCache<float> cell;
            lstm_step_rows(params, x, h_prev, c_prev, cell);
            Mat<float> logits;
            logits_rows(params, cell.h, logits);

            for (int b = 0; b < active; ++b) {
                const float* z = logits.row(b);
                float m = z[0];
                for (int i = 1; i < logits.cols; ++i) m = std::max(m, z[i]);
                double s = 0;
                for (int i = 0; i < logits.cols; ++i) s += static_cast<double>(fast_exp(z[i] - m));
                const int target = batch.token(b, t + 1);
                logp_sum += static_cast<double>(z[target]) - static_cast<double>(m) - std::log(s);
                ++targets;
            }
            h_prev = std::move(cell.h);
            c_prev = std::move(cell.c);
        }
    }
    return std::exp(-logp_sum / static_cast<double>(targets));
}

int64_t keystroke_length(std::string_view word) {
    int64_t n = 0;
    for (unsigned char c : word)
        if ((c & 0xC0) != 0x80) ++n; // count code points, not bytes
    return n;
}

TypingReport simulate_typing(const LmParams<float>& params, const Vocabulary& vocab,
                             const std::vector<std::vector<std::string>>& sentences, int top_n,
                             bool free_accept) {
    if (top_n < 1) throw RangeError("simulate_typing: top_n must be >= 1");
    TypingReport report;
    report.top_n = top_n;

    for (const auto& sentence : sentences) {
        LstmState<float> state(params.hyper.dim);
        {
            const std::vector<float> x = embed(params, Vocabulary::kBos);
            lstm_step(params, std::span<const float>(x), state);
        }
        for (const std::string& word : sentence) {
            const int64_t chars = keystroke_length(word);
            report.baseline_keystrokes += chars + 1;
            ++report.words_total;

            // Queries run at j = 0..chars-1 typed characters; once the word is
            // fully typed, acceptance and the terminator tap cost the same.
            int64_t accepted_at = -1;
            for (int64_t j = 0; j < chars; ++j) {
                // first j code points of the word
                size_t bytes = 0;
                int64_t seen = 0;
                while (bytes < word.size()) {
                    if ((static_cast<unsigned char>(word[bytes]) & 0xC0) != 0x80) {
                        if (seen == j) break;
                        ++seen;
                    }
                    ++bytes;
                }
                const std::string_view prefix(word.data(), bytes);
                const auto preds = predict_from_state(params, vocab, state, prefix, top_n);
                bool hit = false;
                for (const Prediction& p : preds)
                    if (vocab.word(p.word_id) == word) hit = true;
                if (j == 0 && hit) ++report.wpr_hits;
                if (hit) {
                    accepted_at = j;
                    break;
                }
            }
            if (accepted_at >= 0)
                report.used_keystrokes += accepted_at + (free_accept ? 0 : 1);
            else
                report.used_keystrokes += chars + 1;

            // forced-path context: the true word advances the state
            std::string ctx = word;
            if (is_number_token(ctx)) ctx = vocab.word(Vocabulary::kNum);
            int id = vocab.lookup(ctx);
            if (id < 0) id = Vocabulary::kUnk;
            const std::vector<float> x = embed(params, id);
            lstm_step(params, std::span<const float>(x), state);
        }
    }
    if (report.baseline_keystrokes > 0)
        report.kss_percent = 100.0 *
                             static_cast<double>(report.baseline_keystrokes - report.used_keystrokes) /
                             static_cast<double>(report.baseline_keystrokes);
    if (report.words_total > 0)
        report.wpr_percent = 100.0 * static_cast<double>(report.wpr_hits) /
                             static_cast<double>(report.words_total);
    return report;
}

BenchReport bench_predict(const LmParams<float>& params, const Vocabulary& vocab,
                          std::span<const int32_t> context_ids, int iterations, int top_n) {
    if (iterations < 100) throw RangeError("bench_predict: iterations must be >= 100");
    if (context_ids.empty()) throw DomainError("bench_predict: empty context");

    LstmState<float> base(params.hyper.dim);
    for (size_t i = 0; i + 1 < context_ids.size(); ++i) {
        const std::vector<float> x = embed(params, context_ids[i]);
        lstm_step(params, std::span<const float>(x), base);
    }
    const int32_t last = context_ids.back();

    using Clock = std::chrono::steady_clock;
    volatile float sink = 0; // keep the prediction from being optimized out
    auto run_once = [&]() {
        LstmState<float> state = base;
        const std::vector<float> x = embed(params, last);
        lstm_step(params, std::span<const float>(x), state);
        const auto preds = predict_from_state(params, vocab, state, "", top_n);
        if (!preds.empty()) sink = sink + preds[0].prob;
    };

    for (int i = 0; i < 10; ++i) run_once();

    std::vector<double> samples(static_cast<size_t>(iterations));
    for (int i = 0; i < iterations; ++i) {
        const auto t0 = Clock::now();
        run_once();
        const auto t1 = Clock::now();
        samples[static_cast<size_t>(i)] =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
    }

    BenchReport report;
    report.iterations = iterations;
    double sum = 0;
    for (double s : samples) sum += s;
    report.mean_ms = sum / static_cast<double>(iterations);
    std::sort(samples.begin(), samples.end());
    const size_t idx = std::min(samples.size() - 1,
                                static_cast<size_t>(std::ceil(0.95 * iterations)) - 1);
    report.p95_ms = samples[idx];
    report.mac = mac_count(params).total();
    return report;
}

} // namespace nwp
