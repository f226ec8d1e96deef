#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "nwp/evalsuite.hpp"
#include "nwp/rng.hpp"
#include "util/typing_ref.hpp"

using namespace nwp;

namespace {

Vocabulary words_vocab(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const auto& w : words) v.add(w);
    return v;
}

// d=2 model whose hidden state depends only on the current input token
// (input gate open, forget gate shut, sharp cell activation), so next-word
// ranking can be wired by hand through w_embed and w_softmax.
LmParams<float> memoryless_model(int vocab_size) {
    Hyperparams h{.dim = 2, .vocab_size = vocab_size};
    LmParams<float> p = allocate_params<float>(Parameterization::kDense, h);
    for (int j = 0; j < 2; ++j) {
        p.b_gate[kGateIn](0, j) = 20.0f;
        p.b_gate[kGateForget](0, j) = -20.0f;
        p.b_gate[kGateOut](0, j) = 20.0f;
        p.w_in[kGateCell](j, j) = 40.0f; // g ~ sign(x)
    }
    return p;
}

// random tiny model/corpus pair for the oracle-equivalence property
struct RandomCase {
    LmParams<float> params;
    Vocabulary vocab;
    std::vector<std::vector<std::string>> sentences;
    int top_n;
    bool free_accept;
};

RandomCase make_case(uint64_t seed) {
    Rng rng(seed);
    static const std::vector<std::string> pool = {
        "an",  "ant", "any",  "bat", "bath", "bad",  "cat", "cap", "car",
        "care", "dog", "dot", "done", "egg", "ear",  "each", "fan", "far"};
    std::vector<std::string> words;
    const int vocab_words = 5 + static_cast<int>(rng.next_below(8));
    for (int i = 0; i < vocab_words; ++i) {
        const auto& w = pool[rng.next_below(pool.size())];
        if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    }
    RandomCase c{.params = {}, .vocab = words_vocab(words), .sentences = {}, .top_n = 1 + static_cast<int>(rng.next_below(3)), .free_accept = rng.next_below(2) == 0};
    const auto parameterization = rng.next_below(2) == 0 ? Parameterization::kDense : Parameterization::kShared;
    Hyperparams h{.dim = 2 + static_cast<int>(rng.next_below(3)), .vocab_size = c.vocab.size(), .shared_dim = 0};
    if (parameterization == Parameterization::kShared) h.shared_dim = h.dim;
    c.params = init_params(parameterization, h, rng.next_u64());

    const int sentence_count = 1 + static_cast<int>(rng.next_below(3));
    for (int s = 0; s < sentence_count; ++s) {
        std::vector<std::string> sent;
        const int len = 1 + static_cast<int>(rng.next_below(5));
        for (int w = 0; w < len; ++w) {
            const uint64_t kind = rng.next_below(10);
            if (kind < 7)
                sent.push_back(words[rng.next_below(words.size())]);
            else if (kind < 9)
                sent.push_back("zzq" + std::to_string(rng.next_below(100))); // OOV
            else
                sent.push_back(std::to_string(rng.next_below(1000))); // digits -> <num>
        }
        c.sentences.push_back(std::move(sent));
    }
    return c;
}

} // namespace

TEST_SUITE("evalsuite") {

TEST_CASE("perplexity of the uniform model is the vocabulary size") {
    const int v = 100;
    const LmParams<float> p =
        allocate_params<float>(Parameterization::kDense, Hyperparams{.dim = 3, .vocab_size = v});
    EncodedCorpus corpus;
    corpus.sentences = {{2, 10, 20, 3}, {2, 50, 3}};
    CHECK(perplexity(p, corpus) == doctest::Approx(100.0).epsilon(1e-6));
}

TEST_CASE("perplexity hand computation") {
    // logits fixed to the bias: p(id4) = 0.5, p(</s>) = 0.125
    const int v = 6;
    LmParams<float> p =
        allocate_params<float>(Parameterization::kDense, Hyperparams{.dim = 2, .vocab_size = v});
    const double probs[6] = {0.125, 0.1, 0.1, 0.125, 0.5, 0.05};
    for (int i = 0; i < v; ++i) p.b_softmax(0, i) = static_cast<float>(std::log(probs[i]));
    EncodedCorpus corpus;
    corpus.sentences = {{2, 4, 3}}; // targets: id4 then </s>
    CHECK(perplexity(p, corpus) == doctest::Approx(4.0).epsilon(1e-5));
}

TEST_CASE("perplexity near 1 for a deterministic predictor") {
    // bias sharply favors one word; a corpus of only that word scores ~1
    const int v = 8;
    LmParams<float> p =
        allocate_params<float>(Parameterization::kDense, Hyperparams{.dim = 2, .vocab_size = v});
    p.b_softmax(0, 5) = 50.0f;
    EncodedCorpus corpus;
    corpus.sentences = {{2, 5, 5}}; // predictions after <s> are always id5
    corpus.sentences[0].back() = 5; // keep every target = id5
    CHECK(perplexity(p, corpus) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("perplexity rejects an empty corpus") {
    const LmParams<float> p =
        allocate_params<float>(Parameterization::kDense, Hyperparams{.dim = 2, .vocab_size = 6});
    CHECK_THROWS_AS(perplexity(p, EncodedCorpus{}), DomainError);
}

TEST_CASE("perplexity is invariant under sentence reordering") {
    const LmParams<float> p =
        init_params(Parameterization::kShared,
                    Hyperparams{.dim = 4, .vocab_size = 10, .shared_dim = 4}, 20);
    EncodedCorpus corpus;
    corpus.sentences = {{2, 4, 5, 3}, {2, 6, 7, 8, 9, 3}, {2, 5, 3}, {2, 9, 9, 4, 3}};
    EncodedCorpus reversed;
    reversed.sentences.assign(corpus.sentences.rbegin(), corpus.sentences.rend());
    const double a = perplexity(p, corpus);
    const double b = perplexity(p, reversed);
    CHECK(std::abs(a - b) / a < 1e-9);
}

TEST_CASE("typing oracle anchor: always-right predictor on 'a bb'") {
    const Vocabulary vocab = words_vocab({"a", "bb", "xx"});
    LmParams<float> p = memoryless_model(vocab.size());
    // h after <s> ~ [+.76, 0]; h after "a" ~ [-.76, 0]
    p.w_embed(0, Vocabulary::kBos) = 1.0f;
    p.w_embed(0, vocab.lookup("a")) = -1.0f;
    p.w_embed(1, vocab.lookup("bb")) = 1.0f;
    p.w_softmax(vocab.lookup("a"), 0) = 10.0f;  // top word after <s>
    p.w_softmax(vocab.lookup("bb"), 0) = -10.0f; // top word after "a"

    const TypingReport r = simulate_typing(p, vocab, {{"a", "bb"}}, 1);
    CHECK(r.baseline_keystrokes == 5);
    CHECK(r.used_keystrokes == 2);
    CHECK(r.kss_percent == doctest::Approx(60.0));
    CHECK(r.wpr_hits == 2);
    CHECK(r.wpr_percent == doctest::Approx(100.0));

    const TypingReport free = simulate_typing(p, vocab, {{"a", "bb"}}, 1, /*free_accept=*/true);
    CHECK(free.used_keystrokes == 0);
    CHECK(free.kss_percent == doctest::Approx(100.0));
}

TEST_CASE("typing oracle anchor: blind predictor saves nothing") {
    // OOV words are encoded <unk> in context and can never be predicted
    const Vocabulary vocab = words_vocab({"a", "bb", "zzz"});
    LmParams<float> p =
        allocate_params<float>(Parameterization::kDense, Hyperparams{.dim = 2, .vocab_size = vocab.size()});
    p.b_softmax(0, vocab.lookup("zzz")) = 30.0f;
    const TypingReport r = simulate_typing(p, vocab, {{"qq", "rrr"}}, 3);
    CHECK(r.baseline_keystrokes == 7);
    CHECK(r.used_keystrokes == r.baseline_keystrokes);
    CHECK(r.kss_percent == doctest::Approx(0.0));
    CHECK(r.wpr_percent == doctest::Approx(0.0));
}

TEST_CASE("simulate_typing matches the brute-force reference exactly") {
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        CAPTURE(seed);
        const RandomCase c = make_case(seed);
        const TypingReport got =
            simulate_typing(c.params, c.vocab, c.sentences, c.top_n, c.free_accept);
        const typing_ref::Report want =
            typing_ref::simulate(c.params, c.vocab, c.sentences, c.top_n, c.free_accept);
        CHECK(got.baseline_keystrokes == want.baseline);
        CHECK(got.used_keystrokes == want.used);
        CHECK(got.words_total == want.words);
        CHECK(got.wpr_hits == want.hits);
    }
}

TEST_CASE("kss stays inside the ledger bounds") {
    for (uint64_t seed = 60; seed < 75; ++seed) {
        const RandomCase c = make_case(seed);
        const TypingReport r = simulate_typing(c.params, c.vocab, c.sentences, c.top_n);
        int64_t char_sum = 0;
        for (const auto& s : c.sentences)
            for (const auto& w : s) char_sum += keystroke_length(w);
        const double bound =
            100.0 * static_cast<double>(char_sum) / static_cast<double>(r.baseline_keystrokes);
        CHECK(r.kss_percent >= 0.0);
        CHECK(r.kss_percent <= bound + 1e-9);
    }
}

TEST_CASE("larger top_n never hurts kss or wpr") {
    for (uint64_t seed = 80; seed < 90; ++seed) {
        const RandomCase c = make_case(seed);
        double prev_kss = -1, prev_wpr = -1;
        for (int n = 1; n <= 3; ++n) {
            const TypingReport r = simulate_typing(c.params, c.vocab, c.sentences, n);
            CHECK(r.kss_percent >= prev_kss);
            CHECK(r.wpr_percent >= prev_wpr);
            prev_kss = r.kss_percent;
            prev_wpr = r.wpr_percent;
        }
    }
}

TEST_CASE("bench_predict reports sane numbers") {
    const LmParams<float> p =
        init_params(Parameterization::kShared,
                    Hyperparams{.dim = 16, .vocab_size = 64, .shared_dim = 16}, 9);
    Vocabulary v;
    for (int i = Vocabulary::kReserved; i < 64; ++i) v.add("w" + std::to_string(i));
    const std::vector<int32_t> context = {Vocabulary::kBos, 10, 20};
    const BenchReport r = bench_predict(p, v, context, 100);
    CHECK(r.iterations == 100);
    CHECK(r.mean_ms > 0.0);
    CHECK(r.p95_ms >= r.mean_ms * 0.1);
    CHECK(r.mac == mac_count(p).total());

    const BenchReport again = bench_predict(p, v, context, 100);
    CHECK(again.mac == r.mac); // analytic count, not timed

    CHECK_THROWS_AS(bench_predict(p, v, context, 99), RangeError);
}

TEST_CASE("factored models need fewer macs than dense") {
    Hyperparams dense_h{.dim = 32, .vocab_size = 512};
    Hyperparams low_h{.dim = 32, .vocab_size = 512, .shared_dim = 32, .rank = 4};
    CHECK(mac_count(Parameterization::kSharedLowRank, low_h).total() <
          mac_count(Parameterization::kDense, dense_h).total());
}

} // TEST_SUITE
