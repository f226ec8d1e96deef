#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "nwp/corpus.hpp"
#include "nwp/model.hpp"
#include "nwp/svd.hpp"

using namespace nwp;

namespace {

Vocabulary toy_vocab(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const auto& w : words) v.add(w);
    return v;
}

// materialized W_embed = P_embed * W_shared (optionally through A*B)
Matrix materialize_embed(const LmParams<float>& p) {
    if (p.parameterization == Parameterization::kShared) return matmul(p.p_embed, p.w_shared);
    return matmul(p.p_embed, matmul(p.w_a, p.w_b));
}

Matrix materialize_softmax(const LmParams<float>& p) {
    const Matrix ps = p.parameterization == Parameterization::kShared
                          ? matmul(p.p_softmax, p.w_shared)
                          : matmul(p.p_softmax, matmul(p.w_a, p.w_b));
    Matrix wt(ps.cols, ps.rows); // (P_softmax W_shared)^T
    for (int r = 0; r < ps.rows; ++r)
        for (int c = 0; c < ps.cols; ++c) wt(c, r) = ps(r, c);
    return wt;
}

} // namespace

TEST_SUITE("lm") {

TEST_CASE("embed identity dense") {
    Hyperparams h{.dim = 5, .vocab_size = 5};
    LmParams<float> p = allocate_params<float>(Parameterization::kDense, h);
    p.w_embed = Matrix::identity(5);
    const auto x = embed(p, 3);
    for (int i = 0; i < 5; ++i) CHECK(x[static_cast<size_t>(i)] == (i == 3 ? 1.0f : 0.0f));
    CHECK_THROWS_AS(embed(p, 5), IndexError);
}

TEST_CASE("embed shared with identity projection") {
    Hyperparams h{.dim = 4, .vocab_size = 6, .shared_dim = 4};
    LmParams<float> p = init_params(Parameterization::kShared, h, 3);
    p.p_embed = Matrix::identity(4);
    const auto x = embed(p, 2);
    for (int i = 0; i < 4; ++i) CHECK(x[static_cast<size_t>(i)] == doctest::Approx(p.w_shared(i, 2)));
}

TEST_CASE("embed factored paths match materialized matrices") {
    for (auto param : {Parameterization::kShared, Parameterization::kSharedLowRank}) {
        Hyperparams h{.dim = 6, .vocab_size = 9, .shared_dim = 5, .rank = param == Parameterization::kSharedLowRank ? 3 : 0};
        const LmParams<float> p = init_params(param, h, 17);
        const Matrix w = materialize_embed(p);
        for (int id = 0; id < h.vocab_size; ++id) {
            const auto x = embed(p, id);
            for (int r = 0; r < h.dim; ++r)
                CHECK(x[static_cast<size_t>(r)] == doctest::Approx(w(r, id)).epsilon(1e-5));
        }
    }
}

TEST_CASE("lstm step all zeros") {
    Hyperparams h{.dim = 3, .vocab_size = 5};
    const LmParams<float> p = allocate_params<float>(Parameterization::kDense, h);
    LstmState<float> st(3);
    const std::vector<float> x(3, 0.0f);
    lstm_step(p, x, st);
    for (float v : st.h) CHECK(v == 0.0f);
    for (float v : st.c) CHECK(v == 0.0f);
}

TEST_CASE("lstm gate saturation preserves the cell") {
    Hyperparams h{.dim = 2, .vocab_size = 5};
    LmParams<float> p = allocate_params<float>(Parameterization::kDense, h);
    for (int j = 0; j < 2; ++j) {
        p.b_gate[kGateForget](0, j) = 20.0f; // forget gate ~1
        p.b_gate[kGateIn](0, j) = -20.0f;    // input gate ~0
    }
    LstmState<float> st(2);
    st.c = {0.7f, -0.4f};
    const std::vector<float> x = {0.3f, -0.1f};
    lstm_step(p, x, st);
    CHECK(st.c[0] == doctest::Approx(0.7).epsilon(1e-4));
    CHECK(st.c[1] == doctest::Approx(-0.4).epsilon(1e-4));
}

TEST_CASE("lstm step matches a scalar hand evaluation") {
    Hyperparams h{.dim = 2, .vocab_size = 5};
    LmParams<float> p = init_params(Parameterization::kDense, h, 99);
    Rng rng(7);
    for (int g = 0; g < 4; ++g) fill_uniform(p.b_gate[g], rng, -0.5f, 0.5f);
    LstmState<float> st(2);
    st.h = {0.2f, -0.3f};
    st.c = {0.1f, 0.4f};
    const std::vector<float> x = {0.5f, -0.7f};

    // scalar reference, double precision
    double want_h[2], want_c[2];
    {
        double acts[4][2];
        for (int g = 0; g < 4; ++g)
            for (int j = 0; j < 2; ++j) {
                double z = p.b_gate[g](0, j);
                for (int i = 0; i < 2; ++i) z += static_cast<double>(p.w_in[g](j, i)) * x[static_cast<size_t>(i)];
                for (int i = 0; i < 2; ++i) z += static_cast<double>(p.w_rec[g](j, i)) * st.h[static_cast<size_t>(i)];
                acts[g][j] = (g == kGateCell) ? std::tanh(z) : 1.0 / (1.0 + std::exp(-z));
            }
        for (int j = 0; j < 2; ++j) {
            want_c[j] = acts[kGateForget][j] * st.c[static_cast<size_t>(j)] + acts[kGateIn][j] * acts[kGateCell][j];
            want_h[j] = acts[kGateOut][j] * std::tanh(want_c[j]);
        }
    }
    lstm_step(p, x, st);
    for (int j = 0; j < 2; ++j) {
        CHECK(st.c[static_cast<size_t>(j)] == doctest::Approx(want_c[j]).epsilon(1e-5));
        CHECK(st.h[static_cast<size_t>(j)] == doctest::Approx(want_h[j]).epsilon(1e-5));
    }
}

TEST_CASE("lstm step rejects non-finite input") {
    Hyperparams h{.dim = 2, .vocab_size = 5};
    const LmParams<float> p = allocate_params<float>(Parameterization::kDense, h);
    LstmState<float> st(2);
    const std::vector<float> x = {std::numeric_limits<float>::infinity(), 0.0f};
    CHECK_THROWS_AS(lstm_step(p, x, st), DomainError);
}

TEST_CASE("output logits bias only") {
    Hyperparams h{.dim = 2, .vocab_size = 5};
    LmParams<float> p = allocate_params<float>(Parameterization::kDense, h);
    for (int i = 0; i < 5; ++i) p.b_softmax(0, i) = static_cast<float>(i + 1);
    const std::vector<float> hvec = {0.4f, -0.2f};
    const auto logits = output_logits(p, hvec);
    for (int i = 0; i < 5; ++i) CHECK(logits[static_cast<size_t>(i)] == doctest::Approx(i + 1.0));
}

TEST_CASE("factored logits match materialized oracle") {
    for (auto param : {Parameterization::kShared, Parameterization::kSharedLowRank}) {
        Hyperparams h{.dim = 5, .vocab_size = 11, .shared_dim = 4, .rank = param == Parameterization::kSharedLowRank ? 2 : 0};
        const LmParams<float> p = init_params(param, h, 31);
        const Matrix wt = materialize_softmax(p);
        Rng rng(5);
        const Matrix hm = seeded_uniform(rng, 1, 5, -1.0f, 1.0f);
        const std::vector<float> hvec(hm.data.begin(), hm.data.end());
        const auto logits = output_logits(p, hvec);
        std::vector<float> want(static_cast<size_t>(h.vocab_size));
        matvec(wt, std::span<const float>(hvec), std::span<float>(want));
        for (int i = 0; i < h.vocab_size; ++i)
            CHECK(logits[static_cast<size_t>(i)] ==
                  doctest::Approx(want[static_cast<size_t>(i)] + p.b_softmax(0, i)).epsilon(1e-4));
    }
}

TEST_CASE("full-rank factorization reproduces the shared path") {
    Hyperparams h{.dim = 4, .vocab_size = 9, .shared_dim = 4};
    const LmParams<float> shared = init_params(Parameterization::kShared, h, 77);
    // exact SVD factors at full rank, folded as A = U*Sigma, B = Vt
    const SvdResult s = svd(shared.w_shared);
    LmParams<float> low = allocate_params<float>(
        Parameterization::kSharedLowRank,
        Hyperparams{.dim = 4, .vocab_size = 9, .shared_dim = 4, .rank = 4});
    truncated_factors(s, 4, low.w_a, low.w_b);
    low.p_embed = shared.p_embed;
    low.p_softmax = shared.p_softmax;
    low.b_softmax = shared.b_softmax;
    for (int g = 0; g < 4; ++g) {
        low.w_in[g] = shared.w_in[g];
        low.w_rec[g] = shared.w_rec[g];
        low.b_gate[g] = shared.b_gate[g];
    }
    Rng rng(3);
    const Matrix hm = seeded_uniform(rng, 1, 4, -1.0f, 1.0f);
    const std::vector<float> hvec(hm.data.begin(), hm.data.end());
    const auto a = output_logits(shared, hvec);
    const auto b = output_logits(low, hvec);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-4));
}

TEST_CASE("softmax uniform and shift invariance") {
    const std::vector<float> z(4, 0.0f);
    for (float v : softmax(std::span<const float>(z))) CHECK(v == doctest::Approx(0.25));

    const std::vector<float> a = {0.3f, -1.2f, 2.0f, 0.0f};
    std::vector<float> shifted = a;
    for (float& v : shifted) v += 7.5f;
    const auto pa = softmax(std::span<const float>(a));
    const auto pb = softmax(std::span<const float>(shifted));
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-5));
}

TEST_CASE("softmax direct evaluation") {
    const std::vector<float> z = {std::log(6.0f), std::log(3.0f), std::log(1.0f)};
    const auto p = softmax(std::span<const float>(z));
    CHECK(p[0] == doctest::Approx(0.6).epsilon(1e-5));
    CHECK(p[1] == doctest::Approx(0.3).epsilon(1e-5));
    CHECK(p[2] == doctest::Approx(0.1).epsilon(1e-5));
    double sum = 0;
    for (float v : p) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-6);
}

TEST_CASE("softmax sums to one for every parameterization") {
    for (auto param : {Parameterization::kDense, Parameterization::kShared,
                       Parameterization::kSharedLowRank}) {
        Hyperparams h{.dim = 4, .vocab_size = 8, .shared_dim = 4,
                      .rank = param == Parameterization::kSharedLowRank ? 2 : 0};
        const LmParams<float> p = init_params(param, h, 13);
        Rng rng(29);
        const Matrix hm = seeded_uniform(rng, 1, 4, -2.0f, 2.0f);
        const std::vector<float> hvec(hm.data.begin(), hm.data.end());
        const auto probs = softmax(std::span<const float>(output_logits(p, hvec)));
        double sum = 0;
        for (float v : probs) {
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("predict matches brute-force enumeration") {
    const Vocabulary vocab = toy_vocab({"apple", "ant", "bear", "axe", "cat"});
    Hyperparams h{.dim = 2, .vocab_size = vocab.size()};
    LmParams<float> p = allocate_params<float>(Parameterization::kDense, h);
    // zero weights: logits equal the bias, hand-set
    const std::vector<float> bias = {0, 0, 0, 0, 1.2f, 3.0f, 0.5f, 3.0f, 2.2f};
    for (int i = 0; i < vocab.size(); ++i) p.b_softmax(0, i) = bias[static_cast<size_t>(i)];

    const std::vector<int32_t> context = {Vocabulary::kBos};
    const auto top = predict(p, vocab, context, "a", 3);
    // prefix "a" matches apple(1.2), ant(3.0), axe(3.0); tie ant/axe broken by id
    REQUIRE(top.size() == 3);
    CHECK(vocab.word(top[0].word_id) == "ant");
    CHECK(vocab.word(top[1].word_id) == "axe");
    CHECK(vocab.word(top[2].word_id) == "apple");

    CHECK(predict(p, vocab, context, "zzzz", 3).empty());

    const auto all = predict(p, vocab, context, "", vocab.size() - 4);
    REQUIRE(all.size() == static_cast<size_t>(vocab.size() - 4));
    for (size_t i = 1; i < all.size(); ++i) {
        const bool ordered = all[i - 1].prob > all[i].prob ||
                             (all[i - 1].prob == all[i].prob && all[i - 1].word_id < all[i].word_id);
        CHECK(ordered);
    }
}

TEST_CASE("predict argmax is invariant under logit rescaling") {
    const Vocabulary vocab = toy_vocab({"one", "two", "three", "four"});
    Hyperparams h{.dim = 3, .vocab_size = vocab.size()};
    const LmParams<float> p = init_params(Parameterization::kDense, h, 55);
    const std::vector<int32_t> context = {Vocabulary::kBos, 4};
    const auto base = predict(p, vocab, context, "", 1);

    LmParams<float> scaled = p;
    for (auto& [name, mat] : named_tensors(scaled))
        if (name == "w_softmax" || name == "b_softmax")
            for (float& v : mat->data) v *= 3.0f; // uniform positive temperature rescale
    const auto hot = predict(scaled, vocab, context, "", 1);
    REQUIRE(base.size() == 1);
    REQUIRE(hot.size() == 1);
    CHECK(base[0].word_id == hot[0].word_id);
}

TEST_CASE("mac_count formulas") {
    Hyperparams dense_h{.dim = 600, .vocab_size = 15000};
    const MacCount dense = mac_count(Parameterization::kDense, dense_h);
    CHECK(dense.output == 9000000);
    CHECK(dense.lstm == 8 * 600 * 600);
    CHECK(dense.embed == 0);

    Hyperparams low_h{.dim = 600, .vocab_size = 15000, .shared_dim = 600, .rank = 64};
    const MacCount low = mac_count(Parameterization::kSharedLowRank, low_h);
    CHECK(low.output == 1358400); // 600*600 + 600*64 + 64*15000
    const double ratio = static_cast<double>(dense.output) / static_cast<double>(low.output);
    CHECK(ratio == doctest::Approx(6.625).epsilon(1e-3));
}

TEST_CASE("batched forward equals single-step forward") {
    Hyperparams h{.dim = 5, .vocab_size = 9, .shared_dim = 5};
    const LmParams<float> p = init_params(Parameterization::kShared, h, 40);
    EncodedCorpus corpus;
    corpus.sentences = {{2, 4, 5, 6, 3}, {2, 7, 3}, {2, 8, 8, 3}};
    const auto batches = make_batches(corpus, 3, 10, 9);
    REQUIRE(batches.size() == 1);
    const Batch& batch = batches[0];

    Mat<float> h_prev, c_prev;
    std::vector<LstmState<float>> states(static_cast<size_t>(batch.size), LstmState<float>(h.dim));
    for (int t = 0; t + 1 < batch.max_len; ++t) {
        const int active = batch.active_at(t);
        if (active == 0) break;
        std::vector<int32_t> ids(static_cast<size_t>(active));
        for (int b = 0; b < active; ++b) ids[static_cast<size_t>(b)] = batch.token(b, t);
        Mat<float> x;
        embed_rows(p, ids, x);
        if (t == 0) {
            h_prev = Mat<float>(active, h.dim);
            c_prev = Mat<float>(active, h.dim);
        }
        LstmStepCache<float> cell;
        lstm_step_rows(p, x, h_prev, c_prev, cell);

        for (int b = 0; b < active; ++b) {
            const auto xe = embed(p, batch.token(b, t));
            lstm_step(p, std::span<const float>(xe), states[static_cast<size_t>(b)]);
            for (int j = 0; j < h.dim; ++j)
                CHECK(states[static_cast<size_t>(b)].h[static_cast<size_t>(j)] ==
                      doctest::Approx(cell.h(b, j)).epsilon(1e-5));
        }
        h_prev = std::move(cell.h);
        c_prev = std::move(cell.c);
    }
}

} // TEST_SUITE
