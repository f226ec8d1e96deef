#include <doctest.h>

#include <cmath>

#include "nwp/evalsuite.hpp"
#include "nwp/train.hpp"
#include "util/gradcheck.hpp"

using namespace nwp;

namespace {

std::vector<std::vector<int32_t>> tiny_sentences() {
    // ids within |V|=8, every sentence framed by <s>=2, </s>=3
    return {{2, 4, 5, 6, 3}, {2, 7, 4, 3}, {2, 5, 5, 6, 7, 3}};
}

LmParams<double> tiny_model(Parameterization param, uint64_t seed) {
    Hyperparams h{.dim = 4, .vocab_size = 8, .shared_dim = 4,
                  .rank = param == Parameterization::kSharedLowRank ? 2 : 0};
    return gradcheck::test_model(param, h, seed);
}

// Deterministic cyclic corpus: 32 copies of "a b c a b c".
EncodedCorpus cyclic_corpus(const Vocabulary& v) {
    const std::vector<std::string> words = {"a", "b", "c", "a", "b", "c"};
    EncodedCorpus corpus;
    for (int i = 0; i < 32; ++i) corpus.sentences.push_back(encode(words, v));
    return corpus;
}

Vocabulary abc_vocab() {
    Vocabulary v;
    v.add("a");
    v.add("b");
    v.add("c");
    return v;
}

} // namespace

TEST_SUITE("train") {

TEST_CASE("nll_loss values") {
    const std::vector<double> perfect = {0.0, -50.0}; // p(target)=1
    CHECK(nll_loss(std::span<const double>(perfect), 0) == doctest::Approx(0.0));
    const std::vector<double> uniform(4, std::log(0.25));
    CHECK(nll_loss(std::span<const double>(uniform), 2) == doctest::Approx(std::log(4.0)));
    const std::vector<double> p6 = {std::log(0.6), std::log(0.4)};
    CHECK(nll_loss(std::span<const double>(p6), 0) == doctest::Approx(0.5108).epsilon(1e-3));
    CHECK(nll_loss(std::span<const double>(p6), -1) == 0.0); // masked
}

TEST_CASE("bptt gradients match central finite differences") {
    for (auto param : {Parameterization::kDense, Parameterization::kShared,
                       Parameterization::kSharedLowRank}) {
        CAPTURE(to_string(param));
        const auto checks = gradcheck::run(tiny_model(param, 1234), tiny_sentences());
        for (const auto& c : checks) {
            CAPTURE(c.name);
            CHECK(c.rel_error < 1e-3);
        }
    }
}

TEST_CASE("softmax bias gradient has the closed form") {
    // dL/db = mean over tokens of softmax(logits) - onehot(target)
    const auto sentences = tiny_sentences();
    LmParams<double> params = tiny_model(Parameterization::kDense, 777);
    EncodedCorpus corpus;
    corpus.sentences = sentences;
    const auto batches = make_batches(corpus, 8, 64, 0);
    HardTargetLoss<double> loss;
    const auto bw = backward(params, batches.at(0), loss, 0.0);

    std::vector<double> want(8, 0.0);
    int64_t tokens = 0;
    for (const auto& sent : sentences) {
        LstmState<double> st(params.hyper.dim);
        for (size_t t = 0; t + 1 < sent.size(); ++t) {
            const auto x = embed(params, sent[t]);
            lstm_step(params, x, st);
            const auto probs = softmax(output_logits(params, st.h));
            for (int i = 0; i < 8; ++i)
                want[static_cast<size_t>(i)] += probs[static_cast<size_t>(i)];
            want[static_cast<size_t>(sent[t + 1])] -= 1.0;
            ++tokens;
        }
    }
    for (int i = 0; i < 8; ++i)
        CHECK(bw.grads.b_softmax(0, i) ==
              doctest::Approx(want[static_cast<size_t>(i)] / static_cast<double>(tokens))
                  .epsilon(1e-6));
}

TEST_CASE("all-padded batch yields zero gradients") {
    Batch batch;
    batch.size = 2;
    batch.max_len = 3;
    batch.tokens = {3, 3, 3, 3, 3, 3};
    batch.lens = {1, 1}; // no sentence has a target
    batch.target_mask.assign(4, 0);
    batch.target_count = 0;

    LmParams<float> params = tiny_model(Parameterization::kDense, 4).cast<float>();
    HardTargetLoss<float> loss;
    const auto bw = backward(params, batch, loss, 5.0);
    CHECK(bw.tokens == 0);
    CHECK(bw.loss == 0.0);
    for (const auto& [name, mat] : named_tensors(bw.grads))
        for (float v : mat->data) CHECK(v == 0.0f);
}

TEST_CASE("gradient clipping bounds the global norm") {
    LmParams<float> params = tiny_model(Parameterization::kDense, 5).cast<float>();
    EncodedCorpus corpus;
    corpus.sentences = tiny_sentences();
    const auto batches = make_batches(corpus, 8, 64, 0);
    HardTargetLoss<float> loss;
    const auto raw = backward(params, batches.at(0), loss, 0.0);
    const double clip = raw.grad_norm / 2;
    const auto clipped = backward(params, batches.at(0), loss, clip);
    double sq = 0;
    for (const auto& [name, mat] : named_tensors(clipped.grads))
        for (float v : mat->data) sq += static_cast<double>(v) * v;
    CHECK(std::sqrt(sq) == doctest::Approx(clip).epsilon(1e-4));
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
    LmParams<float> params = tiny_model(Parameterization::kDense, 6).cast<float>();
    const LmParams<float> before = params;
    Gradients<float> grads = zeros_like(params);
    AdamState<float> state = make_adam_state(params);
    adam_step(params, grads, state, TrainConfig{});
    auto p = named_tensors(params);
    auto b = named_tensors(before);
    for (size_t i = 0; i < p.size(); ++i) CHECK(p[i].second->data == b[i].second->data);
}

TEST_CASE("adam first step magnitude is about lr") {
    LmParams<float> params = tiny_model(Parameterization::kDense, 7).cast<float>();
    const LmParams<float> before = params;
    Gradients<float> grads = zeros_like(params);
    for (auto& [name, mat] : named_tensors(grads))
        for (float& v : mat->data) v = 0.25f; // any nonzero gradient
    AdamState<float> state = make_adam_state(params);
    const TrainConfig cfg; // default lr
    CHECK(cfg.lr == 0.001);
    adam_step(params, grads, state, cfg);
    auto p = named_tensors(params);
    auto b = named_tensors(before);
    for (size_t i = 0; i < p.size(); ++i)
        for (size_t j = 0; j < p[i].second->data.size(); ++j) {
            const double update =
                static_cast<double>(b[i].second->data[j]) - p[i].second->data[j];
            CHECK(update == doctest::Approx(cfg.lr).epsilon(1e-3)); // m-hat/sqrt(v-hat) = sign(g)
        }
}

TEST_CASE("one small adam step decreases the loss") {
    for (auto param : {Parameterization::kDense, Parameterization::kShared,
                       Parameterization::kSharedLowRank}) {
        LmParams<float> params = tiny_model(param, 8).cast<float>();
        EncodedCorpus corpus;
        corpus.sentences = tiny_sentences();
        const auto batches = make_batches(corpus, 8, 64, 0);
        HardTargetLoss<float> loss;
        const auto before = backward(params, batches.at(0), loss, 0.0);
        TrainConfig cfg;
        cfg.lr = 1e-4;
        AdamState<float> state = make_adam_state(params);
        adam_step(params, before.grads, state, cfg);
        const auto after = backward(params, batches.at(0), loss, 0.0);
        CHECK(after.loss < before.loss);
    }
}

TEST_CASE("overfits a deterministic cyclic corpus") {
    const Vocabulary v = abc_vocab();
    const EncodedCorpus corpus = cyclic_corpus(v);

    Hyperparams h{.dim = 16, .vocab_size = v.size()};
    LmParams<float> model = init_dense(h, 42);
    TrainConfig cfg;
    cfg.max_epochs = 200;
    cfg.batch_size = 8;
    cfg.seed = 42;
    HardTargetLoss<float> loss;
    const TrainResult result = run_training(std::move(model), corpus, corpus, cfg, loss);
    double best_train_pp = 1e9;
    for (const auto& e : result.history) best_train_pp = std::min(best_train_pp, e.train_pp);
    CHECK(best_train_pp < 1.1);
    CHECK(result.best_val_pp < 1.1);
}

TEST_CASE("rollback keeps the best checkpoint and decays lr") {
    const Vocabulary v = abc_vocab();
    const EncodedCorpus corpus = cyclic_corpus(v);
    Hyperparams h{.dim = 8, .vocab_size = v.size()};
    TrainConfig cfg;
    cfg.max_epochs = 30;
    cfg.lr = 0.05; // aggressive on purpose so some epochs regress
    cfg.seed = 3;
    HardTargetLoss<float> loss;
    const TrainResult result = run_training(init_dense(h, 9), corpus, corpus, cfg, loss);

    double min_pp = 1e18;
    double lr = cfg.lr;
    for (const auto& e : result.history) {
        CHECK(e.lr == doctest::Approx(lr));
        if (e.rollback) lr *= cfg.decay_factor;
        min_pp = std::min(min_pp, e.val_pp);
    }
    CHECK(result.best_val_pp == doctest::Approx(min_pp));
    const double returned_pp = perplexity(result.model, corpus);
    CHECK(returned_pp == doctest::Approx(result.best_val_pp).epsilon(1e-6));
}

TEST_CASE("training is deterministic given the seed") {
    const Vocabulary v = abc_vocab();
    const EncodedCorpus corpus = cyclic_corpus(v);
    Hyperparams h{.dim = 8, .vocab_size = v.size()};
    TrainConfig cfg;
    cfg.max_epochs = 5;
    cfg.seed = 11;
    HardTargetLoss<float> l1, l2;
    const TrainResult a = run_training(init_dense(h, 1), corpus, corpus, cfg, l1);
    const TrainResult b = run_training(init_dense(h, 1), corpus, corpus, cfg, l2);
    REQUIRE(a.history.size() == b.history.size());
    for (size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_pp == b.history[i].train_pp);
        CHECK(a.history[i].val_pp == b.history[i].val_pp);
    }
}

TEST_CASE("divergent training aborts with a report") {
    const Vocabulary v = abc_vocab();
    const EncodedCorpus corpus = cyclic_corpus(v);
    Hyperparams h{.dim = 8, .vocab_size = v.size()};
    TrainConfig cfg;
    cfg.max_epochs = 50;
    cfg.lr = 500.0; // guaranteed blow-up
    cfg.clip_norm = 0;
    HardTargetLoss<float> loss;
    CHECK_THROWS_AS(run_training(init_dense(h, 2), corpus, corpus, cfg, loss), TrainingError);
}

TEST_CASE("epoch line format") {
    EpochStats s{.epoch = 3, .train_pp = 12.5, .val_pp = 14.25, .lr = 0.001, .rollback = true};
    CHECK(format_epoch_line(s) == "epoch=3 train_pp=12.5 val_pp=14.25 lr=0.001 rollback=1");
}

} // TEST_SUITE
