// nwplm: python bindings over the C++ core. Exposes the pipeline operations
// (corpus prep, training, distillation, factorization, quantization,
// evaluation, serialization) plus the linalg primitives they sit on.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nwp/compress.hpp"
#include "nwp/corpus.hpp"
#include "nwp/distill.hpp"
#include "nwp/evalsuite.hpp"
#include "nwp/half.hpp"
#include "nwp/modelstore.hpp"
#include "nwp/svd.hpp"
#include "nwp/textgen.hpp"
#include "nwp/train.hpp"

namespace py = pybind11;
using namespace nwp;

namespace {

Matrix matrix_from_numpy(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
    Matrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy_n(a.data(), m.size(), m.data.data());
    return m;
}

py::array_t<float> numpy_from_matrix(const Matrix& m) {
    py::array_t<float> out({m.rows, m.cols});
    std::copy_n(m.data.data(), m.size(), out.mutable_data());
    return out;
}

EncodedCorpus corpus_from_lists(const std::vector<std::vector<int32_t>>& sentences) {
    EncodedCorpus c;
    c.sentences = sentences;
    return c;
}

py::list history_to_list(const std::vector<EpochStats>& history) {
    py::list out;
    for (const auto& e : history) {
        py::dict d;
        d["epoch"] = e.epoch;
        d["train_pp"] = e.train_pp;
        d["val_pp"] = e.val_pp;
        d["lr"] = e.lr;
        d["rollback"] = e.rollback;
        out.append(d);
    }
    return out;
}

TrainConfig config_from_kwargs(int epochs, double lr, int batch_size, int max_len,
                               double clip_norm, uint64_t seed) {
    TrainConfig cfg;
    cfg.max_epochs = epochs;
    cfg.lr = lr;
    cfg.batch_size = batch_size;
    cfg.max_len = max_len;
    cfg.clip_norm = clip_norm;
    cfg.seed = seed;
    return cfg;
}

} // namespace

PYBIND11_MODULE(nwplm, m) {
    m.doc() = "word-prediction LM: training, distillation, compression, evaluation";

    py::register_exception<Error>(m, "NwpError");

    // ---- linalg primitives
    m.def("matmul", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                       const py::array_t<float, py::array::c_style | py::array::forcecast>& b) {
        return numpy_from_matrix(matmul(matrix_from_numpy(a), matrix_from_numpy(b)));
    });
    m.def("svd", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& w) {
        const SvdResult s = svd(matrix_from_numpy(w));
        py::array_t<float> sigma(static_cast<py::ssize_t>(s.sigma.size()));
        std::copy(s.sigma.begin(), s.sigma.end(), sigma.mutable_data());
        return py::make_tuple(numpy_from_matrix(s.u), sigma, numpy_from_matrix(s.vt));
    });
    m.def("f16_encode", &f16_encode);
    m.def("f16_decode", &f16_decode);
    m.def("f16_round", &f16_round);
    m.def("seeded_uniform", [](uint64_t seed, int rows, int cols, float lo, float hi) {
        Rng rng(seed);
        return numpy_from_matrix(seeded_uniform(rng, rows, cols, lo, hi));
    });

    // ---- corpus
    m.def("tokenize_line", [](const std::string& s) { return tokenize_line(s); });
    m.def("normalize_line", [](const std::string& s) { return normalize_line(s); });
    m.def("generate_corpus", &textgen::generate_corpus, py::arg("seed"), py::arg("words"));

    py::class_<Vocabulary>(m, "Vocabulary")
        .def(py::init<>())
        .def_static("build",
                    [](const std::vector<std::vector<std::string>>& sents, int k) {
                        return build_vocab(sents, k);
                    })
        .def("__len__", &Vocabulary::size)
        .def("word", &Vocabulary::word)
        .def("lookup", [](const Vocabulary& v, const std::string& w) { return v.lookup(w); })
        .def("encode", [](const Vocabulary& v, const std::vector<std::string>& toks) {
            return encode(toks, v);
        })
        .def("decode", [](const Vocabulary& v, const std::vector<int32_t>& ids) {
            return decode(ids, v);
        })
        .def("save", &save_vocab)
        .def_static("load", &load_vocab);

    py::class_<LmParams<float>>(m, "Model")
        .def_property_readonly("parameterization",
                               [](const LmParams<float>& p) { return to_string(p.parameterization); })
        .def_property_readonly("dim", [](const LmParams<float>& p) { return p.hyper.dim; })
        .def_property_readonly("vocab_size",
                               [](const LmParams<float>& p) { return p.hyper.vocab_size; })
        .def_property_readonly("shared_dim",
                               [](const LmParams<float>& p) { return p.hyper.shared_dim; })
        .def_property_readonly("rank", [](const LmParams<float>& p) { return p.hyper.rank; })
        .def_property_readonly("dtype", [](const LmParams<float>& p) { return to_string(p.dtype); })
        .def("mac_count", [](const LmParams<float>& p) {
            const MacCount mc = mac_count(p);
            py::dict d;
            d["embed"] = mc.embed;
            d["lstm"] = mc.lstm;
            d["output"] = mc.output;
            d["total"] = mc.total();
            return d;
        })
        .def("weight_count", &embedding_softmax_weight_count);

    m.def("init_dense", [](int dim, int vocab_size, uint64_t seed) {
        return init_dense(Hyperparams{.dim = dim, .vocab_size = vocab_size}, seed);
    }, py::arg("dim"), py::arg("vocab_size"), py::arg("seed"));
    m.def("init_shared", [](int dim, int vocab_size, uint64_t seed, int shared_dim) {
        Rng rng(seed);
        return build_shared(
            Hyperparams{.dim = dim, .vocab_size = vocab_size, .shared_dim = shared_dim}, rng);
    }, py::arg("dim"), py::arg("vocab_size"), py::arg("seed"), py::arg("shared_dim") = 0);

    // ---- training
    m.def(
        "train",
        [](const LmParams<float>& model, const std::vector<std::vector<int32_t>>& train_ids,
           const std::vector<std::vector<int32_t>>& valid_ids, int epochs, double lr,
           int batch_size, int max_len, double clip_norm, uint64_t seed) {
            HardTargetLoss<float> loss;
            TrainResult r = run_training(model, corpus_from_lists(train_ids),
                                         corpus_from_lists(valid_ids),
                                         config_from_kwargs(epochs, lr, batch_size, max_len,
                                                            clip_norm, seed),
                                         loss);
            return py::make_tuple(r.model, history_to_list(r.history), r.best_val_pp);
        },
        py::arg("model"), py::arg("train"), py::arg("valid"), py::arg("epochs") = 5,
        py::arg("lr") = 0.001, py::arg("batch_size") = 32, py::arg("max_len") = 40,
        py::arg("clip_norm") = 5.0, py::arg("seed") = 1);

    m.def(
        "distill_train",
        [](const LmParams<float>& model, const std::vector<LmParams<float>>& teachers,
           const std::vector<std::vector<int32_t>>& train_ids,
           const std::vector<std::vector<int32_t>>& valid_ids, double temperature,
           double hard_weight, int epochs, double lr, int batch_size, int max_len,
           double clip_norm, uint64_t seed) {
            DistillConfig kd;
            kd.temperature = temperature;
            kd.hard_weight = hard_weight;
            std::vector<const LmParams<float>*> tp;
            for (const auto& t : teachers) tp.push_back(&t);
            TrainResult r = retrain(model, tp, kd, config_from_kwargs(epochs, lr, batch_size,
                                                                      max_len, clip_norm, seed),
                                    corpus_from_lists(train_ids), corpus_from_lists(valid_ids));
            return py::make_tuple(r.model, history_to_list(r.history), r.best_val_pp);
        },
        py::arg("model"), py::arg("teachers"), py::arg("train"), py::arg("valid"),
        py::arg("temperature") = 2.0, py::arg("hard_weight") = 0.5, py::arg("epochs") = 5,
        py::arg("lr") = 0.001, py::arg("batch_size") = 32, py::arg("max_len") = 40,
        py::arg("clip_norm") = 5.0, py::arg("seed") = 1);

    // ---- distillation primitives
    m.def("ensemble_logits", [](const std::vector<std::vector<float>>& per_teacher) {
        return ensemble_logits(per_teacher);
    });
    m.def("soften", [](const std::vector<float>& z, double temperature) {
        return soften(std::span<const float>(z), temperature);
    });
    m.def("kd_loss", [](const std::vector<float>& student, int target,
                        const std::vector<float>& soft, double temperature, double hard_weight) {
        return kd_loss(std::span<const float>(student), target, std::span<const float>(soft),
                       temperature, hard_weight);
    });

    // ---- compression
    m.def("factorize", &factorize_shared, py::arg("model"), py::arg("rank"));
    m.def("quantize", &quantize_model);
    m.def("size_report", [](const LmParams<float>& model, const Vocabulary& vocab) {
        const SizeReport r = size_report(model, vocab);
        py::dict d;
        py::list tensors;
        for (const auto& t : r.tensors) {
            py::dict td;
            td["name"] = t.name;
            td["params"] = t.params;
            td["bytes"] = t.bytes;
            tensors.append(td);
        }
        d["tensors"] = tensors;
        d["header_bytes"] = r.header_bytes;
        d["total_bytes"] = r.total_bytes;
        return d;
    });
    m.def("compression_rate", [](const LmParams<float>& baseline, const LmParams<float>& model,
                                 const Vocabulary& vocab) {
        return report_compression(size_report(baseline, vocab), size_report(model, vocab));
    });

    // ---- evaluation
    m.def("perplexity", [](const LmParams<float>& model,
                           const std::vector<std::vector<int32_t>>& ids) {
        return perplexity(model, corpus_from_lists(ids));
    });
    m.def(
        "predict",
        [](const LmParams<float>& model, const Vocabulary& vocab,
           const std::vector<int32_t>& context, const std::string& prefix, int n) {
            py::list out;
            for (const auto& p : predict(model, vocab, context, prefix, n))
                out.append(py::make_tuple(vocab.word(p.word_id), p.prob));
            return out;
        },
        py::arg("model"), py::arg("vocab"), py::arg("context"), py::arg("prefix") = "",
        py::arg("n") = 3);
    m.def(
        "simulate_typing",
        [](const LmParams<float>& model, const Vocabulary& vocab,
           const std::vector<std::vector<std::string>>& sentences, int top_n, bool free_accept) {
            const TypingReport r = simulate_typing(model, vocab, sentences, top_n, free_accept);
            py::dict d;
            d["baseline_keystrokes"] = r.baseline_keystrokes;
            d["used_keystrokes"] = r.used_keystrokes;
            d["kss_percent"] = r.kss_percent;
            d["words_total"] = r.words_total;
            d["wpr_hits"] = r.wpr_hits;
            d["wpr_percent"] = r.wpr_percent;
            d["top_n"] = r.top_n;
            return d;
        },
        py::arg("model"), py::arg("vocab"), py::arg("sentences"), py::arg("top_n") = 3,
        py::arg("free_accept") = false);
    m.def(
        "bench_predict",
        [](const LmParams<float>& model, const Vocabulary& vocab,
           const std::vector<int32_t>& context, int iterations) {
            const BenchReport r = bench_predict(model, vocab, context, iterations);
            py::dict d;
            d["iterations"] = r.iterations;
            d["mean_ms"] = r.mean_ms;
            d["p95_ms"] = r.p95_ms;
            d["mac_count"] = r.mac;
            return d;
        },
        py::arg("model"), py::arg("vocab"), py::arg("context"), py::arg("iterations") = 100);

    // ---- serialization
    m.def("save", &save_model, py::arg("model"), py::arg("vocab"), py::arg("path"));
    m.def("load", [](const std::string& path) {
        auto [model, vocab] = load_model(path);
        return py::make_tuple(std::move(model), std::move(vocab));
    });
}
