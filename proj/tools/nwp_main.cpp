// nwp: word-prediction LM pipeline driver.
//
// Stages mirror the compression pipeline: train teachers, distill a student,
// train a shared-matrix model under distillation, low-rank factorize, retrain,
// quantize, and evaluate (perplexity, keystroke savings, latency).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "nwp/compress.hpp"
#include "nwp/corpus.hpp"
#include "nwp/distill.hpp"
#include "nwp/evalsuite.hpp"
#include "nwp/modelstore.hpp"
#include "nwp/textgen.hpp"
#include "nwp/train.hpp"

namespace fs = std::filesystem;
using namespace nwp;

namespace {

struct DataDir {
    Vocabulary vocab;
    EncodedCorpus train, valid, test;
};

DataDir load_data_dir(const std::string& dir) {
    DataDir d;
    d.vocab = load_vocab(dir + "/vocab.txt");
    d.train = encode_corpus(load_normalized_lines(dir + "/train.txt"), d.vocab);
    d.valid = encode_corpus(load_normalized_lines(dir + "/valid.txt"), d.vocab);
    d.test = encode_corpus(load_normalized_lines(dir + "/test.txt"), d.vocab);
    return d;
}

std::vector<LmParams<float>> load_teachers(const std::vector<std::string>& paths,
                                           const Vocabulary& vocab) {
    std::vector<LmParams<float>> teachers;
    for (const auto& path : paths) {
        auto [model, tvocab] = load_model(path);
        if (tvocab.size() != vocab.size())
            throw DomainError("teacher " + path + " was trained with a different vocabulary");
        for (int i = 0; i < vocab.size(); ++i)
            if (tvocab.word(i) != vocab.word(i))
                throw DomainError("teacher " + path + " vocabulary mismatch at id " +
                                  std::to_string(i));
        teachers.push_back(std::move(model));
    }
    return teachers;
}

std::vector<const LmParams<float>*> teacher_ptrs(const std::vector<LmParams<float>>& teachers) {
    std::vector<const LmParams<float>*> ptrs;
    for (const auto& t : teachers) ptrs.push_back(&t);
    return ptrs;
}

void echo_train_config(const TrainConfig& cfg, const Hyperparams& hyper,
                       const char* parameterization) {
    std::cout << "config: parameterization=" << parameterization << " dim=" << hyper.dim
              << " vocab_size=" << hyper.vocab_size << " shared_dim=" << hyper.shared_dim
              << " rank=" << hyper.rank << "\n";
    std::cout << "config: lr=" << cfg.lr << " decay_factor=" << cfg.decay_factor
              << " max_epochs=" << cfg.max_epochs << " clip_norm=" << cfg.clip_norm
              << " batch_size=" << cfg.batch_size << " max_len=" << cfg.max_len
              << " seed=" << cfg.seed << "\n";
}

void echo_kd_config(const DistillConfig& kd, size_t teachers) {
    std::cout << "config: temperature=" << kd.temperature << " hard_weight=" << kd.hard_weight
              << " t_squared=" << (kd.t_squared ? 1 : 0) << " teachers=" << teachers << "\n";
}

EpochLogger stdout_logger() {
    return [](const EpochStats& s) { std::cout << format_epoch_line(s) << "\n"; };
}

// Applies `key=value` lines from a config file as defaults: they are injected
// before the explicit flags, so anything given on the command line wins.
std::vector<std::string> apply_config_file(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (size_t i = 0; i + 1 < args.size(); ++i)
        if (args[i] == "--config") {
            config_path = args[i + 1];
            args.erase(args.begin() + static_cast<ptrdiff_t>(i),
                       args.begin() + static_cast<ptrdiff_t>(i) + 2);
            break;
        }
    if (config_path.empty()) return args;

    std::ifstream in(config_path);
    if (!in) throw DomainError("cannot open config file: " + config_path);
    std::vector<std::string> injected;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw DomainError("config file: expected key=value, got '" + line + "'");
        injected.push_back("--" + line.substr(0, eq));
        injected.push_back(line.substr(eq + 1));
    }
    // insert right after the subcommand token so explicit flags override
    std::vector<std::string> out;
    size_t i = 0;
    for (; i < args.size(); ++i) {
        out.push_back(args[i]);
        if (!args[i].empty() && args[i][0] != '-') {
            ++i;
            break;
        }
    }
    out.insert(out.end(), injected.begin(), injected.end());
    for (; i < args.size(); ++i) out.push_back(args[i]);
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"word-prediction language model pipeline"};
    app.require_subcommand(1);
    // config-file values are injected before explicit flags; the last value wins
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string config_file;
    app.add_option("--config", config_file, "key=value file applied as flag defaults")
        ->expected(1);

    // ---- gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "write a synthetic raw-text corpus");
    std::string gen_out = "corpus.txt";
    int64_t gen_words = 1000000;
    uint64_t gen_seed = 1;
    gen->add_option("--out", gen_out, "output text file")->capture_default_str();
    gen->add_option("--words", gen_words, "approximate word count")->capture_default_str();
    gen->add_option("--seed", gen_seed, "generation seed")->capture_default_str();

    // ---- preprocess
    auto* pre = app.add_subcommand("preprocess", "normalize, build vocab, split train/valid/test");
    std::string pre_input, pre_outdir;
    int pre_vocab = kDefaultVocabSize;
    std::vector<int> pre_split = {60, 10, 30};
    uint64_t pre_seed = 1;
    pre->add_option("input", pre_input, "raw corpus, one sentence per line")->required();
    pre->add_option("outdir", pre_outdir, "output directory")->required();
    pre->add_option("--vocab-size", pre_vocab, "vocabulary cutoff K")->capture_default_str();
    pre->add_option("--split", pre_split, "train/valid/test percentages")->expected(3);
    pre->add_option("--seed", pre_seed, "split shuffling seed")->capture_default_str();

    // ---- shared training options
    struct TrainArgs {
        std::string data;
        std::string out;
        int dim = 600;
        int shared_dim = 0;
        int epochs = 10;
        int batch_size = 32;
        int max_len = 40;
        double lr = 0.001;
        double clip_norm = 5.0;
        uint64_t seed = 1;
        std::vector<std::string> teachers;
        double temperature = 2.0;
        double hard_weight = 0.5;
        bool no_t_squared = false;
    };
    auto add_train_options = [](CLI::App* cmd, TrainArgs& a, bool with_kd) {
        cmd->add_option("--dim", a.dim, "embedding/hidden dimension")->capture_default_str();
        cmd->add_option("--epochs", a.epochs, "max training epochs")->capture_default_str();
        cmd->add_option("--batch-size", a.batch_size)->capture_default_str();
        cmd->add_option("--max-len", a.max_len, "sentence truncation length")->capture_default_str();
        cmd->add_option("--lr", a.lr, "initial learning rate")->capture_default_str();
        cmd->add_option("--clip-norm", a.clip_norm, "gradient clip (<=0 disables)")
            ->capture_default_str();
        cmd->add_option("--seed", a.seed)->capture_default_str();
        if (with_kd) {
            cmd->add_option("--teachers", a.teachers, "teacher model files")
                ->required()
                ->delimiter(',');
            cmd->add_option("--temperature", a.temperature, "distillation temperature")
                ->capture_default_str();
            cmd->add_option("--hard-weight", a.hard_weight, "lambda for the hard CE term")
                ->capture_default_str();
            cmd->add_flag("--no-t-squared", a.no_t_squared, "disable the T^2 soft-term scale");
        }
    };

    auto add_data_out = [](CLI::App* cmd, TrainArgs& a) {
        cmd->add_option("data", a.data, "preprocessed data directory")->required();
        cmd->add_option("out", a.out, "output model file")->required();
    };

    auto* teach = app.add_subcommand("train-teacher", "train a dense model on hard targets");
    TrainArgs teach_args;
    add_data_out(teach, teach_args);
    add_train_options(teach, teach_args, false);

    auto* dist = app.add_subcommand("distill", "train a dense student under the KD loss");
    TrainArgs dist_args;
    add_data_out(dist, dist_args);
    add_train_options(dist, dist_args, true);

    auto* tie = app.add_subcommand("tie-shared", "train a shared-matrix model under the KD loss");
    TrainArgs tie_args;
    add_data_out(tie, tie_args);
    add_train_options(tie, tie_args, true);
    tie->add_option("--shared-dim", tie_args.shared_dim, "k (defaults to dim)");

    auto* ret = app.add_subcommand("retrain", "retrain a compressed model under the KD loss");
    TrainArgs ret_args;
    std::string ret_in;
    ret->add_option("in", ret_in, "input model file")->required();
    ret->add_option("out", ret_args.out, "output model file")->required();
    ret->add_option("data", ret_args.data, "preprocessed data directory")->required();
    add_train_options(ret, ret_args, true);

    // ---- factorize
    auto* fac = app.add_subcommand("factorize", "low-rank factorize W_shared via SVD");
    std::string fac_in, fac_out;
    int fac_rank = 0;
    fac->add_option("in", fac_in)->required();
    fac->add_option("out", fac_out)->required();
    fac->add_option("--rank", fac_rank, "r' (0 = k/4)")->capture_default_str();

    // ---- quantize
    auto* quant = app.add_subcommand("quantize", "store tensors as binary16");
    std::string q_in, q_out;
    quant->add_option("in", q_in)->required();
    quant->add_option("out", q_out)->required();

    // ---- eval-pp
    auto* pp = app.add_subcommand("eval-pp", "perplexity over a test file");
    std::string pp_model, pp_text;
    pp->add_option("model", pp_model)->required();
    pp->add_option("test", pp_text)->required();

    // ---- eval-typing
    auto* typing = app.add_subcommand("eval-typing", "keystroke savings over a test file");
    std::string ty_model, ty_text;
    int ty_topn = 3;
    bool ty_free = false;
    typing->add_option("model", ty_model)->required();
    typing->add_option("test", ty_text)->required();
    typing->add_option("--topn", ty_topn, "prediction list size")->capture_default_str();
    typing->add_flag("--free-accept", ty_free, "prediction acceptance costs no tap");

    // ---- bench
    auto* bench = app.add_subcommand("bench", "latency of one prediction step");
    std::string bench_model;
    int bench_iters = 200;
    int bench_topn = 3;
    bench->add_option("model", bench_model)->required();
    bench->add_option("--iterations", bench_iters)->capture_default_str();
    bench->add_option("--topn", bench_topn)->capture_default_str();

    // ---- predict
    auto* repl = app.add_subcommand("predict", "interactive next-word REPL on stdin");
    std::string repl_model;
    int repl_topn = 3;
    repl->add_option("model", repl_model)->required();
    repl->add_option("--topn", repl_topn)->capture_default_str();

    // ---- report
    auto* rep = app.add_subcommand("report", "size report and compression rate");
    std::string rep_model, rep_baseline;
    rep->add_option("model", rep_model)->required();
    rep->add_option("baseline", rep_baseline, "baseline model for the compression rate");

    std::vector<std::string> args;
    try {
        args = apply_config_file(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::vector<const char*> cargs = {argv[0]};
    for (const auto& a : args) cargs.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (*gen) {
        std::ofstream out(gen_out);
        if (!out) throw DomainError("cannot write " + gen_out);
        for (const auto& line : textgen::generate_corpus(gen_seed, gen_words)) out << line << "\n";
        std::cout << "config: out=" << gen_out << " words=" << gen_words << " seed=" << gen_seed
                  << "\n";
        return 0;
    }

    if (*pre) {
        std::ifstream in(pre_input);
        if (!in) throw DomainError("cannot open " + pre_input);
        std::vector<std::vector<std::string>> sentences;
        std::string line;
        while (std::getline(in, line)) {
            auto toks = normalize_line(line);
            if (!toks.empty()) sentences.push_back(std::move(toks));
        }
        if (sentences.empty()) throw DomainError("preprocess: no sentences in " + pre_input);
        if (pre_split.size() != 3 || pre_split[0] + pre_split[1] + pre_split[2] != 100)
            throw RangeError("preprocess: --split percentages must sum to 100");

        // deterministic shuffle, then contiguous split
        Rng rng(pre_seed);
        for (size_t i = sentences.size(); i > 1; --i)
            std::swap(sentences[i - 1], sentences[rng.next_below(i)]);
        const size_t n = sentences.size();
        const size_t n_train = n * static_cast<size_t>(pre_split[0]) / 100;
        const size_t n_valid = n * static_cast<size_t>(pre_split[1]) / 100;

        std::vector<std::vector<std::string>> train(sentences.begin(),
                                                    sentences.begin() + static_cast<ptrdiff_t>(n_train));
        const Vocabulary vocab = build_vocab(train, pre_vocab);

        fs::create_directories(pre_outdir);
        save_vocab(vocab, pre_outdir + "/vocab.txt");
        auto write_split = [&](const char* name, size_t begin, size_t end) {
            std::ofstream out(pre_outdir + "/" + name);
            for (size_t i = begin; i < end; ++i) {
                for (size_t t = 0; t < sentences[i].size(); ++t) {
                    if (t) out << ' ';
                    out << sentences[i][t];
                }
                out << '\n';
            }
        };
        write_split("train.txt", 0, n_train);
        write_split("valid.txt", n_train, n_train + n_valid);
        write_split("test.txt", n_train + n_valid, n);
        std::cout << "config: vocab_size=" << vocab.size() << " sentences=" << n
                  << " split=" << pre_split[0] << "/" << pre_split[1] << "/" << pre_split[2]
                  << " seed=" << pre_seed << "\n";
        return 0;
    }

    auto make_cfg = [](const TrainArgs& a) {
        TrainConfig cfg;
        cfg.lr = a.lr;
        cfg.max_epochs = a.epochs;
        cfg.batch_size = a.batch_size;
        cfg.max_len = a.max_len;
        cfg.clip_norm = a.clip_norm;
        cfg.seed = a.seed;
        return cfg;
    };

    if (*teach) {
        const DataDir data = load_data_dir(teach_args.data);
        Hyperparams hyper{.dim = teach_args.dim, .vocab_size = data.vocab.size()};
        const TrainConfig cfg = make_cfg(teach_args);
        echo_train_config(cfg, hyper, "dense");
        HardTargetLoss<float> loss;
        const TrainResult result = run_training(init_dense(hyper, teach_args.seed), data.train,
                                                data.valid, cfg, loss, stdout_logger());
        save_model(result.model, data.vocab, teach_args.out);
        std::cout << "val_pp=" << result.best_val_pp << "\n";
        return 0;
    }

    auto run_kd_training = [&](const TrainArgs& a, LmParams<float> model, const DataDir& data) {
        DistillConfig kd;
        kd.temperature = a.temperature;
        kd.hard_weight = a.hard_weight;
        kd.t_squared = !a.no_t_squared;
        const auto teachers = load_teachers(a.teachers, data.vocab);
        const TrainConfig cfg = make_cfg(a);
        echo_train_config(cfg, model.hyper, to_string(model.parameterization));
        echo_kd_config(kd, teachers.size());
        const TrainResult result = retrain(std::move(model), teacher_ptrs(teachers), kd, cfg,
                                           data.train, data.valid, stdout_logger());
        save_model(result.model, data.vocab, a.out);
        std::cout << "val_pp=" << result.best_val_pp << "\n";
    };

    if (*dist) {
        const DataDir data = load_data_dir(dist_args.data);
        Hyperparams hyper{.dim = dist_args.dim, .vocab_size = data.vocab.size()};
        run_kd_training(dist_args, init_dense(hyper, dist_args.seed), data);
        return 0;
    }

    if (*tie) {
        const DataDir data = load_data_dir(tie_args.data);
        Hyperparams hyper{.dim = tie_args.dim, .vocab_size = data.vocab.size(),
                          .shared_dim = tie_args.shared_dim};
        Rng rng(tie_args.seed);
        run_kd_training(tie_args, build_shared(hyper, rng), data);
        return 0;
    }

    if (*ret) {
        const DataDir data = load_data_dir(ret_args.data);
        auto [model, mvocab] = load_model(ret_in);
        if (mvocab.size() != data.vocab.size())
            throw DomainError("retrain: model vocabulary does not match the data directory");
        run_kd_training(ret_args, std::move(model), data);
        return 0;
    }

    if (*fac) {
        auto [model, vocab] = load_model(fac_in);
        const int rank = fac_rank > 0 ? fac_rank : std::max(1, model.hyper.shared_dim / 4);
        std::cout << "config: rank=" << rank << "\n";
        const LmParams<float> low = factorize_shared(model, rank);
        const uint64_t bytes = save_model(low, vocab, fac_out);
        std::cout << "total_bytes=" << bytes << "\n";
        return 0;
    }

    if (*quant) {
        auto [model, vocab] = load_model(q_in);
        const uint64_t bytes = save_model(quantize_model(model), vocab, q_out);
        std::cout << "total_bytes=" << bytes << "\n";
        return 0;
    }

    if (*pp) {
        auto [model, vocab] = load_model(pp_model);
        const EncodedCorpus corpus = encode_corpus(load_normalized_lines(pp_text), vocab);
        std::cout << "pp=" << perplexity(model, corpus) << "\n";
        return 0;
    }

    if (*typing) {
        auto [model, vocab] = load_model(ty_model);
        std::ifstream in(ty_text);
        if (!in) throw DomainError("cannot open " + ty_text);
        std::vector<std::vector<std::string>> sentences;
        std::string line;
        while (std::getline(in, line)) {
            auto toks = tokenize_line(line); // keep surfaces; digits stay typed digits
            if (!toks.empty()) sentences.push_back(std::move(toks));
        }
        const TypingReport r = simulate_typing(model, vocab, sentences, ty_topn, ty_free);
        std::cout << "top_n=" << r.top_n << " free_accept=" << (ty_free ? 1 : 0) << "\n";
        std::cout << "baseline_keystrokes=" << r.baseline_keystrokes << "\n";
        std::cout << "used_keystrokes=" << r.used_keystrokes << "\n";
        std::cout << "kss_percent=" << r.kss_percent << "\n";
        std::cout << "words_total=" << r.words_total << "\n";
        std::cout << "wpr_hits=" << r.wpr_hits << "\n";
        std::cout << "wpr_percent=" << r.wpr_percent << "\n";
        return 0;
    }

    if (*bench) {
        auto [model, vocab] = load_model(bench_model);
        std::vector<int32_t> context = {Vocabulary::kBos};
        for (int i = 0; i < 6 && Vocabulary::kReserved + i < vocab.size(); ++i)
            context.push_back(Vocabulary::kReserved + i);
        const BenchReport r = bench_predict(model, vocab, context, bench_iters, bench_topn);
        std::cout << "iterations=" << r.iterations << "\n";
        std::cout << "mean_ms=" << r.mean_ms << "\n";
        std::cout << "p95_ms=" << r.p95_ms << "\n";
        std::cout << "mac_count=" << r.mac << "\n";
        return 0;
    }

    if (*repl) {
        auto [model, vocab] = load_model(repl_model);
        std::string line;
        while (std::getline(std::cin, line)) {
            LstmState<float> state(model.hyper.dim);
            lstm_step(model, embed(model, Vocabulary::kBos), state);
            for (const auto& tok : normalize_line(line)) {
                int id = vocab.lookup(tok);
                if (id < 0) id = Vocabulary::kUnk;
                lstm_step(model, embed(model, id), state);
                std::cout << "token=" << tok << " next=";
                const auto preds = predict_from_state(model, vocab, state, "", repl_topn);
                for (size_t i = 0; i < preds.size(); ++i) {
                    if (i) std::cout << ",";
                    std::cout << vocab.word(preds[i].word_id) << ":" << preds[i].prob;
                }
                std::cout << "\n";
            }
        }
        return 0;
    }

    if (*rep) {
        auto [model, vocab] = load_model(rep_model);
        const SizeReport report = size_report(model, vocab);
        if (!rep_baseline.empty()) {
            auto [base_model, base_vocab] = load_model(rep_baseline);
            const SizeReport base = size_report(base_model, base_vocab);
            write_size_report(std::cout, report, &base);
        } else {
            write_size_report(std::cout, report);
        }
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
