#include "nwp/train.hpp"

#include <cmath>
#include <sstream>

#include "nwp/evalsuite.hpp"

namespace nwp {

std::string format_epoch_line(const EpochStats& s) {
    std::ostringstream os;
    os << "epoch=" << s.epoch << " train_pp=" << s.train_pp << " val_pp=" << s.val_pp
       << " lr=" << s.lr << " rollback=" << (s.rollback ? 1 : 0);
    return os.str();
}

TrainResult run_training(LmParams<float> model, const EncodedCorpus& train_corpus,
                         const EncodedCorpus& val_corpus, const TrainConfig& cfg,
                         SequenceLoss<float>& loss_fn, const EpochLogger& logger) {
    if (train_corpus.sentences.empty()) throw DomainError("run_training: empty training corpus");
    if (val_corpus.sentences.empty()) throw DomainError("run_training: empty validation corpus");

    const double initial_val_pp = perplexity(model, val_corpus);

    TrainResult result;
    result.model = model;
    result.best_val_pp = initial_val_pp;

    AdamState<float> adam = make_adam_state(model);
    TrainConfig step_cfg = cfg; // lr decays in this copy
    Rng shuffle_rng(cfg.seed);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        if (step_cfg.lr < cfg.min_lr) break;

        double hard_sum = 0;
        int64_t tokens = 0;
        const uint64_t epoch_seed = shuffle_rng.next_u64();
        for (const Batch& batch : make_batches(train_corpus, cfg.batch_size, cfg.max_len, epoch_seed)) {
            BackwardResult<float> bw = backward(model, batch, loss_fn, cfg.clip_norm);
            if (bw.tokens == 0) continue;
            adam_step(model, bw.grads, adam, step_cfg);
            hard_sum += bw.hard_nll * static_cast<double>(bw.tokens);
            tokens += bw.tokens;
        }
        if (tokens == 0) throw DomainError("run_training: corpus produced no training targets");

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_pp = std::exp(hard_sum / static_cast<double>(tokens));
        stats.val_pp = perplexity(model, val_corpus);
        stats.lr = step_cfg.lr;

        if (!std::isfinite(stats.val_pp) || stats.val_pp > cfg.divergence_factor * initial_val_pp) {
            std::ostringstream os;
            os << "run_training: diverged at epoch " << epoch << ": val_pp=" << stats.val_pp
               << " initial=" << initial_val_pp << " lr=" << step_cfg.lr;
            throw TrainingError(os.str());
        }

        if (stats.val_pp < result.best_val_pp) {
            result.best_val_pp = stats.val_pp;
            result.model = model;
        } else {
            stats.rollback = true;
            model = result.model; // roll back to the best checkpoint
            step_cfg.lr *= cfg.decay_factor;
        }
        result.history.push_back(stats);
        if (logger) logger(stats);
    }
    return result;
}

} // namespace nwp
