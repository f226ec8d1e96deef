#include "nwp/distill.hpp"

namespace nwp {

TrainResult retrain(LmParams<float> model, const std::vector<const LmParams<float>*>& teachers,
                    const DistillConfig& dcfg, const TrainConfig& tcfg,
                    const EncodedCorpus& train_corpus, const EncodedCorpus& val_corpus,
                    const EpochLogger& logger) {
    KdSequenceLoss<float> loss(teachers, dcfg);
    return run_training(std::move(model), train_corpus, val_corpus, tcfg, loss, logger);
}

} // namespace nwp
