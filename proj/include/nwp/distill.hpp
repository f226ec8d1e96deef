#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "nwp/model.hpp"
#include "nwp/train.hpp"

namespace nwp {

struct DistillConfig {
    double temperature = 2.0; // T
    double hard_weight = 0.5; // lambda in [0,1]
    bool t_squared = true;    // scale the soft term by T^2 so its gradient
                              // magnitude stays comparable across temperatures
};

// Elementwise mean of the teachers' logits.
template <typename T>
std::vector<T> ensemble_logits(const std::vector<std::vector<T>>& per_teacher) {
    if (per_teacher.empty()) throw DomainError("ensemble_logits: no teachers");
    const size_t n = per_teacher.front().size();
    for (const auto& t : per_teacher)
        if (t.size() != n) throw ShapeError("ensemble_logits: vocab size mismatch");
    std::vector<T> z(n, T(0));
    for (const auto& t : per_teacher)
        for (size_t i = 0; i < n; ++i) z[i] += t[i];
    const T inv = T(1) / static_cast<T>(per_teacher.size());
    for (T& v : z) v *= inv;
    return z;
}

// Temperature softmax p_i = exp(z_i/T) / sum_j exp(z_j/T), max-subtracted.
template <typename T>
std::vector<T> soften(std::span<const T> z, double temperature) {
    if (!(temperature > 0)) throw RangeError("soften: temperature must be > 0");
    if (z.empty()) throw ShapeError("soften: empty logits");
    std::vector<T> scaled(z.size());
    const T inv_t = static_cast<T>(1.0 / temperature);
    for (size_t i = 0; i < z.size(); ++i) scaled[i] = z[i] * inv_t;
    std::vector<T> p(z.size());
    softmax_into(scaled.data(), static_cast<int>(scaled.size()), p.data());
    return p;
}

// Combined distillation loss:
//   lambda * CE(softmax(s), hard) + (1-lambda) * T^2 * CE(softmax(s/T), p)
// The T^2 factor can be disabled (then the soft term is unscaled).
template <typename T>
double kd_loss(std::span<const T> student_logits, int hard_target,
               std::span<const T> soft_targets, double temperature, double hard_weight,
               bool t_squared = true) {
    if (!(temperature > 0)) throw RangeError("kd_loss: temperature must be > 0");
    if (hard_weight < 0 || hard_weight > 1)
        throw RangeError("kd_loss: hard_weight must be in [0,1]");
    if (student_logits.size() != soft_targets.size())
        throw ShapeError("kd_loss: logits/targets size mismatch");

    const double hard = -static_cast<double>(log_softmax_at(student_logits, hard_target));

    // soft CE: -sum_i p_i log softmax(s/T)_i
    T m = student_logits[0];
    for (T v : student_logits) m = std::max(m, v);
    const double inv_t = 1.0 / temperature;
    double se = 0;
    for (T v : student_logits) se += std::exp(static_cast<double>(v - m) * inv_t);
    const double log_se = std::log(se);
    double soft = 0;
    for (size_t i = 0; i < soft_targets.size(); ++i) {
        const double logq = static_cast<double>(student_logits[i] - m) * inv_t - log_se;
        soft -= static_cast<double>(soft_targets[i]) * logq;
    }
    const double soft_scale = t_squared ? temperature * temperature : 1.0;
    return hard_weight * hard + (1.0 - hard_weight) * soft_scale * soft;
}

// Sequence loss that distills from a fixed teacher ensemble: teachers run in
// inference mode over the same batch, their averaged logits are softened at
// temperature T, and the gradient combines hard and soft terms.
template <typename T>
class KdSequenceLoss : public SequenceLoss<T> {
public:
    KdSequenceLoss(std::vector<const LmParams<T>*> teachers, DistillConfig cfg)
        : teachers_(std::move(teachers)), cfg_(cfg) {
        if (teachers_.empty()) throw DomainError("KdSequenceLoss: at least one teacher required");
        if (!(cfg_.temperature > 0)) throw RangeError("KdSequenceLoss: temperature must be > 0");
        if (cfg_.hard_weight < 0 || cfg_.hard_weight > 1)
            throw RangeError("KdSequenceLoss: hard_weight must be in [0,1]");
        vocab_size_ = teachers_.front()->hyper.vocab_size;
        for (const auto* t : teachers_)
            if (t->hyper.vocab_size != vocab_size_)
                throw ShapeError("KdSequenceLoss: teacher vocabulary sizes differ");
    }

    void begin_batch(const Batch& batch) override {
        batch_ = &batch;
        states_.assign(teachers_.size(), TeacherState{});
    }

    StepLossStats on_step(int step, const Mat<T>& logits, std::span<const int32_t> targets,
                          Mat<T>& dlogits) override {
        const int active = logits.rows;
        if (logits.cols != vocab_size_)
            throw ShapeError("KdSequenceLoss: student vocabulary does not match teachers");
        std::vector<int32_t> ids(static_cast<size_t>(active));
        for (int b = 0; b < active; ++b) ids[static_cast<size_t>(b)] = batch_->token(b, step);

        // advance each teacher one step and accumulate its logits
        Mat<T> z(active, vocab_size_);
        for (size_t k = 0; k < teachers_.size(); ++k) {
            const LmParams<T>& teacher = *teachers_[k];
            TeacherState& st = states_[k];
            Mat<T> x;
            embed_rows(teacher, ids, x);
            if (step == 0) {
                st.h = Mat<T>(active, teacher.hyper.dim);
                st.c = Mat<T>(active, teacher.hyper.dim);
            }
            LstmStepCache<T> cell;
            lstm_step_rows(teacher, x, st.h, st.c, cell);
            Mat<T> tl;
            logits_rows(teacher, cell.h, tl);
            for (size_t i = 0; i < z.data.size(); ++i) z.data[i] += tl.data[i];
            st.h = std::move(cell.h);
            st.c = std::move(cell.c);
        }
        const T inv_k = T(1) / static_cast<T>(teachers_.size());
        for (T& v : z.data) v *= inv_k;

        const double temp = cfg_.temperature;
        const T lambda = static_cast<T>(cfg_.hard_weight);
        const T soft_w = static_cast<T>(1.0 - cfg_.hard_weight);
        // d(soft)/ds = scale * (softmax(s/T) - p); T^2 from the loss cancels
        // one 1/T from the inner derivative.
        const T soft_grad_scale =
            static_cast<T>(cfg_.t_squared ? temp : 1.0 / temp);
        const double soft_loss_scale = cfg_.t_squared ? temp * temp : 1.0;

        StepLossStats stats;
        std::vector<T> p(static_cast<size_t>(vocab_size_));
        std::vector<T> ps(static_cast<size_t>(vocab_size_));
        std::vector<T> pst(static_cast<size_t>(vocab_size_));
        std::vector<T> scaled(static_cast<size_t>(vocab_size_));
        for (int b = 0; b < active; ++b) {
            const T* zt = z.row(b);
            const T* s = logits.row(b);
            const int target = targets[static_cast<size_t>(b)];

            // teacher soft targets at T
            for (int i = 0; i < vocab_size_; ++i) scaled[static_cast<size_t>(i)] = static_cast<T>(zt[i] / temp);
            softmax_into(scaled.data(), vocab_size_, p.data());
            // student at temperature 1 and at T
            const SoftmaxStats<T> st1 = softmax_into(s, vocab_size_, ps.data());
            for (int i = 0; i < vocab_size_; ++i) scaled[static_cast<size_t>(i)] = static_cast<T>(s[i] / temp);
            const SoftmaxStats<T> stt = softmax_into(scaled.data(), vocab_size_, pst.data());

            const double hard_nll = -(static_cast<double>(s[target]) - static_cast<double>(st1.max) -
                                      std::log(static_cast<double>(st1.sumexp)));
            double soft_ce = 0;
            const double log_se_t = std::log(static_cast<double>(stt.sumexp));
            for (int i = 0; i < vocab_size_; ++i) {
                const double logq = static_cast<double>(scaled[static_cast<size_t>(i)]) -
                                    static_cast<double>(stt.max) - log_se_t;
                soft_ce -= static_cast<double>(p[static_cast<size_t>(i)]) * logq;
            }
            stats.loss_sum += cfg_.hard_weight * hard_nll +
                              (1.0 - cfg_.hard_weight) * soft_loss_scale * soft_ce;
            stats.hard_nll_sum += hard_nll;
            ++stats.tokens;

            T* dz = dlogits.row(b);
            for (int i = 0; i < vocab_size_; ++i) {
                dz[i] = lambda * ps[static_cast<size_t>(i)] +
                        soft_w * soft_grad_scale *
                            (pst[static_cast<size_t>(i)] - p[static_cast<size_t>(i)]);
            }
            dz[target] -= lambda;
        }
        return stats;
    }

private:
    struct TeacherState {
        Mat<T> h, c;
    };
    std::vector<const LmParams<T>*> teachers_;
    DistillConfig cfg_;
    int vocab_size_ = 0;
    const Batch* batch_ = nullptr;
    std::vector<TeacherState> states_;
};

// Post-compression retraining: run_training with the combined KD loss,
// teachers in inference mode.
TrainResult retrain(LmParams<float> model, const std::vector<const LmParams<float>*>& teachers,
                    const DistillConfig& dcfg, const TrainConfig& tcfg,
                    const EncodedCorpus& train_corpus, const EncodedCorpus& val_corpus,
                    const EpochLogger& logger = {});

} // namespace nwp
