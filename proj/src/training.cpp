#include "dap/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "dap/errors.hpp"

namespace dap {

namespace {

void add_lstm(LstmParams& a, const LstmParams& b) {
    add_in_place(a.w_xi, b.w_xi); add_in_place(a.w_hi, b.w_hi); add_in_place(a.b_i, b.b_i);
    add_in_place(a.w_xf, b.w_xf); add_in_place(a.w_hf, b.w_hf); add_in_place(a.b_f, b.b_f);
    add_in_place(a.w_xo, b.w_xo); add_in_place(a.w_ho, b.w_ho); add_in_place(a.b_o, b.b_o);
    add_in_place(a.w_xg, b.w_xg); add_in_place(a.w_hg, b.w_hg); add_in_place(a.b_g, b.b_g);
}

void add_gru(GruParams& a, const GruParams& b) {
    add_in_place(a.w_xz, b.w_xz); add_in_place(a.w_hz, b.w_hz); add_in_place(a.b_z, b.b_z);
    add_in_place(a.w_xr, b.w_xr); add_in_place(a.w_hr, b.w_hr); add_in_place(a.b_r, b.b_r);
    add_in_place(a.w_xh, b.w_xh); add_in_place(a.w_hh, b.w_hh); add_in_place(a.b_h, b.b_h);
}

void add_param_set(ParamSet& a, const ParamSet& b) {
    add_lstm(a.fwd_lstm, b.fwd_lstm);
    if (a.bwd_lstm) add_lstm(*a.bwd_lstm, *b.bwd_lstm);
    add_gru(a.gru, b.gru);
    add_in_place(a.w_out, b.w_out);
    add_in_place(a.b_out, b.b_out);
}

Matrix segment(const Matrix& col, std::size_t offset, std::size_t len) {
    Matrix out(len, 1);
    for (std::size_t i = 0; i < len; ++i) out(i, 0) = col(offset + i, 0);
    return out;
}

// Gradient contribution of one example, scaled by `weight`.
ParamSet example_gradients(const ModelParameters& m, const Example& ex, double weight,
                           double& loss_out) {
    if (ex.label >= m.config.num_classes) {
        throw ValidationError("example label " + std::to_string(ex.label) +
                              " out of range for " + std::to_string(m.config.num_classes) +
                              " classes");
    }
    const bool bi = m.config.bidirectional();
    ForwardTrace trace =
        bi ? dbrnn_forward(m, ex.window) : dbrnn_forward_unidirectional(m, ex.window);
    loss_out = cross_entropy_loss(trace.probs, ex.label);

    const std::size_t steps = m.config.window_length;
    const std::size_t hidden = m.config.hidden_size;
    ParamSet grads = zero_like(m.params);

    // Softmax cross-entropy head: gradient at the logits is probs - onehot.
    Matrix dlogits = trace.probs;
    dlogits(ex.label, 0) -= 1.0;
    for (double& v : dlogits.data()) v *= weight;

    grads.w_out = outer(dlogits, trace.h_gru.back());
    grads.b_out = dlogits;

    // GRU layer: readout feeds only the final timestep; recurrence carries
    // the rest.
    std::vector<Matrix> dconcat(steps);
    Matrix dh = matmul_transposed_a(m.params.w_out, dlogits);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = steps - 1 - s;
        GruBackward back = gru_backward(m.params.gru, trace.gru_tapes[t], dh);
        add_gru(grads.gru, back.grads);
        dh = std::move(back.dh_prev);
        dconcat[t] = std::move(back.dx);
    }

    // Forward LSTM, last frame to first.
    {
        Matrix dh_carry(hidden, 1), dc_carry(hidden, 1);
        for (std::size_t s = 0; s < steps; ++s) {
            const std::size_t t = steps - 1 - s;
            Matrix dh_t = bi ? segment(dconcat[t], 0, hidden) : std::move(dconcat[t]);
            add_in_place(dh_t, dh_carry);
            LstmBackward back = lstm_backward(m.params.fwd_lstm, trace.fwd_tapes[t], dh_t,
                                              dc_carry);
            add_lstm(grads.fwd_lstm, back.grads);
            dh_carry = std::move(back.dh_prev);
            dc_carry = std::move(back.dc_prev);
        }
    }

    // Backward LSTM runs over frames T-1..0; its BPTT therefore walks the
    // processing steps in reverse (frame 0 back to frame T-1).
    if (bi) {
        Matrix dh_carry(hidden, 1), dc_carry(hidden, 1);
        for (std::size_t s2 = 0; s2 < steps; ++s2) {
            const std::size_t s = steps - 1 - s2; // processing step
            const std::size_t t = steps - 1 - s;  // frame it consumed
            Matrix dh_t = segment(dconcat[t], hidden, hidden);
            add_in_place(dh_t, dh_carry);
            LstmBackward back = lstm_backward(*m.params.bwd_lstm, trace.bwd_tapes[s], dh_t,
                                              dc_carry);
            add_lstm(*grads.bwd_lstm, back.grads);
            dh_carry = std::move(back.dh_prev);
            dc_carry = std::move(back.dc_prev);
        }
    }
    return grads;
}

std::size_t resolve_threads(std::size_t requested) {
    if (requested != 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

struct EvalStats {
    double mean_loss = 0.0;
    double accuracy = 0.0;
};

EvalStats evaluate_set(const ModelParameters& m, const std::vector<Example>& set,
                       std::size_t threads) {
    EvalStats stats;
    if (set.empty()) return stats;
    const std::size_t n = set.size();
    std::vector<double> losses(n, 0.0);
    std::vector<char> correct(n, 0);
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < n; i += stride) {
            Matrix probs = predict_probs(m, set[i].window);
            losses[i] = cross_entropy_loss(probs, set[i].label);
            std::size_t arg = 0;
            for (std::size_t c = 1; c < probs.rows(); ++c) {
                if (probs(c, 0) > probs(arg, 0)) arg = c;
            }
            correct[i] = arg == set[i].label ? 1 : 0;
        }
    };
    const std::size_t nt = std::min(resolve_threads(threads), n);
    if (nt <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nt);
        for (std::size_t k = 0; k < nt; ++k) pool.emplace_back(work, k, nt);
        for (auto& th : pool) th.join();
    }
    double loss_sum = 0.0;
    std::size_t right = 0;
    for (std::size_t i = 0; i < n; ++i) {
        loss_sum += losses[i];
        right += correct[i];
    }
    stats.mean_loss = loss_sum / static_cast<double>(n);
    stats.accuracy = static_cast<double>(right) / static_cast<double>(n);
    return stats;
}

} // namespace

void TrainingConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("training: learning_rate must be > 0");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
        throw ValidationError("training: decay_factor must be in (0, 1]");
    }
    if (!(clip_value > 0.0)) throw ValidationError("training: clip_value must be > 0");
    if (decay_every == 0) throw ValidationError("training: decay_every must be >= 1");
    if (batch_size == 0) throw ValidationError("training: batch_size must be >= 1");
}

AdamState AdamState::init(const ParamSet& shape) {
    AdamState s;
    s.m = zero_like(shape);
    s.v = zero_like(shape);
    return s;
}

double cross_entropy_loss(const Matrix& probs, std::size_t label) {
    if (probs.cols() != 1 || label >= probs.rows()) {
        throw ValidationError("cross_entropy_loss: label " + std::to_string(label) +
                              " out of range for " + std::to_string(probs.rows()) + " classes");
    }
    return -std::log(std::max(probs(label, 0), 1e-12));
}

BatchGradients bptt_gradients(const ModelParameters& m, std::span<const Example> batch,
                              std::size_t threads) {
    if (batch.empty()) throw ValidationError("bptt_gradients: empty batch");
    const std::size_t n = batch.size();
    const double weight = 1.0 / static_cast<double>(n);

    BatchGradients out;
    out.grads = zero_like(m.params);

    std::vector<double> losses(n, 0.0);
    const std::size_t nt = std::min(resolve_threads(threads), n);
    if (nt <= 1) {
        double loss_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            ParamSet g = example_gradients(m, batch[i], weight, losses[i]);
            add_param_set(out.grads, g);
            loss_sum += losses[i];
        }
        out.mean_loss = loss_sum * weight;
        return out;
    }

    // Parallel map, then a reduction in example order so results do not
    // depend on thread count or scheduling.
    std::vector<ParamSet> per_example(n);
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < n; i += stride) {
            per_example[i] = example_gradients(m, batch[i], weight, losses[i]);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (std::size_t k = 0; k < nt; ++k) pool.emplace_back(work, k, nt);
    for (auto& th : pool) th.join();

    double loss_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        add_param_set(out.grads, per_example[i]);
        loss_sum += losses[i];
    }
    out.mean_loss = loss_sum * weight;
    return out;
}

void clip_gradients(ParamSet& grads, double clip_value) {
    if (!(clip_value > 0.0)) throw ValidationError("clip_gradients: clip_value must be > 0");
    for_each_matrix(grads, [clip_value](const std::string&, Matrix& m) {
        for (double& v : m.data()) v = std::clamp(v, -clip_value, clip_value);
    });
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr) {
    state.step += 1;
    const double b1c = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double b2c = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    std::vector<Matrix*> ps, ms, vs;
    for_each_matrix(params, [&ps](const std::string&, Matrix& m) { ps.push_back(&m); });
    for_each_matrix(state.m, [&ms](const std::string&, Matrix& m) { ms.push_back(&m); });
    for_each_matrix(state.v, [&vs](const std::string&, Matrix& m) { vs.push_back(&m); });
    std::size_t k = 0;
    for_each_matrix(grads, [&](const std::string& name, const Matrix& g) {
        Matrix& p = *ps[k];
        Matrix& mm = *ms[k];
        Matrix& vv = *vs[k];
        ++k;
        if (!p.same_shape(g)) {
            throw ShapeError("adam_step: gradient shape mismatch for " + name);
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g.data()[i];
            double& mi = mm.data()[i];
            double& vi = vv.data()[i];
            mi = state.beta1 * mi + (1.0 - state.beta1) * gi;
            vi = state.beta2 * vi + (1.0 - state.beta2) * gi * gi;
            const double mhat = mi / b1c;
            const double vhat = vi / b2c;
            p.data()[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    });
}

double lr_schedule(const TrainingConfig& config, std::size_t epoch) {
    const std::size_t k = epoch / config.decay_every;
    double lr = config.learning_rate;
    for (std::size_t i = 0; i < k; ++i) lr *= config.decay_factor;
    return lr;
}

TrainResult train(ModelParameters model, const std::vector<Example>& train_set,
                  const std::vector<Example>& val_set, const TrainingConfig& config,
                  const std::function<void(const EpochReport&)>& progress) {
    config.validate();
    model.validate();
    if (train_set.empty()) throw ValidationError("train: empty training set");

    SeededRng shuffle_rng(config.seed);
    AdamState adam = AdamState::init(model.params);

    TrainResult result;
    result.model = model; // returned as-is when max_epochs == 0
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double lr = lr_schedule(config, epoch);
        if (config.shuffle) shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<Example> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);

            BatchGradients bg = bptt_gradients(model, batch, config.threads);
            if (!std::isfinite(bg.mean_loss)) {
                throw DivergenceError("training diverged: non-finite loss at epoch " +
                                      std::to_string(epoch));
            }
            loss_sum += bg.mean_loss * static_cast<double>(batch.size());
            clip_gradients(bg.grads, config.clip_value);
            adam_step(model.params, bg.grads, adam, lr);
        }

        EpochReport report;
        report.epoch = epoch;
        report.learning_rate = lr;
        report.train_loss = loss_sum / static_cast<double>(train_set.size());

        EvalStats val = evaluate_set(model, val_set.empty() ? train_set : val_set,
                                     config.threads);
        report.val_loss = val.mean_loss;
        report.val_accuracy = val.accuracy;
        if (!std::isfinite(report.val_loss)) {
            throw DivergenceError("training diverged: non-finite validation loss at epoch " +
                                  std::to_string(epoch));
        }

        if (report.val_loss < best_val) {
            best_val = report.val_loss;
            result.model.params = model.params;
        }

        result.reports.push_back(report);
        if (progress) progress(report);
    }
    return result;
}

} // namespace dap
