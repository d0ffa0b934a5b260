#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dap/errors.hpp"
#include "dap/training.hpp"

#include "test_util.hpp"

using namespace dap;

namespace {

NetworkConfig tiny_config(std::size_t input, std::size_t hidden, std::size_t classes,
                          std::size_t window, bool bidirectional = true) {
    NetworkConfig cfg;
    cfg.input_size = input;
    cfg.hidden_size = hidden;
    cfg.num_classes = classes;
    cfg.window_length = window;
    cfg.architecture = bidirectional ? default_architecture() : unidirectional_architecture();
    return cfg;
}

// Two separable window patterns: class 1 rides a ramp, class 0 is flat
// noise around zero.
std::vector<Example> separable_examples(std::size_t count, std::size_t window,
                                        std::size_t features, std::uint64_t seed) {
    SeededRng rng(seed);
    std::vector<Example> out;
    for (std::size_t i = 0; i < count; ++i) {
        Example ex;
        ex.label = i % 2;
        ex.session_id = "synth";
        ex.window = Matrix(window, features);
        for (std::size_t t = 0; t < window; ++t) {
            for (std::size_t c = 0; c < features; ++c) {
                double v = 0.1 * rng.normal();
                if (ex.label == 1) {
                    v += 0.8 * static_cast<double>(t + 1) / static_cast<double>(window);
                }
                ex.window(t, c) = v;
            }
        }
        if (ex.label == 1) ex.time_to_event_s = 1.0;
        out.push_back(std::move(ex));
    }
    return out;
}

} // namespace

TEST_CASE("cross entropy: perfect, uniform, floored") {
    CHECK(cross_entropy_loss(Matrix{{1.0}, {0.0}}, 0) == 0.0);
    CHECK(cross_entropy_loss(Matrix{{0.5}, {0.5}}, 1) == doctest::Approx(std::log(2.0)));
    const double floored = cross_entropy_loss(Matrix{{1e-20}, {1.0}}, 0);
    CHECK(floored == doctest::Approx(std::log(1e12)));
    CHECK(std::isfinite(floored));
    CHECK_THROWS_AS(cross_entropy_loss(Matrix{{1.0}, {0.0}}, 2), ValidationError);
}

TEST_CASE("clip_gradients clamps element-wise") {
    ModelParameters m = ModelParameters::init(tiny_config(2, 3, 2, 4), 1, 0);
    ParamSet grads = zero_like(m.params);
    grads.w_out(0, 0) = 25.0;
    grads.w_out(1, 0) = -25.0;
    grads.w_out(0, 1) = 3.0;
    clip_gradients(grads, 10.0);
    CHECK(grads.w_out(0, 0) == 10.0);
    CHECK(grads.w_out(1, 0) == -10.0);
    CHECK(grads.w_out(0, 1) == 3.0);

    for (Matrix* g : test_util::matrices_of(grads)) {
        for (double& v : g->data()) v = 1e6;
    }
    clip_gradients(grads, 10.0);
    for (Matrix* g : test_util::matrices_of(grads)) {
        for (double v : g->data()) CHECK(v == 10.0);
    }

    SeededRng rng(8);
    for (Matrix* g : test_util::matrices_of(grads)) {
        for (double& v : g->data()) v = rng.uniform(-40.0, 40.0);
    }
    clip_gradients(grads, 10.0);
    for (Matrix* g : test_util::matrices_of(grads)) {
        for (double v : g->data()) CHECK(std::abs(v) <= 10.0);
    }
}

TEST_CASE("adam: zero gradient no-op, first-step magnitude, determinism") {
    ModelParameters m = ModelParameters::init(tiny_config(2, 3, 2, 4), 2, 0);

    ModelParameters before = m;
    AdamState st = AdamState::init(m.params);
    adam_step(m.params, zero_like(m.params), st, 1e-2);
    for (std::size_t i = 0; i < test_util::matrices_of(m.params).size(); ++i) {
        CHECK(*test_util::matrices_of(m.params)[i] == *test_util::matrices_of(before.params)[i]);
    }

    ParamSet ones = zero_like(m.params);
    for (Matrix* g : test_util::matrices_of(ones)) {
        for (double& v : g->data()) v = 1.0;
    }
    ModelParameters m2 = before;
    AdamState st2 = AdamState::init(m2.params);
    adam_step(m2.params, ones, st2, 1e-2);
    auto now = test_util::matrices_of(m2.params);
    auto was = test_util::matrices_of(before.params);
    for (std::size_t k = 0; k < now.size(); ++k) {
        for (std::size_t i = 0; i < now[k]->size(); ++i) {
            const double delta = was[k]->data()[i] - now[k]->data()[i];
            CHECK(std::abs(delta - 1e-2) < 1e-6);
        }
    }

    ModelParameters m3 = before;
    AdamState st3 = AdamState::init(m3.params);
    adam_step(m3.params, ones, st3, 1e-2);
    for (std::size_t k = 0; k < now.size(); ++k) {
        CHECK(*test_util::matrices_of(m3.params)[k] == *now[k]);
    }
}

TEST_CASE("lr schedule: exact paper values and interval constancy") {
    TrainingConfig cfg;
    CHECK(lr_schedule(cfg, 0) == 1e-2);
    CHECK(lr_schedule(cfg, 99) == 1e-2);
    CHECK(lr_schedule(cfg, 100) == 1e-3);
    CHECK(lr_schedule(cfg, 250) == 1e-4);

    for (std::size_t k = 0; k < 5; ++k) {
        const double at_start = lr_schedule(cfg, k * cfg.decay_every);
        for (std::size_t e = k * cfg.decay_every; e < (k + 1) * cfg.decay_every; e += 17) {
            CHECK(lr_schedule(cfg, e) == at_start);
        }
    }

    TrainingConfig flat;
    flat.decay_factor = 1.0;
    CHECK(lr_schedule(flat, 0) == lr_schedule(flat, 900));
}

TEST_CASE("bptt: saturated correct predictions give zero gradients") {
    ModelParameters m = ModelParameters::init(tiny_config(3, 3, 2, 5), 3, 0);
    // Drive the label-0 logit far enough that the other class underflows to
    // an exact zero probability.
    m.params.b_out(0, 0) = 600.0;
    m.params.b_out(1, 0) = -600.0;

    std::vector<Example> batch = separable_examples(4, 5, 3, 11);
    for (Example& ex : batch) ex.label = 0;

    BatchGradients bg = bptt_gradients(m, batch);
    CHECK(bg.mean_loss == 0.0);
    for (Matrix* g : test_util::matrices_of(bg.grads)) {
        for (double v : g->data()) CHECK(v == 0.0);
    }
}

TEST_CASE("bptt gradients match central finite differences on the full model") {
    for (bool bidirectional : {true, false}) {
        CAPTURE(bidirectional);
        ModelParameters m =
            ModelParameters::init(tiny_config(4, 3, 2, 5, bidirectional), 1234, 0);
        std::vector<Example> batch = separable_examples(3, 5, 4, 77);

        BatchGradients analytic = bptt_gradients(m, batch);
        auto mats = test_util::matrices_of(m.params);
        auto loss = [&]() { return bptt_gradients(m, batch).mean_loss; };
        auto numeric = test_util::numeric_gradients(mats, loss);

        auto analytic_mats = test_util::matrices_of(analytic.grads);
        REQUIRE(analytic_mats.size() == numeric.size());
        for (std::size_t k = 0; k < numeric.size(); ++k) {
            for (std::size_t i = 0; i < numeric[k].size(); ++i) {
                CAPTURE(k);
                CAPTURE(i);
                CHECK(test_util::grads_close(analytic_mats[k]->data()[i], numeric[k][i], 1e-5));
            }
        }
    }
}

TEST_CASE("bptt: duplicated batch leaves mean loss and gradients unchanged") {
    ModelParameters m = ModelParameters::init(tiny_config(3, 4, 2, 6), 5, 0);
    std::vector<Example> batch = separable_examples(4, 6, 3, 21);
    std::vector<Example> doubled;
    for (const Example& ex : batch) {
        doubled.push_back(ex);
        doubled.push_back(ex);
    }
    BatchGradients a = bptt_gradients(m, batch);
    BatchGradients b = bptt_gradients(m, doubled);
    CHECK(std::abs(a.mean_loss - b.mean_loss) < 1e-14);
    auto ga = test_util::matrices_of(a.grads);
    auto gb = test_util::matrices_of(b.grads);
    for (std::size_t k = 0; k < ga.size(); ++k) {
        for (std::size_t i = 0; i < ga[k]->size(); ++i) {
            const double x = ga[k]->data()[i], y = gb[k]->data()[i];
            CHECK(std::abs(x - y) <= 1e-14 * std::max(1.0, std::abs(x)));
        }
    }
}

TEST_CASE("bptt: thread count does not change the result") {
    ModelParameters m = ModelParameters::init(tiny_config(3, 4, 2, 6), 6, 0);
    std::vector<Example> batch = separable_examples(6, 6, 3, 22);
    BatchGradients seq = bptt_gradients(m, batch, 1);
    BatchGradients par = bptt_gradients(m, batch, 4);
    CHECK(seq.mean_loss == par.mean_loss);
    auto ga = test_util::matrices_of(seq.grads);
    auto gb = test_util::matrices_of(par.grads);
    for (std::size_t k = 0; k < ga.size(); ++k) CHECK(*ga[k] == *gb[k]);
}

TEST_CASE("train overfits a small separable set") {
    std::vector<Example> data = separable_examples(8, 10, 5, 31);
    ModelParameters m = ModelParameters::init(tiny_config(5, 8, 2, 10), 9, 0);

    TrainingConfig cfg;
    cfg.max_epochs = 200;
    cfg.batch_size = 4;
    cfg.seed = 13;

    TrainResult result = train(m, data, {}, cfg);
    REQUIRE(result.reports.size() == 200);
    CHECK(result.reports.back().train_loss < 1e-3);

    // Monotone trend: loss never increases across any 50-epoch span.
    for (std::size_t e = 0; e + 50 < result.reports.size(); ++e) {
        CHECK(result.reports[e + 50].train_loss <=
              result.reports[e].train_loss + 1e-9 * std::max(1.0, result.reports[e].train_loss));
    }
}

TEST_CASE("train is deterministic and honors max_epochs=0") {
    std::vector<Example> data = separable_examples(6, 6, 3, 41);
    std::vector<Example> val = separable_examples(4, 6, 3, 42);
    ModelParameters m = ModelParameters::init(tiny_config(3, 4, 2, 6), 10, 0);

    TrainingConfig cfg;
    cfg.max_epochs = 12;
    cfg.batch_size = 4;
    cfg.seed = 5;

    TrainResult a = train(m, data, val, cfg);
    TrainResult b = train(m, data, val, cfg);
    REQUIRE(a.reports.size() == b.reports.size());
    for (std::size_t i = 0; i < a.reports.size(); ++i) {
        CHECK(a.reports[i].train_loss == b.reports[i].train_loss);
        CHECK(a.reports[i].val_loss == b.reports[i].val_loss);
        CHECK(a.reports[i].val_accuracy == b.reports[i].val_accuracy);
        CHECK(a.reports[i].learning_rate == b.reports[i].learning_rate);
    }
    auto pa = test_util::matrices_of(a.model.params);
    auto pb = test_util::matrices_of(b.model.params);
    for (std::size_t k = 0; k < pa.size(); ++k) CHECK(*pa[k] == *pb[k]);

    TrainingConfig zero = cfg;
    zero.max_epochs = 0;
    TrainResult untouched = train(m, data, val, zero);
    CHECK(untouched.reports.empty());
    auto pu = test_util::matrices_of(untouched.model.params);
    auto pm = test_util::matrices_of(m.params);
    for (std::size_t k = 0; k < pu.size(); ++k) CHECK(*pu[k] == *pm[k]);

    CHECK_THROWS_AS(train(m, {}, val, cfg), ValidationError);
}

TEST_CASE("training config validation") {
    TrainingConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = TrainingConfig{};
    cfg.decay_factor = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = TrainingConfig{};
    cfg.clip_value = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
