#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dap/cells.hpp"
#include "dap/errors.hpp"

#include "oracle.hpp"
#include "test_util.hpp"

using namespace dap;

namespace {

Matrix random_col(std::size_t n, SeededRng& rng) {
    return test_util::random_matrix(n, 1, rng);
}

} // namespace

TEST_CASE("simple rnn step: zero params, identity reduction, oracle match") {
    SeededRng rng(21);

    SimpleRnnParams zero = SimpleRnnParams::zeros(3, 2);
    auto [h0, tape0] = simple_rnn_step(zero, random_col(2, rng), random_col(3, rng));
    for (double v : h0.data()) CHECK(v == 0.0);

    SimpleRnnParams ident = SimpleRnnParams::zeros(1, 1);
    ident.w_xh(0, 0) = 1.0;
    auto [h1, tape1] = simple_rnn_step(ident, Matrix{{0.5}}, Matrix{{0.0}});
    CHECK(h1(0, 0) == doctest::Approx(std::tanh(0.5)).epsilon(1e-15));

    SimpleRnnParams p = SimpleRnnParams::init(4, 3, rng);
    p.b_h = random_col(4, rng);
    Matrix x = random_col(3, rng);
    Matrix h_prev = random_col(4, rng);
    auto [h, tape] = simple_rnn_step(p, x, h_prev);
    oracle::Vec ref = oracle::simple_rnn(p, oracle::col(x), oracle::col(h_prev));
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(h(i, 0) - ref[i]) <= 1e-12);

    CHECK_THROWS_AS(simple_rnn_step(p, random_col(2, rng), h_prev), ShapeError);
}

TEST_CASE("lstm step: forced zeros, saturation passthrough, oracle match") {
    SeededRng rng(22);

    LstmParams zero = LstmParams::zeros(3, 2);
    auto [s0, t0] = lstm_step(zero, random_col(2, rng), CellState::zero(3, CellKind::Lstm));
    for (double v : s0.h.data()) CHECK(v == 0.0);
    for (double v : s0.c.data()) CHECK(v == 0.0);
    for (double v : t0.i.data()) CHECK(v == 0.5);
    for (double v : t0.f.data()) CHECK(v == 0.5);
    for (double v : t0.g.data()) CHECK(v == 0.0);

    // Saturated forget gate, closed input gate: the cell state passes
    // through to within one rounding of each element.
    LstmParams gate = LstmParams::zeros(3, 2);
    for (double& v : gate.b_f.data()) v = 1e9;
    for (double& v : gate.b_i.data()) v = -1e9;
    CellState state = CellState::zero(3, CellKind::Lstm);
    state.c = Matrix{{0.7}, {-1.3}, {2.9}};
    auto [s1, t1] = lstm_step(gate, random_col(2, rng), state);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(s1.c(i, 0) - state.c(i, 0)) <=
              4.4e-16 * std::abs(state.c(i, 0)));
    }

    LstmParams p = LstmParams::init(4, 3, rng);
    Matrix x = random_col(3, rng);
    CellState st;
    st.h = random_col(4, rng);
    st.c = random_col(4, rng);
    auto [s2, t2] = lstm_step(p, x, st);
    auto [href, cref] = oracle::lstm(p, oracle::col(x), oracle::col(st.h), oracle::col(st.c));
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(s2.h(i, 0) - href[i]) <= 1e-12);
        CHECK(std::abs(s2.c(i, 0) - cref[i]) <= 1e-12);
    }
}

TEST_CASE("gru step: forced zeros, update-gate copy limit, oracle match") {
    SeededRng rng(23);

    GruParams zero = GruParams::zeros(3, 2);
    auto [h0, t0] = gru_step(zero, random_col(2, rng), Matrix(3, 1));
    for (double v : h0.data()) CHECK(v == 0.0);

    GruParams copy = GruParams::zeros(3, 2);
    for (double& v : copy.b_z.data()) v = -1e9;
    Matrix h_prev{{0.4}, {-0.9}, {0.2}};
    auto [h1, t1] = gru_step(copy, random_col(2, rng), h_prev);
    CHECK(h1 == h_prev);

    GruParams p = GruParams::init(4, 3, rng);
    Matrix x = random_col(3, rng);
    Matrix h = random_col(4, rng);
    auto [h2, t2] = gru_step(p, x, h);
    oracle::Vec ref = oracle::gru(p, oracle::col(x), oracle::col(h));
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(h2(i, 0) - ref[i]) <= 1e-12);
}

TEST_CASE("hidden outputs stay bounded by 1 in magnitude") {
    SeededRng rng(24);
    for (int trial = 0; trial < 20; ++trial) {
        LstmParams lp = LstmParams::init(5, 4, rng);
        GruParams gp = GruParams::init(5, 4, rng);
        Matrix x = test_util::random_matrix(4, 1, rng, -50.0, 50.0);
        CellState st;
        st.h = test_util::random_matrix(5, 1, rng, -1.0, 1.0);
        st.c = test_util::random_matrix(5, 1, rng, -30.0, 30.0);
        auto [ls, lt] = lstm_step(lp, x, st);
        for (double v : ls.h.data()) CHECK(std::abs(v) <= 1.0);
        auto [gh, gt] = gru_step(gp, x, st.h);
        for (double v : gh.data()) CHECK(std::abs(v) <= 1.0);
    }
}

TEST_CASE("forward determinism") {
    SeededRng rng(25);
    LstmParams p = LstmParams::init(4, 3, rng);
    Matrix x = random_col(3, rng);
    CellState st;
    st.h = random_col(4, rng);
    st.c = random_col(4, rng);
    auto [a, ta] = lstm_step(p, x, st);
    auto [b, tb] = lstm_step(p, x, st);
    CHECK(a.h == b.h);
    CHECK(a.c == b.c);
}

namespace {

// Loss = sum(U (.) h_out) (+ sum(V (.) c_out) for LSTM), a fixed linear
// functional of the step outputs so that the analytic backward pass with
// upstream (U, V) must match finite differences of the loss.
template <class Params, class Forward>
void check_param_gradients(Params params, Forward&& forward, const Matrix& upstream_h,
                           const Matrix& upstream_c, const std::vector<Matrix>& analytic,
                           double rel_tol) {
    auto mats = test_util::matrices_of(params);
    auto loss = [&]() {
        auto [h, c] = forward(params);
        double acc = 0.0;
        for (std::size_t i = 0; i < h.size(); ++i) acc += upstream_h.data()[i] * h.data()[i];
        if (!c.empty()) {
            for (std::size_t i = 0; i < c.size(); ++i) {
                acc += upstream_c.data()[i] * c.data()[i];
            }
        }
        return acc;
    };
    auto numeric = test_util::numeric_gradients(mats, loss);
    REQUIRE(numeric.size() == analytic.size());
    for (std::size_t m = 0; m < numeric.size(); ++m) {
        REQUIRE(analytic[m].size() == numeric[m].size());
        for (std::size_t i = 0; i < numeric[m].size(); ++i) {
            CAPTURE(m);
            CAPTURE(i);
            CHECK(test_util::grads_close(analytic[m].data()[i], numeric[m][i], rel_tol));
        }
    }
}

std::vector<Matrix> copy_mats(std::vector<Matrix*> ptrs) {
    std::vector<Matrix> out;
    for (Matrix* p : ptrs) out.push_back(*p);
    return out;
}

} // namespace

TEST_CASE("lstm backward matches central finite differences") {
    SeededRng rng(31);
    LstmParams p = LstmParams::init(3, 2, rng);
    Matrix x = random_col(2, rng);
    CellState st;
    st.h = random_col(3, rng);
    st.c = random_col(3, rng);
    Matrix uh = random_col(3, rng);
    Matrix uc = random_col(3, rng);

    auto [out, tape] = lstm_step(p, x, st);
    LstmBackward back = lstm_backward(p, tape, uh, uc);

    check_param_gradients(
        p,
        [&](LstmParams& q) {
            auto [s, t] = lstm_step(q, x, st);
            return std::make_pair(s.h, s.c);
        },
        uh, uc, copy_mats(test_util::matrices_of(back.grads)), 1e-6);

    // Input and previous-state gradients through the same functional.
    Matrix x_var = x;
    auto input_loss = [&]() {
        auto [s, t] = lstm_step(p, x_var, st);
        double acc = 0.0;
        for (std::size_t i = 0; i < s.h.size(); ++i) acc += uh.data()[i] * s.h.data()[i];
        for (std::size_t i = 0; i < s.c.size(); ++i) acc += uc.data()[i] * s.c.data()[i];
        return acc;
    };
    auto num_x = test_util::numeric_gradients({&x_var}, input_loss);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(test_util::grads_close(back.dx.data()[i], num_x[0][i], 1e-6));
    }

    CellState st_var = st;
    auto state_loss = [&]() {
        auto [s, t] = lstm_step(p, x, st_var);
        double acc = 0.0;
        for (std::size_t i = 0; i < s.h.size(); ++i) acc += uh.data()[i] * s.h.data()[i];
        for (std::size_t i = 0; i < s.c.size(); ++i) acc += uc.data()[i] * s.c.data()[i];
        return acc;
    };
    auto num_h = test_util::numeric_gradients({&st_var.h, &st_var.c}, state_loss);
    for (std::size_t i = 0; i < st.h.size(); ++i) {
        CHECK(test_util::grads_close(back.dh_prev.data()[i], num_h[0][i], 1e-6));
        CHECK(test_util::grads_close(back.dc_prev.data()[i], num_h[1][i], 1e-6));
    }

    // Shape contract.
    CHECK(back.dx.rows() == x.rows());
    CHECK(back.grads.w_xi.same_shape(p.w_xi));
    CHECK(back.grads.b_g.same_shape(p.b_g));
}

TEST_CASE("gru backward matches central finite differences") {
    SeededRng rng(32);
    GruParams p = GruParams::init(3, 2, rng);
    Matrix x = random_col(2, rng);
    Matrix h_prev = random_col(3, rng);
    Matrix uh = random_col(3, rng);

    auto [h, tape] = gru_step(p, x, h_prev);
    GruBackward back = gru_backward(p, tape, uh);

    check_param_gradients(
        p,
        [&](GruParams& q) {
            auto [hh, t] = gru_step(q, x, h_prev);
            return std::make_pair(hh, Matrix());
        },
        uh, Matrix(), copy_mats(test_util::matrices_of(back.grads)), 1e-6);

    Matrix x_var = x;
    Matrix h_var = h_prev;
    auto loss_x = [&]() {
        auto [hh, t] = gru_step(p, x_var, h_prev);
        double acc = 0.0;
        for (std::size_t i = 0; i < hh.size(); ++i) acc += uh.data()[i] * hh.data()[i];
        return acc;
    };
    auto num_x = test_util::numeric_gradients({&x_var}, loss_x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(test_util::grads_close(back.dx.data()[i], num_x[0][i], 1e-6));
    }
    auto loss_h = [&]() {
        auto [hh, t] = gru_step(p, x, h_var);
        double acc = 0.0;
        for (std::size_t i = 0; i < hh.size(); ++i) acc += uh.data()[i] * hh.data()[i];
        return acc;
    };
    auto num_h = test_util::numeric_gradients({&h_var}, loss_h);
    for (std::size_t i = 0; i < h_prev.size(); ++i) {
        CHECK(test_util::grads_close(back.dh_prev.data()[i], num_h[0][i], 1e-6));
    }
}

TEST_CASE("simple rnn backward matches central finite differences") {
    SeededRng rng(33);
    SimpleRnnParams p = SimpleRnnParams::init(4, 3, rng);
    Matrix x = random_col(3, rng);
    Matrix h_prev = random_col(4, rng);
    Matrix uh = random_col(4, rng);

    auto [h, tape] = simple_rnn_step(p, x, h_prev);
    SimpleRnnBackward back = simple_rnn_backward(p, tape, uh);

    check_param_gradients(
        p,
        [&](SimpleRnnParams& q) {
            auto [hh, t] = simple_rnn_step(q, x, h_prev);
            return std::make_pair(hh, Matrix());
        },
        uh, Matrix(), copy_mats(test_util::matrices_of(back.grads)), 1e-6);
}

TEST_CASE("zero upstream gradient produces zero gradients") {
    SeededRng rng(34);
    LstmParams p = LstmParams::init(3, 2, rng);
    Matrix x = random_col(2, rng);
    CellState st;
    st.h = random_col(3, rng);
    st.c = random_col(3, rng);
    auto [s, tape] = lstm_step(p, x, st);
    LstmBackward back = lstm_backward(p, tape, Matrix(3, 1), Matrix(3, 1));
    for (Matrix* m : test_util::matrices_of(back.grads)) {
        for (double v : m->data()) CHECK(v == 0.0);
    }
    for (double v : back.dx.data()) CHECK(v == 0.0);
    for (double v : back.dh_prev.data()) CHECK(v == 0.0);
    for (double v : back.dc_prev.data()) CHECK(v == 0.0);
}

TEST_CASE("cell_backward rejects mismatched tapes") {
    SeededRng rng(35);
    GruParams gp = GruParams::init(3, 2, rng);
    LstmParams lp = LstmParams::init(3, 2, rng);
    auto [h, tape] = gru_step(gp, random_col(2, rng), random_col(3, rng));
    CellParams wrong = lp;
    StepGrad up;
    up.dh = random_col(3, rng);
    CHECK_THROWS_AS(cell_backward(wrong, tape, up), ShapeError);
    CellParams right = gp;
    CHECK_NOTHROW(cell_backward(right, tape, up));
}

TEST_CASE("variant cell_step agrees with the typed steps") {
    SeededRng rng(36);
    LstmParams lp = LstmParams::init(3, 2, rng);
    Matrix x = random_col(2, rng);
    CellState st = CellState::zero(3, CellKind::Lstm);
    auto [typed, tape] = lstm_step(lp, x, st);
    CellParams v = lp;
    auto [erased, tape2] = cell_step(v, x, st);
    CHECK(typed.h == erased.h);
    CHECK(typed.c == erased.c);
}
