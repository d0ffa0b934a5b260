#include "dap/cells.hpp"

#include <string>

#include "dap/errors.hpp"

namespace dap {

namespace {

void require_column(const Matrix& v, std::size_t len, const char* what) {
    if (v.cols() != 1 || v.rows() != len) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(len) +
                         "x1, got " + std::to_string(v.rows()) + "x" +
                         std::to_string(v.cols()));
    }
}

void require_gate_block(const Matrix& wx, const Matrix& wh, const Matrix& b, std::size_t hidden,
                        std::size_t input, const char* gate) {
    if (wx.rows() != hidden || wx.cols() != input || wh.rows() != hidden ||
        wh.cols() != hidden || b.rows() != hidden || b.cols() != 1) {
        throw ShapeError(std::string("cell params: inconsistent shapes in gate ") + gate);
    }
}

// Pre-activation for one gate: wx*x + wh*h + b.
Matrix gate_pre(const Matrix& wx, const Matrix& x, const Matrix& wh, const Matrix& h,
                const Matrix& b) {
    Matrix out = matmul(wx, x);
    add_in_place(out, matmul(wh, h));
    add_in_place(out, b);
    return out;
}

Matrix dsigmoid_from_value(const Matrix& s, const Matrix& upstream) {
    Matrix out = upstream;
    for (std::size_t k = 0; k < out.size(); ++k) {
        double v = s.data()[k];
        out.data()[k] *= v * (1.0 - v);
    }
    return out;
}

Matrix dtanh_from_value(const Matrix& t, const Matrix& upstream) {
    Matrix out = upstream;
    for (std::size_t k = 0; k < out.size(); ++k) {
        double v = t.data()[k];
        out.data()[k] *= 1.0 - v * v;
    }
    return out;
}

} // namespace

const char* cell_kind_name(CellKind kind) {
    switch (kind) {
    case CellKind::SimpleRnn: return "simple_rnn";
    case CellKind::Lstm: return "lstm";
    case CellKind::Gru: return "gru";
    }
    return "unknown";
}

SimpleRnnParams SimpleRnnParams::init(std::size_t hidden, std::size_t input, SeededRng& rng) {
    SimpleRnnParams p;
    p.w_xh = init_weights(hidden, input, InitScheme::UniformScaled, rng);
    p.w_hh = init_weights(hidden, hidden, InitScheme::UniformScaled, rng);
    p.b_h = Matrix(hidden, 1);
    return p;
}

SimpleRnnParams SimpleRnnParams::zeros(std::size_t hidden, std::size_t input) {
    return SimpleRnnParams{Matrix(hidden, input), Matrix(hidden, hidden), Matrix(hidden, 1)};
}

void SimpleRnnParams::validate() const {
    require_gate_block(w_xh, w_hh, b_h, hidden_size(), input_size(), "h");
}

LstmParams LstmParams::init(std::size_t hidden, std::size_t input, SeededRng& rng) {
    LstmParams p;
    auto w_in = [&] { return init_weights(hidden, input, InitScheme::UniformScaled, rng); };
    auto w_rec = [&] { return init_weights(hidden, hidden, InitScheme::UniformScaled, rng); };
    p.w_xi = w_in(); p.w_hi = w_rec(); p.b_i = Matrix(hidden, 1);
    p.w_xf = w_in(); p.w_hf = w_rec(); p.b_f = Matrix(hidden, 1);
    p.w_xo = w_in(); p.w_ho = w_rec(); p.b_o = Matrix(hidden, 1);
    p.w_xg = w_in(); p.w_hg = w_rec(); p.b_g = Matrix(hidden, 1);
    return p;
}

LstmParams LstmParams::zeros(std::size_t hidden, std::size_t input) {
    LstmParams p;
    p.w_xi = Matrix(hidden, input); p.w_hi = Matrix(hidden, hidden); p.b_i = Matrix(hidden, 1);
    p.w_xf = Matrix(hidden, input); p.w_hf = Matrix(hidden, hidden); p.b_f = Matrix(hidden, 1);
    p.w_xo = Matrix(hidden, input); p.w_ho = Matrix(hidden, hidden); p.b_o = Matrix(hidden, 1);
    p.w_xg = Matrix(hidden, input); p.w_hg = Matrix(hidden, hidden); p.b_g = Matrix(hidden, 1);
    return p;
}

void LstmParams::validate() const {
    std::size_t h = hidden_size(), n = input_size();
    require_gate_block(w_xi, w_hi, b_i, h, n, "i");
    require_gate_block(w_xf, w_hf, b_f, h, n, "f");
    require_gate_block(w_xo, w_ho, b_o, h, n, "o");
    require_gate_block(w_xg, w_hg, b_g, h, n, "g");
}

GruParams GruParams::init(std::size_t hidden, std::size_t input, SeededRng& rng) {
    GruParams p;
    auto w_in = [&] { return init_weights(hidden, input, InitScheme::UniformScaled, rng); };
    auto w_rec = [&] { return init_weights(hidden, hidden, InitScheme::UniformScaled, rng); };
    p.w_xz = w_in(); p.w_hz = w_rec(); p.b_z = Matrix(hidden, 1);
    p.w_xr = w_in(); p.w_hr = w_rec(); p.b_r = Matrix(hidden, 1);
    p.w_xh = w_in(); p.w_hh = w_rec(); p.b_h = Matrix(hidden, 1);
    return p;
}

GruParams GruParams::zeros(std::size_t hidden, std::size_t input) {
    GruParams p;
    p.w_xz = Matrix(hidden, input); p.w_hz = Matrix(hidden, hidden); p.b_z = Matrix(hidden, 1);
    p.w_xr = Matrix(hidden, input); p.w_hr = Matrix(hidden, hidden); p.b_r = Matrix(hidden, 1);
    p.w_xh = Matrix(hidden, input); p.w_hh = Matrix(hidden, hidden); p.b_h = Matrix(hidden, 1);
    return p;
}

void GruParams::validate() const {
    std::size_t h = hidden_size(), n = input_size();
    require_gate_block(w_xz, w_hz, b_z, h, n, "z");
    require_gate_block(w_xr, w_hr, b_r, h, n, "r");
    require_gate_block(w_xh, w_hh, b_h, h, n, "h~");
}

CellState CellState::zero(std::size_t hidden, CellKind kind) {
    CellState s;
    s.h = Matrix(hidden, 1);
    if (kind == CellKind::Lstm) s.c = Matrix(hidden, 1);
    return s;
}

std::pair<Matrix, CellTape> simple_rnn_step(const SimpleRnnParams& p, const Matrix& x,
                                            const Matrix& h_prev) {
    require_column(x, p.input_size(), "simple_rnn_step x");
    require_column(h_prev, p.hidden_size(), "simple_rnn_step h_prev");

    CellTape tape;
    tape.kind = CellKind::SimpleRnn;
    tape.x = x;
    tape.h_prev = h_prev;
    tape.h_new = tanh(gate_pre(p.w_xh, x, p.w_hh, h_prev, p.b_h));
    return {tape.h_new, tape};
}

std::pair<CellState, CellTape> lstm_step(const LstmParams& p, const Matrix& x,
                                         const CellState& state) {
    require_column(x, p.input_size(), "lstm_step x");
    require_column(state.h, p.hidden_size(), "lstm_step h");
    require_column(state.c, p.hidden_size(), "lstm_step c");

    CellTape tape;
    tape.kind = CellKind::Lstm;
    tape.x = x;
    tape.h_prev = state.h;
    tape.c_prev = state.c;
    tape.i = sigmoid(gate_pre(p.w_xi, x, p.w_hi, state.h, p.b_i));
    tape.f = sigmoid(gate_pre(p.w_xf, x, p.w_hf, state.h, p.b_f));
    tape.o = sigmoid(gate_pre(p.w_xo, x, p.w_ho, state.h, p.b_o));
    tape.g = tanh(gate_pre(p.w_xg, x, p.w_hg, state.h, p.b_g));
    tape.c_new = add(hadamard(tape.f, state.c), hadamard(tape.i, tape.g));
    tape.tanh_c = tanh(tape.c_new);
    tape.h_new = hadamard(tape.o, tape.tanh_c);

    CellState next;
    next.h = tape.h_new;
    next.c = tape.c_new;
    return {next, tape};
}

std::pair<Matrix, CellTape> gru_step(const GruParams& p, const Matrix& x, const Matrix& h_prev) {
    require_column(x, p.input_size(), "gru_step x");
    require_column(h_prev, p.hidden_size(), "gru_step h_prev");

    CellTape tape;
    tape.kind = CellKind::Gru;
    tape.x = x;
    tape.h_prev = h_prev;
    tape.z = sigmoid(gate_pre(p.w_xz, x, p.w_hz, h_prev, p.b_z));
    tape.r = sigmoid(gate_pre(p.w_xr, x, p.w_hr, h_prev, p.b_r));
    tape.rh = hadamard(tape.r, h_prev);
    Matrix pre = matmul(p.w_xh, x);
    add_in_place(pre, matmul(p.w_hh, tape.rh));
    add_in_place(pre, p.b_h);
    tape.h_cand = tanh(pre);
    // h' = (1-z) (.) h_prev + z (.) h_cand
    Matrix h_new = tape.h_prev;
    for (std::size_t k = 0; k < h_new.size(); ++k) {
        double zk = tape.z.data()[k];
        h_new.data()[k] = (1.0 - zk) * tape.h_prev.data()[k] + zk * tape.h_cand.data()[k];
    }
    tape.h_new = h_new;
    return {h_new, tape};
}

SimpleRnnBackward simple_rnn_backward(const SimpleRnnParams& p, const CellTape& tape,
                                      const Matrix& dh) {
    if (tape.kind != CellKind::SimpleRnn) {
        throw ShapeError("simple_rnn_backward: tape was not produced by simple_rnn_step");
    }
    require_column(dh, p.hidden_size(), "simple_rnn_backward dh");

    Matrix da = dtanh_from_value(tape.h_new, dh);
    SimpleRnnBackward out;
    out.grads.w_xh = outer(da, tape.x);
    out.grads.w_hh = outer(da, tape.h_prev);
    out.grads.b_h = da;
    out.dx = matmul_transposed_a(p.w_xh, da);
    out.dh_prev = matmul_transposed_a(p.w_hh, da);
    return out;
}

LstmBackward lstm_backward(const LstmParams& p, const CellTape& tape, const Matrix& dh,
                           const Matrix& dc) {
    if (tape.kind != CellKind::Lstm) {
        throw ShapeError("lstm_backward: tape was not produced by lstm_step");
    }
    require_column(dh, p.hidden_size(), "lstm_backward dh");
    require_column(dc, p.hidden_size(), "lstm_backward dc");

    // Total gradient on c_new: external dc plus the path through h = o (.) tanh(c).
    Matrix dc_total = add(dc, dtanh_from_value(tape.tanh_c, hadamard(dh, tape.o)));
    Matrix da_o = dsigmoid_from_value(tape.o, hadamard(dh, tape.tanh_c));
    Matrix da_f = dsigmoid_from_value(tape.f, hadamard(dc_total, tape.c_prev));
    Matrix da_i = dsigmoid_from_value(tape.i, hadamard(dc_total, tape.g));
    Matrix da_g = dtanh_from_value(tape.g, hadamard(dc_total, tape.i));

    LstmBackward out;
    out.grads.w_xi = outer(da_i, tape.x); out.grads.w_hi = outer(da_i, tape.h_prev);
    out.grads.b_i = da_i;
    out.grads.w_xf = outer(da_f, tape.x); out.grads.w_hf = outer(da_f, tape.h_prev);
    out.grads.b_f = da_f;
    out.grads.w_xo = outer(da_o, tape.x); out.grads.w_ho = outer(da_o, tape.h_prev);
    out.grads.b_o = da_o;
    out.grads.w_xg = outer(da_g, tape.x); out.grads.w_hg = outer(da_g, tape.h_prev);
    out.grads.b_g = da_g;

    out.dx = matmul_transposed_a(p.w_xi, da_i);
    add_in_place(out.dx, matmul_transposed_a(p.w_xf, da_f));
    add_in_place(out.dx, matmul_transposed_a(p.w_xo, da_o));
    add_in_place(out.dx, matmul_transposed_a(p.w_xg, da_g));

    out.dh_prev = matmul_transposed_a(p.w_hi, da_i);
    add_in_place(out.dh_prev, matmul_transposed_a(p.w_hf, da_f));
    add_in_place(out.dh_prev, matmul_transposed_a(p.w_ho, da_o));
    add_in_place(out.dh_prev, matmul_transposed_a(p.w_hg, da_g));

    out.dc_prev = hadamard(dc_total, tape.f);
    return out;
}

GruBackward gru_backward(const GruParams& p, const CellTape& tape, const Matrix& dh) {
    if (tape.kind != CellKind::Gru) {
        throw ShapeError("gru_backward: tape was not produced by gru_step");
    }
    require_column(dh, p.hidden_size(), "gru_backward dh");

    Matrix da_h = dtanh_from_value(tape.h_cand, hadamard(dh, tape.z));
    Matrix dz = dh;
    for (std::size_t k = 0; k < dz.size(); ++k) {
        dz.data()[k] *= tape.h_cand.data()[k] - tape.h_prev.data()[k];
    }
    Matrix da_z = dsigmoid_from_value(tape.z, dz);

    Matrix drh = matmul_transposed_a(p.w_hh, da_h);
    Matrix da_r = dsigmoid_from_value(tape.r, hadamard(drh, tape.h_prev));

    GruBackward out;
    out.grads.w_xz = outer(da_z, tape.x); out.grads.w_hz = outer(da_z, tape.h_prev);
    out.grads.b_z = da_z;
    out.grads.w_xr = outer(da_r, tape.x); out.grads.w_hr = outer(da_r, tape.h_prev);
    out.grads.b_r = da_r;
    out.grads.w_xh = outer(da_h, tape.x); out.grads.w_hh = outer(da_h, tape.rh);
    out.grads.b_h = da_h;

    out.dx = matmul_transposed_a(p.w_xz, da_z);
    add_in_place(out.dx, matmul_transposed_a(p.w_xr, da_r));
    add_in_place(out.dx, matmul_transposed_a(p.w_xh, da_h));

    // dh_prev: direct copy path (1-z), reset-gated candidate path, and both
    // gate pre-activation paths.
    out.dh_prev = dh;
    for (std::size_t k = 0; k < out.dh_prev.size(); ++k) {
        out.dh_prev.data()[k] *= 1.0 - tape.z.data()[k];
    }
    add_in_place(out.dh_prev, hadamard(drh, tape.r));
    add_in_place(out.dh_prev, matmul_transposed_a(p.w_hz, da_z));
    add_in_place(out.dh_prev, matmul_transposed_a(p.w_hr, da_r));
    return out;
}

CellKind cell_kind(const CellParams& p) {
    return std::visit(
        [](const auto& v) -> CellKind {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, SimpleRnnParams>) return CellKind::SimpleRnn;
            else if constexpr (std::is_same_v<T, LstmParams>) return CellKind::Lstm;
            else return CellKind::Gru;
        },
        p);
}

std::size_t cell_hidden_size(const CellParams& p) {
    return std::visit([](const auto& v) { return v.hidden_size(); }, p);
}

std::size_t cell_input_size(const CellParams& p) {
    return std::visit([](const auto& v) { return v.input_size(); }, p);
}

CellParams init_cell(CellKind kind, std::size_t hidden, std::size_t input, SeededRng& rng) {
    switch (kind) {
    case CellKind::SimpleRnn: return SimpleRnnParams::init(hidden, input, rng);
    case CellKind::Lstm: return LstmParams::init(hidden, input, rng);
    case CellKind::Gru: return GruParams::init(hidden, input, rng);
    }
    throw ValidationError("init_cell: unknown cell kind");
}

std::pair<CellState, CellTape> cell_step(const CellParams& p, const Matrix& x,
                                         const CellState& state) {
    if (const auto* rnn = std::get_if<SimpleRnnParams>(&p)) {
        auto [h, tape] = simple_rnn_step(*rnn, x, state.h);
        return {CellState{h, Matrix()}, std::move(tape)};
    }
    if (const auto* lstm = std::get_if<LstmParams>(&p)) {
        return lstm_step(*lstm, x, state);
    }
    auto [h, tape] = gru_step(std::get<GruParams>(p), x, state.h);
    return {CellState{h, Matrix()}, std::move(tape)};
}

CellBackwardResult cell_backward(const CellParams& p, const CellTape& tape,
                                 const StepGrad& grad_out) {
    if (cell_kind(p) != tape.kind) {
        throw ShapeError("cell_backward: tape kind does not match parameter kind");
    }
    CellBackwardResult out;
    if (const auto* rnn = std::get_if<SimpleRnnParams>(&p)) {
        auto r = simple_rnn_backward(*rnn, tape, grad_out.dh);
        out.param_grads = std::move(r.grads);
        out.dx = std::move(r.dx);
        out.dstate_prev.dh = std::move(r.dh_prev);
    } else if (const auto* lstm = std::get_if<LstmParams>(&p)) {
        Matrix dc = grad_out.dc.empty() ? Matrix(lstm->hidden_size(), 1) : grad_out.dc;
        auto r = lstm_backward(*lstm, tape, grad_out.dh, dc);
        out.param_grads = std::move(r.grads);
        out.dx = std::move(r.dx);
        out.dstate_prev.dh = std::move(r.dh_prev);
        out.dstate_prev.dc = std::move(r.dc_prev);
    } else {
        auto r = gru_backward(std::get<GruParams>(p), tape, grad_out.dh);
        out.param_grads = std::move(r.grads);
        out.dx = std::move(r.dx);
        out.dstate_prev.dh = std::move(r.dh_prev);
    }
    return out;
}

} // namespace dap
