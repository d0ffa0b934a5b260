#pragma once

#include <cstddef>
#include <utility>
#include <variant>

#include "dap/matrix.hpp"

namespace dap {

enum class CellKind { SimpleRnn, Lstm, Gru };

const char* cell_kind_name(CellKind kind);

struct SimpleRnnParams {
    Matrix w_xh; // hidden x input
    Matrix w_hh; // hidden x hidden
    Matrix b_h;  // hidden x 1

    std::size_t hidden_size() const { return w_xh.rows(); }
    std::size_t input_size() const { return w_xh.cols(); }
    static SimpleRnnParams init(std::size_t hidden, std::size_t input, SeededRng& rng);
    static SimpleRnnParams zeros(std::size_t hidden, std::size_t input);
    void validate() const;
};

// Standard LSTM without peepholes: input gate i, forget gate f, output
// gate o, candidate g.
struct LstmParams {
    Matrix w_xi, w_hi, b_i;
    Matrix w_xf, w_hf, b_f;
    Matrix w_xo, w_ho, b_o;
    Matrix w_xg, w_hg, b_g;

    std::size_t hidden_size() const { return w_xi.rows(); }
    std::size_t input_size() const { return w_xi.cols(); }
    static LstmParams init(std::size_t hidden, std::size_t input, SeededRng& rng);
    static LstmParams zeros(std::size_t hidden, std::size_t input);
    void validate() const;
};

// Standard GRU: update gate z, reset gate r, candidate state.
struct GruParams {
    Matrix w_xz, w_hz, b_z;
    Matrix w_xr, w_hr, b_r;
    Matrix w_xh, w_hh, b_h;

    std::size_t hidden_size() const { return w_xz.rows(); }
    std::size_t input_size() const { return w_xz.cols(); }
    static GruParams init(std::size_t hidden, std::size_t input, SeededRng& rng);
    static GruParams zeros(std::size_t hidden, std::size_t input);
    void validate() const;
};

struct CellState {
    Matrix h;
    Matrix c; // empty except for LSTM

    static CellState zero(std::size_t hidden, CellKind kind);
};

// Everything a forward step caches for the matching backward step.
struct CellTape {
    CellKind kind{};
    Matrix x, h_prev, c_prev;
    Matrix i, f, o, g;       // LSTM gates and candidate
    Matrix c_new, tanh_c;    // LSTM cell state and its tanh
    Matrix z, r, h_cand, rh; // GRU gates, candidate, r (.) h_prev
    Matrix h_new;
};

std::pair<Matrix, CellTape> simple_rnn_step(const SimpleRnnParams& p, const Matrix& x,
                                            const Matrix& h_prev);
std::pair<CellState, CellTape> lstm_step(const LstmParams& p, const Matrix& x,
                                         const CellState& state);
std::pair<Matrix, CellTape> gru_step(const GruParams& p, const Matrix& x, const Matrix& h_prev);

// Gradient of the step outputs. dh is required; dc only participates for
// LSTM (gradient flowing into this step's new cell state).
struct StepGrad {
    Matrix dh;
    Matrix dc;
};

struct SimpleRnnBackward {
    SimpleRnnParams grads;
    Matrix dx, dh_prev;
};
struct LstmBackward {
    LstmParams grads;
    Matrix dx, dh_prev, dc_prev;
};
struct GruBackward {
    GruParams grads;
    Matrix dx, dh_prev;
};

SimpleRnnBackward simple_rnn_backward(const SimpleRnnParams& p, const CellTape& tape,
                                      const Matrix& dh);
LstmBackward lstm_backward(const LstmParams& p, const CellTape& tape, const Matrix& dh,
                           const Matrix& dc);
GruBackward gru_backward(const GruParams& p, const CellTape& tape, const Matrix& dh);

// Kind-erased cell interface used by the generic layer/stack machinery.
using CellParams = std::variant<SimpleRnnParams, LstmParams, GruParams>;

struct CellBackwardResult {
    CellParams param_grads;
    Matrix dx;
    StepGrad dstate_prev;
};

CellKind cell_kind(const CellParams& p);
std::size_t cell_hidden_size(const CellParams& p);
std::size_t cell_input_size(const CellParams& p);
CellParams init_cell(CellKind kind, std::size_t hidden, std::size_t input, SeededRng& rng);
std::pair<CellState, CellTape> cell_step(const CellParams& p, const Matrix& x,
                                         const CellState& state);
CellBackwardResult cell_backward(const CellParams& p, const CellTape& tape,
                                 const StepGrad& grad_out);

} // namespace dap
