#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dap/cells.hpp"
#include "dap/matrix.hpp"

namespace dap {

struct LayerSpec {
    CellKind kind{};
    bool bidirectional = false;

    bool operator==(const LayerSpec&) const = default;
};

// The two architectures the trainable model supports: a bidirectional LSTM
// feeding a unidirectional GRU (default), or the ablation with the backward
// LSTM removed.
std::vector<LayerSpec> default_architecture();
std::vector<LayerSpec> unidirectional_architecture();

struct NetworkConfig {
    std::size_t input_size = 50;
    std::size_t hidden_size = 64;
    std::size_t num_classes = 2;
    std::size_t window_length = 50; // T
    std::vector<LayerSpec> architecture = default_architecture();

    bool bidirectional() const;
    // GRU input width: 2*hidden for the bidirectional stack, hidden otherwise.
    std::size_t gru_input_size() const;
    void validate() const;

    bool operator==(const NetworkConfig&) const = default;
};

struct ParamSet {
    LstmParams fwd_lstm;
    std::optional<LstmParams> bwd_lstm;
    GruParams gru;
    Matrix w_out; // num_classes x hidden
    Matrix b_out; // num_classes x 1
};

// Visit every matrix in a fixed, documented order. Adam state, clipping,
// serialization and the finite-difference harness all rely on this order
// being stable.
template <class ParamSetT, class Fn>
void for_each_matrix(ParamSetT& p, Fn&& fn) {
    auto lstm_block = [&fn](auto& lstm, const std::string& prefix) {
        fn(prefix + ".w_xi", lstm.w_xi); fn(prefix + ".w_hi", lstm.w_hi);
        fn(prefix + ".b_i", lstm.b_i);
        fn(prefix + ".w_xf", lstm.w_xf); fn(prefix + ".w_hf", lstm.w_hf);
        fn(prefix + ".b_f", lstm.b_f);
        fn(prefix + ".w_xo", lstm.w_xo); fn(prefix + ".w_ho", lstm.w_ho);
        fn(prefix + ".b_o", lstm.b_o);
        fn(prefix + ".w_xg", lstm.w_xg); fn(prefix + ".w_hg", lstm.w_hg);
        fn(prefix + ".b_g", lstm.b_g);
    };
    lstm_block(p.fwd_lstm, "fwd_lstm");
    if (p.bwd_lstm) lstm_block(*p.bwd_lstm, "bwd_lstm");
    fn("gru.w_xz", p.gru.w_xz); fn("gru.w_hz", p.gru.w_hz); fn("gru.b_z", p.gru.b_z);
    fn("gru.w_xr", p.gru.w_xr); fn("gru.w_hr", p.gru.w_hr); fn("gru.b_r", p.gru.b_r);
    fn("gru.w_xh", p.gru.w_xh); fn("gru.w_hh", p.gru.w_hh); fn("gru.b_h", p.gru.b_h);
    fn("out.w", p.w_out);
    fn("out.b", p.b_out);
}

ParamSet zero_like(const ParamSet& shape);

struct ModelParameters {
    ParamSet params;
    NetworkConfig config;
    std::uint64_t seed = 0;
    std::uint64_t schema_hash = 0;

    static ModelParameters init(const NetworkConfig& config, std::uint64_t seed,
                                std::uint64_t schema_hash);
    void validate() const;
};

// Per-window forward cache: tapes for BPTT plus the per-frame hidden
// sequences. Backward-LSTM tapes are stored in processing order (step s
// consumed frame T-1-s); the hidden sequences are indexed by frame.
struct ForwardTrace {
    std::vector<CellTape> fwd_tapes;
    std::vector<CellTape> bwd_tapes;
    std::vector<CellTape> gru_tapes;
    std::vector<Matrix> h_fwd;
    std::vector<Matrix> h_bwd;
    std::vector<Matrix> h_gru;
    Matrix logits;
    Matrix probs;
};

// Full forward pass over one T x input_size window (rows are frames in
// chronological order). Classification happens at the final timestep of the
// GRU sequence.
ForwardTrace dbrnn_forward(const ModelParameters& m, const Matrix& window);
// Same pipeline with the backward LSTM removed; requires a unidirectional
// model.
ForwardTrace dbrnn_forward_unidirectional(const ModelParameters& m, const Matrix& window);
// Probabilities only.
Matrix predict_probs(const ModelParameters& m, const Matrix& window);

// Generic composition machinery for configurations beyond the default
// three-cell system.
struct Layer {
    CellParams forward;
    std::optional<CellParams> backward;
};

std::vector<Matrix> brnn_layer_forward(const CellParams& fwd_cell, const CellParams& bwd_cell,
                                       std::span<const Matrix> frames);
std::vector<Matrix> layer_forward(const Layer& layer, std::span<const Matrix> frames);
std::vector<Matrix> deep_stack_forward(std::span<const Layer> layers,
                                       std::span<const Matrix> frames);

void save_model(const ModelParameters& m, const std::string& path);
ModelParameters load_model(const std::string& path);

} // namespace dap
