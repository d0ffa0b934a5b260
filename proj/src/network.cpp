#include "dap/network.hpp"

#include <fstream>

#include <json.hpp>

#include "dap/errors.hpp"

namespace dap {

namespace {

constexpr int kModelFormatVersion = 1;
constexpr const char* kModelFormatName = "dap-model";

CellKind cell_kind_from_name(const std::string& name) {
    if (name == "simple_rnn") return CellKind::SimpleRnn;
    if (name == "lstm") return CellKind::Lstm;
    if (name == "gru") return CellKind::Gru;
    throw ValidationError("unknown cell kind '" + name + "'");
}

void require_window(const ModelParameters& m, const Matrix& window) {
    if (window.rows() != m.config.window_length || window.cols() != m.config.input_size) {
        throw ShapeError("window shape " + std::to_string(window.rows()) + "x" +
                         std::to_string(window.cols()) + " does not match model T=" +
                         std::to_string(m.config.window_length) +
                         ", input=" + std::to_string(m.config.input_size));
    }
    if (!window.is_finite()) {
        throw ValidationError("window contains non-finite values");
    }
}

ForwardTrace forward_impl(const ModelParameters& m, const Matrix& window) {
    require_window(m, window);
    const std::size_t steps = m.config.window_length;
    const std::size_t hidden = m.config.hidden_size;
    const bool bi = m.config.bidirectional();

    std::vector<Matrix> frames;
    frames.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) frames.push_back(window.row_as_column(t));

    ForwardTrace trace;
    trace.fwd_tapes.reserve(steps);
    trace.h_fwd.reserve(steps);

    CellState state = CellState::zero(hidden, CellKind::Lstm);
    for (std::size_t t = 0; t < steps; ++t) {
        auto [next, tape] = lstm_step(m.params.fwd_lstm, frames[t], state);
        state = std::move(next);
        trace.h_fwd.push_back(state.h);
        trace.fwd_tapes.push_back(std::move(tape));
    }

    if (bi) {
        trace.bwd_tapes.reserve(steps);
        trace.h_bwd.assign(steps, Matrix());
        CellState bstate = CellState::zero(hidden, CellKind::Lstm);
        for (std::size_t s = 0; s < steps; ++s) {
            const std::size_t t = steps - 1 - s;
            auto [next, tape] = lstm_step(*m.params.bwd_lstm, frames[t], bstate);
            bstate = std::move(next);
            trace.h_bwd[t] = bstate.h;
            trace.bwd_tapes.push_back(std::move(tape));
        }
    }

    trace.gru_tapes.reserve(steps);
    trace.h_gru.reserve(steps);
    Matrix gh(hidden, 1);
    for (std::size_t t = 0; t < steps; ++t) {
        Matrix input = bi ? vconcat(trace.h_fwd[t], trace.h_bwd[t]) : trace.h_fwd[t];
        auto [h, tape] = gru_step(m.params.gru, input, gh);
        gh = std::move(h);
        trace.h_gru.push_back(gh);
        trace.gru_tapes.push_back(std::move(tape));
    }

    trace.logits = add(matmul(m.params.w_out, trace.h_gru.back()), m.params.b_out);
    trace.probs = softmax(trace.logits);
    return trace;
}

} // namespace

std::vector<LayerSpec> default_architecture() {
    return {{CellKind::Lstm, true}, {CellKind::Gru, false}};
}

std::vector<LayerSpec> unidirectional_architecture() {
    return {{CellKind::Lstm, false}, {CellKind::Gru, false}};
}

bool NetworkConfig::bidirectional() const {
    return !architecture.empty() && architecture.front().bidirectional;
}

std::size_t NetworkConfig::gru_input_size() const {
    return bidirectional() ? 2 * hidden_size : hidden_size;
}

void NetworkConfig::validate() const {
    if (num_classes < 2) throw ValidationError("config: num_classes must be >= 2");
    if (hidden_size < 1) throw ValidationError("config: hidden_size must be >= 1");
    if (window_length < 1) throw ValidationError("config: window_length must be >= 1");
    if (input_size < 1) throw ValidationError("config: input_size must be >= 1");
    if (architecture != default_architecture() &&
        architecture != unidirectional_architecture()) {
        throw ValidationError(
            "config: trainable model supports only the LSTM(+backward)->GRU architecture");
    }
}

ParamSet zero_like(const ParamSet& shape) {
    ParamSet out;
    out.fwd_lstm = LstmParams::zeros(shape.fwd_lstm.hidden_size(), shape.fwd_lstm.input_size());
    if (shape.bwd_lstm) {
        out.bwd_lstm =
            LstmParams::zeros(shape.bwd_lstm->hidden_size(), shape.bwd_lstm->input_size());
    }
    out.gru = GruParams::zeros(shape.gru.hidden_size(), shape.gru.input_size());
    out.w_out = Matrix(shape.w_out.rows(), shape.w_out.cols());
    out.b_out = Matrix(shape.b_out.rows(), shape.b_out.cols());
    return out;
}

ModelParameters ModelParameters::init(const NetworkConfig& config, std::uint64_t seed,
                                      std::uint64_t schema_hash) {
    config.validate();
    SeededRng rng(seed);
    ModelParameters m;
    m.config = config;
    m.seed = seed;
    m.schema_hash = schema_hash;
    m.params.fwd_lstm = LstmParams::init(config.hidden_size, config.input_size, rng);
    if (config.bidirectional()) {
        m.params.bwd_lstm = LstmParams::init(config.hidden_size, config.input_size, rng);
    }
    m.params.gru = GruParams::init(config.hidden_size, config.gru_input_size(), rng);
    m.params.w_out =
        init_weights(config.num_classes, config.hidden_size, InitScheme::UniformScaled, rng);
    m.params.b_out = Matrix(config.num_classes, 1);
    return m;
}

void ModelParameters::validate() const {
    config.validate();
    params.fwd_lstm.validate();
    if (params.fwd_lstm.hidden_size() != config.hidden_size ||
        params.fwd_lstm.input_size() != config.input_size) {
        throw ValidationError("model: forward LSTM shapes do not match config");
    }
    if (config.bidirectional()) {
        if (!params.bwd_lstm) {
            throw ValidationError("model: bidirectional config but backward LSTM missing");
        }
        params.bwd_lstm->validate();
        if (params.bwd_lstm->hidden_size() != config.hidden_size ||
            params.bwd_lstm->input_size() != config.input_size) {
            throw ValidationError("model: backward LSTM shapes do not match config");
        }
    } else if (params.bwd_lstm) {
        throw ValidationError("model: unidirectional config but backward LSTM present");
    }
    params.gru.validate();
    if (params.gru.hidden_size() != config.hidden_size ||
        params.gru.input_size() != config.gru_input_size()) {
        throw ValidationError("model: GRU input dimension must be " +
                              std::to_string(config.gru_input_size()) + ", got " +
                              std::to_string(params.gru.input_size()));
    }
    if (params.w_out.rows() != config.num_classes || params.w_out.cols() != config.hidden_size ||
        params.b_out.rows() != config.num_classes || params.b_out.cols() != 1) {
        throw ValidationError("model: output layer shapes do not match config");
    }
}

ForwardTrace dbrnn_forward(const ModelParameters& m, const Matrix& window) {
    if (!m.config.bidirectional()) {
        throw ValidationError("dbrnn_forward: model is unidirectional");
    }
    return forward_impl(m, window);
}

ForwardTrace dbrnn_forward_unidirectional(const ModelParameters& m, const Matrix& window) {
    if (m.config.bidirectional()) {
        throw ValidationError("dbrnn_forward_unidirectional: model is bidirectional");
    }
    return forward_impl(m, window);
}

Matrix predict_probs(const ModelParameters& m, const Matrix& window) {
    return forward_impl(m, window).probs;
}

std::vector<Matrix> brnn_layer_forward(const CellParams& fwd_cell, const CellParams& bwd_cell,
                                       std::span<const Matrix> frames) {
    if (frames.empty()) throw ShapeError("brnn_layer_forward: empty sequence");
    if (cell_hidden_size(fwd_cell) != cell_hidden_size(bwd_cell)) {
        throw ShapeError("brnn_layer_forward: forward/backward hidden sizes differ");
    }
    const std::size_t steps = frames.size();

    std::vector<Matrix> h_fwd(steps), h_bwd(steps);
    CellState state = CellState::zero(cell_hidden_size(fwd_cell), cell_kind(fwd_cell));
    for (std::size_t t = 0; t < steps; ++t) {
        auto [next, tape] = cell_step(fwd_cell, frames[t], state);
        state = std::move(next);
        h_fwd[t] = state.h;
    }
    state = CellState::zero(cell_hidden_size(bwd_cell), cell_kind(bwd_cell));
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = steps - 1 - s;
        auto [next, tape] = cell_step(bwd_cell, frames[t], state);
        state = std::move(next);
        h_bwd[t] = state.h;
    }

    std::vector<Matrix> out;
    out.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) out.push_back(vconcat(h_fwd[t], h_bwd[t]));
    return out;
}

std::vector<Matrix> layer_forward(const Layer& layer, std::span<const Matrix> frames) {
    if (layer.backward) return brnn_layer_forward(layer.forward, *layer.backward, frames);
    if (frames.empty()) throw ShapeError("layer_forward: empty sequence");
    std::vector<Matrix> out;
    out.reserve(frames.size());
    CellState state = CellState::zero(cell_hidden_size(layer.forward), cell_kind(layer.forward));
    for (const Matrix& x : frames) {
        auto [next, tape] = cell_step(layer.forward, x, state);
        state = std::move(next);
        out.push_back(state.h);
    }
    return out;
}

std::vector<Matrix> deep_stack_forward(std::span<const Layer> layers,
                                       std::span<const Matrix> frames) {
    if (layers.empty()) throw ShapeError("deep_stack_forward: no layers");
    std::vector<Matrix> seq(frames.begin(), frames.end());
    for (const Layer& layer : layers) {
        seq = layer_forward(layer, seq);
    }
    return seq;
}

void save_model(const ModelParameters& m, const std::string& path) {
    m.validate();
    nlohmann::json doc;
    doc["format"] = kModelFormatName;
    doc["version"] = kModelFormatVersion;
    doc["seed"] = m.seed;
    doc["schema_hash"] = m.schema_hash;

    nlohmann::json cfg;
    cfg["input_size"] = m.config.input_size;
    cfg["hidden_size"] = m.config.hidden_size;
    cfg["num_classes"] = m.config.num_classes;
    cfg["window_length"] = m.config.window_length;
    nlohmann::json arch = nlohmann::json::array();
    for (const LayerSpec& spec : m.config.architecture) {
        arch.push_back({{"cell", cell_kind_name(spec.kind)},
                        {"bidirectional", spec.bidirectional}});
    }
    cfg["architecture"] = arch;
    doc["config"] = cfg;

    nlohmann::json mats = nlohmann::json::array();
    for_each_matrix(m.params, [&mats](const std::string& name, const Matrix& mat) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["rows"] = mat.rows();
        entry["cols"] = mat.cols();
        entry["data"] = std::vector<double>(mat.data().begin(), mat.data().end());
        mats.push_back(std::move(entry));
    });
    doc["matrices"] = std::move(mats);

    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << doc.dump(1) << "\n";
    if (!out) throw IoError("write failed for '" + path + "'");
}

ModelParameters load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FileFormatError("corrupt model file '" + path + "': " + e.what());
    }

    try {
        if (!doc.contains("format") || doc["format"] != kModelFormatName) {
            throw FileFormatError("'" + path + "' is not a model file");
        }
        if (doc["version"].get<int>() != kModelFormatVersion) {
            throw VersionError("model file '" + path + "' has version " +
                               doc["version"].dump() + ", expected " +
                               std::to_string(kModelFormatVersion));
        }

        ModelParameters m;
        m.seed = doc["seed"].get<std::uint64_t>();
        m.schema_hash = doc["schema_hash"].get<std::uint64_t>();
        const auto& cfg = doc["config"];
        m.config.input_size = cfg["input_size"].get<std::size_t>();
        m.config.hidden_size = cfg["hidden_size"].get<std::size_t>();
        m.config.num_classes = cfg["num_classes"].get<std::size_t>();
        m.config.window_length = cfg["window_length"].get<std::size_t>();
        m.config.architecture.clear();
        for (const auto& spec : cfg["architecture"]) {
            m.config.architecture.push_back(
                {cell_kind_from_name(spec["cell"].get<std::string>()),
                 spec["bidirectional"].get<bool>()});
        }

        m.params.fwd_lstm = LstmParams::zeros(m.config.hidden_size, m.config.input_size);
        if (m.config.bidirectional()) {
            m.params.bwd_lstm = LstmParams::zeros(m.config.hidden_size, m.config.input_size);
        }
        m.params.gru = GruParams::zeros(m.config.hidden_size, m.config.gru_input_size());
        m.params.w_out = Matrix(m.config.num_classes, m.config.hidden_size);
        m.params.b_out = Matrix(m.config.num_classes, 1);

        std::size_t consumed = 0;
        const auto& mats = doc["matrices"];
        for_each_matrix(m.params, [&](const std::string& name, Matrix& mat) {
            if (consumed >= mats.size()) {
                throw ValidationError("model file '" + path + "' is missing matrix '" + name +
                                      "'");
            }
            const auto& entry = mats[consumed++];
            if (entry["name"].get<std::string>() != name) {
                throw ValidationError("model file '" + path + "': expected matrix '" + name +
                                      "', found '" + entry["name"].get<std::string>() + "'");
            }
            std::size_t rows = entry["rows"].get<std::size_t>();
            std::size_t cols = entry["cols"].get<std::size_t>();
            auto data = entry["data"].get<std::vector<double>>();
            if (data.size() != rows * cols) {
                throw ValidationError("model file '" + path + "': matrix '" + name +
                                      "' declares " + std::to_string(rows * cols) +
                                      " values but carries " + std::to_string(data.size()));
            }
            mat = Matrix(rows, cols, std::move(data));
        });
        if (consumed != mats.size()) {
            throw ValidationError("model file '" + path + "' has extra matrices");
        }

        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FileFormatError("corrupt model file '" + path + "': " + e.what());
    }
}

} // namespace dap
