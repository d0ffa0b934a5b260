// dap: driver action prediction toolkit command line.
//
// Subcommands cover the full pipeline: synth (generate driving logs),
// prepare (resample, recognize onsets, build labeled windows, balance,
// split), train, eval (piecewise time-to-event metrics), predict (slide a
// model over a session), inspect (model summary). Every run writes a
// manifest next to its outputs; progress goes to stderr, data to files.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dap/datapipe.hpp"
#include "dap/errors.hpp"
#include "dap/evaluation.hpp"
#include "dap/network.hpp"
#include "dap/synthgen.hpp"
#include "dap/text_format.hpp"
#include "dap/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

class ManifestWriter {
public:
    explicit ManifestWriter(std::string subcommand)
        : start_(std::chrono::steady_clock::now()) {
        doc_["tool"] = "dap";
        doc_["tool_version"] = kToolVersion;
        doc_["subcommand"] = std::move(subcommand);
    }

    json& config() { return doc_["config"]; }
    void add_input(const std::string& path) { doc_["inputs"].push_back(path); }
    void add_output(const std::string& path) { doc_["outputs"].push_back(path); }
    void set_seed(std::uint64_t seed) { doc_["seed"] = seed; }

    void write(const fs::path& path) {
        const auto elapsed = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - start_)
                                 .count();
        doc_["wall_clock_s"] = elapsed;
        std::ofstream out(path);
        if (!out) throw dap::IoError("cannot write manifest '" + path.string() + "'");
        out << doc_.dump(1) << "\n";
    }

private:
    json doc_;
    std::chrono::steady_clock::time_point start_;
};

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec && !fs::is_directory(dir)) {
        throw dap::IoError("cannot create directory '" + dir.string() + "'");
    }
}

std::vector<fs::path> session_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw dap::IoError("'" + dir.string() + "' is not a directory");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".session") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw dap::IoError("no .session files found in '" + dir.string() + "'");
    }
    return files;
}

struct SynthArgs {
    std::string out;
    dap::ScenarioConfig cfg;
    int driver = -1;
};

int run_synth(const SynthArgs& args) {
    ManifestWriter manifest("synth");
    ensure_dir(args.out);

    dap::SynthResult result = args.driver >= 0
        ? dap::generate_driver_variant(args.cfg, static_cast<std::uint32_t>(args.driver))
        : dap::generate(args.cfg);

    for (const dap::SensorLog& log : result.logs) {
        fs::path path = fs::path(args.out) / (log.session_id + ".session");
        dap::write_session_file(log, path.string());
        manifest.add_output(path.string());
        std::fprintf(stderr, "synth: wrote %s\n", path.string().c_str());
    }
    fs::path truth_path = fs::path(args.out) / "truth.txt";
    dap::write_truth_file(result.truth, truth_path.string());
    manifest.add_output(truth_path.string());

    auto& cfg = manifest.config();
    cfg["sessions"] = args.cfg.num_sessions;
    cfg["minutes"] = args.cfg.session_minutes;
    cfg["noise_std"] = args.cfg.noise_std;
    cfg["precursor_lead_s"] = args.cfg.precursor_lead_s;
    cfg["lead_jitter_s"] = args.cfg.lead_jitter_s;
    cfg["min_gap_s"] = args.cfg.min_gap_s;
    cfg["precursor_amp"] = args.cfg.precursor_amp;
    cfg["rates"] = {{"braking", args.cfg.rate_braking},
                    {"lane_change_left", args.cfg.rate_lane_change_left},
                    {"lane_change_right", args.cfg.rate_lane_change_right},
                    {"turn_left", args.cfg.rate_turn_left},
                    {"turn_right", args.cfg.rate_turn_right}};
    if (args.driver >= 0) cfg["driver"] = args.driver;
    manifest.set_seed(args.cfg.seed);
    manifest.write(fs::path(args.out) / "manifest_synth.json");
    return 0;
}

struct PrepareArgs {
    std::string data;
    std::string out;
    std::string task = "all";
    std::uint64_t seed = 0;
    dap::WindowingConfig windowing;
    double ratio = 1.5;
    std::string split = "0.7,0.15,0.15";
};

dap::SplitFractions parse_split(const std::string& text) {
    auto fail = [&] {
        throw dap::ValidationError("--split expects three comma-separated fractions, got '" +
                                   text + "'");
    };
    std::vector<double> parts;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos
                                                                      : comma - pos);
        if (tok.empty()) fail();
        parts.push_back(dap::parse_double(tok, "--split"));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (parts.size() != 3) fail();
    dap::SplitFractions fractions{parts[0], parts[1], parts[2]};
    fractions.validate();
    return fractions;
}

int run_prepare(const PrepareArgs& args) {
    ManifestWriter manifest("prepare");
    ensure_dir(args.out);
    const dap::SplitFractions fractions = parse_split(args.split);
    args.windowing.validate();

    std::vector<std::string> tasks;
    if (args.task == "all") {
        tasks = dap::TaskSpec::task_names();
    } else {
        tasks = {dap::TaskSpec::by_name(args.task).name};
    }

    // One resample+recognize pass shared by all tasks.
    std::vector<dap::FrameSeries> series;
    std::vector<std::vector<dap::ActionEvent>> events;
    for (const fs::path& file : session_files(args.data)) {
        manifest.add_input(file.string());
        dap::SensorLog log = dap::read_session_file(file.string());
        series.push_back(dap::resample(log));
        events.push_back(dap::recognize_actions(series.back(), dap::RecognizerRules{}));
        std::fprintf(stderr, "prepare: %s -> %zu frames, %zu events\n",
                     file.filename().string().c_str(), series.back().frame_count(),
                     events.back().size());
    }

    dap::SeededRng master(args.seed);
    json counts = json::object();
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        dap::TaskSpec task = dap::TaskSpec::by_name(tasks[ti]);
        task.balance_ratio = args.ratio;

        std::vector<dap::Example> pool;
        for (std::size_t s = 0; s < series.size(); ++s) {
            auto built = dap::build_examples(series[s], events[s], task, args.windowing);
            for (auto& ex : built) pool.push_back(std::move(ex));
        }

        dap::SeededRng balance_rng = master.derive(2 * ti);
        pool = dap::balance_classes(std::move(pool), task, balance_rng);
        dap::SeededRng split_rng = master.derive(2 * ti + 1);
        dap::DatasetSplit split = dap::split_dataset(std::move(pool), fractions, split_rng);

        auto write_part = [&](const char* part, std::vector<dap::Example>& examples) {
            dap::ExampleSet set;
            set.task = task.name;
            set.class_names = task.class_names();
            set.horizon_s = args.windowing.horizon_s;
            set.window_frames = args.windowing.window_frames;
            set.stride_frames = args.windowing.stride_frames;
            set.seed = args.seed;
            set.schema_hash = dap::FeatureSchema::standard().hash();
            set.feature_count = dap::FeatureSchema::standard().size();
            set.examples = std::move(examples);
            fs::path path = fs::path(args.out) / (task.name + "_" + part + ".examples");
            dap::write_example_set(set, path.string());
            manifest.add_output(path.string());
            counts[task.name][part] = set.examples.size();
            std::fprintf(stderr, "prepare: wrote %s (%zu examples)\n", path.string().c_str(),
                         set.examples.size());
        };
        write_part("train", split.train);
        write_part("val", split.val);
        write_part("test", split.test);
    }

    auto& cfg = manifest.config();
    cfg["task"] = args.task;
    cfg["horizon_s"] = args.windowing.horizon_s;
    cfg["window_frames"] = args.windowing.window_frames;
    cfg["stride_frames"] = args.windowing.stride_frames;
    cfg["exec_exclusion_s"] = args.windowing.exec_exclusion_s;
    cfg["ratio"] = args.ratio;
    cfg["split"] = args.split;
    cfg["counts"] = counts;
    manifest.set_seed(args.seed);
    manifest.write(fs::path(args.out) / "manifest_prepare.json");
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::string task;
    std::string arch = "bi";
    std::size_t hidden = 64;
    dap::TrainingConfig cfg;
};

int run_train(const TrainArgs& args) {
    ManifestWriter manifest("train");
    ensure_dir(args.out);
    args.cfg.validate();

    const fs::path train_path = fs::path(args.data) / (args.task + "_train.examples");
    const fs::path val_path = fs::path(args.data) / (args.task + "_val.examples");
    manifest.add_input(train_path.string());
    manifest.add_input(val_path.string());

    dap::ExampleSet train_set = dap::read_example_set(train_path.string());
    dap::ExampleSet val_set = dap::read_example_set(val_path.string());
    if (train_set.schema_hash != val_set.schema_hash ||
        train_set.window_frames != val_set.window_frames ||
        train_set.class_names != val_set.class_names) {
        throw dap::ValidationError("train and validation sets disagree on schema or shape");
    }

    dap::NetworkConfig net;
    net.input_size = train_set.feature_count;
    net.hidden_size = args.hidden;
    net.num_classes = train_set.class_names.size();
    net.window_length = train_set.window_frames;
    net.architecture = args.arch == "uni" ? dap::unidirectional_architecture()
                                          : dap::default_architecture();

    dap::ModelParameters model =
        dap::ModelParameters::init(net, args.cfg.seed, train_set.schema_hash);

    const fs::path log_path =
        fs::path(args.out) / ("train_log_" + args.task + "_" + args.arch + ".csv");
    std::ofstream log(log_path);
    if (!log) throw dap::IoError("cannot write '" + log_path.string() + "'");
    log << "epoch,train_loss,val_loss,val_accuracy,learning_rate\n";

    dap::TrainResult result = dap::train(
        model, train_set.examples, val_set.examples, args.cfg,
        [&log](const dap::EpochReport& r) {
            log << r.epoch << ',' << dap::format_double(r.train_loss) << ','
                << dap::format_double(r.val_loss) << ','
                << dap::format_double(r.val_accuracy) << ','
                << dap::format_double(r.learning_rate) << '\n';
            std::fprintf(stderr, "epoch %zu: train %.4f val %.4f acc %.3f lr %g\n", r.epoch,
                         r.train_loss, r.val_loss, r.val_accuracy, r.learning_rate);
        });

    const fs::path model_path =
        fs::path(args.out) / ("model_" + args.task + "_" + args.arch + ".json");
    dap::save_model(result.model, model_path.string());
    manifest.add_output(model_path.string());
    manifest.add_output(log_path.string());

    auto& cfg = manifest.config();
    cfg["task"] = args.task;
    cfg["arch"] = args.arch;
    cfg["hidden"] = args.hidden;
    cfg["learning_rate"] = args.cfg.learning_rate;
    cfg["decay_factor"] = args.cfg.decay_factor;
    cfg["decay_every"] = args.cfg.decay_every;
    cfg["max_epochs"] = args.cfg.max_epochs;
    cfg["clip_value"] = args.cfg.clip_value;
    cfg["batch_size"] = args.cfg.batch_size;
    cfg["threads"] = args.cfg.threads;
    manifest.set_seed(args.cfg.seed);
    manifest.write(fs::path(args.out) / ("manifest_train_" + args.task + "_" + args.arch +
                                         ".json"));
    return 0;
}

struct EvalArgs {
    std::vector<std::string> models;
    std::string examples;
    std::string out;
    double bin_width = 0.5;
    double margin = 0.02;
    std::size_t threads = 0;
};

int run_eval(const EvalArgs& args) {
    ManifestWriter manifest("eval");
    ensure_dir(args.out);
    manifest.add_input(args.examples);

    dap::ExampleSet test_set = dap::read_example_set(args.examples);
    std::vector<dap::PiecewiseMetrics> metrics;
    for (const std::string& model_path : args.models) {
        manifest.add_input(model_path);
        dap::ModelParameters model = dap::load_model(model_path);
        metrics.push_back(dap::piecewise_eval(model, test_set, args.bin_width, args.threads));

        fs::path csv = fs::path(args.out) /
                       ("metrics_" + fs::path(model_path).stem().string() + ".csv");
        dap::write_metrics_csv(metrics.back(), csv.string());
        manifest.add_output(csv.string());
        std::fprintf(stderr, "eval: %s accuracy %.4f\n", model_path.c_str(),
                     metrics.back().aggregate.accuracy);
    }

    if (metrics.size() == 2) {
        dap::CompareReport report = dap::compare_curves(metrics[0], metrics[1], args.margin);
        fs::path csv = fs::path(args.out) / "compare.csv";
        dap::write_compare_csv(report, csv.string());
        manifest.add_output(csv.string());
    }

    auto& cfg = manifest.config();
    cfg["bin_width_s"] = args.bin_width;
    cfg["margin"] = args.margin;
    manifest.set_seed(test_set.seed);
    manifest.write(fs::path(args.out) / "manifest_eval.json");
    return 0;
}

struct PredictArgs {
    std::string model;
    std::string session;
    std::string out;
    std::size_t stride = 5;
};

int run_predict(const PredictArgs& args) {
    ManifestWriter manifest("predict");
    manifest.add_input(args.model);
    manifest.add_input(args.session);

    dap::ModelParameters model = dap::load_model(args.model);
    dap::SensorLog log = dap::read_session_file(args.session);
    dap::FrameSeries series = dap::resample(log);

    const std::size_t T = model.config.window_length;
    const std::size_t F = model.config.input_size;
    if (series.frames.cols() != F) {
        throw dap::ValidationError("session has " + std::to_string(series.frames.cols()) +
                                   " channels, model expects " + std::to_string(F));
    }
    if (series.frame_count() < T) {
        throw dap::ValidationError("session '" + args.session + "' has " +
                                   std::to_string(series.frame_count()) +
                                   " frames, shorter than the model window " +
                                   std::to_string(T));
    }
    if (args.stride == 0) throw dap::ValidationError("--stride must be >= 1");

    std::ofstream out(args.out);
    if (!out) throw dap::IoError("cannot write '" + args.out + "'");
    out << "t_s,class";
    for (std::size_t c = 0; c < model.config.num_classes; ++c) out << ",p" << c;
    out << "\n";

    std::size_t rows = 0;
    for (std::size_t e = T - 1; e < series.frame_count(); e += args.stride) {
        dap::Matrix window(T, F);
        for (std::size_t r = 0; r < T; ++r)
            for (std::size_t c = 0; c < F; ++c) window(r, c) = series.frames(e - (T - 1) + r, c);
        dap::Matrix probs = dap::predict_probs(model, window);
        out << dap::format_double(series.time_of(e)) << ',' << dap::classify(probs);
        for (double p : probs.data()) out << ',' << dap::format_double(p);
        out << '\n';
        ++rows;
    }
    std::fprintf(stderr, "predict: wrote %zu rows\n", rows);
    manifest.add_output(args.out);
    auto& cfg = manifest.config();
    cfg["stride_frames"] = args.stride;
    manifest.set_seed(model.seed);
    manifest.write(args.out + ".manifest.json");
    return 0;
}

int run_inspect(const std::string& model_path) {
    dap::ModelParameters model = dap::load_model(model_path);
    std::printf("model: %s\n", model_path.c_str());
    std::printf("  seed: %llu\n", static_cast<unsigned long long>(model.seed));
    std::printf("  schema_hash: %llu\n", static_cast<unsigned long long>(model.schema_hash));
    std::printf("  input_size: %zu\n", model.config.input_size);
    std::printf("  hidden_size: %zu\n", model.config.hidden_size);
    std::printf("  num_classes: %zu\n", model.config.num_classes);
    std::printf("  window_length: %zu\n", model.config.window_length);
    std::printf("  architecture:");
    for (const dap::LayerSpec& spec : model.config.architecture) {
        std::printf(" %s%s", spec.bidirectional ? "bi-" : "", dap::cell_kind_name(spec.kind));
    }
    std::printf("\n");
    std::size_t params = 0;
    dap::for_each_matrix(model.params, [&params](const std::string&, const dap::Matrix& m) {
        params += m.size();
    });
    std::printf("  parameters: %zu\n", params);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"driver action prediction toolkit"};
    app.require_subcommand(1);

    SynthArgs synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate synthetic driving sessions");
    synth_cmd->add_option("--out", synth.out, "output directory")->required();
    synth_cmd->add_option("--sessions", synth.cfg.num_sessions, "number of sessions")
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--minutes", synth.cfg.session_minutes, "session length in minutes")
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth.cfg.seed, "master seed");
    synth_cmd->add_option("--noise", synth.cfg.noise_std, "baseline noise std")
        ->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--lead", synth.cfg.precursor_lead_s, "precursor lead seconds")
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--lead-jitter", synth.cfg.lead_jitter_s,
                          "uniform +/- jitter on the lead");
    synth_cmd->add_option("--amp", synth.cfg.precursor_amp, "precursor amplitude");
    synth_cmd->add_option("--min-gap", synth.cfg.min_gap_s, "minimum gap between events");
    synth_cmd->add_option("--rate-braking", synth.cfg.rate_braking, "braking events/min");
    synth_cmd->add_option("--rate-lane-left", synth.cfg.rate_lane_change_left,
                          "left lane changes/min");
    synth_cmd->add_option("--rate-lane-right", synth.cfg.rate_lane_change_right,
                          "right lane changes/min");
    synth_cmd->add_option("--rate-turn-left", synth.cfg.rate_turn_left, "left turns/min");
    synth_cmd->add_option("--rate-turn-right", synth.cfg.rate_turn_right, "right turns/min");
    synth_cmd->add_option("--driver", synth.driver, "driver variant id (>= 0)");

    PrepareArgs prepare;
    CLI::App* prepare_cmd =
        app.add_subcommand("prepare", "build labeled example sets from sessions");
    prepare_cmd->add_option("--data", prepare.data, "directory of .session files")->required();
    prepare_cmd->add_option("--out", prepare.out, "output directory")->required();
    prepare_cmd->add_option("--task", prepare.task, "braking|lane_change|turns|all");
    prepare_cmd->add_option("--seed", prepare.seed, "seed for balancing and splitting");
    prepare_cmd->add_option("--horizon", prepare.windowing.horizon_s,
                            "prediction horizon d in seconds")
        ->check(CLI::PositiveNumber);
    prepare_cmd->add_option("--window", prepare.windowing.window_frames,
                            "window length T in frames")
        ->check(CLI::PositiveNumber);
    prepare_cmd->add_option("--stride", prepare.windowing.stride_frames, "stride in frames")
        ->check(CLI::PositiveNumber);
    prepare_cmd->add_option("--exec-exclusion", prepare.windowing.exec_exclusion_s,
                            "post-onset exclusion zone in seconds");
    prepare_cmd->add_option("--ratio", prepare.ratio, "negatives kept per positive")
        ->check(CLI::PositiveNumber);
    prepare_cmd->add_option("--split", prepare.split, "train,val,test fractions");

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model on prepared examples");
    train_cmd->add_option("--data", train_args.data, "directory of .examples files")
        ->required();
    train_cmd->add_option("--out", train_args.out, "output directory")->required();
    train_cmd->add_option("--task", train_args.task, "braking|lane_change|turns")->required();
    train_cmd->add_option("--arch", train_args.arch, "bi|uni")
        ->check(CLI::IsMember({"bi", "uni"}));
    train_cmd->add_option("--hidden", train_args.hidden, "hidden units per cell")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", train_args.cfg.seed, "training seed");
    train_cmd->add_option("--lr", train_args.cfg.learning_rate, "learning rate")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--decay", train_args.cfg.decay_factor, "learning rate decay factor");
    train_cmd->add_option("--decay-every", train_args.cfg.decay_every, "epochs between decays")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--epochs", train_args.cfg.max_epochs, "maximum epochs");
    train_cmd->add_option("--clip", train_args.cfg.clip_value, "gradient clip value")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch", train_args.cfg.batch_size, "batch size")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--threads", train_args.cfg.threads,
                          "per-batch worker threads (0 = hardware)");

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "piecewise time-to-event evaluation");
    eval_cmd->add_option("--model", eval_args.models, "model file (repeat to compare two)")
        ->required()
        ->expected(1, 2);
    eval_cmd->add_option("--examples", eval_args.examples, "test example-set file")
        ->required();
    eval_cmd->add_option("--out", eval_args.out, "output directory")->required();
    eval_cmd->add_option("--bin-width", eval_args.bin_width, "time-to-event bin width seconds")
        ->check(CLI::PositiveNumber);
    eval_cmd->add_option("--margin", eval_args.margin, "comparison margin");
    eval_cmd->add_option("--threads", eval_args.threads, "evaluation threads (0 = hardware)");

    PredictArgs predict_args;
    CLI::App* predict_cmd =
        app.add_subcommand("predict", "slide a model over one session file");
    predict_cmd->add_option("--model", predict_args.model, "model file")->required();
    predict_cmd->add_option("--session", predict_args.session, "session file")->required();
    predict_cmd->add_option("--out", predict_args.out, "destination csv")->required();
    predict_cmd->add_option("--stride", predict_args.stride, "stride in frames")
        ->check(CLI::PositiveNumber);

    std::string inspect_model;
    CLI::App* inspect_cmd = app.add_subcommand("inspect", "print a model summary");
    inspect_cmd->add_option("--model", inspect_model, "model file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth_cmd->parsed()) return run_synth(synth);
        if (prepare_cmd->parsed()) return run_prepare(prepare);
        if (train_cmd->parsed()) return run_train(train_args);
        if (eval_cmd->parsed()) return run_eval(eval_args);
        if (predict_cmd->parsed()) return run_predict(predict_args);
        if (inspect_cmd->parsed()) return run_inspect(inspect_model);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "dap: error: %s\n", e.what());
        return 1;
    }
    return 0;
}
