#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dap/example.hpp"
#include "dap/matrix.hpp"
#include "dap/rng.hpp"
#include "dap/schema.hpp"

namespace dap {

// Uniform frame grid: 10 Hz.
inline constexpr double kGridDt = 0.1;

// Timestamped samples at each channel's native rate.
struct SensorLog {
    std::string session_id;
    double duration_s = 0.0;
    // One series per schema channel, (timestamp_s, value), strictly
    // increasing timestamps.
    std::vector<std::vector<std::pair<double, double>>> samples;
};

// Uniform 10 Hz series of complete 50-dim frames.
struct FrameSeries {
    std::string session_id;
    Matrix frames; // frame_count x 50

    std::size_t frame_count() const { return frames.rows(); }
    double time_of(std::size_t idx) const { return static_cast<double>(idx) * kGridDt; }
};

enum class ActionClass : std::size_t {
    Braking = 0,
    LaneChangeLeft,
    LaneChangeRight,
    TurnLeft,
    TurnRight,
};
inline constexpr std::size_t kNumActionClasses = 5;

const char* action_class_name(ActionClass a);
ActionClass action_class_from_name(const std::string& name);

struct ActionEvent {
    enum class Source { Recognizer, GroundTruth };

    ActionClass action{};
    double onset_s = 0.0;
    Source source = Source::Recognizer;
};

// Threshold rules for the rule-based onset recognizer: braking from brake
// pressure, turns from sustained signed steering angle, lane changes from
// the corresponding lane offset crossing zero.
struct RecognizerRules {
    double brake_threshold = 0.5;
    double steer_threshold = 0.5;
    double steer_sustain_s = 0.3; // exceedance must persist this long
    double refractory_s = 2.0;    // predicate must be false this long before an onset
};

// Rising-edge onset detection over the recognition channels. Events are
// returned sorted by onset time; an empty list is a valid result.
std::vector<ActionEvent> recognize_actions(
    const FrameSeries& series, const RecognizerRules& rules,
    const FeatureSchema& schema = FeatureSchema::standard());

// A prediction task: which action classes count as positive. Label 0 is
// always the negative class; positive classes take labels 1..N in order.
struct TaskSpec {
    std::string name;
    std::vector<ActionClass> positive_classes;
    double balance_ratio = 1.5;

    static TaskSpec braking();
    static TaskSpec lane_change();
    static TaskSpec turns();
    static TaskSpec by_name(const std::string& name);
    static const std::vector<std::string>& task_names();

    std::size_t num_classes() const { return positive_classes.size() + 1; }
    std::vector<std::string> class_names() const;
    std::optional<std::size_t> label_of(ActionClass a) const;
};

struct WindowingConfig {
    double horizon_s = 5.0;         // d
    std::size_t window_frames = 50; // T
    std::size_t stride_frames = 5;
    // Windows ending inside [onset, onset + exec_exclusion_s] of any event
    // are dropped from both classes.
    double exec_exclusion_s = 2.0;

    void validate() const;
};

// 10 Hz resampling: float channels are linearly interpolated (and linearly
// extrapolated at the edges), factor channels repeat the nearest past value.
FrameSeries resample(const SensorLog& log,
                     const FeatureSchema& schema = FeatureSchema::standard());

// Sliding labeled windows per the horizon rule: a window ending at t is
// positive for the nearest upcoming task event with t_a - d <= t < t_a.
std::vector<Example> build_examples(const FrameSeries& series,
                                    std::span<const ActionEvent> events, const TaskSpec& task,
                                    const WindowingConfig& cfg);

// Uniform negative subsampling to ceil(ratio * positives); positives are
// never dropped.
std::vector<Example> balance_classes(std::vector<Example> examples, const TaskSpec& task,
                                     SeededRng& rng);

struct SplitFractions {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;

    void validate() const;
};

struct DatasetSplit {
    std::vector<Example> train, val, test;
};

// Session-level partition (all windows of a session land in one split) with
// example counts matched to the fractions as closely as session granularity
// allows.
DatasetSplit split_dataset(std::vector<Example> examples, const SplitFractions& fractions,
                           SeededRng& rng);

// --- session / example-set files -----------------------------------------

void write_session_file(const SensorLog& log, const std::string& path,
                        const FeatureSchema& schema = FeatureSchema::standard());
SensorLog read_session_file(const std::string& path,
                            const FeatureSchema& schema = FeatureSchema::standard());

struct ExampleSet {
    std::string task;
    std::vector<std::string> class_names;
    double horizon_s = 5.0;
    std::size_t window_frames = 50;
    std::size_t stride_frames = 5;
    std::uint64_t seed = 0;
    std::uint64_t schema_hash = 0;
    std::size_t feature_count = 50;
    std::vector<Example> examples;
};

void write_example_set(const ExampleSet& set, const std::string& path);
ExampleSet read_example_set(const std::string& path);

} // namespace dap
