#include "dap/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "dap/errors.hpp"
#include "dap/text_format.hpp"

namespace dap {

namespace {

constexpr const char* kSessionMagic = "dap-session-v1";
constexpr const char* kExamplesMagic = "dap-examples-v1";

std::size_t steps_of(double seconds, const char* what) {
    double steps = seconds / kGridDt;
    auto rounded = std::llround(steps);
    if (rounded < 0 || std::abs(steps - static_cast<double>(rounded)) > 1e-6) {
        throw ValidationError(std::string(what) + " must be a non-negative multiple of " +
                              format_double(kGridDt) + " s, got " + format_double(seconds));
    }
    return static_cast<std::size_t>(rounded);
}

// Index of the last sample with timestamp <= t (plus a small slack for grid
// arithmetic); -1 when t precedes every sample.
std::ptrdiff_t last_at_or_before(const std::vector<std::pair<double, double>>& s, double t) {
    auto it = std::upper_bound(s.begin(), s.end(), t + 1e-9,
                               [](double value, const std::pair<double, double>& sample) {
                                   return value < sample.first;
                               });
    return static_cast<std::ptrdiff_t>(it - s.begin()) - 1;
}

double interpolate_float(const std::vector<std::pair<double, double>>& s, double t) {
    if (s.size() == 1) return s.front().second;
    std::ptrdiff_t i = last_at_or_before(s, t);
    // Clamp to the first/last segment: inside the support this interpolates,
    // outside it extrapolates linearly from the edge segment.
    if (i < 0) i = 0;
    if (i >= static_cast<std::ptrdiff_t>(s.size()) - 1) {
        i = static_cast<std::ptrdiff_t>(s.size()) - 2;
    }
    const auto& [t0, v0] = s[static_cast<std::size_t>(i)];
    const auto& [t1, v1] = s[static_cast<std::size_t>(i) + 1];
    return v0 + (v1 - v0) * ((t - t0) / (t1 - t0));
}

double nearest_past_factor(const std::vector<std::pair<double, double>>& s, double t) {
    std::ptrdiff_t i = last_at_or_before(s, t);
    if (i < 0) i = 0; // before the first sample: backfill with it
    return s[static_cast<std::size_t>(i)].second;
}

struct EventIndex {
    std::size_t onset_idx;
    ActionClass action;
};

} // namespace

const char* action_class_name(ActionClass a) {
    switch (a) {
    case ActionClass::Braking: return "braking";
    case ActionClass::LaneChangeLeft: return "lane_change_left";
    case ActionClass::LaneChangeRight: return "lane_change_right";
    case ActionClass::TurnLeft: return "turn_left";
    case ActionClass::TurnRight: return "turn_right";
    }
    return "unknown";
}

ActionClass action_class_from_name(const std::string& name) {
    for (std::size_t i = 0; i < kNumActionClasses; ++i) {
        ActionClass a = static_cast<ActionClass>(i);
        if (name == action_class_name(a)) return a;
    }
    throw ValidationError("unknown action class '" + name + "'");
}

TaskSpec TaskSpec::braking() {
    return TaskSpec{"braking", {ActionClass::Braking}, 1.5};
}

TaskSpec TaskSpec::lane_change() {
    return TaskSpec{"lane_change", {ActionClass::LaneChangeLeft, ActionClass::LaneChangeRight},
                    1.5};
}

TaskSpec TaskSpec::turns() {
    return TaskSpec{"turns", {ActionClass::TurnLeft, ActionClass::TurnRight}, 1.5};
}

const std::vector<std::string>& TaskSpec::task_names() {
    static const std::vector<std::string> names = {"braking", "lane_change", "turns"};
    return names;
}

TaskSpec TaskSpec::by_name(const std::string& name) {
    if (name == "braking") return braking();
    if (name == "lane_change") return lane_change();
    if (name == "turns") return turns();
    throw ValidationError("unknown task '" + name + "' (expected braking|lane_change|turns)");
}

std::vector<std::string> TaskSpec::class_names() const {
    std::vector<std::string> names{"negative"};
    for (ActionClass a : positive_classes) names.push_back(action_class_name(a));
    return names;
}

std::optional<std::size_t> TaskSpec::label_of(ActionClass a) const {
    for (std::size_t i = 0; i < positive_classes.size(); ++i) {
        if (positive_classes[i] == a) return i + 1;
    }
    return std::nullopt;
}

void WindowingConfig::validate() const {
    if (!(horizon_s > 0.0)) throw ValidationError("windowing: horizon must be > 0");
    if (window_frames == 0) throw ValidationError("windowing: window_frames must be >= 1");
    if (stride_frames == 0) throw ValidationError("windowing: stride_frames must be >= 1");
    if (exec_exclusion_s < 0.0) throw ValidationError("windowing: exclusion must be >= 0");
}

FrameSeries resample(const SensorLog& log, const FeatureSchema& schema) {
    if (log.samples.size() != schema.size()) {
        throw ValidationError("resample: log has " + std::to_string(log.samples.size()) +
                              " channels, schema expects " + std::to_string(schema.size()));
    }
    const std::size_t n_frames = static_cast<std::size_t>(
        std::llround(log.duration_s / kGridDt));
    if (n_frames == 0) throw ValidationError("resample: empty log (duration too short)");

    for (std::size_t c = 0; c < schema.size(); ++c) {
        if (log.samples[c].empty()) {
            throw ValidationError("resample: channel '" + schema.at(c).name +
                                  "' has no samples");
        }
    }

    FrameSeries series;
    series.session_id = log.session_id;
    series.frames = Matrix(n_frames, schema.size());
    for (std::size_t c = 0; c < schema.size(); ++c) {
        const auto& s = log.samples[c];
        const bool factor = schema.at(c).kind == ChannelKind::Factor;
        for (std::size_t i = 0; i < n_frames; ++i) {
            const double t = static_cast<double>(i) * kGridDt;
            series.frames(i, c) = factor ? nearest_past_factor(s, t) : interpolate_float(s, t);
        }
    }
    if (!series.frames.is_finite()) {
        throw ValidationError("resample: produced non-finite values");
    }
    return series;
}

std::vector<ActionEvent> recognize_actions(const FrameSeries& series,
                                           const RecognizerRules& rules,
                                           const FeatureSchema& schema) {
    const std::size_t n = series.frame_count();
    const std::size_t brake = schema.index_of("brake_pressure");
    const std::size_t steer = schema.index_of("steering_angle");
    const std::size_t lane_l = schema.index_of("lane_offset_left");
    const std::size_t lane_r = schema.index_of("lane_offset_right");

    const std::size_t refractory = steps_of(rules.refractory_s, "refractory_s");
    const std::size_t sustain = steps_of(rules.steer_sustain_s, "steer_sustain_s");

    std::vector<ActionEvent> events;
    auto scan = [&](ActionClass action, auto&& predicate, std::size_t min_hold) {
        // Onset = rising edge preceded by >= refractory frames of falsehood
        // and holding for >= min_hold frames.
        for (std::size_t i = refractory; i < n; ++i) {
            if (!predicate(i)) continue;
            bool quiet = true;
            for (std::size_t j = i - refractory; j < i; ++j) {
                if (predicate(j)) {
                    quiet = false;
                    break;
                }
            }
            if (!quiet) continue;
            bool held = i + min_hold <= n;
            for (std::size_t j = i; held && j < i + min_hold; ++j) {
                if (!predicate(j)) held = false;
            }
            if (!held) continue;
            events.push_back({action, series.time_of(i), ActionEvent::Source::Recognizer});
        }
    };

    scan(ActionClass::Braking,
         [&](std::size_t i) { return series.frames(i, brake) > rules.brake_threshold; }, 1);
    scan(ActionClass::TurnLeft,
         [&](std::size_t i) { return series.frames(i, steer) > rules.steer_threshold; },
         std::max<std::size_t>(1, sustain));
    scan(ActionClass::TurnRight,
         [&](std::size_t i) { return series.frames(i, steer) < -rules.steer_threshold; },
         std::max<std::size_t>(1, sustain));
    scan(ActionClass::LaneChangeLeft,
         [&](std::size_t i) { return series.frames(i, lane_l) <= 0.0; }, 1);
    scan(ActionClass::LaneChangeRight,
         [&](std::size_t i) { return series.frames(i, lane_r) <= 0.0; }, 1);

    std::sort(events.begin(), events.end(), [](const ActionEvent& a, const ActionEvent& b) {
        if (a.onset_s != b.onset_s) return a.onset_s < b.onset_s;
        return static_cast<std::size_t>(a.action) < static_cast<std::size_t>(b.action);
    });
    return events;
}

std::vector<Example> build_examples(const FrameSeries& series,
                                    std::span<const ActionEvent> events, const TaskSpec& task,
                                    const WindowingConfig& cfg) {
    cfg.validate();
    const std::size_t n = series.frame_count();
    const std::size_t T = cfg.window_frames;
    if (T > n) {
        std::fprintf(stderr,
                     "warning: session %s has %zu frames, shorter than the %zu-frame window; "
                     "no examples built\n",
                     series.session_id.c_str(), n, T);
        return {};
    }
    const std::size_t d_steps = steps_of(cfg.horizon_s, "horizon_s");
    const std::size_t exec_steps = steps_of(cfg.exec_exclusion_s, "exec_exclusion_s");
    if (d_steps == 0) throw ValidationError("windowing: horizon below one grid step");

    std::vector<EventIndex> idx;
    idx.reserve(events.size());
    for (const ActionEvent& ev : events) {
        double steps = ev.onset_s / kGridDt;
        auto rounded = std::llround(steps);
        if (rounded < 0) throw ValidationError("event onset before session start");
        idx.push_back({static_cast<std::size_t>(rounded), ev.action});
    }
    std::sort(idx.begin(), idx.end(),
              [](const EventIndex& a, const EventIndex& b) { return a.onset_idx < b.onset_idx; });

    std::vector<Example> out;
    const std::size_t F = series.frames.cols();
    for (std::size_t e = T - 1; e < n; e += cfg.stride_frames) {
        // Exclusion: window ends during any action's execution.
        bool excluded = false;
        for (const EventIndex& ev : idx) {
            if (e >= ev.onset_idx && e <= ev.onset_idx + exec_steps) {
                excluded = true;
                break;
            }
            if (ev.onset_idx > e) break;
        }
        if (excluded) continue;

        // Nearest upcoming task event within the horizon.
        std::optional<std::size_t> label;
        std::size_t best_tte = 0;
        for (const EventIndex& ev : idx) {
            if (ev.onset_idx <= e) continue;
            const std::size_t tte = ev.onset_idx - e;
            if (tte > d_steps) break; // events sorted; all further ones are farther
            auto task_label = task.label_of(ev.action);
            if (!task_label) continue;
            if (!label || tte < best_tte) {
                label = *task_label;
                best_tte = tte;
            }
        }

        Example ex;
        ex.session_id = series.session_id;
        ex.end_time_s = series.time_of(e);
        ex.window = Matrix(T, F);
        for (std::size_t r = 0; r < T; ++r) {
            for (std::size_t c = 0; c < F; ++c) {
                ex.window(r, c) = series.frames(e - (T - 1) + r, c);
            }
        }
        if (label) {
            ex.label = *label;
            ex.time_to_event_s = static_cast<double>(best_tte) * kGridDt;
        }
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<Example> balance_classes(std::vector<Example> examples, const TaskSpec& task,
                                     SeededRng& rng) {
    std::size_t positives = 0;
    std::vector<std::size_t> negative_idx;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].label == 0) {
            negative_idx.push_back(i);
        } else {
            ++positives;
        }
    }
    if (positives == 0) {
        throw ValidationError("balance_classes: no positive examples for task '" + task.name +
                              "'");
    }
    const auto target = static_cast<std::size_t>(
        std::ceil(task.balance_ratio * static_cast<double>(positives) - 1e-9));

    std::vector<char> keep(examples.size(), 1);
    if (negative_idx.size() > target) {
        rng.shuffle(negative_idx);
        for (std::size_t k = target; k < negative_idx.size(); ++k) keep[negative_idx[k]] = 0;
    } else if (negative_idx.size() < target) {
        std::fprintf(stderr,
                     "warning: task %s wants %zu negatives but only %zu are available; "
                     "keeping all\n",
                     task.name.c_str(), target, negative_idx.size());
    }

    std::vector<Example> out;
    out.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (keep[i]) out.push_back(std::move(examples[i]));
    }
    return out;
}

void SplitFractions::validate() const {
    if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9) {
        throw ValidationError("split fractions must be non-negative and sum to 1");
    }
}

DatasetSplit split_dataset(std::vector<Example> examples, const SplitFractions& fractions,
                           SeededRng& rng) {
    fractions.validate();

    std::map<std::string, std::size_t> session_sizes;
    for (const Example& ex : examples) session_sizes[ex.session_id] += 1;
    if (session_sizes.size() < 3) {
        throw ValidationError("split_dataset: need at least 3 sessions, have " +
                              std::to_string(session_sizes.size()));
    }

    std::vector<std::string> sessions;
    sessions.reserve(session_sizes.size());
    for (const auto& [id, count] : session_sizes) sessions.push_back(id);
    rng.shuffle(sessions);

    const double total = static_cast<double>(examples.size());
    const double targets[3] = {fractions.train * total, fractions.val * total,
                               fractions.test * total};
    double assigned[3] = {0.0, 0.0, 0.0};
    std::map<std::string, int> session_split;
    for (const std::string& id : sessions) {
        int best = 0;
        double best_deficit = targets[0] - assigned[0];
        for (int s = 1; s < 3; ++s) {
            const double deficit = targets[s] - assigned[s];
            if (deficit > best_deficit) {
                best = s;
                best_deficit = deficit;
            }
        }
        session_split[id] = best;
        assigned[best] += static_cast<double>(session_sizes[id]);
    }

    DatasetSplit split;
    for (Example& ex : examples) {
        switch (session_split[ex.session_id]) {
        case 0: split.train.push_back(std::move(ex)); break;
        case 1: split.val.push_back(std::move(ex)); break;
        default: split.test.push_back(std::move(ex)); break;
        }
    }
    return split;
}

void write_session_file(const SensorLog& log, const std::string& path,
                        const FeatureSchema& schema) {
    if (log.samples.size() != schema.size()) {
        throw ValidationError("write_session_file: channel count mismatch");
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");

    std::size_t records = 0;
    for (const auto& s : log.samples) records += s.size();

    out << kSessionMagic << "\n";
    out << "session " << log.session_id << "\n";
    out << "duration_s " << format_double(log.duration_s) << "\n";
    out << "records " << records << "\n";
    for (std::size_t c = 0; c < schema.size(); ++c) {
        const ChannelSpec& spec = schema.at(c);
        const bool factor = spec.kind == ChannelKind::Factor;
        for (const auto& [t, v] : log.samples[c]) {
            out << spec.name << ' ' << format_double(t) << ' ';
            if (factor) {
                out << std::llround(v);
            } else {
                out << format_double(v);
            }
            out << '\n';
        }
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

SensorLog read_session_file(const std::string& path, const FeatureSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open session file '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw FileFormatError("'" + path + "' is empty");
    if (line != kSessionMagic) {
        if (line.rfind("dap-session-v", 0) == 0) {
            throw VersionError("'" + path + "' declares unsupported version '" + line + "'");
        }
        throw FileFormatError("'" + path + "' is not a session file");
    }

    SensorLog log;
    log.samples.resize(schema.size());
    std::size_t declared_records = 0;

    auto expect_header = [&](const char* key) -> std::string {
        if (!std::getline(in, line)) {
            throw FileFormatError("'" + path + "': truncated header");
        }
        auto parts = split_ws(line);
        if (parts.size() != 2 || parts[0] != key) {
            throw FileFormatError("'" + path + "': expected '" + key + " <value>' header");
        }
        return parts[1];
    };
    log.session_id = expect_header("session");
    log.duration_s = parse_double(expect_header("duration_s"), path + " duration");
    declared_records = parse_uint(expect_header("records"), path + " records");

    std::size_t seen = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto parts = split_ws(line);
        if (parts.size() != 3) {
            throw FileFormatError("'" + path + "': bad record '" + line + "'");
        }
        const std::size_t c = schema.index_of(parts[0]);
        const double t = parse_double(parts[1], path + " timestamp");
        const double v = parse_double(parts[2], path + " value");
        auto& series = log.samples[c];
        if (!series.empty() && t <= series.back().first) {
            throw FileFormatError("'" + path + "': timestamps not strictly increasing on '" +
                                  parts[0] + "'");
        }
        series.emplace_back(t, v);
        ++seen;
    }
    if (seen != declared_records) {
        throw FileFormatError("'" + path + "': declared " + std::to_string(declared_records) +
                              " records but found " + std::to_string(seen));
    }
    return log;
}

void write_example_set(const ExampleSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");

    out << kExamplesMagic << "\n";
    out << "task " << set.task << "\n";
    out << "classes";
    for (const std::string& name : set.class_names) out << ' ' << name;
    out << "\n";
    out << "horizon_s " << format_double(set.horizon_s) << "\n";
    out << "window_frames " << set.window_frames << "\n";
    out << "stride_frames " << set.stride_frames << "\n";
    out << "seed " << set.seed << "\n";
    out << "schema_hash " << set.schema_hash << "\n";
    out << "features " << set.feature_count << "\n";
    out << "count " << set.examples.size() << "\n";
    for (const Example& ex : set.examples) {
        if (ex.window.rows() != set.window_frames || ex.window.cols() != set.feature_count) {
            throw ValidationError("write_example_set: window shape mismatch");
        }
        out << "example " << ex.session_id << ' ' << format_double(ex.end_time_s) << ' '
            << ex.label << ' ';
        if (ex.time_to_event_s) {
            out << format_double(*ex.time_to_event_s);
        } else {
            out << '-';
        }
        for (double v : ex.window.data()) out << ' ' << format_double(v);
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

ExampleSet read_example_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open example set '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw FileFormatError("'" + path + "' is empty");
    if (line != kExamplesMagic) {
        if (line.rfind("dap-examples-v", 0) == 0) {
            throw VersionError("'" + path + "' declares unsupported version '" + line + "'");
        }
        throw FileFormatError("'" + path + "' is not an example-set file");
    }

    ExampleSet set;
    auto expect_header = [&](const char* key) -> std::vector<std::string> {
        if (!std::getline(in, line)) {
            throw FileFormatError("'" + path + "': truncated header");
        }
        auto parts = split_ws(line);
        if (parts.size() < 2 || parts[0] != key) {
            throw FileFormatError("'" + path + "': expected '" + std::string(key) +
                                  " ...' header");
        }
        parts.erase(parts.begin());
        return parts;
    };

    set.task = expect_header("task").at(0);
    set.class_names = expect_header("classes");
    set.horizon_s = parse_double(expect_header("horizon_s").at(0), path + " horizon");
    set.window_frames = parse_uint(expect_header("window_frames").at(0), path + " window");
    set.stride_frames = parse_uint(expect_header("stride_frames").at(0), path + " stride");
    set.seed = parse_uint(expect_header("seed").at(0), path + " seed");
    set.schema_hash = parse_uint(expect_header("schema_hash").at(0), path + " schema_hash");
    set.feature_count = parse_uint(expect_header("features").at(0), path + " features");
    const std::size_t count = parse_uint(expect_header("count").at(0), path + " count");

    const std::size_t values = set.window_frames * set.feature_count;
    set.examples.reserve(count);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto parts = split_ws(line);
        if (parts.size() != 5 + values || parts[0] != "example") {
            throw FileFormatError("'" + path + "': bad example record");
        }
        Example ex;
        ex.session_id = parts[1];
        ex.end_time_s = parse_double(parts[2], path + " end_time");
        ex.label = parse_uint(parts[3], path + " label");
        if (ex.label >= set.class_names.size()) {
            throw ValidationError("'" + path + "': label " + parts[3] + " out of range");
        }
        if (parts[4] != "-") {
            ex.time_to_event_s = parse_double(parts[4], path + " time_to_event");
        }
        std::vector<double> data(values);
        for (std::size_t i = 0; i < values; ++i) {
            data[i] = parse_double(parts[5 + i], path + " window value");
        }
        ex.window = Matrix(set.window_frames, set.feature_count, std::move(data));
        set.examples.push_back(std::move(ex));
    }
    if (set.examples.size() != count) {
        throw FileFormatError("'" + path + "': declared " + std::to_string(count) +
                              " examples but found " + std::to_string(set.examples.size()));
    }
    return set;
}

} // namespace dap
