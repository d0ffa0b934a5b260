#include "dap/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dap/errors.hpp"
#include "dap/text_format.hpp"

namespace dap {

namespace {

constexpr const char* kTruthMagic = "dap-truth-v1";
constexpr double kNoiseAr = 0.9; // first-order smoothing coefficient

enum class Shape { Ramp, Boxcar };

struct Deflection {
    std::string channel;
    Shape shape{};
    double amp = 0.0;
};

// Precursor signatures: what the data looks like *before* the driver acts.
// Head pose ramps before lane changes, closing lead-vehicle distance before
// braking, intersection approach before turns.
std::vector<Deflection> precursor_deflections(ActionClass a, const ScenarioConfig& cfg) {
    const double amp = cfg.precursor_amp;
    switch (a) {
    case ActionClass::Braking:
        return {{"obj_rel_pos_ego", Shape::Ramp, -amp},
                {"obj_rel_vel_ego", Shape::Boxcar, -amp},
                {"accel_pressure", Shape::Ramp, -amp}};
    case ActionClass::LaneChangeLeft:
        return {{"face_hmot_bin0", Shape::Ramp, amp},
                {"face_mean_motion", Shape::Boxcar, amp},
                {"hand_left_move_dist", Shape::Ramp, amp}};
    case ActionClass::LaneChangeRight:
        return {{"face_hmot_bin3", Shape::Ramp, amp},
                {"face_mean_motion", Shape::Boxcar, amp},
                {"hand_right_move_dist", Shape::Ramp, amp}};
    case ActionClass::TurnLeft:
        return {{"intersection_distance", Shape::Ramp, -amp},
                {"velocity", Shape::Ramp, -amp},
                {"face_amot_bin0", Shape::Boxcar, amp}};
    case ActionClass::TurnRight:
        return {{"intersection_distance", Shape::Ramp, -amp},
                {"velocity", Shape::Ramp, -amp},
                {"face_amot_bin3", Shape::Boxcar, amp}};
    }
    return {};
}

// Action signatures: the unmistakable deflections the recognizer keys on.
std::vector<Deflection> action_deflections(ActionClass a, const ScenarioConfig& cfg) {
    const double amp = cfg.action_amp;
    switch (a) {
    case ActionClass::Braking:
        return {{"brake_pressure", Shape::Boxcar, amp},
                {"velocity", Shape::Ramp, -0.5 * amp}};
    case ActionClass::LaneChangeLeft:
        // Drives lane_offset_left from its +1.5 baseline through zero.
        return {{"lane_offset_left", Shape::Boxcar, -2.0 * amp}};
    case ActionClass::LaneChangeRight:
        return {{"lane_offset_right", Shape::Boxcar, -2.0 * amp}};
    case ActionClass::TurnLeft:
        return {{"steering_angle", Shape::Boxcar, amp}};
    case ActionClass::TurnRight:
        return {{"steering_angle", Shape::Boxcar, -amp}};
    }
    return {};
}

double channel_baseline(const std::string& name) {
    if (name == "lane_offset_left" || name == "lane_offset_right") return 1.5;
    if (name == "intersection_distance") return 5.0;
    return 0.0;
}

double factor_baseline(const std::string& name) {
    if (name == "gear_position") return 3.0;
    if (name == "lane_avail_left" || name == "lane_avail_right") return 1.0;
    if (name == "hand_left_on_wheel" || name == "hand_right_on_wheel") return 1.0;
    return 0.0;
}

// Recognition channels carry less sensor noise than the camera-derived
// features; this also keeps threshold crossings unambiguous.
double channel_noise_scale(const std::string& name) {
    if (name == "brake_pressure" || name == "accel_pressure" || name == "steering_angle" ||
        name == "lane_offset_left" || name == "lane_offset_right") {
        return 0.5;
    }
    return 1.0;
}

struct Interval {
    double start = 0.0, end = 0.0;
    Shape shape{};
    double amp = 0.0;
};

struct SessionPlan {
    std::vector<PlantedEvent> events;
    // Per channel index: additive signature intervals.
    std::vector<std::vector<Interval>> intervals;
    // Factor override: intersection approach during turn windows.
    std::vector<Interval> intersection_state_on;
};

double signature_value(const std::vector<Interval>& iv, double t) {
    double v = 0.0;
    for (const Interval& s : iv) {
        if (t < s.start || t >= s.end) continue;
        if (s.shape == Shape::Boxcar) {
            v += s.amp;
        } else {
            v += s.amp * (t - s.start) / (s.end - s.start);
        }
    }
    return v;
}

double group_rate(const std::string& group, const ScenarioConfig& cfg) {
    if (group == "can_bus") return cfg.can_rate_hz;
    if (group == "gps_map") return cfg.gps_rate_hz;
    return cfg.camera_rate_hz;
}

SessionPlan plan_session(const ScenarioConfig& cfg, const FeatureSchema& schema,
                         SeededRng& rng) {
    const double duration = cfg.session_minutes * 60.0;
    const auto duration_steps = static_cast<std::size_t>(std::llround(duration / kGridDt));
    const auto margin_steps =
        static_cast<std::size_t>(std::llround(cfg.edge_margin_s / kGridDt));
    const auto min_gap_steps = static_cast<std::size_t>(std::llround(cfg.min_gap_s / kGridDt));

    std::vector<ActionClass> classes;
    for (std::size_t k = 0; k < kNumActionClasses; ++k) {
        ActionClass a = static_cast<ActionClass>(k);
        auto n = static_cast<std::size_t>(
            std::llround(cfg.rate_of(a) * cfg.session_minutes));
        for (std::size_t i = 0; i < n; ++i) classes.push_back(a);
    }

    SessionPlan plan;
    plan.intervals.resize(schema.size());
    if (classes.empty()) return plan;

    if (duration_steps <= 2 * margin_steps) {
        throw ValidationError("synthgen: session shorter than twice the edge margin");
    }
    const std::size_t usable = duration_steps - 2 * margin_steps;
    const std::size_t slot = usable / classes.size();
    if (slot < min_gap_steps) {
        throw ValidationError("synthgen: infeasible schedule, " +
                              std::to_string(classes.size()) + " events of min gap " +
                              format_double(cfg.min_gap_s) + " s do not fit in " +
                              format_double(duration) + " s");
    }

    rng.shuffle(classes);
    for (std::size_t i = 0; i < classes.size(); ++i) {
        // Jittered uniform spacing in grid steps; consecutive gaps stay
        // >= min_gap_steps by construction.
        const std::uint64_t jitter = rng.below(slot - min_gap_steps + 1);
        const std::size_t onset_idx = margin_steps + i * slot + static_cast<std::size_t>(jitter);
        const double onset = static_cast<double>(onset_idx) * kGridDt;

        double lead = cfg.precursor_lead_s;
        if (cfg.lead_jitter_s > 0.0) {
            lead += rng.uniform(-cfg.lead_jitter_s, cfg.lead_jitter_s);
        }
        lead = std::max(0.5, lead);

        PlantedEvent ev;
        ev.action = classes[i];
        ev.onset_s = onset;
        ev.precursor_onset_s = onset - lead;
        plan.events.push_back(ev);

        for (const Deflection& d : precursor_deflections(ev.action, cfg)) {
            plan.intervals[schema.index_of(d.channel)].push_back(
                {ev.precursor_onset_s, onset, d.shape, d.amp});
        }
        for (const Deflection& d : action_deflections(ev.action, cfg)) {
            plan.intervals[schema.index_of(d.channel)].push_back(
                {onset, onset + cfg.action_duration_s, d.shape, d.amp});
        }
        if (ev.action == ActionClass::TurnLeft || ev.action == ActionClass::TurnRight) {
            plan.intersection_state_on.push_back(
                {ev.precursor_onset_s, onset + cfg.action_duration_s, Shape::Boxcar, 1.0});
        }
    }
    std::sort(plan.events.begin(), plan.events.end(),
              [](const PlantedEvent& a, const PlantedEvent& b) { return a.onset_s < b.onset_s; });
    return plan;
}

SensorLog synth_session(const ScenarioConfig& cfg, const FeatureSchema& schema,
                        const std::string& session_id, SeededRng rng,
                        std::vector<PlantedEvent>& events_out) {
    const double duration = cfg.session_minutes * 60.0;
    SessionPlan plan = plan_session(cfg, schema, rng);
    events_out = plan.events;

    SensorLog log;
    log.session_id = session_id;
    log.duration_s = duration;
    log.samples.resize(schema.size());

    for (std::size_t c = 0; c < schema.size(); ++c) {
        const ChannelSpec& spec = schema.at(c);
        const double rate = group_rate(spec.group, cfg);
        const auto count = static_cast<std::size_t>(std::llround(duration * rate));
        const double dt = 1.0 / rate;
        auto& out = log.samples[c];
        out.reserve(count);

        if (spec.kind == ChannelKind::Factor) {
            const double base = factor_baseline(spec.name);
            const bool is_intersection = spec.name == "intersection_state";
            for (std::size_t i = 0; i < count; ++i) {
                const double t = static_cast<double>(i) * dt;
                double v = base;
                if (is_intersection && signature_value(plan.intersection_state_on, t) > 0.0) {
                    v = 1.0;
                }
                out.emplace_back(t, v);
            }
            continue;
        }

        const double base = channel_baseline(spec.name);
        const double sd = cfg.noise_std * channel_noise_scale(spec.name);
        double noise = sd * rng.normal();
        const double drive = sd * std::sqrt(1.0 - kNoiseAr * kNoiseAr);
        for (std::size_t i = 0; i < count; ++i) {
            const double t = static_cast<double>(i) * dt;
            if (i > 0) noise = kNoiseAr * noise + drive * rng.normal();
            out.emplace_back(t, base + noise + signature_value(plan.intervals[c], t));
        }
    }
    return log;
}

SynthResult generate_impl(const ScenarioConfig& cfg, const std::string& session_prefix,
                          std::uint64_t stream_base) {
    cfg.validate();
    const FeatureSchema& schema = FeatureSchema::standard();
    SeededRng master(cfg.seed);

    SynthResult result;
    for (std::size_t s = 0; s < cfg.num_sessions; ++s) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%s%03zu", session_prefix.c_str(), s);
        std::vector<PlantedEvent> events;
        result.logs.push_back(
            synth_session(cfg, schema, idbuf, master.derive(stream_base + s), events));
        result.truth.session_ids.push_back(idbuf);
        result.truth.events.push_back(std::move(events));
    }
    return result;
}

} // namespace

void ScenarioConfig::validate() const {
    if (num_sessions == 0) throw ValidationError("synthgen: num_sessions must be >= 1");
    if (!(session_minutes > 0.0)) throw ValidationError("synthgen: session_minutes must be > 0");
    if (noise_std < 0.0) throw ValidationError("synthgen: noise_std must be >= 0");
    if (!(min_gap_s > action_duration_s)) {
        throw ValidationError("synthgen: min_gap_s must exceed action_duration_s");
    }
    if (!(precursor_lead_s > 0.0)) throw ValidationError("synthgen: precursor lead must be > 0");
    for (std::size_t k = 0; k < kNumActionClasses; ++k) {
        if (rate_of(static_cast<ActionClass>(k)) < 0.0) {
            throw ValidationError("synthgen: event rates must be >= 0");
        }
    }
    if (!(can_rate_hz > 0.0 && camera_rate_hz > 0.0 && gps_rate_hz > 0.0)) {
        throw ValidationError("synthgen: sampling rates must be > 0");
    }
}

double ScenarioConfig::rate_of(ActionClass a) const {
    switch (a) {
    case ActionClass::Braking: return rate_braking;
    case ActionClass::LaneChangeLeft: return rate_lane_change_left;
    case ActionClass::LaneChangeRight: return rate_lane_change_right;
    case ActionClass::TurnLeft: return rate_turn_left;
    case ActionClass::TurnRight: return rate_turn_right;
    }
    return 0.0;
}

SynthResult generate(const ScenarioConfig& config) {
    return generate_impl(config, "s", 0);
}

SynthResult generate_driver_variant(const ScenarioConfig& config, std::uint32_t driver_id) {
    ScenarioConfig cfg = config;
    SeededRng driver_rng = SeededRng(config.seed).derive(0xD01BULL + driver_id);
    cfg.precursor_lead_s *= 1.0 + 0.15 * driver_rng.uniform(-1.0, 1.0);
    cfg.precursor_amp *= 1.0 + 0.20 * driver_rng.uniform(-1.0, 1.0);
    cfg.noise_std *= 1.0 + 0.10 * driver_rng.uniform(-1.0, 1.0);

    char prefix[32];
    std::snprintf(prefix, sizeof(prefix), "d%02u_s", driver_id);
    return generate_impl(cfg, prefix, 0x1000000ULL * (1ULL + driver_id));
}

void write_truth_file(const GroundTruth& truth, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");

    std::size_t total = 0;
    for (const auto& ev : truth.events) total += ev.size();

    out << kTruthMagic << "\n";
    out << "sessions " << truth.session_ids.size() << "\n";
    out << "events " << total << "\n";
    for (std::size_t s = 0; s < truth.session_ids.size(); ++s) {
        for (const PlantedEvent& ev : truth.events[s]) {
            out << "event " << truth.session_ids[s] << ' ' << action_class_name(ev.action)
                << ' ' << format_double(ev.onset_s) << ' '
                << format_double(ev.precursor_onset_s) << '\n';
        }
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

GroundTruth read_truth_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open truth file '" + path + "'");

    std::string line;
    if (!std::getline(in, line) || line != kTruthMagic) {
        throw FileFormatError("'" + path + "' is not a truth file");
    }
    GroundTruth truth;
    if (!std::getline(in, line)) throw FileFormatError("'" + path + "': truncated header");
    auto sessions_hdr = split_ws(line);
    if (sessions_hdr.size() != 2 || sessions_hdr[0] != "sessions") {
        throw FileFormatError("'" + path + "': expected 'sessions <n>'");
    }
    if (!std::getline(in, line)) throw FileFormatError("'" + path + "': truncated header");
    auto events_hdr = split_ws(line);
    if (events_hdr.size() != 2 || events_hdr[0] != "events") {
        throw FileFormatError("'" + path + "': expected 'events <n>'");
    }
    const std::size_t declared = parse_uint(events_hdr[1], path + " events");

    std::size_t seen = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto parts = split_ws(line);
        if (parts.size() != 5 || parts[0] != "event") {
            throw FileFormatError("'" + path + "': bad event record '" + line + "'");
        }
        const std::string& session = parts[1];
        std::size_t idx = truth.session_ids.size();
        for (std::size_t i = 0; i < truth.session_ids.size(); ++i) {
            if (truth.session_ids[i] == session) {
                idx = i;
                break;
            }
        }
        if (idx == truth.session_ids.size()) {
            truth.session_ids.push_back(session);
            truth.events.emplace_back();
        }
        PlantedEvent ev;
        ev.action = action_class_from_name(parts[2]);
        ev.onset_s = parse_double(parts[3], path + " onset");
        ev.precursor_onset_s = parse_double(parts[4], path + " precursor onset");
        truth.events[idx].push_back(ev);
        ++seen;
    }
    if (seen != declared) {
        throw FileFormatError("'" + path + "': declared " + std::to_string(declared) +
                              " events but found " + std::to_string(seen));
    }
    return truth;
}

} // namespace dap
