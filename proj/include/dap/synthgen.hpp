#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dap/datapipe.hpp"
#include "dap/rng.hpp"

namespace dap {

// Scenario knobs for the synthetic multi-session driving-log generator.
// Baselines are smoothed (first-order autocorrelated) noise; every planted
// action carries a precursor signature that starts `precursor_lead_s` before
// the onset and an unmistakable action signature at the onset itself, so the
// threshold recognizer can recover the schedule exactly.
struct ScenarioConfig {
    std::size_t num_sessions = 6;
    double session_minutes = 6.0;

    // Events per minute, per action class.
    double rate_braking = 1.0;
    double rate_lane_change_left = 0.25;
    double rate_lane_change_right = 0.25;
    double rate_turn_left = 0.25;
    double rate_turn_right = 0.25;

    double min_gap_s = 12.0;
    double precursor_lead_s = 4.0;
    double lead_jitter_s = 0.0; // uniform +/- jitter applied per event
    double noise_std = 0.1;
    double precursor_amp = 0.3; // >= 3x default noise_std
    double action_amp = 1.0;
    double action_duration_s = 2.0;
    double edge_margin_s = 10.0;

    // Native sampling rates before the 10 Hz resample.
    double can_rate_hz = 20.0;
    double camera_rate_hz = 10.0;
    double gps_rate_hz = 1.0;

    std::uint64_t seed = 0;

    void validate() const;
    double rate_of(ActionClass a) const;
};

struct PlantedEvent {
    ActionClass action{};
    double onset_s = 0.0;
    double precursor_onset_s = 0.0;
};

struct GroundTruth {
    std::vector<std::string> session_ids;
    std::vector<std::vector<PlantedEvent>> events; // aligned with session_ids
};

struct SynthResult {
    std::vector<SensorLog> logs;
    GroundTruth truth;
};

SynthResult generate(const ScenarioConfig& config);

// Deterministic per-driver perturbation of precursor lead, amplitudes and
// noise, for individual-vs-combined driver experiments.
SynthResult generate_driver_variant(const ScenarioConfig& config, std::uint32_t driver_id);

void write_truth_file(const GroundTruth& truth, const std::string& path);
GroundTruth read_truth_file(const std::string& path);

} // namespace dap
