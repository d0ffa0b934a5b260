#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dap/errors.hpp"
#include "dap/synthgen.hpp"

using namespace dap;

namespace {

ScenarioConfig small_config() {
    ScenarioConfig cfg;
    cfg.num_sessions = 2;
    cfg.session_minutes = 3.0;
    cfg.seed = 404;
    return cfg;
}

double realized_lead(const PlantedEvent& ev) { return ev.onset_s - ev.precursor_onset_s; }

} // namespace

TEST_CASE("generation is deterministic") {
    SynthResult a = generate(small_config());
    SynthResult b = generate(small_config());
    REQUIRE(a.logs.size() == b.logs.size());
    for (std::size_t s = 0; s < a.logs.size(); ++s) {
        CHECK(a.logs[s].session_id == b.logs[s].session_id);
        REQUIRE(a.logs[s].samples.size() == b.logs[s].samples.size());
        for (std::size_t c = 0; c < a.logs[s].samples.size(); ++c) {
            CHECK(a.logs[s].samples[c] == b.logs[s].samples[c]);
        }
        REQUIRE(a.truth.events[s].size() == b.truth.events[s].size());
        for (std::size_t e = 0; e < a.truth.events[s].size(); ++e) {
            CHECK(a.truth.events[s][e].onset_s == b.truth.events[s][e].onset_s);
            CHECK(a.truth.events[s][e].action == b.truth.events[s][e].action);
        }
    }
}

TEST_CASE("no noise and no events gives constant baselines") {
    ScenarioConfig cfg = small_config();
    cfg.noise_std = 0.0;
    cfg.rate_braking = 0.0;
    cfg.rate_lane_change_left = 0.0;
    cfg.rate_lane_change_right = 0.0;
    cfg.rate_turn_left = 0.0;
    cfg.rate_turn_right = 0.0;

    SynthResult result = generate(cfg);
    for (const auto& events : result.truth.events) CHECK(events.empty());
    const FeatureSchema& schema = FeatureSchema::standard();
    for (const SensorLog& log : result.logs) {
        for (std::size_t c = 0; c < schema.size(); ++c) {
            const double first = log.samples[c].front().second;
            for (const auto& [t, v] : log.samples[c]) CHECK(v == first);
        }
    }
}

TEST_CASE("schedule respects rates, counts and minimum gaps") {
    ScenarioConfig cfg;
    cfg.num_sessions = 10;
    cfg.session_minutes = 10.0;
    cfg.rate_braking = 1.0;
    cfg.rate_lane_change_left = 0.0;
    cfg.rate_lane_change_right = 0.0;
    cfg.rate_turn_left = 0.0;
    cfg.rate_turn_right = 0.0;
    cfg.min_gap_s = 20.0;
    cfg.seed = 9;

    SynthResult result = generate(cfg);
    REQUIRE(result.truth.events.size() == 10);
    for (const auto& events : result.truth.events) {
        CHECK(events.size() >= 1);
        CHECK(events.size() <= 30);
        for (std::size_t e = 1; e < events.size(); ++e) {
            CHECK(events[e].onset_s - events[e - 1].onset_s >= 20.0 - 1e-9);
        }
        for (const PlantedEvent& ev : events) {
            CHECK(ev.action == ActionClass::Braking);
            CHECK(ev.onset_s > 0.0);
            CHECK(ev.onset_s < 600.0);
        }
    }
}

TEST_CASE("infeasible schedules are rejected") {
    ScenarioConfig cfg = small_config();
    cfg.rate_braking = 10.0; // 30 events into a 3-minute session
    cfg.min_gap_s = 30.0;
    CHECK_THROWS_AS(generate(cfg), ValidationError);
}

TEST_CASE("generated logs match the schema layout") {
    SynthResult result = generate(small_config());
    const FeatureSchema& schema = FeatureSchema::standard();
    for (const SensorLog& log : result.logs) {
        REQUIRE(log.samples.size() == schema.size());
        for (std::size_t c = 0; c < schema.size(); ++c) {
            CHECK(!log.samples[c].empty());
            if (schema.at(c).kind == ChannelKind::Factor) {
                for (const auto& [t, v] : log.samples[c]) {
                    CHECK(v == std::floor(v)); // integer codes
                }
            }
        }
    }
}

TEST_CASE("precursors strictly precede onsets by the configured lead") {
    ScenarioConfig cfg = small_config();
    cfg.lead_jitter_s = 0.0;
    SynthResult result = generate(cfg);
    bool saw_event = false;
    for (const auto& events : result.truth.events) {
        for (const PlantedEvent& ev : events) {
            saw_event = true;
            CHECK(ev.precursor_onset_s < ev.onset_s);
            CHECK(std::abs(realized_lead(ev) - cfg.precursor_lead_s) <= kGridDt);
        }
    }
    CHECK(saw_event);
}

TEST_CASE("closed loop: the recognizer recovers every planted onset") {
    ScenarioConfig cfg;
    cfg.num_sessions = 3;
    cfg.session_minutes = 4.0;
    cfg.seed = 2024;

    SynthResult result = generate(cfg);
    std::size_t planted_total = 0;
    for (std::size_t s = 0; s < result.logs.size(); ++s) {
        FrameSeries series = resample(result.logs[s]);
        auto recognized = recognize_actions(series, RecognizerRules{});
        const auto& planted = result.truth.events[s];
        planted_total += planted.size();

        REQUIRE(recognized.size() == planted.size());
        for (std::size_t e = 0; e < planted.size(); ++e) {
            CHECK(recognized[e].action == planted[e].action);
            CHECK(std::abs(recognized[e].onset_s - planted[e].onset_s) <= 0.1 + 1e-9);
        }
    }
    CHECK(planted_total > 0);
}

TEST_CASE("driver variants: deterministic, distinct, and more varied combined") {
    ScenarioConfig cfg = small_config();
    cfg.lead_jitter_s = 0.2;

    SynthResult d0 = generate_driver_variant(cfg, 0);
    SynthResult d0_again = generate_driver_variant(cfg, 0);
    REQUIRE(d0.truth.events.size() == d0_again.truth.events.size());
    for (std::size_t s = 0; s < d0.truth.events.size(); ++s) {
        REQUIRE(d0.truth.events[s].size() == d0_again.truth.events[s].size());
        for (std::size_t e = 0; e < d0.truth.events[s].size(); ++e) {
            CHECK(d0.truth.events[s][e].onset_s == d0_again.truth.events[s][e].onset_s);
            CHECK(d0.truth.events[s][e].precursor_onset_s ==
                  d0_again.truth.events[s][e].precursor_onset_s);
        }
    }

    // Session ids stay distinct per driver.
    CHECK(d0.logs[0].session_id != generate_driver_variant(cfg, 1).logs[0].session_id);

    std::vector<double> combined;
    std::vector<double> driver_means;
    double best_single_var = -1.0;
    for (std::uint32_t driver = 0; driver < 5; ++driver) {
        SynthResult r = generate_driver_variant(cfg, driver);
        std::vector<double> leads;
        for (const auto& events : r.truth.events) {
            for (const PlantedEvent& ev : events) leads.push_back(realized_lead(ev));
        }
        REQUIRE(leads.size() >= 2);
        double mean = 0.0;
        for (double v : leads) mean += v;
        mean /= static_cast<double>(leads.size());
        driver_means.push_back(mean);
        double var = 0.0;
        for (double v : leads) var += (v - mean) * (v - mean);
        var /= static_cast<double>(leads.size());
        best_single_var = std::max(best_single_var, var);
        combined.insert(combined.end(), leads.begin(), leads.end());
    }
    for (std::size_t i = 1; i < driver_means.size(); ++i) {
        CHECK(driver_means[i] != driver_means[0]);
    }
    double mean = 0.0;
    for (double v : combined) mean += v;
    mean /= static_cast<double>(combined.size());
    double combined_var = 0.0;
    for (double v : combined) combined_var += (v - mean) * (v - mean);
    combined_var /= static_cast<double>(combined.size());
    CHECK(combined_var > best_single_var);
}

TEST_CASE("truth file round trip") {
    SynthResult result = generate(small_config());
    auto path = std::filesystem::temp_directory_path() / "dap_truth_test.txt";
    write_truth_file(result.truth, path.string());
    GroundTruth loaded = read_truth_file(path.string());
    REQUIRE(loaded.session_ids == result.truth.session_ids);
    for (std::size_t s = 0; s < loaded.events.size(); ++s) {
        REQUIRE(loaded.events[s].size() == result.truth.events[s].size());
        for (std::size_t e = 0; e < loaded.events[s].size(); ++e) {
            CHECK(loaded.events[s][e].action == result.truth.events[s][e].action);
            CHECK(loaded.events[s][e].onset_s == result.truth.events[s][e].onset_s);
            CHECK(loaded.events[s][e].precursor_onset_s ==
                  result.truth.events[s][e].precursor_onset_s);
        }
    }
    std::filesystem::remove(path);
}
