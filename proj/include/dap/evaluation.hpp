#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dap/datapipe.hpp"
#include "dap/network.hpp"

namespace dap {

// Argmax with ties broken toward the lowest class index.
std::size_t classify(const Matrix& probs);

// One time-to-event bin over (start_s, end_s]. Positives are bucketed by
// their time to event; the negative pool is shared across bins, so n_neg is
// the same for every bin. Rates with an empty denominator are absent.
struct BinMetrics {
    double start_s = 0.0;
    double end_s = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    std::optional<double> accuracy; // over this bin's positives + shared negatives
    std::optional<double> tpr;      // mean per-positive-class recall in this bin
    std::optional<double> fpr;      // shared across bins
};

struct AggregateMetrics {
    std::size_t n_examples = 0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    double accuracy = 0.0;
    // Indexed by task class (entry 0, the negative class, is absent).
    std::vector<std::optional<double>> per_class_tpr;
    std::optional<double> fpr;
};

struct PiecewiseMetrics {
    double horizon_s = 0.0;
    double bin_width_s = 0.0;
    std::vector<BinMetrics> bins; // tile (0, horizon_s]
    AggregateMetrics aggregate;
};

// Runs the model over every example and bins performance by time-to-event.
PiecewiseMetrics piecewise_eval(const ModelParameters& m, const ExampleSet& set,
                                double bin_width_s, std::size_t threads = 1);

// Same computation from precomputed predicted labels (used by tests that
// hand-count the confusion matrix, and internally by piecewise_eval).
PiecewiseMetrics piecewise_from_predictions(std::span<const std::size_t> predictions,
                                            const ExampleSet& set, double bin_width_s);

struct BinDelta {
    double start_s = 0.0;
    double end_s = 0.0;
    std::optional<double> d_accuracy; // a - b
    std::optional<double> d_tpr;
    std::optional<double> d_fpr;
};

struct CompareReport {
    std::vector<BinDelta> bins;
    double d_aggregate_accuracy = 0.0;
    double margin = 0.0;
    // Earliest bin (largest time-to-event first) where a's accuracy exceeds
    // b's by at least `margin`.
    std::optional<std::size_t> first_bin_a_leads;
};

CompareReport compare_curves(const PiecewiseMetrics& a, const PiecewiseMetrics& b,
                             double margin = 0.0);

// CSV export: per-bin rows followed by one aggregate row.
void write_metrics_csv(const PiecewiseMetrics& metrics, const std::string& path);
void write_compare_csv(const CompareReport& report, const std::string& path);

} // namespace dap
