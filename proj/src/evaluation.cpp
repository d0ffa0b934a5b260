#include "dap/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "dap/errors.hpp"
#include "dap/text_format.hpp"

namespace dap {

namespace {

std::string fmt_rate(const std::optional<double>& r) {
    if (!r) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *r);
    return buf;
}

std::optional<double> mean_present(const std::vector<std::optional<double>>& values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : values) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

void check_model_against_set(const ModelParameters& m, const ExampleSet& set) {
    if (m.config.input_size != set.feature_count) {
        throw ValidationError("schema mismatch: model expects " +
                              std::to_string(m.config.input_size) + " features, data has " +
                              std::to_string(set.feature_count));
    }
    if (m.schema_hash != set.schema_hash) {
        throw ValidationError("schema mismatch: model and data were built from different "
                              "feature schemas");
    }
    if (m.config.window_length != set.window_frames) {
        throw ValidationError("config mismatch: model window " +
                              std::to_string(m.config.window_length) + ", data window " +
                              std::to_string(set.window_frames));
    }
    if (m.config.num_classes != set.class_names.size()) {
        throw ValidationError("config mismatch: model has " +
                              std::to_string(m.config.num_classes) + " classes, data has " +
                              std::to_string(set.class_names.size()));
    }
}

} // namespace

std::size_t classify(const Matrix& probs) {
    if (probs.cols() != 1 || probs.rows() == 0) {
        throw ShapeError("classify: expects a nonempty column vector");
    }
    std::size_t arg = 0;
    for (std::size_t c = 1; c < probs.rows(); ++c) {
        if (probs(c, 0) > probs(arg, 0)) arg = c; // ties keep the lowest index
    }
    return arg;
}

PiecewiseMetrics piecewise_from_predictions(std::span<const std::size_t> predictions,
                                            const ExampleSet& set, double bin_width_s) {
    if (set.examples.empty()) throw ValidationError("piecewise metrics: empty test set");
    if (predictions.size() != set.examples.size()) {
        throw ValidationError("piecewise metrics: prediction count mismatch");
    }
    const auto d_steps = static_cast<std::size_t>(std::llround(set.horizon_s / kGridDt));
    const auto bin_steps = static_cast<std::size_t>(std::llround(bin_width_s / kGridDt));
    if (bin_steps == 0 || d_steps == 0 || d_steps % bin_steps != 0 ||
        std::abs(static_cast<double>(bin_steps) * kGridDt - bin_width_s) > 1e-9) {
        throw ValidationError("piecewise metrics: bin width must divide the horizon evenly");
    }
    const std::size_t n_bins = d_steps / bin_steps;
    const std::size_t n_classes = set.class_names.size();

    // Shared negative pool.
    std::size_t neg_total = 0, neg_correct = 0, false_pos = 0;
    // Per bin, per positive class: totals and hits.
    std::vector<std::vector<std::size_t>> bin_pos(n_bins, std::vector<std::size_t>(n_classes, 0));
    std::vector<std::vector<std::size_t>> bin_hit(n_bins, std::vector<std::size_t>(n_classes, 0));
    std::vector<std::size_t> class_pos(n_classes, 0), class_hit(n_classes, 0);
    std::size_t correct_total = 0;

    for (std::size_t i = 0; i < set.examples.size(); ++i) {
        const Example& ex = set.examples[i];
        const std::size_t pred = predictions[i];
        if (ex.label >= n_classes || pred >= n_classes) {
            throw ValidationError("piecewise metrics: label or prediction out of range");
        }
        if (pred == ex.label) ++correct_total;

        if (ex.label == 0) {
            ++neg_total;
            if (pred == 0) {
                ++neg_correct;
            } else {
                ++false_pos;
            }
            continue;
        }

        if (!ex.time_to_event_s) {
            throw ValidationError("piecewise metrics: positive example without time-to-event");
        }
        const auto tte_steps =
            static_cast<std::size_t>(std::llround(*ex.time_to_event_s / kGridDt));
        if (tte_steps < 1 || tte_steps > d_steps) {
            throw ValidationError("piecewise metrics: time-to-event " +
                                  format_double(*ex.time_to_event_s) +
                                  " outside (0, horizon]");
        }
        const std::size_t b = (tte_steps - 1) / bin_steps;
        ++bin_pos[b][ex.label];
        ++class_pos[ex.label];
        if (pred == ex.label) {
            ++bin_hit[b][ex.label];
            ++class_hit[ex.label];
        }
    }

    PiecewiseMetrics out;
    out.horizon_s = set.horizon_s;
    out.bin_width_s = bin_width_s;

    std::optional<double> fpr;
    if (neg_total > 0) fpr = static_cast<double>(false_pos) / static_cast<double>(neg_total);

    for (std::size_t b = 0; b < n_bins; ++b) {
        BinMetrics bin;
        bin.start_s = static_cast<double>(b) * bin_width_s;
        bin.end_s = static_cast<double>(b + 1) * bin_width_s;
        bin.n_neg = neg_total;
        bin.fpr = fpr;

        std::size_t pos = 0, hit = 0;
        std::vector<std::optional<double>> class_rates;
        for (std::size_t c = 1; c < n_classes; ++c) {
            pos += bin_pos[b][c];
            hit += bin_hit[b][c];
            if (bin_pos[b][c] > 0) {
                class_rates.push_back(static_cast<double>(bin_hit[b][c]) /
                                      static_cast<double>(bin_pos[b][c]));
            } else {
                class_rates.push_back(std::nullopt);
            }
        }
        bin.n_pos = pos;
        bin.tpr = mean_present(class_rates);
        if (pos + neg_total > 0) {
            bin.accuracy = static_cast<double>(hit + neg_correct) /
                           static_cast<double>(pos + neg_total);
        }
        out.bins.push_back(std::move(bin));
    }

    out.aggregate.n_examples = set.examples.size();
    out.aggregate.n_neg = neg_total;
    out.aggregate.n_pos = set.examples.size() - neg_total;
    out.aggregate.accuracy =
        static_cast<double>(correct_total) / static_cast<double>(set.examples.size());
    out.aggregate.fpr = fpr;
    out.aggregate.per_class_tpr.assign(n_classes, std::nullopt);
    for (std::size_t c = 1; c < n_classes; ++c) {
        if (class_pos[c] > 0) {
            out.aggregate.per_class_tpr[c] =
                static_cast<double>(class_hit[c]) / static_cast<double>(class_pos[c]);
        }
    }
    return out;
}

PiecewiseMetrics piecewise_eval(const ModelParameters& m, const ExampleSet& set,
                                double bin_width_s, std::size_t threads) {
    check_model_against_set(m, set);
    if (set.examples.empty()) throw ValidationError("piecewise_eval: empty test set");

    const std::size_t n = set.examples.size();
    std::vector<std::size_t> predictions(n, 0);
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < n; i += stride) {
            predictions[i] = classify(predict_probs(m, set.examples[i].window));
        }
    };
    std::size_t nt = threads == 0 ? std::thread::hardware_concurrency() : threads;
    nt = std::max<std::size_t>(1, std::min(nt, n));
    if (nt <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < nt; ++k) pool.emplace_back(work, k, nt);
        for (auto& th : pool) th.join();
    }
    return piecewise_from_predictions(predictions, set, bin_width_s);
}

CompareReport compare_curves(const PiecewiseMetrics& a, const PiecewiseMetrics& b,
                             double margin) {
    if (a.bins.size() != b.bins.size() || std::abs(a.bin_width_s - b.bin_width_s) > 1e-9 ||
        std::abs(a.horizon_s - b.horizon_s) > 1e-9) {
        throw ValidationError("compare_curves: binning mismatch");
    }
    CompareReport report;
    report.margin = margin;
    report.d_aggregate_accuracy = a.aggregate.accuracy - b.aggregate.accuracy;
    for (std::size_t i = 0; i < a.bins.size(); ++i) {
        BinDelta delta;
        delta.start_s = a.bins[i].start_s;
        delta.end_s = a.bins[i].end_s;
        if (a.bins[i].accuracy && b.bins[i].accuracy) {
            delta.d_accuracy = *a.bins[i].accuracy - *b.bins[i].accuracy;
        }
        if (a.bins[i].tpr && b.bins[i].tpr) delta.d_tpr = *a.bins[i].tpr - *b.bins[i].tpr;
        if (a.bins[i].fpr && b.bins[i].fpr) delta.d_fpr = *a.bins[i].fpr - *b.bins[i].fpr;
        report.bins.push_back(delta);
    }
    // Earliest prediction = farthest from the event, so scan from the
    // largest time-to-event bin down.
    for (std::size_t k = report.bins.size(); k-- > 0;) {
        if (report.bins[k].d_accuracy && *report.bins[k].d_accuracy >= margin) {
            report.first_bin_a_leads = k;
            break;
        }
    }
    return report;
}

void write_metrics_csv(const PiecewiseMetrics& metrics, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "bin_start_s,bin_end_s,n_pos,n_neg,accuracy,tpr,fpr\n";
    for (const BinMetrics& bin : metrics.bins) {
        out << format_double(bin.start_s) << ',' << format_double(bin.end_s) << ','
            << bin.n_pos << ',' << bin.n_neg << ',' << fmt_rate(bin.accuracy) << ','
            << fmt_rate(bin.tpr) << ',' << fmt_rate(bin.fpr) << '\n';
    }
    std::vector<std::optional<double>> tprs(metrics.aggregate.per_class_tpr.begin(),
                                            metrics.aggregate.per_class_tpr.end());
    out << "aggregate," << format_double(metrics.horizon_s) << ',' << metrics.aggregate.n_pos
        << ',' << metrics.aggregate.n_neg << ',' << fmt_rate(metrics.aggregate.accuracy) << ','
        << fmt_rate(mean_present(tprs)) << ',' << fmt_rate(metrics.aggregate.fpr) << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

void write_compare_csv(const CompareReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "bin_start_s,bin_end_s,d_accuracy,d_tpr,d_fpr\n";
    for (const BinDelta& delta : report.bins) {
        out << format_double(delta.start_s) << ',' << format_double(delta.end_s) << ','
            << fmt_rate(delta.d_accuracy) << ',' << fmt_rate(delta.d_tpr) << ','
            << fmt_rate(delta.d_fpr) << '\n';
    }
    out << "aggregate,," << fmt_rate(report.d_aggregate_accuracy) << ",,\n";
    out << "margin,," << fmt_rate(report.margin) << ",,\n";
    out << "first_bin_a_leads,";
    if (report.first_bin_a_leads) {
        out << format_double(report.bins[*report.first_bin_a_leads].start_s);
    }
    out << ",,,\n";
    if (!out) throw IoError("write failed for '" + path + "'");
}

} // namespace dap
