#pragma once

#include <optional>
#include <string>

#include "dap/matrix.hpp"

namespace dap {

// One labeled training/evaluation window: T x F frames in chronological
// order, ending at end_time_s within its session. Class 0 is always the
// negative (normal driving) class of the owning task; positives carry the
// time from window end to the action onset.
struct Example {
    Matrix window;
    std::size_t label = 0;
    std::optional<double> time_to_event_s;
    std::string session_id;
    double end_time_s = 0.0;
};

} // namespace dap
