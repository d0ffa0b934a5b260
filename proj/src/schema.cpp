#include "dap/schema.hpp"

#include "dap/errors.hpp"

namespace dap {

namespace {

std::uint64_t fnv1a(const std::string& text, std::uint64_t h) {
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::vector<ChannelSpec> standard_channels() {
    const auto F = ChannelKind::Float;
    const auto K = ChannelKind::Factor;
    std::vector<ChannelSpec> ch;
    ch.reserve(50);

    // can_bus (8)
    ch.push_back({"brake_pressure", "can_bus", F});
    ch.push_back({"accel_pressure", "can_bus", F});
    ch.push_back({"gear_position", "can_bus", K});
    ch.push_back({"steering_angle", "can_bus", F});
    ch.push_back({"velocity", "can_bus", F});
    ch.push_back({"acceleration", "can_bus", F});
    ch.push_back({"engine_rpm", "can_bus", F});
    ch.push_back({"elevation", "can_bus", F});

    // face (9): mean head motion plus horizontal/angular motion histograms
    ch.push_back({"face_mean_motion", "face", F});
    for (int i = 0; i < 4; ++i) ch.push_back({"face_hmot_bin" + std::to_string(i), "face", F});
    for (int i = 0; i < 4; ++i) ch.push_back({"face_amot_bin" + std::to_string(i), "face", F});

    // hand (19)
    for (const char* side : {"left", "right"}) {
        std::string s(side);
        ch.push_back({"hand_" + s + "_x", "hand", F});
        ch.push_back({"hand_" + s + "_y", "hand", F});
        ch.push_back({"hand_" + s + "_dist", "hand", F});
        ch.push_back({"hand_" + s + "_angle", "hand", F});
        ch.push_back({"hand_" + s + "_wheel_pos", "hand", F});
        ch.push_back({"hand_" + s + "_on_wheel", "hand", K});
        ch.push_back({"hand_" + s + "_motion", "hand", K});
        ch.push_back({"hand_" + s + "_move_dist", "hand", F});
        ch.push_back({"hand_" + s + "_move_dir", "hand", F});
    }
    ch.push_back({"hand_spread", "hand", F});

    // dash (12)
    ch.push_back({"lane_avail_left", "dash", K});
    ch.push_back({"lane_avail_right", "dash", K});
    ch.push_back({"lane_offset_left", "dash", F});
    ch.push_back({"lane_offset_right", "dash", F});
    ch.push_back({"lane_curvature_left", "dash", F});
    ch.push_back({"lane_curvature_right", "dash", F});
    ch.push_back({"obj_rel_pos_ego", "dash", F});
    ch.push_back({"obj_rel_vel_ego", "dash", F});
    ch.push_back({"obj_rel_pos_left", "dash", F});
    ch.push_back({"obj_rel_vel_left", "dash", F});
    ch.push_back({"obj_rel_pos_right", "dash", F});
    ch.push_back({"obj_rel_vel_right", "dash", F});

    // gps_map (2)
    ch.push_back({"intersection_state", "gps_map", K});
    ch.push_back({"intersection_distance", "gps_map", F});

    return ch;
}

} // namespace

FeatureSchema::FeatureSchema(std::vector<ChannelSpec> channels)
    : channels_(std::move(channels)) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const ChannelSpec& c : channels_) {
        h = fnv1a(c.name, h);
        h = fnv1a(c.kind == ChannelKind::Float ? ":float;" : ":factor;", h);
    }
    hash_ = h;
}

const FeatureSchema& FeatureSchema::standard() {
    static const FeatureSchema schema(standard_channels());
    return schema;
}

std::size_t FeatureSchema::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < channels_.size(); ++i) {
        if (channels_[i].name == name) return i;
    }
    throw ValidationError("unknown channel '" + name + "'");
}

bool FeatureSchema::has(const std::string& name) const {
    for (const ChannelSpec& c : channels_) {
        if (c.name == name) return true;
    }
    return false;
}

} // namespace dap
