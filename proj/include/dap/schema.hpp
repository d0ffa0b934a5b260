#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dap {

enum class ChannelKind { Float, Factor };

struct ChannelSpec {
    std::string name;
    std::string group;
    ChannelKind kind{};
};

// The 50-channel feature contract: five modality groups of fixed sizes
// (can_bus 8, face 9, hand 19, dash 12, gps_map 2). Factor-valued channels
// carry integer codes and are filled nearest-past during resampling.
class FeatureSchema {
public:
    static const FeatureSchema& standard();

    std::span<const ChannelSpec> channels() const { return channels_; }
    std::size_t size() const { return channels_.size(); }
    const ChannelSpec& at(std::size_t i) const { return channels_[i]; }

    // Index of a channel by name; throws ValidationError for unknown names.
    std::size_t index_of(const std::string& name) const;
    bool has(const std::string& name) const;

    // FNV-1a over the ordered channel names and kinds; identifies the
    // feature contract in model and example-set files.
    std::uint64_t hash() const { return hash_; }

private:
    explicit FeatureSchema(std::vector<ChannelSpec> channels);

    std::vector<ChannelSpec> channels_;
    std::uint64_t hash_ = 0;
};

} // namespace dap
