#pragma once

#include "iflatcam/accelsim.hpp"

namespace iflatcam::accelsim::detail {

LayerSchedule map_channels(const LayerSpec& layer, const TensorShape& in_shape, const AccelConfig& cfg,
                           Dataflow dataflow, const std::vector<std::int64_t>& channels);

}  // namespace iflatcam::accelsim::detail
