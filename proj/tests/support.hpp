#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "iflatcam/compress.hpp"
#include "iflatcam/netspec.hpp"
#include "iflatcam/seed.hpp"

namespace testing {

inline std::filesystem::path source_path(const std::string& rel) { return std::filesystem::path(IFLATCAM_SOURCE_DIR) / rel; }
inline std::filesystem::path golden_path(const std::string& name) { return std::filesystem::path(IFLATCAM_GOLDEN_DIR) / name; }

inline iflatcam::netspec::NetworkSpec preset(const std::string& name) {
  return iflatcam::netspec::load_network(source_path("presets/" + name + ".json"));
}

inline std::vector<iflatcam::compress::DenseWeights> seeded_weights(const iflatcam::netspec::NetworkSpec& net,
                                                                    std::uint64_t seed) {
  return iflatcam::compress::random_network_weights(net, seed);
}

}  // namespace testing
