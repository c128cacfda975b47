#pragma once

#include <string>

#include "vslam/pipeline/dataset.hpp"
#include "vslam/pipeline/system.hpp"

namespace vslam {

struct SlamConfig {
  std::string mode = "stereo";       // mono | stereo
  std::string profile = "standard";  // standard | fast
  bool rt_mode = false;
  std::uint64_t seed = 1;
  std::string log_level = "info";
  SystemOptions system;
  DatasetOptions dataset;

  bool monocular() const { return mode == "mono"; }
};

// Flat key=value text; unknown keys and invalid values throw
// std::runtime_error. The fast profile disables loop closing and uses FAST
// corners on 50 px cells whatever the other keys say.
SlamConfig ParseSlamConfig(const std::string& text);
SlamConfig LoadSlamConfig(const std::string& path);
// Every key with its current value, in the file format.
std::string FormatSlamConfig(const SlamConfig& config);

}  // namespace vslam
