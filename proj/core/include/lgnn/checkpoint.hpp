#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "lgnn/tensor.hpp"

namespace lgnn {

// Parameter checkpoint: versioned header followed by a flat name -> tensor
// map. Shapes are u64 dims, values a little-endian f64 stream. Entries are
// written in key order so identical parameter sets produce identical bytes.
using ParamMap = std::map<std::string, Tensor>;

void save_checkpoint(const ParamMap& params, const std::filesystem::path& path);
ParamMap load_checkpoint(const std::filesystem::path& path,
                         bool requires_grad = true);

}  // namespace lgnn
