#pragma once

#include <string>

#include "lws/budget.hpp"
#include "lws/model.hpp"

namespace lws {

// Checkpoint layout: a directory holding
//   manifest.json  - format tag, step, resolved model config, tensor index
//   weights.bin    - all tensors as raw float32, little-endian, back to back
// Tensor order and names follow for_each_tensor.
void save_checkpoint(const std::string& dir, const weights<float>& w, const model_config& cfg,
                     long long step);

struct checkpoint_data {
    weights<float> model;
    model_config config;
    long long step = 0;
};

// Throws std::runtime_error on missing files, unknown format, or any
// mismatch between the tensor index and the weight file.
checkpoint_data load_checkpoint(const std::string& dir);

} // namespace lws
