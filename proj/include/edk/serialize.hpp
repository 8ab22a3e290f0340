#pragma once

// EDC1 checkpoint container: a JSON metadata header (kind, caller metadata,
// tensor manifest, parameter checksum) followed by the float32 tensor payload
// in manifest order. Loading rebuilds the model from the metadata first, then
// fills its collected parameters in place and re-verifies the checksum.

#include <string>

#include <json.hpp>

#include "edk/common.hpp"
#include "edk/nn.hpp"

namespace edk {

// Writes `params` under a `kind` tag with an arbitrary metadata block.
void write_checkpoint(const std::string& path, const std::string& kind,
                      const nlohmann::json& meta, const nn::ParamList<float>& params);

// Header-only read: returns the metadata block so the caller can construct a
// model of the right shape before loading tensors. Throws DataError when the
// file is malformed or carries a different `kind`.
nlohmann::json read_checkpoint_meta(const std::string& path, const std::string& kind);

// Fills `params` (collected from a freshly-built model) from the payload.
// Validates tensor names, shapes, order, and the stored parameter checksum;
// returns the metadata block.
nlohmann::json load_checkpoint(const std::string& path, const std::string& kind,
                               nn::ParamList<float>& params);

}  // namespace edk
