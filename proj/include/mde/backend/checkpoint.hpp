#pragma once

#include <string>

#include "mde/backend/toy_denoiser.hpp"

namespace mde {

// Checkpoint = container whose header carries the architecture, schedule,
// vocabulary (words + hash) and whose blobs are the parameters.
void save_denoiser(const std::string& path, const ToyDenoiser& model);
ToyDenoiser load_denoiser(const std::string& path);

}  // namespace mde
