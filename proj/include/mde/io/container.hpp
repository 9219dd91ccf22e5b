#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mde/core/tensor.hpp"

namespace mde {

// Single-file tensor container: magic, u32 little-endian JSON header length,
// JSON header, then contiguous little-endian float32 blobs. The header's
// "tensors" array records name/shape/offset (in f32 units) per blob;
// everything else in the header is caller metadata.
struct Container {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void save(const std::string& path) const;
    static Container load(const std::string& path);

    const Tensor* find(const std::string& name) const;
};

// FNV-1a over a whole file; used to fingerprint checkpoints.
std::uint64_t fnv1a_file(const std::string& path);

}  // namespace mde
