// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "volgen/voxgrid.hpp"

namespace volgen {

// Volume container: 4-byte magic "VOL1", little-endian uint32 header length,
// UTF-8 JSON header {version, resolution, channels, extent, layout, dtype},
// then resolution^3 * channels float32 values (little-endian, channel-last,
// x fastest). Written by the synthesizer, sampler and CLI; read back anywhere.
void write_volume(const std::string& path, const VoxelGrid& grid);
VoxelGrid read_volume(const std::string& path);

}  // namespace volgen
