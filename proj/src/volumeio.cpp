// SPDX-License-Identifier: Apache-2.0
#include "volgen/volumeio.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace volgen {

using nlohmann::json;

static_assert(sizeof(float) == 4, "float must be 32-bit");

namespace {
constexpr char kMagic[4] = {'V', 'O', 'L', '1'};
}

void write_volume(const std::string& path, const VoxelGrid& grid) {
  grid.validate();
  json header = {
      {"version", 1},
      {"resolution", grid.resolution},
      {"channels", grid.channels},
      {"extent", {grid.extent.lo[0], grid.extent.lo[1], grid.extent.lo[2], grid.extent.hi[0],
                  grid.extent.hi[1], grid.extent.hi[2]}},
      {"layout", layout_name(grid.layout)},
      {"dtype", "f32"},
  };
  const std::string hs = header.dump();
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "write_volume: cannot open " + path);
  f.write(kMagic, 4);
  const uint32_t len = static_cast<uint32_t>(hs.size());
  f.write(reinterpret_cast<const char*>(&len), 4);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  f.write(reinterpret_cast<const char*>(grid.values.data()),
          static_cast<std::streamsize>(grid.values.numel() * 4));
  check(f.good(), "write_volume: write failed for " + path);
}

VoxelGrid read_volume(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "read_volume: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  check(f.good() && std::memcmp(magic, kMagic, 4) == 0, "read_volume: bad magic in " + path);
  uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 4);
  check(f.good() && len < (1u << 20), "read_volume: bad header length in " + path);
  std::string hs(len, '\0');
  f.read(hs.data(), len);
  check(f.good(), "read_volume: truncated header in " + path);
  json header = json::parse(hs);
  check(header.at("dtype") == "f32", "read_volume: unsupported dtype");
  check(header.at("version").get<int>() == 1, "read_volume: unsupported version");

  const int S = header.at("resolution").get<int>();
  const int C = header.at("channels").get<int>();
  Extent ext;
  const auto& e = header.at("extent");
  check(e.size() == 6, "read_volume: bad extent");
  for (int a = 0; a < 3; ++a) {
    ext.lo[a] = e[a].get<double>();
    ext.hi[a] = e[a + 3].get<double>();
  }
  VoxelGrid grid = VoxelGrid::zeros(S, C, layout_from_name(header.at("layout")), ext);
  f.read(reinterpret_cast<char*>(grid.values.data()),
         static_cast<std::streamsize>(grid.values.numel() * 4));
  check(f.good(), "read_volume: truncated payload in " + path);
  grid.validate();
  return grid;
}

}  // namespace volgen
