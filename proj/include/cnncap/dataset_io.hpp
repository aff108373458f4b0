#pragma once

// Binary encoded-sample files (little-endian):
//   header  "CCAP" | version u32 | L u32 | count u64 | channel tag "BMT\0"
//   record  task u8 | env_id i32 | target f64 | 3*L f32
//   trailer (optional) "META" | byte length u64 | UTF-8 text
// The trailer lists one `structure <id>` line per structure, in record order,
// followed by free-form `key=value` provenance lines.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cnncap/gridrep.hpp"

namespace cnncap {

inline constexpr std::uint32_t kDatasetVersion = 1;

struct GridDataset {
    int L = 0;
    std::vector<GridSample> samples;
    std::vector<std::string> meta; // key=value lines

    /// [begin, end) sample ranges, one per structure; each starts at a total record.
    std::vector<std::pair<std::size_t, std::size_t>> structure_groups() const;
    /// Hash over L and every record; identifies a dataset in model metadata.
    std::uint64_t fingerprint() const;
};

void write_dataset(const std::filesystem::path& path, const GridDataset& ds);
GridDataset read_dataset(const std::filesystem::path& path);

} // namespace cnncap
