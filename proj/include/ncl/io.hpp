#pragma once

#include "ncl/encoders.hpp"
#include "ncl/training.hpp"
#include "ncl/types.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace ncl {

/// Row-major, headerless, 17 significant digits.
void write_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_csv(const std::filesystem::path& path);

/// step,loss,grad_norm,dead_dims,ms with a header row.
void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace);

/// Header row followed by rows; cells are written verbatim.
void write_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Binary container: "NCLCKPT\0", u32 version, u64 header length, a JSON
/// header (kind, layer sizes, transform, seed, block shapes), then each
/// parameter block as row-major little-endian f64. MLP checkpoints with a
/// custom embedding append it as a final block.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const std::vector<const Encoder*>& encoders);
/// Throws IoError on a malformed or truncated file.
std::vector<std::unique_ptr<Encoder>> load_checkpoint(const std::filesystem::path& path);

}  // namespace ncl
