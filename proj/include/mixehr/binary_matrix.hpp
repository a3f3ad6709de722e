#pragma once

#include <filesystem>

#include "mixehr/matrix.hpp"

namespace mixehr {

// On-disk matrix format shared by checkpoints and ground-truth bundles:
//   bytes 0-3   magic "MXLM"
//   bytes 4-7   rows, u32 little-endian
//   bytes 8-11  cols, u32 little-endian
//   bytes 12-15 reserved, zero
//   rows*cols f64 little-endian values, row-major
inline constexpr std::size_t kMatrixHeaderBytes = 16;

void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);

}  // namespace mixehr
