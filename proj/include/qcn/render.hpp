#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qcn/circulation.hpp"
#include "qcn/net_core.hpp"

namespace qcn {

using Raster = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class FrameFormat { kAscii, kPgm };

namespace gray {
inline constexpr std::uint8_t kBackground = 255;
inline constexpr std::uint8_t kEmptyCell = 224;
inline constexpr std::uint8_t kTurnstileOutline = 128;
inline constexpr std::uint8_t kOccupied = 0;
}  // namespace gray

struct RenderOptions {
  FrameFormat format = FrameFormat::kPgm;
  double pixels_per_unit = 8.0;
};

// Continuous levels are shaded against `level_max`; cells at level 0 are left as background.
Raster render_snapshot(const NetTopology& net, const Snapshot& snapshot, Mode mode, double pixels_per_unit,
                       double level_max);

std::string encode_pgm(const Raster& raster);
std::string encode_ascii(const Raster& raster);

// Writes frame_<step>.{pgm,txt} for every snapshot and returns the paths in snapshot order.
// Throws Error(kNoSnapshots) when the trace has none.
std::vector<std::filesystem::path> render_frames(const NetTopology& net, const Trace& trace,
                                                 const RenderOptions& options, const std::filesystem::path& out_dir);

}  // namespace qcn
