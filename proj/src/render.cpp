#include "qcn/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "qcn/error.hpp"
#include "qcn/io.hpp"

namespace qcn {

namespace {

struct Viewport {
  double min_x = 0.0;
  double max_y = 0.0;
  double scale = 1.0;
  Eigen::Index rows = 1;
  Eigen::Index cols = 1;

  Eigen::Vector2d to_pixel(const Position& p) const { return {(p.x() - min_x) * scale, (max_y - p.y()) * scale}; }
};

Viewport fit(const NetTopology& net, double scale) {
  Viewport v;
  v.scale = scale;
  if (net.size() == 0) return v;
  Eigen::Vector2d lo = net.cell(0).position.head<2>();
  Eigen::Vector2d hi = lo;
  for (const Cell& c : net.cells()) {
    lo = lo.cwiseMin(c.position.head<2>());
    hi = hi.cwiseMax(c.position.head<2>());
  }
  const double pad = net.radius() + 1.0 / scale;
  v.min_x = lo.x() - pad;
  v.max_y = hi.y() + pad;
  v.cols = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil((hi.x() - lo.x() + 2 * pad) * scale)));
  v.rows = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil((hi.y() - lo.y() + 2 * pad) * scale)));
  return v;
}

// Paints pixels whose centres fall in the annulus inner < d <= outer (in pixels).
void paint_disc(Raster& raster, const Eigen::Vector2d& centre, double outer, double inner, std::uint8_t value) {
  const auto r0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(centre.y() - outer)));
  const auto r1 = std::min<Eigen::Index>(raster.rows() - 1, static_cast<Eigen::Index>(std::ceil(centre.y() + outer)));
  const auto c0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(centre.x() - outer)));
  const auto c1 = std::min<Eigen::Index>(raster.cols() - 1, static_cast<Eigen::Index>(std::ceil(centre.x() + outer)));
  for (auto r = r0; r <= r1; ++r) {
    for (auto c = c0; c <= c1; ++c) {
      const double d = (Eigen::Vector2d(c + 0.5, r + 0.5) - centre).norm();
      if (d <= outer && d > inner) raster(r, c) = value;
    }
  }
}

}  // namespace

Raster render_snapshot(const NetTopology& net, const Snapshot& snapshot, Mode mode, double pixels_per_unit,
                       double level_max) {
  if (!(pixels_per_unit > 0.0)) throw Error(ErrorKind::kInvalidArgument, "pixels per unit must be positive");
  const Viewport view = fit(net, pixels_per_unit);
  Raster raster = Raster::Constant(view.rows, view.cols, gray::kBackground);
  const double radius = net.radius() * pixels_per_unit;

  std::vector<double> shade(net.size(), -1.0);
  for (const auto& record : snapshot.cells) {
    if (record.cell >= net.size()) continue;
    if (mode == Mode::kDiscrete) {
      shade[record.cell] = record.occupied ? gray::kOccupied : gray::kEmptyCell;
    } else if (record.level > 0.0 && level_max > 0.0) {
      shade[record.cell] = 255.0 - 255.0 * std::min(1.0, record.level / level_max);
    }
  }

  for (const Cell& c : net.cells()) {
    double value = shade[c.id];
    if (value < 0.0 && mode == Mode::kDiscrete) value = gray::kEmptyCell;
    if (value >= 0.0) {
      paint_disc(raster, view.to_pixel(c.position), radius, -1.0, static_cast<std::uint8_t>(std::lround(value)));
    }
    if (std::holds_alternative<TurnstileSpec>(c.kind)) {
      paint_disc(raster, view.to_pixel(c.position), radius, std::max(0.0, radius - 1.0), gray::kTurnstileOutline);
    }
  }
  return raster;
}

std::string encode_pgm(const Raster& raster) {
  std::string out = "P5\n" + std::to_string(raster.cols()) + ' ' + std::to_string(raster.rows()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(raster.data()), static_cast<std::size_t>(raster.size()));
  return out;
}

std::string encode_ascii(const Raster& raster) {
  static constexpr char kRamp[] = " .:-=+*#%@";
  std::string out;
  out.reserve(static_cast<std::size_t>(raster.size() + raster.rows()));
  for (Eigen::Index r = 0; r < raster.rows(); ++r) {
    for (Eigen::Index c = 0; c < raster.cols(); ++c) out += kRamp[(255 - raster(r, c)) * 9 / 255];
    out += '\n';
  }
  return out;
}

std::vector<std::filesystem::path> render_frames(const NetTopology& net, const Trace& trace,
                                                 const RenderOptions& options, const std::filesystem::path& out_dir) {
  if (trace.snapshots.empty()) throw Error(ErrorKind::kNoSnapshots, "trace contains no snapshots");

  double level_max = 0.0;
  for (const auto& s : trace.snapshots) {
    for (const auto& c : s.cells) level_max = std::max(level_max, c.level);
  }

  const bool pgm = options.format == FrameFormat::kPgm;
  std::vector<std::filesystem::path> paths;
  paths.reserve(trace.snapshots.size());
  for (const auto& s : trace.snapshots) {
    const Raster raster = render_snapshot(net, s, trace.header.mode, options.pixels_per_unit, level_max);
    char name[64];
    std::snprintf(name, sizeof name, "frame_%06lld.%s", static_cast<long long>(s.step), pgm ? "pgm" : "txt");
    paths.push_back(out_dir / name);
    write_file(paths.back(), pgm ? encode_pgm(raster) : encode_ascii(raster));
  }
  return paths;
}

}  // namespace qcn
