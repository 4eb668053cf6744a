#include "reflectsim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "reflectsim/errors.hpp"

namespace reflectsim::geometry {

namespace {

constexpr double kPi = 3.14159265358979323846;

// In-plane orthonormal axes for the lattice. e1 spans columns, e2 rows.
void plane_axes(const Vec3& n, Vec3* e1, Vec3* e2) {
  const Vec3 helper = std::abs(n.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  *e1 = normalized(cross(helper, n));
  *e2 = cross(n, *e1);
}

}  // namespace

std::vector<int> TileGrid::segment_tiles(int segment) const {
  std::vector<int> out;
  for (int i = 0; i < tile_count(); ++i) {
    if (segment_of[i] == segment) out.push_back(i);
  }
  return out;
}

Vec3 TileGrid::segment_centroid(int segment) const {
  Vec3 c{};
  int n = 0;
  for (int i = 0; i < tile_count(); ++i) {
    if (segment_of[i] == segment) {
      c += tile_positions[i];
      ++n;
    }
  }
  return c / static_cast<double>(n);
}

TileGrid build_grid(int rows, int cols, double pitch, const Vec3& mount_center,
                    const Vec3& mount_normal, int num_segments) {
  if (rows < 1 || cols < 1 || num_segments < 1) {
    throw InvalidArgument("build_grid: rows, cols, num_segments must be >= 1");
  }
  if (num_segments > cols) {
    throw InvalidArgument("build_grid: num_segments exceeds cols");
  }
  if (pitch <= 0.0) {
    throw InvalidArgument("build_grid: pitch must be positive");
  }
  if (norm(mount_normal) == 0.0) {
    throw InvalidArgument("build_grid: mount_normal must be nonzero");
  }

  TileGrid g;
  g.rows = rows;
  g.cols = cols;
  g.pitch = pitch;
  g.mount_center = mount_center;
  g.mount_normal = normalized(mount_normal);
  g.num_segments = num_segments;

  Vec3 e1, e2;
  plane_axes(g.mount_normal, &e1, &e2);

  const double row_pitch = pitch * std::sqrt(3.0) / 2.0;
  const double c0 = (cols - 1) / 2.0;
  const double r0 = (rows - 1) / 2.0;
  g.tile_positions.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    const double stagger = (r % 2 == 1) ? 0.5 : 0.0;
    for (int c = 0; c < cols; ++c) {
      const double u = (c - c0 + stagger) * pitch;
      const double v = (r - r0) * row_pitch;
      g.tile_positions.push_back(mount_center + e1 * u + e2 * v);
    }
  }

  // Contiguous column blocks of near-equal width; leading blocks absorb the
  // remainder (9 cols / 2 segments -> widths 5 and 4).
  const int base = cols / num_segments;
  const int extra = cols % num_segments;
  std::vector<int> col_segment(cols);
  int col = 0;
  for (int s = 0; s < num_segments; ++s) {
    const int width = base + (s < extra ? 1 : 0);
    for (int w = 0; w < width; ++w) col_segment[col++] = s;
  }
  g.segment_of.resize(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      g.segment_of[static_cast<std::size_t>(r) * cols + c] = col_segment[c];
    }
  }
  return g;
}

TileOrientation tile_normal(const Vec3& tile_pos, const Vec3& focal,
                            const Vec3& ap) {
  const Vec3 to_focal = focal - tile_pos;
  const Vec3 to_ap = ap - tile_pos;
  const double df = norm(to_focal);
  const double da = norm(to_ap);
  if (df < 1e-12 || da < 1e-12) {
    throw DegenerateGeometry("tile_normal: focal or AP coincides with tile");
  }
  const Vec3 half = (to_focal / df + to_ap / da) * 0.5;
  const double hn = norm(half);
  if (hn < 1e-9) {
    throw DegenerateGeometry("tile_normal: focal and AP directions cancel");
  }
  TileOrientation o;
  o.normal = half / hn;
  o.theta = std::acos(std::clamp(o.normal.z, -1.0, 1.0));
  o.phi = std::atan2(o.normal.y, o.normal.x);
  if (o.phi == -kPi) o.phi = kPi;
  return o;
}

bool segment_feasible(const TileGrid& grid, int segment, const Vec3& ap,
                      const AngleInterval& theta_lim,
                      const AngleInterval& phi_lim, const Vec3& focal) {
  for (int i = 0; i < grid.tile_count(); ++i) {
    if (grid.segment_of[i] != segment) continue;
    TileOrientation o;
    try {
      o = tile_normal(grid.tile_positions[i], focal, ap);
    } catch (const DegenerateGeometry&) {
      return false;
    }
    if (!theta_lim.contains(o.theta) || !phi_lim.contains(o.phi)) return false;
  }
  return true;
}

FeasibleBox feasible_box(const TileGrid& grid, int segment, const Vec3& ap,
                         const AngleInterval& theta_lim,
                         const AngleInterval& phi_lim,
                         const FeasibleBox& search_box, double grid_step) {
  if (segment < 0 || segment >= grid.num_segments) {
    throw InvalidArgument("feasible_box: no such segment");
  }
  if (theta_lim.lo > theta_lim.hi || phi_lim.lo > phi_lim.hi) {
    throw InvalidArgument("feasible_box: angle limits not well-ordered");
  }
  if (grid_step <= 0.0) {
    throw InvalidArgument("feasible_box: grid_step must be positive");
  }

  const auto axis_samples = [grid_step](double lo, double hi) {
    std::vector<double> xs;
    const int n = static_cast<int>(std::floor((hi - lo) / grid_step + 1e-9));
    for (int i = 0; i <= n; ++i) xs.push_back(lo + i * grid_step);
    if (xs.back() < hi - 1e-9) xs.push_back(hi);
    return xs;
  };
  const auto xs = axis_samples(search_box.lo.x, search_box.hi.x);
  const auto ys = axis_samples(search_box.lo.y, search_box.hi.y);
  const auto zs = axis_samples(search_box.lo.z, search_box.hi.z);

  bool any = false;
  FeasibleBox out;
  for (double x : xs) {
    for (double y : ys) {
      for (double z : zs) {
        const Vec3 p{x, y, z};
        if (!segment_feasible(grid, segment, ap, theta_lim, phi_lim, p)) {
          continue;
        }
        if (!any) {
          out.lo = out.hi = p;
          any = true;
        } else {
          out.lo.x = std::min(out.lo.x, x);
          out.lo.y = std::min(out.lo.y, y);
          out.lo.z = std::min(out.lo.z, z);
          out.hi.x = std::max(out.hi.x, x);
          out.hi.y = std::max(out.hi.y, y);
          out.hi.z = std::max(out.hi.z, z);
        }
      }
    }
  }
  if (!any) {
    throw EmptyFeasibleRegion("feasible_box: no feasible sample for segment " +
                              std::to_string(segment));
  }
  return out;
}

Vec3 clip_to_box(const Vec3& p, const FeasibleBox& box) {
  return {std::clamp(p.x, box.lo.x, box.hi.x),
          std::clamp(p.y, box.lo.y, box.hi.y),
          std::clamp(p.z, box.lo.z, box.hi.z)};
}

}  // namespace reflectsim::geometry
