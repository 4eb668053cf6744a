#ifndef REFLECTSIM_GEOMETRY_HPP_
#define REFLECTSIM_GEOMETRY_HPP_

#include <map>
#include <vector>

#include "reflectsim/vec3.hpp"

namespace reflectsim::geometry {

using reflectsim::Vec3;

// Planar hex-tile array. Tiles live on a lattice spanned by two in-plane
// axes derived from the mount normal; odd rows are offset half a pitch.
// segment_of is a total partition of tile indices into 0..num_segments-1.
struct TileGrid {
  int rows = 0;
  int cols = 0;
  double pitch = 0.0;
  Vec3 mount_center;
  Vec3 mount_normal;  // unit
  std::vector<Vec3> tile_positions;
  std::vector<int> segment_of;
  int num_segments = 0;

  int tile_count() const { return rows * cols; }
  std::vector<int> segment_tiles(int segment) const;
  Vec3 segment_centroid(int segment) const;
};

struct TileOrientation {
  Vec3 normal;   // unit
  double theta;  // arccos(n.z), [0, pi]
  double phi;    // atan2(n.y, n.x), (-pi, pi]
};

struct FeasibleBox {
  Vec3 lo;
  Vec3 hi;

  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y &&
           p.z >= lo.z && p.z <= hi.z;
  }
};

// Per-segment control state: current focal point, its feasible box and the
// user the segment is serving.
struct FocalState {
  Vec3 focal;
  FeasibleBox box;
  int assigned_user = 0;
};

// Inclusive angle band. phi bands may extend past +-pi; containment lifts
// the angle by 2*pi as needed so wrap-around mounts stay well-ordered.
struct AngleInterval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double a) const {
    return (a >= lo && a <= hi) || (a + 2 * 3.14159265358979323846 >= lo &&
                                    a + 2 * 3.14159265358979323846 <= hi) ||
           (a - 2 * 3.14159265358979323846 >= lo &&
            a - 2 * 3.14159265358979323846 <= hi);
  }
};

TileGrid build_grid(int rows, int cols, double pitch, const Vec3& mount_center,
                    const Vec3& mount_normal, int num_segments);

// Orientation that reflects an AP ray toward the focal point: normalized
// half-sum of the unit vectors toward focal and toward the AP.
TileOrientation tile_normal(const Vec3& tile_pos, const Vec3& focal,
                            const Vec3& ap);

// Tightest axis-aligned box around the grid_step samples of search_box whose
// focal points keep every tile of the segment inside the angle limits.
FeasibleBox feasible_box(const TileGrid& grid, int segment, const Vec3& ap,
                         const AngleInterval& theta_lim,
                         const AngleInterval& phi_lim,
                         const FeasibleBox& search_box, double grid_step);

// True when every tile of the segment satisfies the angle limits for focal.
bool segment_feasible(const TileGrid& grid, int segment, const Vec3& ap,
                      const AngleInterval& theta_lim,
                      const AngleInterval& phi_lim, const Vec3& focal);

Vec3 clip_to_box(const Vec3& p, const FeasibleBox& box);

}  // namespace reflectsim::geometry

#endif  // REFLECTSIM_GEOMETRY_HPP_
