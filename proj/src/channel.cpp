#include "reflectsim/channel.hpp"

#include <cmath>

#include "reflectsim/errors.hpp"

namespace reflectsim::channel {

namespace {
constexpr double kPi = 3.14159265358979323846;

// cos^m lobe exponent for a half-power full width bw: cos(bw/2)^m = 1/2.
double lobe_exponent(double beamwidth) {
  const double c = std::cos(beamwidth / 2.0);
  return std::log(0.5) / std::log(c);
}
}  // namespace

double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

double mw_to_dbm(double mw) {
  if (!(mw > 0.0)) return kDbmFloor;
  return std::max(10.0 * std::log10(mw), kDbmFloor);
}

double calibrated_aperture(int tiles, double range_m, double target_dbm,
                           double tx_power_dbm) {
  // P_t * (n * A / (d1*d2))^2 = P_target, phase-aligned.
  const double amp = std::sqrt(dbm_to_mw(target_dbm - tx_power_dbm));
  return amp * range_m * range_m / static_cast<double>(tiles);
}

std::complex<double> tile_coefficient(const Vec3& tile_pos,
                                      const Vec3& tile_normal, const Vec3& ap,
                                      const Vec3& user,
                                      const ChannelParams& params) {
  const Vec3 to_ap = ap - tile_pos;
  const Vec3 to_user = user - tile_pos;
  const double d1 = norm(to_ap);
  const double d2 = norm(to_user);
  if (d1 < 1e-12 || d2 < 1e-12) return {0.0, 0.0};

  // Back-face: both endpoints must be on the reflective side.
  if (dot(tile_normal, to_ap) <= 0.0 || dot(tile_normal, to_user) <= 0.0) {
    return {0.0, 0.0};
  }

  // Specular reflection of the incoming AP->tile ray.
  const Vec3 incident = to_ap / d1 * -1.0;
  const Vec3 specular = reflect(incident, tile_normal);
  const double cpsi = dot(specular, to_user / d2);
  if (cpsi <= 0.0) return {0.0, 0.0};

  const double gain = std::pow(cpsi, lobe_exponent(params.tile_gain_beamwidth));
  const double amp = params.aperture * gain / (d1 * d2);
  const double phase = -2.0 * kPi * (d1 + d2) / params.wavelength();
  return std::polar(amp, phase);
}

PowerReading received_power(const Vec3& user,
                            const std::vector<SegmentBeam>& assigned,
                            const Vec3& ap, const ChannelParams& params) {
  std::complex<double> h{0.0, 0.0};
  for (const SegmentBeam& beam : assigned) {
    const TileGrid& grid = *beam.grid;
    for (int i = 0; i < grid.tile_count(); ++i) {
      if (grid.segment_of[i] != beam.segment) continue;
      geometry::TileOrientation o;
      try {
        o = geometry::tile_normal(grid.tile_positions[i], beam.focal, ap);
      } catch (const DegenerateGeometry&) {
        continue;  // degenerate tiles contribute zero
      }
      h += tile_coefficient(grid.tile_positions[i], o.normal, ap, user,
                            params);
    }
  }

  // Residual through-wall path: free space attenuated by wall_loss_db.
  if (std::isfinite(params.wall_loss_db)) {
    const double d = distance(ap, user);
    if (d > 1e-12) {
      const double amp = params.wavelength() / (4.0 * kPi * d) *
                         std::pow(10.0, -params.wall_loss_db / 20.0);
      h += std::polar(amp, -2.0 * kPi * d / params.wavelength());
    }
  }

  PowerReading out;
  out.rssi_mw = params.tx_power_mw() * std::norm(h);
  out.rssi_dbm = mw_to_dbm(out.rssi_mw);
  return out;
}

double system_reward(const std::vector<Vec3>& users,
                     const std::vector<int>& allocation,
                     const std::vector<SegmentBeam>& segments, const Vec3& ap,
                     const ChannelParams& params) {
  if (allocation.size() != segments.size()) {
    throw InvalidArgument("system_reward: allocation must cover all segments");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < users.size(); ++k) {
    std::vector<SegmentBeam> assigned;
    for (std::size_t l = 0; l < segments.size(); ++l) {
      if (allocation[l] == static_cast<int>(k)) assigned.push_back(segments[l]);
    }
    total += received_power(users[k], assigned, ap, params).rssi_mw;
  }
  return total;
}

}  // namespace reflectsim::channel
