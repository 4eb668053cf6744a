#ifndef REFLECTSIM_CHANNEL_HPP_
#define REFLECTSIM_CHANNEL_HPP_

#include <complex>
#include <vector>

#include "reflectsim/geometry.hpp"
#include "reflectsim/vec3.hpp"

namespace reflectsim::channel {

using geometry::FocalState;
using geometry::TileGrid;

// Deterministic geometric-optics propagation model. A per-tile specular lobe
// replaces ray tracing; phases follow the physical path lengths so tiles sum
// coherently.
struct ChannelParams {
  double carrier_hz = 60e9;
  double tx_power_dbm = 5.0;
  // Attenuation of the residual non-reflector path (through-wall leakage).
  // Non-finite wall loss removes that path entirely.
  double wall_loss_db = 25.0;
  // Full width of the per-tile lobe at half power, radians.
  double tile_gain_beamwidth = 10.0 * 3.14159265358979323846 / 180.0;
  // Per-tile aperture constant; see calibrated_aperture().
  double aperture = 1.25e-4;

  double wavelength() const { return 299792458.0 / carrier_hz; }
  double tx_power_mw() const { return std::pow(10.0, tx_power_dbm / 10.0); }
};

constexpr double kDbmFloor = -140.0;

struct PowerReading {
  double rssi_dbm = kDbmFloor;
  double rssi_mw = 0.0;
};

// One segment serving a user: which tiles and where they focus.
struct SegmentBeam {
  const TileGrid* grid = nullptr;
  int segment = 0;
  Vec3 focal;
};

double dbm_to_mw(double dbm);
double mw_to_dbm(double mw);  // floored at kDbmFloor

// Aperture constant such that a perfectly focused, phase-aligned array of
// `tiles` tiles at range d1 = d2 = `range_m` delivers `target_dbm` at the
// configured transmit power. Keeps desk-scale numbers in a familiar band.
double calibrated_aperture(int tiles, double range_m, double target_dbm,
                           double tx_power_dbm);

// Complex coefficient of one tile: A * G(psi) / (d1*d2) * exp(-j*2pi*(d1+d2)/lambda),
// where psi is the angle between the specular reflection of the AP ray and
// the direction to the user. Zero when the tile faces away from either end.
std::complex<double> tile_coefficient(const Vec3& tile_pos,
                                      const Vec3& tile_normal, const Vec3& ap,
                                      const Vec3& user,
                                      const ChannelParams& params);

// Coherent sum over every tile of every assigned segment plus the residual
// through-wall term.
PowerReading received_power(const Vec3& user,
                            const std::vector<SegmentBeam>& assigned,
                            const Vec3& ap, const ChannelParams& params);

// Aggregate linear-domain received power over all users; allocation[l] is
// the user served by segment l of `segments`.
double system_reward(const std::vector<Vec3>& users,
                     const std::vector<int>& allocation,
                     const std::vector<SegmentBeam>& segments, const Vec3& ap,
                     const ChannelParams& params);

}  // namespace reflectsim::channel

#endif  // REFLECTSIM_CHANNEL_HPP_
