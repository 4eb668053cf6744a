#include "reflectsim/scenario.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "reflectsim/errors.hpp"
#include "reflectsim/trace.hpp"

namespace reflectsim::scenario {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Parser {
  Scenario s;
  std::string section;
  int reflector_index = -1;
  bool schema_seen = false;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw InvalidArgument("scenario line " + std::to_string(line_no) + ": " +
                          msg);
  }

  double num(const std::string& v) const {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      while (used < v.size() && std::isspace(static_cast<unsigned char>(v[used]))) ++used;
      if (used != v.size()) fail("trailing characters in number '" + v + "'");
      return d;
    } catch (const InvalidArgument&) {
      throw;
    } catch (const std::exception&) {
      fail("expected a number, got '" + v + "'");
    }
  }

  int integer(const std::string& v) const {
    const double d = num(v);
    if (d != std::floor(d)) fail("expected an integer, got '" + v + "'");
    return static_cast<int>(d);
  }

  Vec3 triple(const std::string& v) const {
    std::istringstream is(v);
    Vec3 out;
    if (!(is >> out.x >> out.y >> out.z)) {
      fail("expected three numbers, got '" + v + "'");
    }
    std::string rest;
    if (is >> rest) fail("trailing characters in triple '" + v + "'");
    return out;
  }

  void handle(const std::string& key, const std::string& value) {
    if (!schema_seen) {
      if (!section.empty() || key != "schema") {
        fail("scenario must start with 'schema = 1'");
      }
      if (integer(value) != 1) fail("unsupported schema version " + value);
      schema_seen = true;
      return;
    }
    if (section.empty()) {
      fail("key '" + key + "' outside any section");
    }

    if (section == "room") {
      if (key == "xmin") s.room.lo.x = num(value);
      else if (key == "xmax") s.room.hi.x = num(value);
      else if (key == "ymin") s.room.lo.y = num(value);
      else if (key == "ymax") s.room.hi.y = num(value);
      else if (key == "zmin") s.room.lo.z = num(value);
      else if (key == "zmax") s.room.hi.z = num(value);
      else fail("unknown key '" + key + "' in [room]");
    } else if (section == "ap") {
      if (key == "position") s.ap = triple(value);
      else fail("unknown key '" + key + "' in [ap]");
    } else if (section == "ue_region") {
      if (key == "xmin") s.ue_region.xmin = num(value);
      else if (key == "xmax") s.ue_region.xmax = num(value);
      else if (key == "ymin") s.ue_region.ymin = num(value);
      else if (key == "ymax") s.ue_region.ymax = num(value);
      else if (key == "height") s.ue_region.height = num(value);
      else fail("unknown key '" + key + "' in [ue_region]");
    } else if (section == "channel") {
      if (key == "carrier_ghz") s.carrier_ghz = num(value);
      else if (key == "tx_power_dbm") s.tx_power_dbm = num(value);
      else if (key == "wall_loss_db") s.wall_loss_db = num(value);
      else if (key == "beamwidth_deg") s.beamwidth_deg = num(value);
      else if (key == "aperture") s.aperture = num(value);
      else fail("unknown key '" + key + "' in [channel]");
    } else if (section == "limits") {
      if (key == "theta_deg") s.theta_limit_deg = num(value);
      else if (key == "phi_deg") s.phi_limit_deg = num(value);
      else fail("unknown key '" + key + "' in [limits]");
    } else if (section == "feasible") {
      if (key == "grid_step") s.feasible_grid_step = num(value);
      else fail("unknown key '" + key + "' in [feasible]");
    } else if (section.rfind("reflector.", 0) == 0) {
      ReflectorSpec& r = s.reflectors[reflector_index];
      if (key == "center") r.center = triple(value);
      else if (key == "normal") r.normal = triple(value);
      else if (key == "rows") r.rows = integer(value);
      else if (key == "cols") r.cols = integer(value);
      else if (key == "segments") r.segments = integer(value);
      else if (key == "pitch") r.pitch = num(value);
      else fail("unknown key '" + key + "' in [" + section + "]");
    } else if (section == "env") {
      if (key == "users") s.env.num_users = integer(value);
      else if (key == "period") s.env.period = integer(value);
      else if (key == "delta_max") s.env.delta_max = num(value);
      else if (key == "episode_len") s.env.episode_len = integer(value);
      else if (key == "mobility_step") s.env.mobility_step = num(value);
      else if (key == "mobility_period") s.env.mobility_period = integer(value);
      else if (key == "loc_error_sigma") s.env.loc_error_sigma = num(value);
      else if (key == "reward_exponent") s.env.reward_exponent = integer(value);
      else if (key == "focal_init_mean") s.env.focal_init_mean = triple(value);
      else if (key == "focal_init_cov") s.env.focal_init_cov = num(value);
      else fail("unknown key '" + key + "' in [env]");
    } else if (section == "ppo") {
      if (key == "gamma") s.ppo.gamma = num(value);
      else if (key == "gae_lambda") s.ppo.gae_lambda = num(value);
      else if (key == "clip_eps") s.ppo.clip_eps = num(value);
      else if (key == "entropy_coef") s.ppo.entropy_coef = num(value);
      else if (key == "value_coef") s.ppo.value_coef = num(value);
      else if (key == "epochs") s.ppo.epochs = integer(value);
      else if (key == "batch_size") s.ppo.batch_size = integer(value);
      else if (key == "lr") s.ppo.lr = num(value);
      else if (key == "grad_clip") s.ppo.grad_clip = num(value);
      else if (key == "share_actor") s.ppo.share_actor = integer(value) != 0;
      else if (key == "hidden") s.hidden = integer(value);
      else fail("unknown key '" + key + "' in [ppo]");
    } else if (section == "alloc") {
      if (key == "d0") s.alloc.d0 = num(value);
      else if (key == "alpha_threshold") s.alloc.alpha_threshold = integer(value);
      else if (key == "proposal_count") s.alloc.proposal_count = integer(value);
      else if (key == "embed_dim") s.alloc.embed_dim = integer(value);
      else if (key == "head_hidden") s.alloc.head_hidden = integer(value);
      else if (key == "lr") s.alloc.lr = num(value);
      else if (key == "epochs") s.alloc.epochs = integer(value);
      else if (key == "entropy_coef") s.alloc.entropy_coef = num(value);
      else fail("unknown key '" + key + "' in [alloc]");
    } else {
      fail("unknown section [" + section + "]");
    }
  }

  void open_section(const std::string& name) {
    if (!schema_seen) fail("scenario must start with 'schema = 1'");
    section = name;
    if (name.rfind("reflector.", 0) == 0) {
      s.reflectors.emplace_back();
      reflector_index = static_cast<int>(s.reflectors.size()) - 1;
    }
  }
};

std::string trim(const std::string& in) {
  std::size_t a = 0;
  std::size_t b = in.size();
  while (a < b && std::isspace(static_cast<unsigned char>(in[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(in[b - 1]))) --b;
  return in.substr(a, b - a);
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  Parser p;
  p.s.ue_region = {-4.0, 4.0, -4.0, 4.0, 1.5};

  std::istringstream is(text);
  std::string raw;
  while (std::getline(is, raw)) {
    ++p.line_no;
    const std::size_t hash = raw.find('#');
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') p.fail("unterminated section header");
      p.open_section(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) p.fail("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) p.fail("expected 'key = value'");
    p.handle(key, value);
  }
  if (!p.schema_seen) {
    throw InvalidArgument("scenario: missing 'schema = 1' header");
  }
  if (p.s.reflectors.empty()) {
    throw InvalidArgument("scenario: at least one [reflector.N] is required");
  }
  for (const auto& r : p.s.reflectors) {
    if (norm(r.normal) == 0.0) {
      throw InvalidArgument("scenario: reflector normal must be nonzero");
    }
  }
  return p.s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw InvalidArgument("scenario: cannot open file '" + path + "'");
  }
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_scenario(buf.str());
}

std::string canonical_text(const Scenario& s) {
  std::ostringstream os;
  const auto d = [](double v) { return trace::format_double(v); };
  os << "schema = " << s.schema << "\n";
  os << "[room]\n";
  os << "xmin = " << d(s.room.lo.x) << "\nxmax = " << d(s.room.hi.x) << "\n";
  os << "ymin = " << d(s.room.lo.y) << "\nymax = " << d(s.room.hi.y) << "\n";
  os << "zmin = " << d(s.room.lo.z) << "\nzmax = " << d(s.room.hi.z) << "\n";
  os << "[ap]\nposition = " << d(s.ap.x) << " " << d(s.ap.y) << " "
     << d(s.ap.z) << "\n";
  os << "[ue_region]\n";
  os << "xmin = " << d(s.ue_region.xmin) << "\nxmax = " << d(s.ue_region.xmax)
     << "\n";
  os << "ymin = " << d(s.ue_region.ymin) << "\nymax = " << d(s.ue_region.ymax)
     << "\n";
  os << "height = " << d(s.ue_region.height) << "\n";
  os << "[channel]\n";
  os << "carrier_ghz = " << d(s.carrier_ghz) << "\n";
  os << "tx_power_dbm = " << d(s.tx_power_dbm) << "\n";
  os << "wall_loss_db = " << d(s.wall_loss_db) << "\n";
  os << "beamwidth_deg = " << d(s.beamwidth_deg) << "\n";
  os << "aperture = " << d(s.aperture) << "\n";
  os << "[limits]\ntheta_deg = " << d(s.theta_limit_deg)
     << "\nphi_deg = " << d(s.phi_limit_deg) << "\n";
  os << "[feasible]\ngrid_step = " << d(s.feasible_grid_step) << "\n";
  for (std::size_t i = 0; i < s.reflectors.size(); ++i) {
    const ReflectorSpec& r = s.reflectors[i];
    os << "[reflector." << (i + 1) << "]\n";
    os << "center = " << d(r.center.x) << " " << d(r.center.y) << " "
       << d(r.center.z) << "\n";
    os << "normal = " << d(r.normal.x) << " " << d(r.normal.y) << " "
       << d(r.normal.z) << "\n";
    os << "rows = " << r.rows << "\ncols = " << r.cols
       << "\nsegments = " << r.segments << "\npitch = " << d(r.pitch) << "\n";
  }
  os << "[env]\n";
  os << "users = " << s.env.num_users << "\nperiod = " << s.env.period << "\n";
  os << "delta_max = " << d(s.env.delta_max) << "\n";
  os << "episode_len = " << s.env.episode_len << "\n";
  os << "mobility_step = " << d(s.env.mobility_step) << "\n";
  os << "mobility_period = " << s.env.mobility_period << "\n";
  os << "loc_error_sigma = " << d(s.env.loc_error_sigma) << "\n";
  os << "reward_exponent = " << s.env.reward_exponent << "\n";
  os << "focal_init_mean = " << d(s.env.focal_init_mean.x) << " "
     << d(s.env.focal_init_mean.y) << " " << d(s.env.focal_init_mean.z)
     << "\n";
  os << "focal_init_cov = " << d(s.env.focal_init_cov) << "\n";
  os << "[ppo]\n";
  os << "gamma = " << d(s.ppo.gamma) << "\n";
  os << "gae_lambda = " << d(s.ppo.gae_lambda) << "\n";
  os << "clip_eps = " << d(s.ppo.clip_eps) << "\n";
  os << "entropy_coef = " << d(s.ppo.entropy_coef) << "\n";
  os << "value_coef = " << d(s.ppo.value_coef) << "\n";
  os << "epochs = " << s.ppo.epochs << "\nbatch_size = " << s.ppo.batch_size
     << "\n";
  os << "lr = " << d(s.ppo.lr) << "\ngrad_clip = " << d(s.ppo.grad_clip)
     << "\n";
  os << "share_actor = " << (s.ppo.share_actor ? 1 : 0) << "\n";
  os << "hidden = " << s.hidden << "\n";
  os << "[alloc]\n";
  os << "d0 = " << d(s.alloc.d0) << "\n";
  os << "alpha_threshold = " << s.alloc.alpha_threshold << "\n";
  os << "proposal_count = " << s.alloc.proposal_count << "\n";
  os << "embed_dim = " << s.alloc.embed_dim << "\n";
  os << "head_hidden = " << s.alloc.head_hidden << "\n";
  os << "lr = " << d(s.alloc.lr) << "\n";
  os << "epochs = " << s.alloc.epochs << "\n";
  os << "entropy_coef = " << d(s.alloc.entropy_coef) << "\n";
  return os.str();
}

std::uint64_t scenario_hash(const Scenario& s) {
  // FNV-1a
  const std::string text = canonical_text(s);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

env::Scene build_scene(const Scenario& s) {
  env::Scene scene;
  scene.ap = s.ap;
  scene.chan.carrier_hz = s.carrier_ghz * 1e9;
  scene.chan.tx_power_dbm = s.tx_power_dbm;
  scene.chan.wall_loss_db = s.wall_loss_db;
  scene.chan.tile_gain_beamwidth = s.beamwidth_deg * kPi / 180.0;
  scene.chan.aperture =
      s.aperture > 0.0
          ? s.aperture
          : channel::calibrated_aperture(63, 5.0, -65.0, s.tx_power_dbm);

  for (const auto& spec : s.reflectors) {
    geometry::TileGrid grid =
        geometry::build_grid(spec.rows, spec.cols, spec.pitch, spec.center,
                             spec.normal, spec.segments);
    const int grid_index = static_cast<int>(scene.grids.size());

    // Angle limits are half-ranges about the mount orientation.
    const Vec3 n = grid.mount_normal;
    const double theta0 = std::acos(std::clamp(n.z, -1.0, 1.0));
    const double phi0 = std::atan2(n.y, n.x);
    const double th = s.theta_limit_deg * kPi / 180.0;
    const double ph = s.phi_limit_deg * kPi / 180.0;
    const geometry::AngleInterval theta_lim{std::max(0.0, theta0 - th),
                                            std::min(kPi, theta0 + th)};
    const geometry::AngleInterval phi_lim{phi0 - ph, phi0 + ph};

    for (int seg = 0; seg < spec.segments; ++seg) {
      env::SceneSegment ss;
      ss.grid_index = grid_index;
      ss.segment_id = seg;
      ss.box = geometry::feasible_box(grid, seg, s.ap, theta_lim, phi_lim,
                                      s.room, s.feasible_grid_step);
      ss.centroid = grid.segment_centroid(seg);
      scene.segments.push_back(ss);
    }
    scene.grids.push_back(std::move(grid));
  }
  return scene;
}

}  // namespace reflectsim::scenario
