#include "reflectsim/trace.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "reflectsim/errors.hpp"

#ifndef REFLECTSIM_BUILD_ID
#define REFLECTSIM_BUILD_ID "untracked"
#endif

namespace reflectsim::trace {

const char* build_id() { return REFLECTSIM_BUILD_ID; }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trace(const std::string& path, const TraceFile& tf) {
  std::ofstream os(path);
  if (!os) throw InvalidArgument("write_trace: cannot open " + path);
  os << kTraceVersionLine << "\n";
  os << "build_id,scenario_hash,seed,t";
  for (int l = 0; l < tf.L; ++l) os << ",b" << l;
  for (int k = 0; k < tf.K; ++k) {
    os << ",u" << k << "_x,u" << k << "_y,u" << k << "_z";
  }
  for (int l = 0; l < tf.L; ++l) {
    os << ",f" << l << "_x,f" << l << "_y,f" << l << "_z";
  }
  for (int l = 0; l < tf.L; ++l) {
    os << ",a" << l << "_x,a" << l << "_y,a" << l << "_z";
  }
  for (int k = 0; k < tf.K; ++k) os << ",rssi" << k << "_dbm";
  os << ",system_mw,system_learn\n";

  for (const auto& r : tf.rows) {
    os << tf.build_id << "," << tf.scenario_hash << "," << tf.seed << ","
       << r.t;
    for (int b : r.alloc) os << "," << b;
    const auto put3 = [&os](const Vec3& v) {
      os << "," << format_double(v.x) << "," << format_double(v.y) << ","
         << format_double(v.z);
    };
    for (const auto& u : r.users) put3(u);
    for (const auto& f : r.focals) put3(f);
    for (const auto& a : r.actions) put3(a);
    for (double d : r.user_dbm) os << "," << format_double(d);
    os << "," << format_double(r.system_mw) << ","
       << format_double(r.system_learn) << "\n";
  }
}

TraceFile read_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("read_trace: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != kTraceVersionLine) {
    throw InvalidArgument("read_trace: schema version mismatch in " + path);
  }
  if (!std::getline(is, line)) {
    throw InvalidArgument("read_trace: missing header in " + path);
  }

  // Infer K and L from the header column names.
  TraceFile tf;
  {
    std::stringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.size() > 1 && col[0] == 'b' && col.find('_') == std::string::npos &&
          std::isdigit(static_cast<unsigned char>(col[1]))) {
        tf.L = std::max(tf.L, std::stoi(col.substr(1)) + 1);
      }
      if (col.size() > 3 && col[0] == 'u' && col.ends_with("_x")) {
        tf.K = std::max(tf.K, std::stoi(col.substr(1, col.size() - 3)) + 1);
      }
    }
  }
  if (tf.K == 0 || tf.L == 0) {
    throw InvalidArgument("read_trace: could not infer K/L from header");
  }

  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    const auto next = [&]() -> std::string {
      if (!std::getline(ls, cell, ',')) {
        throw InvalidArgument("read_trace: truncated row");
      }
      return cell;
    };
    TraceRow r;
    const std::string bid = next();
    const std::uint64_t shash = std::stoull(next());
    const std::uint64_t seed = std::stoull(next());
    if (first) {
      tf.build_id = bid;
      tf.scenario_hash = shash;
      tf.seed = seed;
      first = false;
    }
    r.t = std::stol(next());
    r.alloc.resize(tf.L);
    for (int l = 0; l < tf.L; ++l) r.alloc[l] = std::stoi(next());
    const auto get3 = [&]() {
      Vec3 v;
      v.x = std::stod(next());
      v.y = std::stod(next());
      v.z = std::stod(next());
      return v;
    };
    for (int k = 0; k < tf.K; ++k) r.users.push_back(get3());
    for (int l = 0; l < tf.L; ++l) r.focals.push_back(get3());
    for (int l = 0; l < tf.L; ++l) r.actions.push_back(get3());
    r.user_dbm.resize(tf.K);
    for (int k = 0; k < tf.K; ++k) r.user_dbm[k] = std::stod(next());
    r.system_mw = std::stod(next());
    r.system_learn = std::stod(next());
    tf.rows.push_back(std::move(r));
  }
  return tf;
}

}  // namespace reflectsim::trace
