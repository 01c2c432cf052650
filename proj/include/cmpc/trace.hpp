#pragma once

/**
 * @file trace.hpp
 * @brief Per-tick closed-loop record and its versioned CSV form.
 *
 * The CSV layout is part of the tool's external contract: two comment
 * lines carrying the schema tag and the config hash, one header line,
 * then one row per tick printed with %.17g so a rerun of the same config
 * and seed reproduces the file byte for byte.
 */

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmpc {

inline constexpr const char* kTraceSchema = "trace-v1";

struct TraceRow {
  long tick = 0;
  double t = 0;
  double x_h = 0, xd_h = 0, y_n = 0, yd_n = 0, theta = 0, thetad = 0;
  double i_x = 0, i_1 = 0, i_2 = 0;
  double i_x_del = 0, i_1_del = 0, i_2_del = 0;
  double x_ref = 0, y_ref = 0;
  double e_x = 0, e_y = 0, eps = 0;
  int j = 0;
  int qp_status_x = 0, qp_status_y = 0;
  double kkt_x = 0, kkt_y = 0;
};

struct Trace {
  double Ts = 0;
  std::string config_hash;
  std::vector<TraceRow> rows;
};

inline constexpr const char* kTraceHeader =
    "tick,t,x_h,xd_h,y_n,yd_n,theta,thetad,i_x,i_1,i_2,"
    "i_x_del,i_1_del,i_2_del,x_ref,y_ref,e_x,e_y,eps,j,"
    "qp_status_x,qp_status_y,kkt_x,kkt_y";

namespace detail {

inline void put(std::string& s, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  s += buf;
  s += ',';
}

}  // namespace detail

inline std::string trace_to_csv(const Trace& tr) {
  std::string out;
  out.reserve(tr.rows.size() * 420 + 256);
  out += "# schema=";
  out += kTraceSchema;
  out += "\n# config=";
  out += tr.config_hash;
  out += "\n";
  out += kTraceHeader;
  out += "\n";
  for (const TraceRow& r : tr.rows) {
    out += std::to_string(r.tick);
    out += ',';
    detail::put(out, r.t);
    detail::put(out, r.x_h);
    detail::put(out, r.xd_h);
    detail::put(out, r.y_n);
    detail::put(out, r.yd_n);
    detail::put(out, r.theta);
    detail::put(out, r.thetad);
    detail::put(out, r.i_x);
    detail::put(out, r.i_1);
    detail::put(out, r.i_2);
    detail::put(out, r.i_x_del);
    detail::put(out, r.i_1_del);
    detail::put(out, r.i_2_del);
    detail::put(out, r.x_ref);
    detail::put(out, r.y_ref);
    detail::put(out, r.e_x);
    detail::put(out, r.e_y);
    detail::put(out, r.eps);
    out += std::to_string(r.j);
    out += ',';
    out += std::to_string(r.qp_status_x);
    out += ',';
    out += std::to_string(r.qp_status_y);
    out += ',';
    detail::put(out, r.kkt_x);
    detail::put(out, r.kkt_y);
    out.back() = '\n';
  }
  return out;
}

inline void write_trace_csv(const std::string& path, const Trace& tr) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open trace file: " + path);
  f << trace_to_csv(tr);
}

/// Reads a trace CSV back; rejects files whose schema tag differs.
inline Trace read_trace_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open trace file: " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("# schema=", 0) != 0)
    throw std::runtime_error(path + ": missing schema line");
  const std::string schema = line.substr(9);
  if (schema != kTraceSchema)
    throw std::runtime_error(path + ": schema '" + schema +
                             "' does not match " + kTraceSchema);
  Trace tr;
  if (!std::getline(f, line) || line.rfind("# config=", 0) != 0)
    throw std::runtime_error(path + ": missing config line");
  tr.config_hash = line.substr(9);
  if (!std::getline(f, line) || line != kTraceHeader)
    throw std::runtime_error(path + ": unexpected column header");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 24)
      throw std::runtime_error(path + ": bad row width");
    TraceRow r;
    int c = 0;
    r.tick = static_cast<long>(v[c++]);
    r.t = v[c++];
    r.x_h = v[c++];
    r.xd_h = v[c++];
    r.y_n = v[c++];
    r.yd_n = v[c++];
    r.theta = v[c++];
    r.thetad = v[c++];
    r.i_x = v[c++];
    r.i_1 = v[c++];
    r.i_2 = v[c++];
    r.i_x_del = v[c++];
    r.i_1_del = v[c++];
    r.i_2_del = v[c++];
    r.x_ref = v[c++];
    r.y_ref = v[c++];
    r.e_x = v[c++];
    r.e_y = v[c++];
    r.eps = v[c++];
    r.j = static_cast<int>(v[c++]);
    r.qp_status_x = static_cast<int>(v[c++]);
    r.qp_status_y = static_cast<int>(v[c++]);
    r.kkt_x = v[c++];
    r.kkt_y = v[c++];
    if (!tr.rows.empty() && tr.Ts == 0 && r.tick == 1) tr.Ts = r.t;
    tr.rows.push_back(r);
  }
  return tr;
}

}  // namespace cmpc
