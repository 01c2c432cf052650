#pragma once

/**
 * @file cache.hpp
 * @brief Persistence for the offline set computation: every built set, the
 *        model it was built against, iteration logs and the sampling
 *        certificate, in one file keyed by the set-relevant config hash.
 */

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmpc/invariance.hpp"
#include "cmpc/models.hpp"
#include "cmpc/polytope.hpp"

namespace cmpc {

struct CacheError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCacheSchema = "rci-cache-v1";

namespace detail {

inline nlohmann::json poly_to_json(const Polytope& p) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < p.num_rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < p.dim(); ++j) row.push_back(p.A()(i, j));
    row.push_back(p.b()(i));
    rows.push_back(std::move(row));
  }
  return {{"dim", p.dim()}, {"rows", std::move(rows)}};
}

inline Polytope poly_from_json(const nlohmann::json& j) {
  const int n = j.at("dim").get<int>();
  const auto& rows = j.at("rows");
  Eigen::MatrixXd A(static_cast<int>(rows.size()), n);
  Eigen::VectorXd b(static_cast<int>(rows.size()));
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    const auto& row = rows[i];
    if (static_cast<int>(row.size()) != n + 1)
      throw CacheError("polytope row length mismatch");
    for (int c = 0; c < n; ++c) A(i, c) = row[c].get<double>();
    b(i) = row[n].get<double>();
  }
  return Polytope(std::move(A), std::move(b));
}

inline nlohmann::json mat_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

inline Eigen::MatrixXd mat_from_json(const nlohmann::json& j, int cols_hint) {
  const int r = static_cast<int>(j.size());
  const int c = r > 0 ? static_cast<int>(j[0].size()) : cols_hint;
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < c; ++k) m(i, k) = j[i][k].get<double>();
  return m;
}

inline nlohmann::json joint_to_json(const JointModel& m) {
  return {{"F", mat_to_json(m.F)},   {"G", mat_to_json(m.G)},
          {"Ed", mat_to_json(m.Ed)}, {"Hr", mat_to_json(m.Hr)},
          {"U", poly_to_json(m.U)},  {"W", poly_to_json(m.W)},
          {"Ur", poly_to_json(m.Ur)}};
}

inline JointModel joint_from_json(const nlohmann::json& j) {
  JointModel m;
  m.F = mat_from_json(j.at("F"), 0);
  m.G = mat_from_json(j.at("G"), 0);
  m.Ed = mat_from_json(j.at("Ed"), 0);
  m.Hr = mat_from_json(j.at("Hr"), 0);
  m.U = poly_from_json(j.at("U"));
  m.W = poly_from_json(j.at("W"));
  m.Ur = poly_from_json(j.at("Ur"));
  return m;
}

}  // namespace detail

/// One built invariant set plus everything needed to re-check it.
struct BuiltSet {
  std::string kind;  ///< "ref", "x", or "y"
  double x_bar = 0.0;
  Polytope set{Polytope::universe(0)};
  Polytope robust{Polytope::universe(0)};
  JointModel joint;
  int iterations = 0;
  bool converged = false;
  std::vector<RciIterRecord> log;
  VerifyReport verify;
  double build_seconds = 0.0;
};

struct RciCache {
  std::string hash;
  Polytope ref_ci{Polytope::universe(2)};
  BuiltSet x;
  std::vector<BuiltSet> y;
};

namespace detail {

inline nlohmann::json built_to_json(const BuiltSet& s) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& r : s.log)
    log.push_back({r.iter, r.rows_robust, r.rows_total});
  return {{"kind", s.kind},
          {"x_bar", s.x_bar},
          {"set", poly_to_json(s.set)},
          {"robust", poly_to_json(s.robust)},
          {"joint", joint_to_json(s.joint)},
          {"iterations", s.iterations},
          {"converged", s.converged},
          {"log", std::move(log)},
          {"verify",
           {{"samples", s.verify.samples},
            {"passed", s.verify.passed},
            {"worst_margin", s.verify.worst_margin}}},
          {"build_seconds", s.build_seconds}};
}

inline BuiltSet built_from_json(const nlohmann::json& j) {
  BuiltSet s;
  s.kind = j.at("kind").get<std::string>();
  s.x_bar = j.at("x_bar").get<double>();
  s.set = poly_from_json(j.at("set"));
  s.robust = poly_from_json(j.at("robust"));
  s.joint = joint_from_json(j.at("joint"));
  s.iterations = j.at("iterations").get<int>();
  s.converged = j.at("converged").get<bool>();
  for (const auto& r : j.at("log"))
    s.log.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>()});
  const auto& v = j.at("verify");
  s.verify.samples = v.at("samples").get<int>();
  s.verify.passed = v.at("passed").get<int>();
  s.verify.worst_margin = v.at("worst_margin").get<double>();
  s.build_seconds = j.at("build_seconds").get<double>();
  return s;
}

}  // namespace detail

inline std::string cache_file(const std::string& out_dir,
                              const std::string& hash) {
  return out_dir + "/cache/rci_" + hash + ".json";
}

inline void save_cache(const std::string& path, const RciCache& c) {
  nlohmann::json j;
  j["schema"] = kCacheSchema;
  j["hash"] = c.hash;
  j["ref_ci"] = detail::poly_to_json(c.ref_ci);
  j["x"] = detail::built_to_json(c.x);
  nlohmann::json ys = nlohmann::json::array();
  for (const auto& s : c.y) ys.push_back(detail::built_to_json(s));
  j["y"] = std::move(ys);
  std::filesystem::create_directories(
      std::filesystem::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw CacheError("cannot write cache file: " + path);
  out << j.dump(1) << "\n";
}

/// Loads and validates a cache file; `expect_hash` is the hash the live
/// config demands. A mismatch is refused, never silently accepted.
inline RciCache load_cache(const std::string& path,
                           const std::string& expect_hash) {
  std::ifstream in(path);
  if (!in)
    throw CacheError("no set cache at " + path +
                     "; run the rci-build command first");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CacheError("unreadable cache file " + path + ": " + e.what());
  }
  try {
    if (j.at("schema").get<std::string>() != kCacheSchema)
      throw CacheError("cache schema mismatch in " + path);
    RciCache c;
    c.hash = j.at("hash").get<std::string>();
    if (c.hash != expect_hash)
      throw CacheError("cache " + path + " was built for config hash " +
                       c.hash + " but the live config hashes to " +
                       expect_hash + "; rebuild with rci-build");
    c.ref_ci = detail::poly_from_json(j.at("ref_ci"));
    c.x = detail::built_from_json(j.at("x"));
    for (const auto& s : j.at("y")) c.y.push_back(detail::built_from_json(s));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CacheError("malformed cache file " + path + ": " + e.what());
  }
}

}  // namespace cmpc
