#pragma once

/**
 * @file cli.hpp
 * @brief Command implementations behind the cmpc binary: offline set
 *        builds, closed-loop runs, trace reports and seed sweeps.
 *
 * Exit codes are part of the contract: 0 success, 1 a certified bound was
 * violated, 2 configuration or input error, 3 cache missing or stale.
 * The output root comes from run.out_dir, overridable by the CMPC_OUT_DIR
 * environment variable and by explicit --set run.out_dir=... flags.
 */

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cmpc/cache.hpp"
#include "cmpc/config.hpp"
#include "cmpc/metrics.hpp"
#include "cmpc/scenario.hpp"
#include "cmpc/sim.hpp"
#include "cmpc/trace.hpp"

namespace cmpc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitBoundViolation = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitCacheError = 3;

inline constexpr const char* kOutDirEnv = "CMPC_OUT_DIR";

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  bool print_effective = false;
};

/// Merged configuration: built-in defaults, then the config file, then the
/// CMPC_OUT_DIR environment variable, then --set overrides, in that order.
inline RunConfig resolve_config(const CommonArgs& args) {
  std::vector<std::string> ov;
  if (const char* e = std::getenv(kOutDirEnv); e && *e)
    ov.push_back(std::string("run.out_dir=") + e);
  ov.insert(ov.end(), args.overrides.begin(), args.overrides.end());
  return load_config(args.config_path, ov);
}

/// File name stem for one run: tuning, plant mode, seed.
inline std::string run_tag(const RunConfig& c) {
  return c.tuning + "_" + c.mode + "_s" + std::to_string(c.seed);
}

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  std::filesystem::create_directories(
      std::filesystem::path(path).parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open output file: " + path);
  f << text;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string built_set_lines(const BuiltSet& s) {
  std::ostringstream os;
  os << "set=" << s.kind;
  if (s.kind == "y") os << " x_bar=" << s.x_bar;
  os << " iterations=" << s.iterations
     << " converged=" << (s.converged ? "yes" : "no")
     << " rows=" << s.set.num_rows() << " robust_rows=" << s.robust.num_rows()
     << "\n  verify: samples=" << s.verify.samples
     << " passed=" << s.verify.passed << " worst_margin=" << s.verify.worst_margin
     << " -> " << (s.verify.pass() ? "certified" : "FAILED")
     << "\n  build_seconds=" << s.build_seconds << "\n";
  return os.str();
}

inline const BuiltSet* first_uncertified(const RciCache& cache) {
  if (!cache.ref_ci.converged || !cache.ref_ci.verify.pass())
    return &cache.ref_ci;
  if (!cache.x.converged || !cache.x.verify.pass()) return &cache.x;
  for (const BuiltSet& s : cache.y)
    if (!s.converged || !s.verify.pass()) return &s;
  return nullptr;
}

}  // namespace detail

/**
 * Builds the reference, x and y invariant sets for the config and persists
 * them keyed by the set-relevant config hash. A hash-matching cache short
 * circuits the build unless `force` is set.
 */
inline int cmd_rci_build(const RunConfig& c, bool force = false,
                         bool serial = false, std::ostream& log = std::cout) {
  const std::string hash = rci_cache_hash(c);
  const std::string path = cache_file(c.out_dir, hash);
  if (!force && std::filesystem::exists(path)) {
    try {
      RciCache cache = load_cache(path, hash);
      log << "cache hit: " << path << " (" << cache.y.size()
          << " y sets), nothing to do\n";
      return kExitOk;
    } catch (const CacheError&) {
      log << "existing cache unusable, rebuilding\n";
    }
  }

  std::mutex mu;
  BuildProgress progress = [&](const std::string& kind,
                               const RciIterRecord& r) {
    std::lock_guard<std::mutex> lock(mu);
    log << "  [" << kind << "] iter " << r.iter << ": rows " << r.rows_robust
        << " (+" << (r.rows_total - r.rows_robust) << " class)\n";
  };

  log << "building invariant sets (hash " << hash << ")\n";
  RciCache cache = build_sets(c, !serial, progress);
  save_cache(path, cache);

  std::ostringstream report;
  report << "config=" << hash << "\n";
  report << detail::built_set_lines(cache.ref_ci);
  report << detail::built_set_lines(cache.x);
  for (const BuiltSet& s : cache.y) report << detail::built_set_lines(s);
  const std::string report_path =
      c.out_dir + "/rci_report_" + hash + ".txt";
  detail::write_text(report_path, report.str());
  log << report.str();
  log << "cache written to " << path << "\n";
  log << "report written to " << report_path << "\n";

  if (const BuiltSet* bad = detail::first_uncertified(cache)) {
    log << "set '" << bad->kind << "' is not certified\n";
    return kExitConfigError;
  }
  return kExitOk;
}

namespace detail {

inline std::string contour_csv(const Trace& tr) {
  std::string out = "# schema=plot-contour-v1\n# config=" + tr.config_hash +
                    "\nx_ref,y_ref,x_act,y_act\n";
  for (const TraceRow& r : tr.rows) {
    out += fmt(r.x_ref);
    out += ',';
    out += fmt(r.y_ref);
    out += ',';
    out += fmt(r.x_ref - r.e_x);
    out += ',';
    out += fmt(r.y_ref - r.e_y);
    out += '\n';
  }
  return out;
}

inline std::string error_csv(const Trace& tr) {
  std::string out = "# schema=plot-error-v1\n# config=" + tr.config_hash +
                    "\nt,e_x,e_y,eps,theta\n";
  for (const TraceRow& r : tr.rows) {
    out += fmt(r.t);
    out += ',';
    out += fmt(r.e_x);
    out += ',';
    out += fmt(r.e_y);
    out += ',';
    out += fmt(r.eps);
    out += ',';
    out += fmt(r.theta);
    out += '\n';
  }
  return out;
}

inline std::string metrics_text(const RunConfig& c, const RunResult& rr) {
  std::ostringstream os;
  os << "config=" << rr.trace.config_hash << "\n"
     << "tag=" << run_tag(c) << "\n"
     << metrics_summary(rr.metrics, c.budget()) << "\n"
     << "fallback_x=" << rr.fallback_x << " fallback_y=" << rr.fallback_y
     << " membership_miss_x=" << rr.membership_miss_x
     << " membership_miss_y=" << rr.membership_miss_y
     << " slice_miss_x=" << rr.slice_miss_x
     << " slice_miss_y=" << rr.slice_miss_y << " switches=" << rr.switches
     << " switch_misses=" << rr.switch_misses << "\n"
     << "max_ctrl_seconds=" << rr.max_ctrl_seconds
     << " total_ctrl_seconds=" << rr.total_ctrl_seconds << " Ts=" << c.Ts
     << "\n"
     << "verdict=" << (rr.metrics.bounds_ok() ? "PASS" : "FAIL") << "\n";
  return os.str();
}

}  // namespace detail

/// Loads the set cache (refusing stale ones), runs the closed loop and
/// writes the trace, metrics and plot-data files.
inline int cmd_simulate(const RunConfig& c, std::ostream& log = std::cout) {
  const std::string hash = rci_cache_hash(c);
  RciCache cache = load_cache(cache_file(c.out_dir, hash), hash);
  if (const BuiltSet* bad = detail::first_uncertified(cache))
    throw CacheError("cached set '" + bad->kind +
                     "' lacks a certificate; rebuild with rci-build");

  SimSetup setup = make_sim_setup(c, cache);
  RunResult rr = run_closed_loop(setup);

  const std::string tag = run_tag(c);
  const std::string trace_path = c.out_dir + "/trace_" + tag + ".csv";
  write_trace_csv(trace_path, rr.trace);
  detail::write_text(c.out_dir + "/metrics_" + tag + ".txt",
                     detail::metrics_text(c, rr));
  detail::write_text(c.out_dir + "/plot_contour_" + tag + ".csv",
                     detail::contour_csv(rr.trace));
  detail::write_text(c.out_dir + "/plot_error_" + tag + ".csv",
                     detail::error_csv(rr.trace));

  log << "trace written to " << trace_path << "\n";
  log << detail::metrics_text(c, rr);
  return rr.metrics.bounds_ok() ? kExitOk : kExitBoundViolation;
}

/**
 * Side-by-side comparison of finished traces. All inputs must carry the
 * same config hash unless `force` is set; the summary itself is CSV.
 */
inline int cmd_report(const std::vector<std::string>& paths,
                      bool force = false, std::ostream& out = std::cout,
                      const ErrorBudget& budget = {}) {
  if (paths.empty()) throw std::invalid_argument("report: no trace files");
  std::vector<Trace> traces;
  traces.reserve(paths.size());
  for (const std::string& p : paths) traces.push_back(read_trace_csv(p));
  for (std::size_t i = 1; i < traces.size(); ++i) {
    if (traces[i].config_hash != traces[0].config_hash && !force)
      throw std::runtime_error(
          "trace " + paths[i] + " was produced under config hash " +
          traces[i].config_hash + " but " + paths[0] + " under " +
          traces[0].config_hash + "; pass --force to compare anyway");
  }

  out << "# schema=report-v1\n";
  out << "trace,config,ticks,duration_s,max_eps,max_ex,max_ey,max_theta,"
         "violations,chain_violations,fallback_ticks,verdict\n";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const Metrics m = evaluate_trace(traces[i], budget);
    const double Ts =
        traces[i].rows.size() > 1 ? traces[i].rows[1].t - traces[i].rows[0].t
                                  : 0.0;
    out << paths[i] << ',' << traces[i].config_hash << ',' << m.ticks << ','
        << detail::fmt(Ts * static_cast<double>(m.ticks)) << ','
        << detail::fmt(m.max_eps) << ',' << detail::fmt(m.max_ex) << ','
        << detail::fmt(m.max_ey) << ',' << detail::fmt(m.max_theta) << ','
        << m.eps_violations + m.ex_violations + m.ey_violations +
               m.theta_violations
        << ',' << m.chain_violations << ',' << m.fallback_ticks << ','
        << (m.bounds_ok() ? "PASS" : "FAIL") << '\n';
  }
  return kExitOk;
}

/**
 * Repeats the configured run over consecutive seeds (the plant noise
 * realization changes, nothing else) and summarizes the verdicts. Exits
 * with the bound-violation code if any seed fails.
 */
inline int cmd_sweep(const RunConfig& c, int n_seeds = 10,
                     std::ostream& log = std::cout) {
  if (n_seeds < 1) throw std::invalid_argument("sweep: n_seeds < 1");
  const std::string hash = rci_cache_hash(c);
  RciCache cache = load_cache(cache_file(c.out_dir, hash), hash);
  if (const BuiltSet* bad = detail::first_uncertified(cache))
    throw CacheError("cached set '" + bad->kind +
                     "' lacks a certificate; rebuild with rci-build");

  std::vector<RunResult> results(n_seeds);
  std::vector<std::exception_ptr> errs(n_seeds);
  std::vector<std::thread> pool;
  for (int i = 0; i < n_seeds; ++i) {
    pool.emplace_back([&, i] {
      try {
        RunConfig ci = c;
        ci.seed = c.seed + static_cast<std::uint64_t>(i);
        results[i] = run_closed_loop(make_sim_setup(ci, cache));
      } catch (...) {
        errs[i] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errs)
    if (e) std::rethrow_exception(e);

  std::ostringstream sum;
  sum << "# schema=sweep-v1\n# config=" << config_hash(c) << "\n";
  sum << "seed,max_eps,max_ex,max_ey,max_theta,violations,fallback_ticks,"
         "incidents,verdict\n";
  bool all_ok = true;
  for (int i = 0; i < n_seeds; ++i) {
    const Metrics& m = results[i].metrics;
    all_ok = all_ok && m.bounds_ok();
    sum << (c.seed + static_cast<std::uint64_t>(i)) << ','
        << detail::fmt(m.max_eps) << ',' << detail::fmt(m.max_ex) << ','
        << detail::fmt(m.max_ey) << ',' << detail::fmt(m.max_theta) << ','
        << m.eps_violations + m.ex_violations + m.ey_violations +
               m.theta_violations
        << ',' << m.fallback_ticks << ',' << results[i].incidents() << ','
        << (m.bounds_ok() ? "PASS" : "FAIL") << '\n';
  }
  const std::string path = c.out_dir + "/sweep_" + run_tag(c) + ".csv";
  detail::write_text(path, sum.str());
  log << sum.str();
  log << "sweep summary written to " << path << "\n";
  return all_ok ? kExitOk : kExitBoundViolation;
}

}  // namespace cmpc::cli
