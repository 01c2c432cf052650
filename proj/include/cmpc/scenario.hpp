#pragma once

/**
 * @file scenario.hpp
 * @brief Wires a RunConfig into concrete set builds and a ready-to-run
 *        closed-loop setup: reference class, disturbance envelope, the
 *        per-axis invariant sets, and the MPC problems that consume them.
 */

#include <chrono>
#include <exception>
#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "cmpc/cache.hpp"
#include "cmpc/config.hpp"
#include "cmpc/controller.hpp"
#include "cmpc/invariance.hpp"
#include "cmpc/models.hpp"
#include "cmpc/sim.hpp"

namespace cmpc {

inline Polytope reference_state_box(const RunConfig& c) {
  Eigen::Vector2d hw(c.r_pos, c.r_vel);
  return Polytope::from_box(-hw, hw);
}

inline Polytope reference_input_box(const RunConfig& c) {
  Eigen::VectorXd hw(1);
  hw << c.r_acc;
  return Polytope::from_box(-hw, hw);
}

inline Polytope x_state_box(const RunConfig& c) {
  Eigen::Vector2d hw(c.x_pos, c.x_vel);
  return Polytope::from_box(-hw, hw);
}

inline Polytope x_input_box(const RunConfig& c) {
  Eigen::VectorXd hw(1);
  hw << c.ix_max;
  return Polytope::from_box(-hw, hw);
}

inline Polytope y_state_box(const RunConfig& c) {
  Eigen::Vector4d lo(c.y_center - c.y_half, -c.y_vel, -c.theta_max, -c.th_vel);
  Eigen::Vector4d hi(c.y_center + c.y_half, c.y_vel, c.theta_max, c.th_vel);
  return Polytope::from_box(lo, hi);
}

inline Polytope y_input_box(const RunConfig& c) {
  Eigen::Vector2d hw(c.iy_max, c.iy_max);
  return Polytope::from_box(-hw, hw);
}

/// Coupling-residual bounds evaluated over the certified state region and
/// the configured acceleration envelope.
inline DisturbanceBounds scenario_disturbances(const RunConfig& c) {
  const Eigen::Vector4d slo(-c.x_pos, -c.x_vel, -c.theta_max, -c.th_vel);
  const Eigen::Vector4d shi(c.x_pos, c.x_vel, c.theta_max, c.th_vel);
  const Eigen::Vector3d alo(-c.dist_xdd, -c.dist_ydd, -c.dist_thdd);
  const Eigen::Vector3d ahi(c.dist_xdd, c.dist_ydd, c.dist_thdd);
  return disturbance_bounds(c.gantry, slo, shi, alo, ahi, c.dist_grid,
                            c.dist_margin);
}

inline RciOptions scenario_rci_options(
    const RunConfig& c,
    const std::function<void(const RciIterRecord&)>& progress = {}) {
  RciOptions opt;
  opt.rho = c.rho;
  opt.max_iter = c.max_iter;
  opt.progress = progress;
  return opt;
}

using BuildProgress =
    std::function<void(const std::string& kind, const RciIterRecord&)>;

inline BuiltSet build_reference_set(const RunConfig& c,
                                    const BuildProgress& progress = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  BuiltSet out;
  out.kind = "ref";
  RciOptions opt = scenario_rci_options(c);
  if (progress)
    opt.progress = [&](const RciIterRecord& r) { progress("ref", r); };
  const RefModel rm = reference_model(c.Ts);
  RciResult r = reference_ci(rm, reference_state_box(c),
                             reference_input_box(c), opt);
  out.joint.F = rm.A;
  out.joint.G = rm.B;
  out.joint.Ed = Eigen::MatrixXd(2, 0);
  out.joint.Hr = Eigen::MatrixXd(2, 0);
  out.joint.U = reference_input_box(c);
  out.joint.W = Polytope::universe(0);
  out.joint.Ur = Polytope::universe(0);
  out.set = std::move(r.set);
  out.robust = std::move(r.robust);
  out.iterations = r.iterations;
  out.converged = r.converged;
  out.log = std::move(r.log);
  out.verify = verify_invariance(out.set, out.robust, out.joint,
                                 c.verify_samples, c.seed + 11);
  out.build_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

inline BuiltSet build_x_set(const RunConfig& c, const Polytope& ref_ci,
                            const DisturbanceBounds& db,
                            const BuildProgress& progress = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  BuiltSet out;
  out.kind = "x";
  const RefModel rm = reference_model(c.Ts);
  const DiscreteLTI xa = augment_delay(x_axis_lti(c.gantry, c.Ts), c.Tdx);
  const Polytope Xx = x_state_box(c);
  const Polytope Ux = x_input_box(c);
  out.joint = make_joint(xa, rm, Ux, db.x_box(), reference_input_box(c));
  const InitialSets init =
      build_R0_x(c.budget().eps_x_bar, Xx, Ux, ref_ci, c.Tdx);

  Eigen::VectorXd zs(xa.nx() + 2);
  zs(0) = c.x_pos;
  zs(1) = c.x_vel;
  for (int t = 0; t < c.Tdx; ++t) zs(2 + t) = c.ix_max;
  zs(xa.nx()) = c.r_pos;
  zs(xa.nx() + 1) = c.r_vel;
  Eigen::VectorXd us(1);
  us << c.ix_max;

  RciOptions opt = scenario_rci_options(c);
  if (progress)
    opt.progress = [&](const RciIterRecord& r) { progress("x", r); };
  RciResult r = rci_iterate(out.joint, init.R0bar, init.Rs, zs, us, opt);
  out.set = std::move(r.set);
  out.robust = std::move(r.robust);
  out.iterations = r.iterations;
  out.converged = r.converged;
  out.log = std::move(r.log);
  out.verify = verify_invariance(out.set, out.robust, out.joint,
                                 c.verify_samples, c.seed + 13, &ref_ci);
  out.build_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

inline BuiltSet build_y_set(const RunConfig& c, double x_bar,
                            const Polytope& ref_ci,
                            const DisturbanceBounds& db,
                            const BuildProgress& progress = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  BuiltSet out;
  out.kind = "y";
  out.x_bar = x_bar;
  const RefModel rm = reference_model(c.Ts);
  const DiscreteLTI ya =
      augment_delay(y_axis_lti(c.gantry, x_bar, c.Ts), c.Tdy);
  const Polytope Xy = y_state_box(c);
  const Polytope Uy = y_input_box(c);
  out.joint = make_joint(ya, rm, Uy, db.y_box(), reference_input_box(c));
  const InitialSets init = build_R0_y(x_bar, c.budget().eps_y, c.theta_max,
                                      c.gantry.D, Xy, Uy, ref_ci, c.Tdy);

  Eigen::VectorXd zs(ya.nx() + 2);
  zs(0) = c.y_half;
  zs(1) = c.y_vel;
  zs(2) = c.theta_max;
  zs(3) = c.th_vel;
  for (int t = 0; t < 2 * c.Tdy; ++t) zs(4 + t) = c.iy_max;
  zs(ya.nx()) = c.r_pos;
  zs(ya.nx() + 1) = c.r_vel;
  Eigen::VectorXd us(2);
  us << c.iy_max, c.iy_max;

  RciOptions opt = scenario_rci_options(c);
  if (progress)
    opt.progress = [&, x_bar](const RciIterRecord& r) {
      char tag[32];
      std::snprintf(tag, sizeof tag, "y@%g", x_bar);
      progress(tag, r);
    };
  RciResult r = rci_iterate(out.joint, init.R0bar, init.Rs, zs, us, opt);
  out.set = std::move(r.set);
  out.robust = std::move(r.robust);
  out.iterations = r.iterations;
  out.converged = r.converged;
  out.log = std::move(r.log);
  out.verify =
      verify_invariance(out.set, out.robust, out.joint, c.verify_samples,
                        c.seed + 17 + static_cast<std::uint64_t>(
                                          std::llround(1e6 * (x_bar + 1.0))),
                        &ref_ci);
  out.build_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

/**
 * Builds every set the configured run needs: the reference class first
 * (the axis builds quantify over it), then the x set and one y set per
 * bank point, in parallel when asked.
 */
inline RciCache build_sets(const RunConfig& c, bool parallel = true,
                           const BuildProgress& progress = {}) {
  RciCache cache;
  cache.hash = rci_cache_hash(c);
  cache.ref_ci = build_reference_set(c, progress);
  const DisturbanceBounds db = scenario_disturbances(c);
  const Polytope& rc = cache.ref_ci.set;

  const int ny = static_cast<int>(c.bank_points.size());
  cache.y.resize(ny);
  if (!parallel) {
    cache.x = build_x_set(c, rc, db, progress);
    for (int j = 0; j < ny; ++j)
      cache.y[j] = build_y_set(c, c.bank_points[j], rc, db, progress);
    return cache;
  }

  std::vector<std::exception_ptr> errs(ny + 1);
  std::vector<std::thread> pool;
  pool.emplace_back([&] {
    try {
      cache.x = build_x_set(c, rc, db, progress);
    } catch (...) {
      errs[0] = std::current_exception();
    }
  });
  for (int j = 0; j < ny; ++j) {
    pool.emplace_back([&, j] {
      try {
        cache.y[j] = build_y_set(c, c.bank_points[j], rc, db, progress);
      } catch (...) {
        errs[j + 1] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errs)
    if (e) std::rethrow_exception(e);
  return cache;
}

/// True when every build converged and every verification certificate holds.
inline bool cache_certified(const RciCache& cache) {
  if (!cache.ref_ci.converged || !cache.ref_ci.verify.pass()) return false;
  if (!cache.x.converged || !cache.x.verify.pass()) return false;
  for (const BuiltSet& s : cache.y)
    if (!s.converged || !s.verify.pass()) return false;
  return true;
}

/// Assembles the closed-loop setup from a config and its built sets.
inline SimSetup make_sim_setup(const RunConfig& c, const RciCache& cache) {
  if (cache.y.size() != c.bank_points.size())
    throw CacheError("cache holds " + std::to_string(cache.y.size()) +
                     " y sets but the config lists " +
                     std::to_string(c.bank_points.size()) + " bank points");
  for (std::size_t j = 0; j < cache.y.size(); ++j)
    if (cache.y[j].x_bar != c.bank_points[j])
      throw CacheError("cached y set " + std::to_string(j) +
                       " was built at a different linearization point");

  SimSetup s;
  s.plant = c.gantry;
  s.rig = c.rig;
  s.mode = c.plant_mode();
  s.Ts = c.Ts;
  s.Tdx = c.Tdx;
  s.Tdy = c.Tdy;
  s.x_base = x_axis_lti(c.gantry, c.Ts);
  s.bank = make_model_bank(c.gantry, c.bank_points, c.bank_spacing, c.Ts,
                           c.Tdy);

  const DiscreteLTI xa = augment_delay(s.x_base, c.Tdx);
  s.mpc_x.model = xa;
  s.mpc_x.C = tracked_output_x(xa.nx());
  s.mpc_x.out_offset = 0.0;
  s.mpc_x.U = x_input_box(c);
  s.mpc_x.rci = cache.x.set;
  s.mpc_x.cfg.N = c.horizon;
  s.mpc_x.cfg.Q = c.Qx;
  s.mpc_x.cfg.R = c.Rx;
  s.mpc_x.cfg.slack_weight = c.slack_weight;

  s.mpc_y.resize(cache.y.size());
  for (std::size_t j = 0; j < cache.y.size(); ++j) {
    MpcProblem& p = s.mpc_y[j];
    p.model = s.bank.aug[j];
    p.C = tracked_output_y(p.model.nx(), c.bank_points[j]);
    p.out_offset = -c.gantry.D;
    p.U = y_input_box(c);
    p.rci = cache.y[j].set;
    p.cfg.N = c.horizon;
    p.cfg.Q = c.Qy;
    p.cfg.R = c.Ry;
    p.cfg.slack_weight = c.slack_weight;
  }

  s.budget = c.budget();
  s.geom = c.geometry();
  s.plan = plan_reference(s.geom, c.planner());
  s.ref_ci = cache.ref_ci.set;
  s.seed = c.seed;
  s.hil_noise = c.hil_noise;
  s.hil_coulomb = c.hil_coulomb;
  s.quantize = c.quantize;
  s.config_hash = config_hash(c);
  return s;
}

}  // namespace cmpc
