#pragma once

/**
 * @file metrics.hpp
 * @brief Bound auditing over a finished closed-loop trace.
 */

#include <algorithm>
#include <cmath>
#include <string>

#include "cmpc/controller.hpp"
#include "cmpc/trace.hpp"

namespace cmpc {

struct Metrics {
  double max_eps = 0;
  double max_ex = 0;
  double max_ey = 0;
  double max_theta = 0;
  int eps_violations = 0;
  int ex_violations = 0;
  int ey_violations = 0;
  int theta_violations = 0;
  int chain_violations = 0;  ///< ticks where eps > |e_x| + |e_y|
  int fallback_ticks = 0;    ///< ticks where either axis used the slack path
  long ticks = 0;

  bool bounds_ok() const {
    return eps_violations == 0 && ex_violations == 0 && ey_violations == 0 &&
           theta_violations == 0;
  }
};

inline Metrics evaluate_trace(const Trace& tr, const ErrorBudget& budget) {
  Metrics m;
  m.ticks = static_cast<long>(tr.rows.size());
  for (const TraceRow& r : tr.rows) {
    m.max_eps = std::max(m.max_eps, r.eps);
    m.max_ex = std::max(m.max_ex, std::abs(r.e_x));
    m.max_ey = std::max(m.max_ey, std::abs(r.e_y));
    m.max_theta = std::max(m.max_theta, std::abs(r.theta));
    if (r.eps > budget.eps_c) ++m.eps_violations;
    if (std::abs(r.e_x) > budget.eps_x) ++m.ex_violations;
    if (std::abs(r.e_y) > budget.eps_y) ++m.ey_violations;
    if (std::abs(r.theta) > budget.theta_max) ++m.theta_violations;
    if (r.eps > std::abs(r.e_x) + std::abs(r.e_y)) ++m.chain_violations;
    if (r.qp_status_x == 2 || r.qp_status_y == 2) ++m.fallback_ticks;
  }
  return m;
}

inline std::string metrics_summary(const Metrics& m,
                                   const ErrorBudget& budget) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "ticks=%ld max_eps=%.6g/%.6g max_ex=%.6g/%.6g "
                "max_ey=%.6g/%.6g max_theta=%.6g/%.6g violations=%d "
                "chain_violations=%d fallback_ticks=%d",
                m.ticks, m.max_eps, budget.eps_c, m.max_ex, budget.eps_x,
                m.max_ey, budget.eps_y, m.max_theta, budget.theta_max,
                m.eps_violations + m.ex_violations + m.ey_violations +
                    m.theta_violations,
                m.chain_violations, m.fallback_ticks);
  return buf;
}

}  // namespace cmpc
