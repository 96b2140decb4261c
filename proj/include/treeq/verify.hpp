#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "treeq/network.hpp"
#include "treeq/subsolution.hpp"

namespace treeq {

struct CheckReport {
  std::string name;
  bool pass = true;
  std::string detail;  // worst witnesses, fitted constants
};

/// Hook for negative controls: adds perturb_q1 to component 1 of every
/// gradient before checking. Zero means check the real construction.
struct GradientCheckOptions {
  double tol = 1e-10;
  double perturb_q1 = 0.0;
};

/// For every boundary b and every b' >= b, the simple gradient q of b
/// satisfies |N_{b'}(q) - 1| <= tol. Capped at d <= 12 (3^d pairs).
CheckReport check_simple_gradient_roots(const TreeNetwork& net,
                                        const GradientCheckOptions& opt = {});

/// For every boundary b and every b' >= b, the effective gradient q of b
/// satisfies H_{b'}(q) >= -tol.
CheckReport check_effective_gradient_supersolution(
    const TreeNetwork& net, const GradientCheckOptions& opt = {});

struct SubsolutionCheckOptions {
  int sample_count = 10000;
  int hessian_points = 200;
  std::uint64_t seed = 1;
  double tol = 1e-10;
  /// Negative-control hook: shifts the gamma used to build W (items 2/3
  /// compare against the true gamma, so a nonzero bump must fail).
  double gamma_bump = 0.0;
};

/// Samples x in [0,1]^d plus boundary faces (zeroed coordinates) and checks
/// the four smoothed-subsolution properties:
///   1. H_{b_x}(DW(x)) >= -C1 exp(-eps/delta), C1 fitted and reported
///   2. W(0) equals its closed form within tol
///   3. W(x) <= 0 on the exit set
///   4. Hessian entries bounded by C2/delta with C2 stable under
///      delta-halving
CheckReport check_subsolution(const TreeNetwork& net,
                              const ResolvedBuffer& buf,
                              const MollifierParams& params,
                              const SubsolutionCheckOptions& opt = {});

struct EpsilonCheckResult {
  CheckReport report;
  double eps_eff = 0.0;  // smallest eps making all three clauses hold
};

/// Evaluates the three subsolution-definition clauses for W^{eps,delta}
/// and reports the effective epsilon:
///   (a) min sampled H_{b_x}(DW(x)) >= -eps_eff
///   (b) W(0) >= 2 gamma - eps_eff
///   (c) max W on the exit set <= eps_eff
EpsilonCheckResult check_epsilon_subsolution_definition(
    const TreeNetwork& net, const ResolvedBuffer& buf,
    const MollifierParams& params, const SubsolutionCheckOptions& opt = {});

/// eps_eff must shrink along the coupled sequence delta = C/n,
/// eps = -delta log delta as n runs through n_list (increasing).
/// With couple = false the same params are reused for every n, which is the
/// negative control (no shrinking).
CheckReport check_epsilon_shrinks(const TreeNetwork& net,
                                  const BufferStructure& buf, double C,
                                  const std::vector<long long>& n_list,
                                  const SubsolutionCheckOptions& opt = {},
                                  bool couple = true);

}  // namespace treeq
