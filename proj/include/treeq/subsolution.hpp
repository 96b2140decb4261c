#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treeq/network.hpp"

namespace treeq {

/// Boundary bitmap over nodes: bit (i-1) set means node i is nonempty.
/// Masks only make sense together with the node count d.
using BoundaryMask = std::uint32_t;

inline bool boundary_busy(BoundaryMask b, int i) {
  return (b >> (i - 1)) & 1u;
}
inline BoundaryMask boundary_all_busy(int d) {
  return d >= 32 ? ~BoundaryMask{0} : ((BoundaryMask{1} << d) - 1);
}
/// True when b2(i) >= b1(i) for all i.
inline bool boundary_dominates(BoundaryMask b2, BoundaryMask b1) {
  return (b1 & ~b2) == 0;
}
std::string boundary_to_string(BoundaryMask b, int d);

/// Effective service rate M_i(b): mu_i for a nonempty node, otherwise the
/// capped total of what the node feeds plus its fluid exit traffic,
/// computed leaves-up. Result indexed by node id, slot 0 unused.
std::vector<double> effective_rates(const TreeNetwork& net, BoundaryMask b);

/// Same recursion without the cap at mu_i.
std::vector<double> simple_rates(const TreeNetwork& net, BoundaryMask b);

/// q(i) = 2 log(Lambda_i / M_i(b)).
std::vector<double> effective_gradient(const TreeNetwork& net, BoundaryMask b);

/// q(i) = 2 log(Lambda_i / m_i(b)).
std::vector<double> simple_gradient(const TreeNetwork& net, BoundaryMask b);

/// Smallest boundary bbar >= b whose simple gradient equals the effective
/// gradient of b: marks empty nodes whose cap binds as busy.
BoundaryMask lift_boundary(const TreeNetwork& net, BoundaryMask b);

/// Tilted total rate N_b(q) and Hamiltonian H_b(q) = -2 log N_b(q).
/// q is indexed by node id (slot 0 ignored).
struct Hamiltonian {
  double N;
  double H;
};
Hamiltonian hamiltonian(const TreeNetwork& net, BoundaryMask b,
                        std::span<const double> q);

/// Deduplicated set of effective gradients over all 2^d boundaries, their
/// piece offsets alpha_l, and the boundary -> piece index map.
class GradientTable {
 public:
  /// Enumerates all 2^d boundaries in increasing mask order (node 1 is the
  /// least significant bit), deduplicates gradients componentwise at 1e-12,
  /// and derives alpha_l from the lifted boundary of the first
  /// representative. Throws RuntimeLimitError(DimensionTooLarge) for
  /// d > 30. Fails loudly if two merged boundaries disagree on alpha.
  static GradientTable build(const TreeNetwork& net);

  int dim() const { return d_; }
  int size() const { return L_; }
  /// Gradient component q_l(i), node id indexing.
  double gradient(int l, int i) const { return q_[l * (d_ + 1) + i]; }
  std::vector<double> gradient_vector(int l) const;
  int alpha(int l) const { return alpha_[l]; }
  BoundaryMask representative(int l) const { return rep_[l]; }
  BoundaryMask lifted(int l) const { return lifted_[l]; }
  int piece_of_boundary(BoundaryMask b) const { return piece_of_[b]; }

 private:
  int d_ = 0;
  int L_ = 0;
  std::vector<double> q_;  // row-major, stride d+1, slot 0 of each row = 0
  std::vector<int> alpha_;
  std::vector<BoundaryMask> rep_;
  std::vector<BoundaryMask> lifted_;
  std::vector<int> piece_of_;  // size 2^d
};

/// Parameters of the smoothed subsolution W^{eps,delta}.
struct MollifierParams {
  double epsilon = 0.0;  // affine-piece offset scale
  double delta = 0.0;    // smoothing temperature
  double gamma = 0.0;    // decay rate of the configured buffer structure
};

/// delta = C/n and epsilon = -delta log delta unless overridden.
/// Throws RuntimeLimitError(NonPositive) on nonpositive inputs.
MollifierParams choose_params(long long n, double C, double gamma,
                              std::optional<double> epsilon_override = {},
                              std::optional<double> delta_override = {});

/// Affine piece value W_l(x) = 2 gamma - alpha_l eps + <q_l, x>.
double piece_value(const GradientTable& table, const MollifierParams& p,
                   int l, std::span<const double> x);

/// Soft-min of the affine pieces, evaluated with max-subtraction.
double mollified_value(std::span<const double> x, const GradientTable& table,
                       const MollifierParams& p);

/// Softmax weights w_l(x) over pieces; out must have size L.
void weights(std::span<const double> x, const GradientTable& table,
             const MollifierParams& p, std::span<double> out);

/// DW(x) = sum_l w_l(x) q_l, node id indexing.
std::vector<double> mollified_gradient(std::span<const double> x,
                                       const GradientTable& table,
                                       const MollifierParams& p);

struct FixedPointOptions {
  double damping = 0.5;
  double tol = 1e-10;
  int max_iter = 200000;
};

/// Effective rates for a general (possibly cyclic) network: solves the
/// capped fixed point on the ratios M_i(b)/Lambda_i by damped iteration.
/// On a tree this reproduces effective_rates. Throws
/// RuntimeLimitError(NoConvergence) with the residual when the budget runs
/// out.
std::vector<double> general_effective_rates(const GeneralNetwork& net,
                                            BoundaryMask b,
                                            const FixedPointOptions& opt = {});

}  // namespace treeq
