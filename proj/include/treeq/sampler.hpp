#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "treeq/network.hpp"
#include "treeq/rng.hpp"
#include "treeq/subsolution.hpp"

namespace treeq {

/// One jump of the embedded chain. from == 0 is an arrival at the root;
/// to == 0 is a departure from the system.
struct Jump {
  int from;
  int to;
};

/// The jump set V of a network, in a fixed order: the arrival first, then
/// for each node (ascending) its child moves (ascending) and its exit move
/// when the exit rate is positive.
std::vector<Jump> jump_set(const TreeNetwork& net);

/// Probability vector aligned with jump_set().
using JumpDistribution = std::vector<double>;

/// b(i) = 0 iff x(i) = 0. x is indexed by node id.
BoundaryMask boundary_of(std::span<const long long> x);

/// The constraining map: false when the jump is blocked (service from an
/// empty node), in which case the state does not move.
bool jump_allowed(std::span<const long long> x, const Jump& v);

/// Nominal jump probabilities of the embedded chain.
JumpDistribution nominal_distribution(const TreeNetwork& net);

/// Exponentially tilted kernel for boundary b and tilt q, normalized by
/// N_b(q). Rates of empty nodes are left untilted.
JumpDistribution is_kernel(const TreeNetwork& net,
                           const std::vector<Jump>& jumps, BoundaryMask b,
                           std::span<const double> q);

enum class Policy { IS, Naive };

struct PathOutcome {
  bool overflow = false;       // hit S_n (true) or emptied (false)
  std::uint64_t steps = 0;     // stopping index T_n
  double log_lr = 0.0;         // accumulated log p(Y)/pbar(Y|X)
  double contribution = 0.0;   // 1_{overflow} * exp(log_lr)
};

struct EstimatorSummary {
  std::uint64_t K = 0;
  double p_hat = 0.0;
  double std_err = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double second_moment = 0.0;
  std::uint64_t hit_count = 0;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;  // not part of the deterministic contract
};

/// Per-worker cache of tilted kernels keyed by boundary. Each entry holds
/// the L per-piece kernels for that boundary, concatenated row-major
/// (L x |V|). Workers own their cache, so no locking in the hot loop.
using KernelCache = std::unordered_map<BoundaryMask, std::vector<double>>;

/// Read-only simulation context shared by all paths.
class SamplerContext {
 public:
  /// The table and params are only used by the IS policy.
  SamplerContext(const TreeNetwork& net, const ResolvedBuffer& buf,
                 const GradientTable* table, const MollifierParams* params,
                 Policy policy);

  const TreeNetwork& net() const { return net_; }
  const ResolvedBuffer& buffer() const { return buf_; }
  const std::vector<Jump>& jumps() const { return jumps_; }
  Policy policy() const { return policy_; }
  const GradientTable* table() const { return table_; }
  const MollifierParams* params() const { return params_; }
  const JumpDistribution& nominal() const { return nominal_; }
  std::uint64_t step_budget() const { return step_budget_; }
  void set_step_budget(std::uint64_t b) { step_budget_ = b; }

  const std::vector<double>& kernels_for(BoundaryMask b,
                                         KernelCache& cache) const;

 private:
  const TreeNetwork& net_;
  ResolvedBuffer buf_;
  const GradientTable* table_;
  const MollifierParams* params_;
  Policy policy_;
  std::vector<Jump> jumps_;
  JumpDistribution nominal_;
  std::uint64_t step_budget_ = 1000000000ull;
};

/// Runs one replication from the initial state (1,0,...,0). Samples from
/// the policy's full kernel, accumulates the likelihood ratio on every
/// sampled step (including blocked ones), applies the constrained move and
/// stops on overflow or at the empty state. Throws
/// RuntimeLimitError(StepBudgetExceeded) past the step budget.
PathOutcome simulate_path(const SamplerContext& ctx, Xoshiro256pp& rng,
                          KernelCache& kernel_cache);

/// K-path estimate with per-path streams derived from master_seed. The
/// result is identical for any thread count.
EstimatorSummary estimate(const TreeNetwork& net, const ResolvedBuffer& buf,
                          std::uint64_t K, const MollifierParams& params,
                          Policy policy, std::uint64_t master_seed,
                          int threads = 1,
                          const GradientTable* table = nullptr);

struct DecayRow {
  long long n = 0;
  double p_hat = 0.0;
  double std_err = 0.0;
  double rate1 = 0.0;  // -log p_hat / n
  double rate2 = 0.0;  // -log m2_hat / n
};

/// Empirical first- and second-moment decay rates over a sweep of n.
/// params_C and the overrides feed choose_params at each n.
std::vector<DecayRow> decay_diagnostics(
    const TreeNetwork& net, const BufferStructure& buf,
    const std::vector<long long>& n_list, std::uint64_t K, double C,
    std::optional<double> epsilon_override, std::optional<double> delta_override,
    Policy policy, std::uint64_t master_seed, int threads = 1);

}  // namespace treeq
