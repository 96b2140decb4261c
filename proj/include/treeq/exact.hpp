#pragma once

#include <cstdint>
#include <vector>

#include "treeq/network.hpp"

namespace treeq {

/// Exact cardinality of the truncated state lattice: C(n+d, d) for a shared
/// buffer, prod(sizes_i + 1) for per-node buffers. Saturates at uint64 max.
std::uint64_t state_count(const ResolvedBuffer& buf, int d);

enum class ExactMethod { GaussSeidel, ValueIteration };

struct ExactOptions {
  ExactMethod method = ExactMethod::GaussSeidel;
  double tol = 1e-14;               // relative successive change
  std::uint64_t state_cap = 50000000;  // on the allocated box lattice
  std::uint64_t max_sweeps = 200000;
  int threads = 1;                  // ValueIteration only
};

struct ExactResult {
  double p = 0.0;
  std::uint64_t iterations = 0;
  double residual = 0.0;  // max relative fixed-point defect at exit
  std::uint64_t states = 0;
};

/// First-passage probability h(s) of hitting the exit set before the empty
/// state, solved on the full lattice: h = 1 on S_n, h(0) = 0, and
/// h(x) = sum_v p(v) h(x + pi(x,v)) in between (blocked jumps resolved
/// analytically as self-loops). Gauss-Seidel sweeps run over states ordered
/// by total population, alternating direction; value iteration is the
/// Jacobi variant and may run chunked over threads. Throws
/// RuntimeLimitError (LatticeTooLarge, NoConvergence).
ExactResult first_passage(const TreeNetwork& net, const ResolvedBuffer& buf,
                          const ExactOptions& opt = {});

}  // namespace treeq
