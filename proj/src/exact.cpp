#include "treeq/exact.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "treeq/sampler.hpp"

namespace treeq {

namespace {

std::uint64_t saturating_binomial(std::uint64_t m, std::uint64_t k) {
  // C(m, k) with saturation
  k = std::min(k, m - k);
  unsigned __int128 acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    acc = acc * (m - k + i) / i;
    if (acc > ~std::uint64_t{0}) return ~std::uint64_t{0};
  }
  return static_cast<std::uint64_t>(acc);
}

struct Lattice {
  int d;
  std::vector<long long> dims;      // max coordinate per node, [1..d]
  std::vector<std::uint64_t> stride;  // [1..d]
  std::uint64_t size = 1;
};

Lattice make_lattice(const ResolvedBuffer& buf, int d, std::uint64_t cap) {
  Lattice lat;
  lat.d = d;
  lat.dims.assign(d + 1, 0);
  lat.stride.assign(d + 1, 0);
  for (int i = 1; i <= d; ++i)
    lat.dims[i] = buf.per_node() ? buf.sizes[i] : buf.n;
  std::uint64_t size = 1;
  for (int i = d; i >= 1; --i) {
    lat.stride[i] = size;
    const std::uint64_t w = static_cast<std::uint64_t>(lat.dims[i]) + 1;
    if (w != 0 && size > cap / w + 1)
      throw RuntimeLimitError(RuntimeLimitError::Kind::LatticeTooLarge,
                              "lattice exceeds the state cap");
    size *= w;
  }
  if (size > cap)
    throw RuntimeLimitError(RuntimeLimitError::Kind::LatticeTooLarge,
                            "lattice of " + std::to_string(size) +
                                " cells exceeds the cap of " +
                                std::to_string(cap));
  lat.size = size;
  return lat;
}

enum : std::uint8_t { kTransient = 0, kOverflow = 1, kEmpty = 2 };

}  // namespace

std::uint64_t state_count(const ResolvedBuffer& buf, int d) {
  if (buf.per_node()) {
    unsigned __int128 acc = 1;
    for (int i = 1; i <= d; ++i) {
      acc *= static_cast<std::uint64_t>(buf.sizes[i]) + 1;
      if (acc > ~std::uint64_t{0}) return ~std::uint64_t{0};
    }
    return static_cast<std::uint64_t>(acc);
  }
  return saturating_binomial(static_cast<std::uint64_t>(buf.n) + d, d);
}

ExactResult first_passage(const TreeNetwork& net, const ResolvedBuffer& buf,
                          const ExactOptions& opt) {
  const int d = net.node_count();

  // degenerate scales where the start state is already in the exit set
  {
    std::vector<long long> s(d + 1, 0);
    s[1] = 1;
    bool start_exit;
    if (buf.per_node()) {
      start_exit = false;
      for (int i = 1; i <= d; ++i)
        if (s[i] >= buf.sizes[i]) start_exit = true;
    } else {
      start_exit = buf.n <= 1;
    }
    if (start_exit) return {1.0, 0, 0.0, state_count(buf, d)};
  }

  const Lattice lat = make_lattice(buf, d, opt.state_cap);
  const std::uint64_t S = lat.size;

  const std::vector<Jump> jumps = jump_set(net);
  const JumpDistribution probs = nominal_distribution(net);
  const size_t nv = jumps.size();

  // per-jump rank offset; validity still depends on the state
  std::vector<long long> delta(nv);
  for (size_t k = 0; k < nv; ++k) {
    const Jump& v = jumps[k];
    long long off = 0;
    if (v.from == 0) {
      off += static_cast<long long>(lat.stride[v.to]);
    } else {
      off -= static_cast<long long>(lat.stride[v.from]);
      if (v.to != 0) off += static_cast<long long>(lat.stride[v.to]);
    }
    delta[k] = off;
  }

  // odometer pass: classify cells, record zero-coordinate masks and totals
  std::vector<std::uint8_t> cls(S, kTransient);
  std::vector<std::uint32_t> zmask(S);
  std::vector<std::uint32_t> total(S);
  {
    std::vector<long long> x(d + 1, 0);
    for (std::uint64_t r = 0; r < S; ++r) {
      std::uint32_t zm = 0;
      long long tot = 0;
      for (int i = 1; i <= d; ++i) {
        if (x[i] == 0) zm |= 1u << (i - 1);
        tot += x[i];
      }
      zmask[r] = zm;
      total[r] = static_cast<std::uint32_t>(tot);
      bool overflow;
      if (buf.per_node()) {
        overflow = false;
        for (int i = 1; i <= d; ++i)
          if (x[i] >= buf.sizes[i]) overflow = true;
      } else {
        overflow = tot >= buf.n;
      }
      if (overflow)
        cls[r] = kOverflow;
      else if (tot == 0)
        cls[r] = kEmpty;
      // advance odometer (last coordinate fastest, matching strides)
      for (int i = d; i >= 1; --i) {
        if (++x[i] <= lat.dims[i]) break;
        x[i] = 0;
      }
    }
  }

  // blocked probability per zero-mask
  std::vector<double> pblock(std::uint64_t{1} << d, 0.0);
  for (std::uint32_t m = 0; m < (1u << d); ++m) {
    double s = 0.0;
    for (int i = 1; i <= d; ++i)
      if (m & (1u << (i - 1))) s += net.total_service(i);
    pblock[m] = s;
  }

  // sweep order: descending total population, rank as tie-break
  std::vector<std::uint32_t> order;
  order.reserve(S);
  for (std::uint64_t r = 0; r < S; ++r)
    if (cls[r] == kTransient) order.push_back(static_cast<std::uint32_t>(r));
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     return total[a] > total[b];
                   });

  std::vector<double> h(S, 0.0);
  for (std::uint64_t r = 0; r < S; ++r)
    if (cls[r] == kOverflow) h[r] = 1.0;

  const std::uint64_t start_rank = lat.stride[1];  // state (1,0,...,0)

  auto relax = [&](std::uint64_t r) {
    const std::uint32_t zm = zmask[r];
    double acc = 0.0;
    for (size_t k = 0; k < nv; ++k) {
      const Jump& v = jumps[k];
      if (v.from != 0 && (zm & (1u << (v.from - 1)))) continue;  // blocked
      acc += probs[k] * h[static_cast<std::uint64_t>(
                            static_cast<long long>(r) + delta[k])];
    }
    return acc / (1.0 - pblock[zm]);
  };

  ExactResult res;
  res.states = state_count(buf, d);

  const bool jacobi = opt.method == ExactMethod::ValueIteration;
  std::vector<double> hnew;
  if (jacobi) hnew = h;

  const int nthreads = std::max(1, opt.threads);
  double rel_change = 0.0;
  for (std::uint64_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    rel_change = 0.0;
    if (jacobi) {
      auto work = [&](size_t lo, size_t hi, double& worst) {
        double w = 0.0;
        for (size_t idx = lo; idx < hi; ++idx) {
          const std::uint64_t r = order[idx];
          const double v = relax(r);
          const double prev = h[r];
          hnew[r] = v;
          if (v != prev) {
            const double rel = std::abs(v - prev) / std::max(std::abs(v), 1e-300);
            w = std::max(w, rel);
          }
        }
        worst = w;
      };
      if (nthreads == 1) {
        work(0, order.size(), rel_change);
      } else {
        std::vector<std::thread> pool;
        std::vector<double> worst(nthreads, 0.0);
        const size_t per = (order.size() + nthreads - 1) / nthreads;
        for (int t = 0; t < nthreads; ++t) {
          const size_t lo = std::min(order.size(), t * per);
          const size_t hi = std::min(order.size(), lo + per);
          pool.emplace_back(work, lo, hi, std::ref(worst[t]));
        }
        for (auto& th : pool) th.join();
        for (double w : worst) rel_change = std::max(rel_change, w);
      }
      for (std::uint32_t r : order) h[r] = hnew[r];
    } else {
      // in-place Gauss-Seidel, alternating sweep direction
      const bool forward = (sweep % 2 == 0);
      const size_t m = order.size();
      for (size_t idx = 0; idx < m; ++idx) {
        const std::uint64_t r = order[forward ? idx : m - 1 - idx];
        const double v = relax(r);
        const double prev = h[r];
        h[r] = v;
        if (v != prev) {
          const double rel = std::abs(v - prev) / std::max(std::abs(v), 1e-300);
          rel_change = std::max(rel_change, rel);
        }
      }
    }
    res.iterations = sweep + 1;
    if (rel_change < opt.tol) {
      // stall check: the true fixed-point defect, not just the last step
      double resid = 0.0;
      for (std::uint32_t r : order) {
        const double v = relax(r);
        if (v != h[r])
          resid = std::max(resid,
                           std::abs(v - h[r]) / std::max(std::abs(v), 1e-300));
      }
      res.residual = resid;
      if (resid < 100.0 * opt.tol) {
        res.p = h[start_rank];
        return res;
      }
    }
  }
  throw RuntimeLimitError(
      RuntimeLimitError::Kind::NoConvergence,
      "first-passage iteration did not converge: last relative change " +
          std::to_string(rel_change) + " after " +
          std::to_string(opt.max_sweeps) + " sweeps");
}

}  // namespace treeq
