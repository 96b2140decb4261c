#include "treeq/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

namespace treeq {

std::vector<Jump> jump_set(const TreeNetwork& net) {
  std::vector<Jump> jumps;
  jumps.push_back({0, 1});  // arrival at the root
  for (int i = 1; i <= net.node_count(); ++i) {
    for (int c : net.children(i)) jumps.push_back({i, c});
    if (net.exit_rate(i) > 0.0) jumps.push_back({i, 0});
  }
  return jumps;
}

BoundaryMask boundary_of(std::span<const long long> x) {
  BoundaryMask b = 0;
  for (size_t i = 1; i < x.size(); ++i)
    if (x[i] > 0) b |= BoundaryMask{1} << (i - 1);
  return b;
}

bool jump_allowed(std::span<const long long> x, const Jump& v) {
  return v.from == 0 || x[v.from] > 0;
}

JumpDistribution nominal_distribution(const TreeNetwork& net) {
  JumpDistribution p;
  for (const Jump& v : jump_set(net))
    p.push_back(v.from == 0 ? net.arrival_rate()
                            : net.service_rate(v.from, v.to));
  return p;
}

JumpDistribution is_kernel(const TreeNetwork& net,
                           const std::vector<Jump>& jumps, BoundaryMask b,
                           std::span<const double> q) {
  JumpDistribution p(jumps.size());
  double total = 0.0;
  for (size_t k = 0; k < jumps.size(); ++k) {
    const Jump& v = jumps[k];
    double w;
    if (v.from == 0) {
      w = net.arrival_rate() * std::exp(-q[v.to] / 2.0);
    } else if (!boundary_busy(b, v.from)) {
      w = net.service_rate(v.from, v.to);  // empty node: untilted
    } else if (v.to == 0) {
      w = net.exit_rate(v.from) * std::exp(q[v.from] / 2.0);
    } else {
      w = net.service_rate(v.from, v.to) *
          std::exp((q[v.from] - q[v.to]) / 2.0);
    }
    p[k] = w;
    total += w;
  }
  // empty nodes contribute mu_i to the normalizer even for jumps that are
  // blocked at the current state, so total equals N_b(q)
  for (double& w : p) w /= total;
  return p;
}

SamplerContext::SamplerContext(const TreeNetwork& net,
                               const ResolvedBuffer& buf,
                               const GradientTable* table,
                               const MollifierParams* params, Policy policy)
    : net_(net),
      buf_(buf),
      table_(table),
      params_(params),
      policy_(policy),
      jumps_(jump_set(net)),
      nominal_(nominal_distribution(net)) {
  if (policy_ == Policy::IS && (!table_ || !params_))
    throw Error("IS policy needs a gradient table and mollifier params");
}

const std::vector<double>& SamplerContext::kernels_for(
    BoundaryMask b, KernelCache& cache) const {
  auto it = cache.find(b);
  if (it != cache.end()) return it->second;
  const int L = table_->size();
  const size_t nv = jumps_.size();
  std::vector<double> rows(static_cast<size_t>(L) * nv);
  for (int l = 0; l < L; ++l) {
    const std::vector<double> q = table_->gradient_vector(l);
    const JumpDistribution k = is_kernel(net_, jumps_, b, q);
    std::copy(k.begin(), k.end(), rows.begin() + static_cast<size_t>(l) * nv);
  }
  return cache.emplace(b, std::move(rows)).first->second;
}

namespace {

bool in_exit_set(const ResolvedBuffer& buf, std::span<const long long> x,
                 long long total) {
  if (!buf.per_node()) return total >= buf.n;
  for (size_t i = 1; i < x.size(); ++i)
    if (x[i] >= buf.sizes[i]) return true;
  return false;
}

}  // namespace

PathOutcome simulate_path(const SamplerContext& ctx, Xoshiro256pp& rng,
                          KernelCache& kernel_cache) {
  const int d = ctx.net().node_count();
  const auto& jumps = ctx.jumps();
  const size_t nv = jumps.size();
  const auto& nominal = ctx.nominal();
  const bool is_policy = ctx.policy() == Policy::IS;
  const double inv_n = 1.0 / static_cast<double>(ctx.buffer().n);

  std::vector<long long> x(d + 1, 0);
  x[1] = 1;
  long long total = 1;

  PathOutcome out;
  if (in_exit_set(ctx.buffer(), x, total)) {
    out.overflow = true;
    out.contribution = 1.0;
    return out;
  }

  const int L = is_policy ? ctx.table()->size() : 0;
  std::vector<double> w(L), mix(is_policy ? nv : 0);
  BoundaryMask mask = boundary_of(x);
  const std::vector<double>* kernels =
      is_policy ? &ctx.kernels_for(mask, kernel_cache) : nullptr;
  std::vector<double> xs(d + 1, 0.0);

  while (true) {
    if (out.steps >= ctx.step_budget())
      throw RuntimeLimitError(RuntimeLimitError::Kind::StepBudgetExceeded,
                              "path exceeded the step budget of " +
                                  std::to_string(ctx.step_budget()));
    size_t chosen;
    if (is_policy) {
      for (int i = 1; i <= d; ++i) xs[i] = static_cast<double>(x[i]) * inv_n;
      weights(xs, *ctx.table(), *ctx.params(), w);
      // mixture over pieces of the per-boundary tilted kernels
      const std::vector<double>& rows = *kernels;
      std::fill(mix.begin(), mix.end(), 0.0);
      for (int l = 0; l < L; ++l) {
        const double wl = w[l];
        if (wl == 0.0) continue;
        const double* row = rows.data() + static_cast<size_t>(l) * nv;
        for (size_t k = 0; k < nv; ++k) mix[k] += wl * row[k];
      }
      double u = rng.uniform01();
      chosen = nv - 1;
      double acc = 0.0;
      for (size_t k = 0; k < nv; ++k) {
        acc += mix[k];
        if (u < acc) {
          chosen = k;
          break;
        }
      }
      out.log_lr += std::log(nominal[chosen]) - std::log(mix[chosen]);
    } else {
      double u = rng.uniform01();
      chosen = nv - 1;
      double acc = 0.0;
      for (size_t k = 0; k < nv; ++k) {
        acc += nominal[k];
        if (u < acc) {
          chosen = k;
          break;
        }
      }
      // nominal policy: the ratio is exactly 1
    }
    ++out.steps;

    const Jump& v = jumps[chosen];
    if (jump_allowed(x, v)) {
      if (v.from == 0) {
        ++x[v.to];
        ++total;
      } else {
        --x[v.from];
        --total;
        if (v.to != 0) {
          ++x[v.to];
          ++total;
        }
      }
      if (in_exit_set(ctx.buffer(), x, total)) {
        out.overflow = true;
        break;
      }
      if (total == 0) break;
      if (is_policy) {
        const BoundaryMask m = boundary_of(x);
        if (m != mask) {
          mask = m;
          kernels = &ctx.kernels_for(mask, kernel_cache);
        }
      }
    }
    // blocked jumps leave the state unchanged (self loop)
  }
  out.contribution = out.overflow ? std::exp(out.log_lr) : 0.0;
  return out;
}

EstimatorSummary estimate(const TreeNetwork& net, const ResolvedBuffer& buf,
                          std::uint64_t K, const MollifierParams& params,
                          Policy policy, std::uint64_t master_seed,
                          int threads, const GradientTable* table) {
  if (K < 2) throw ConfigError("need at least K = 2 paths");
  const auto t0 = std::chrono::steady_clock::now();

  GradientTable local_table;
  if (policy == Policy::IS && table == nullptr) {
    local_table = GradientTable::build(net);
    table = &local_table;
  }
  SamplerContext ctx(net, buf, table, &params, policy);

  std::vector<double> contrib(K);
  std::vector<std::uint8_t> hit(K);

  const int nthreads = std::max(1, threads);
  auto run_block = [&](std::uint64_t lo, std::uint64_t hi,
                       std::exception_ptr& err) {
    try {
      KernelCache cache;
      for (std::uint64_t k = lo; k < hi; ++k) {
        Xoshiro256pp rng = Xoshiro256pp::for_path(master_seed, k);
        const PathOutcome po = simulate_path(ctx, rng, cache);
        contrib[k] = po.contribution;
        hit[k] = po.overflow ? 1 : 0;
      }
    } catch (...) {
      err = std::current_exception();
    }
  };

  std::vector<std::exception_ptr> errs(nthreads);
  if (nthreads == 1) {
    run_block(0, K, errs[0]);
  } else {
    std::vector<std::thread> pool;
    const std::uint64_t per = (K + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
      const std::uint64_t lo = std::min<std::uint64_t>(K, t * per);
      const std::uint64_t hi = std::min<std::uint64_t>(K, lo + per);
      pool.emplace_back(run_block, lo, hi, std::ref(errs[t]));
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);

  // deterministic reduction: fixed path order, compensated sums
  auto neumaier_sum = [](const std::vector<double>& v, auto&& f) {
    double sum = 0.0, comp = 0.0;
    for (double x : v) {
      const double y = f(x);
      const double t = sum + y;
      if (std::abs(sum) >= std::abs(y))
        comp += (sum - t) + y;
      else
        comp += (y - t) + sum;
      sum = t;
    }
    return sum + comp;
  };

  EstimatorSummary s;
  s.K = K;
  s.seed = master_seed;
  const double kd = static_cast<double>(K);
  s.p_hat = neumaier_sum(contrib, [](double c) { return c; }) / kd;
  s.second_moment = neumaier_sum(contrib, [](double c) { return c * c; }) / kd;
  const double ssq = neumaier_sum(contrib, [&](double c) {
    const double dlt = c - s.p_hat;
    return dlt * dlt;
  });
  s.std_err = std::sqrt(ssq / (kd - 1.0)) / std::sqrt(kd);
  s.ci_lo = s.p_hat - 2.0 * s.std_err;
  s.ci_hi = s.p_hat + 2.0 * s.std_err;
  for (std::uint64_t k = 0; k < K; ++k) s.hit_count += hit[k];
  s.wall_ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
  return s;
}

std::vector<DecayRow> decay_diagnostics(
    const TreeNetwork& net, const BufferStructure& buf,
    const std::vector<long long>& n_list, std::uint64_t K, double C,
    std::optional<double> epsilon_override,
    std::optional<double> delta_override, Policy policy,
    std::uint64_t master_seed, int threads) {
  const GradientTable table = GradientTable::build(net);
  std::vector<DecayRow> rows;
  for (long long n : n_list) {
    const ResolvedBuffer rbuf = resolve_buffer(buf, net.node_count(), n);
    const MollifierParams params =
        choose_params(n, C, decay_rate(net, rbuf), epsilon_override,
                      delta_override);
    const EstimatorSummary s =
        estimate(net, rbuf, K, params, policy, master_seed, threads, &table);
    DecayRow r;
    r.n = n;
    r.p_hat = s.p_hat;
    r.std_err = s.std_err;
    const double nd = static_cast<double>(n);
    r.rate1 = -std::log(s.p_hat) / nd;
    r.rate2 = -std::log(s.second_moment) / nd;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace treeq
