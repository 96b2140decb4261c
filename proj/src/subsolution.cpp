#include "treeq/subsolution.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

namespace treeq {

namespace {

constexpr double kDedupTol = 1e-12;

std::vector<double> rates_impl(const TreeNetwork& net, BoundaryMask b,
                               bool capped) {
  const int d = net.node_count();
  const DerivedRates der = derived_rates(net);
  std::vector<double> m(d + 1, 0.0);
  const auto& topo = net.topological_order();
  // leaves up
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const int i = *it;
    if (boundary_busy(b, i)) {
      m[i] = net.total_service(i);
    } else {
      double s = der.mu_exit_eff[i];
      for (int c : net.children(i)) s += m[c];
      m[i] = capped ? std::min(net.total_service(i), s) : s;
    }
  }
  return m;
}

std::vector<double> gradient_from_rates(const TreeNetwork& net,
                                        const std::vector<double>& m) {
  const DerivedRates der = derived_rates(net);
  std::vector<double> q(net.node_count() + 1, 0.0);
  for (int i = 1; i <= net.node_count(); ++i)
    q[i] = 2.0 * std::log(der.Lambda[i] / m[i]);
  return q;
}

}  // namespace

std::string boundary_to_string(BoundaryMask b, int d) {
  std::string s = "(";
  for (int i = 1; i <= d; ++i) {
    s += boundary_busy(b, i) ? '1' : '0';
    if (i < d) s += ',';
  }
  s += ')';
  return s;
}

std::vector<double> effective_rates(const TreeNetwork& net, BoundaryMask b) {
  return rates_impl(net, b, true);
}

std::vector<double> simple_rates(const TreeNetwork& net, BoundaryMask b) {
  return rates_impl(net, b, false);
}

std::vector<double> effective_gradient(const TreeNetwork& net,
                                       BoundaryMask b) {
  return gradient_from_rates(net, effective_rates(net, b));
}

std::vector<double> simple_gradient(const TreeNetwork& net, BoundaryMask b) {
  return gradient_from_rates(net, simple_rates(net, b));
}

BoundaryMask lift_boundary(const TreeNetwork& net, BoundaryMask b) {
  const std::vector<double> M = effective_rates(net, b);
  BoundaryMask out = b;
  for (int i = 1; i <= net.node_count(); ++i) {
    if (!boundary_busy(b, i) && M[i] == net.total_service(i))
      out |= BoundaryMask{1} << (i - 1);
  }
  return out;
}

Hamiltonian hamiltonian(const TreeNetwork& net, BoundaryMask b,
                        std::span<const double> q) {
  double N = net.arrival_rate() * std::exp(-q[1] / 2.0);
  for (int i = 1; i <= net.node_count(); ++i) {
    if (boundary_busy(b, i)) {
      for (int c : net.children(i))
        N += net.service_rate(i, c) * std::exp((q[i] - q[c]) / 2.0);
      N += net.exit_rate(i) * std::exp(q[i] / 2.0);
    } else {
      N += net.total_service(i);
    }
  }
  return {N, -2.0 * std::log(N)};
}

GradientTable GradientTable::build(const TreeNetwork& net) {
  const int d = net.node_count();
  if (d > 30)
    throw RuntimeLimitError(RuntimeLimitError::Kind::DimensionTooLarge,
                            "gradient table enumerates 2^d boundaries; d = " +
                                std::to_string(d) + " exceeds the cap of 30");
  GradientTable t;
  t.d_ = d;
  const std::uint64_t nb = std::uint64_t{1} << d;
  t.piece_of_.assign(nb, -1);
  for (BoundaryMask b = 0; b < nb; ++b) {
    const std::vector<double> q = effective_gradient(net, b);
    int found = -1;
    for (int l = 0; l < t.L_ && found < 0; ++l) {
      bool same = true;
      for (int i = 1; i <= d && same; ++i)
        same = std::abs(q[i] - t.q_[l * (d + 1) + i]) <= kDedupTol;
      if (same) found = l;
    }
    if (found < 0) {
      const BoundaryMask lifted = lift_boundary(net, b);
      const int alpha = d - std::popcount(lifted) + 1;
      t.q_.insert(t.q_.end(), q.begin(), q.end());
      t.alpha_.push_back(alpha);
      t.rep_.push_back(b);
      t.lifted_.push_back(lifted);
      found = t.L_++;
    } else {
      // merged boundaries must agree on alpha: the lifted boundary is
      // determined by the gradient
      const BoundaryMask lifted = lift_boundary(net, b);
      const int alpha = d - std::popcount(lifted) + 1;
      if (alpha != t.alpha_[found]) {
        std::ostringstream os;
        os << "boundaries " << boundary_to_string(t.rep_[found], d) << " and "
           << boundary_to_string(b, d)
           << " share a gradient but disagree on alpha (" << t.alpha_[found]
           << " vs " << alpha << ")";
        throw Error(os.str());
      }
    }
    t.piece_of_[b] = found;
  }
  return t;
}

std::vector<double> GradientTable::gradient_vector(int l) const {
  return std::vector<double>(q_.begin() + l * (d_ + 1),
                             q_.begin() + (l + 1) * (d_ + 1));
}

MollifierParams choose_params(long long n, double C, double gamma,
                              std::optional<double> epsilon_override,
                              std::optional<double> delta_override) {
  if (n < 1 || !(C > 0.0))
    throw RuntimeLimitError(RuntimeLimitError::Kind::NonPositive,
                            "need n >= 1 and C > 0");
  MollifierParams p;
  p.gamma = gamma;
  p.delta = delta_override.value_or(C / static_cast<double>(n));
  p.epsilon = epsilon_override.value_or(-p.delta * std::log(p.delta));
  if (!(p.delta > 0.0) || !(p.epsilon > 0.0))
    throw RuntimeLimitError(RuntimeLimitError::Kind::NonPositive,
                            "epsilon and delta must be positive");
  return p;
}

double piece_value(const GradientTable& table, const MollifierParams& p,
                   int l, std::span<const double> x) {
  double v = 2.0 * p.gamma - table.alpha(l) * p.epsilon;
  for (int i = 1; i <= table.dim(); ++i) v += table.gradient(l, i) * x[i];
  return v;
}

double mollified_value(std::span<const double> x, const GradientTable& table,
                       const MollifierParams& p) {
  // soft-min: -delta log sum exp(-W_l/delta), stabilized around the min
  const int L = table.size();
  double wmin = piece_value(table, p, 0, x);
  for (int l = 1; l < L; ++l) wmin = std::min(wmin, piece_value(table, p, l, x));
  double s = 0.0;
  for (int l = 0; l < L; ++l)
    s += std::exp(-(piece_value(table, p, l, x) - wmin) / p.delta);
  return wmin - p.delta * std::log(s);
}

void weights(std::span<const double> x, const GradientTable& table,
             const MollifierParams& p, std::span<double> out) {
  const int L = table.size();
  double wmin = piece_value(table, p, 0, x);
  for (int l = 1; l < L; ++l) wmin = std::min(wmin, piece_value(table, p, l, x));
  double s = 0.0;
  for (int l = 0; l < L; ++l) {
    out[l] = std::exp(-(piece_value(table, p, l, x) - wmin) / p.delta);
    s += out[l];
  }
  for (int l = 0; l < L; ++l) out[l] /= s;
}

std::vector<double> mollified_gradient(std::span<const double> x,
                                       const GradientTable& table,
                                       const MollifierParams& p) {
  const int L = table.size();
  const int d = table.dim();
  std::vector<double> w(L);
  weights(x, table, p, w);
  std::vector<double> g(d + 1, 0.0);
  for (int l = 0; l < L; ++l)
    for (int i = 1; i <= d; ++i) g[i] += w[l] * table.gradient(l, i);
  return g;
}

std::vector<double> general_effective_rates(const GeneralNetwork& net,
                                            BoundaryMask b,
                                            const FixedPointOptions& opt) {
  const int d = net.node_count();
  const auto& Lambda = net.Lambda();
  const auto& rho = net.rho();
  // work on the ratios R_i = M_i(b)/Lambda_i; R_0 = 1 is the outside
  std::vector<double> R(d + 1, 1.0);
  for (int i = 1; i <= d; ++i)
    R[i] = boundary_busy(b, i) ? 1.0 / rho[i] : std::min(1.0 / rho[i], 1.0);

  auto step = [&](const std::vector<double>& cur, std::vector<double>& next) {
    double resid = 0.0;
    for (int i = 1; i <= d; ++i) {
      double v;
      if (boundary_busy(b, i)) {
        v = 1.0 / rho[i];
      } else {
        double s = net.routing(i, 0);  // outside has ratio 1
        for (int k = 1; k <= d; ++k)
          if (net.service_rate(i, k) > 0.0) s += net.routing(i, k) * cur[k];
        v = std::min(1.0 / rho[i], s);
      }
      resid = std::max(resid, std::abs(v - cur[i]));
      next[i] = cur[i] + opt.damping * (v - cur[i]);
    }
    return resid;
  };

  std::vector<double> next(d + 1, 1.0);
  double resid = 0.0;
  for (int it = 0; it < opt.max_iter; ++it) {
    resid = step(R, next);
    R.swap(next);
    if (resid < opt.tol) {
      std::vector<double> M(d + 1, 0.0);
      for (int i = 1; i <= d; ++i) {
        // undamped evaluation so busy nodes are exact
        double v;
        if (boundary_busy(b, i)) {
          v = 1.0 / rho[i];
        } else {
          double s = net.routing(i, 0);
          for (int k = 1; k <= d; ++k)
            if (net.service_rate(i, k) > 0.0) s += net.routing(i, k) * R[k];
          v = std::min(1.0 / rho[i], s);
        }
        M[i] = v * Lambda[i];
      }
      return M;
    }
  }
  std::ostringstream os;
  os << "effective-rate fixed point did not converge: residual " << resid
     << " after " << opt.max_iter << " iterations";
  throw RuntimeLimitError(RuntimeLimitError::Kind::NoConvergence, os.str());
}

}  // namespace treeq
