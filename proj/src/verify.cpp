#include "treeq/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "treeq/rng.hpp"

namespace treeq {

namespace {

constexpr int kPairEnumerationCap = 12;

void require_small_dim(const TreeNetwork& net) {
  if (net.node_count() > kPairEnumerationCap)
    throw RuntimeLimitError(
        RuntimeLimitError::Kind::DimensionTooLarge,
        "boundary-pair enumeration is capped at d = " +
            std::to_string(kPairEnumerationCap));
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

/// Visits every pair (b, b2) with b2 >= b.
template <typename F>
void for_dominating_pairs(int d, F&& f) {
  const BoundaryMask full = boundary_all_busy(d);
  for (BoundaryMask b = 0;; ++b) {
    const BoundaryMask free = full & ~b;
    // enumerate subsets s of the free bits, b2 = b | s
    BoundaryMask s = 0;
    while (true) {
      f(b, static_cast<BoundaryMask>(b | s));
      if (s == free) break;
      s = (s - free) & free;
    }
    if (b == full) break;
  }
}

/// Sample point set shared by the subsolution checks: uniform interior
/// points plus copies with zeroed coordinates for the boundary faces.
std::vector<std::vector<double>> sample_points(int d, int count,
                                               std::uint64_t seed) {
  Xoshiro256pp rng(seed ^ 0x5eedULL);
  std::vector<std::vector<double>> pts;
  pts.reserve(static_cast<size_t>(count) * (d + 2));
  for (int s = 0; s < count; ++s) {
    std::vector<double> x(d + 1, 0.0);
    for (int i = 1; i <= d; ++i) x[i] = rng.uniform01();
    pts.push_back(x);
    for (int i = 1; i <= d; ++i) {
      std::vector<double> y = x;
      y[i] = 0.0;
      pts.push_back(std::move(y));
    }
    // one random deeper face
    std::vector<double> z = x;
    for (int i = 1; i <= d; ++i)
      if (rng.uniform01() < 0.5) z[i] = 0.0;
    pts.push_back(std::move(z));
  }
  return pts;
}

BoundaryMask boundary_of_point(const std::vector<double>& x, int d) {
  BoundaryMask b = 0;
  for (int i = 1; i <= d; ++i)
    if (x[i] > 0.0) b |= BoundaryMask{1} << (i - 1);
  return b;
}

/// Exit-set sample: shared buffer -> uniform on the simplex sum(x) = 1,
/// per-node -> uniform on the face x(i) = beta(i).
std::vector<double> exit_point(const ResolvedBuffer& buf, int d, int face,
                               Xoshiro256pp& rng) {
  std::vector<double> x(d + 1, 0.0);
  if (!buf.per_node()) {
    double tot = 0.0;
    for (int i = 1; i <= d; ++i) {
      x[i] = -std::log(1.0 - rng.uniform01());
      tot += x[i];
    }
    for (int i = 1; i <= d; ++i) x[i] /= tot;
  } else {
    for (int i = 1; i <= d; ++i) x[i] = rng.uniform01() * buf.beta(i);
    x[face] = buf.beta(face);
  }
  return x;
}

double closed_form_w0(const GradientTable& table, const MollifierParams& p) {
  // 2 gamma - delta log sum exp(alpha_l eps / delta), in log space
  double mx = -std::numeric_limits<double>::infinity();
  for (int l = 0; l < table.size(); ++l)
    mx = std::max(mx, table.alpha(l) * p.epsilon / p.delta);
  double s = 0.0;
  for (int l = 0; l < table.size(); ++l)
    s += std::exp(table.alpha(l) * p.epsilon / p.delta - mx);
  return 2.0 * p.gamma - p.delta * (mx + std::log(s));
}

}  // namespace

CheckReport check_simple_gradient_roots(const TreeNetwork& net,
                                        const GradientCheckOptions& opt) {
  require_small_dim(net);
  const int d = net.node_count();
  CheckReport rep;
  rep.name = "simple_gradient_roots";
  double worst = 0.0;
  BoundaryMask wb = 0, wb2 = 0;
  std::vector<std::vector<double>> grads(std::uint64_t{1} << d);
  for (BoundaryMask b = 0; b < (BoundaryMask{1} << d); ++b) {
    grads[b] = simple_gradient(net, b);
    grads[b][1] += opt.perturb_q1;
  }
  for_dominating_pairs(d, [&](BoundaryMask b, BoundaryMask b2) {
    const double resid = std::abs(hamiltonian(net, b2, grads[b]).N - 1.0);
    if (resid > worst) {
      worst = resid;
      wb = b;
      wb2 = b2;
    }
  });
  rep.pass = worst <= opt.tol;
  rep.detail = "worst |N-1| = " + fmt(worst) + " at b = " +
               boundary_to_string(wb, d) + ", b' = " +
               boundary_to_string(wb2, d);
  return rep;
}

CheckReport check_effective_gradient_supersolution(
    const TreeNetwork& net, const GradientCheckOptions& opt) {
  require_small_dim(net);
  const int d = net.node_count();
  CheckReport rep;
  rep.name = "effective_gradient_supersolution";
  double worst = std::numeric_limits<double>::infinity();
  BoundaryMask wb = 0, wb2 = 0;
  std::vector<std::vector<double>> grads(std::uint64_t{1} << d);
  for (BoundaryMask b = 0; b < (BoundaryMask{1} << d); ++b) {
    grads[b] = effective_gradient(net, b);
    grads[b][1] += opt.perturb_q1;
  }
  for_dominating_pairs(d, [&](BoundaryMask b, BoundaryMask b2) {
    const double H = hamiltonian(net, b2, grads[b]).H;
    if (H < worst) {
      worst = H;
      wb = b;
      wb2 = b2;
    }
  });
  rep.pass = worst >= -opt.tol;
  rep.detail = "min H = " + fmt(worst) + " at b = " +
               boundary_to_string(wb, d) + ", b' = " +
               boundary_to_string(wb2, d);
  return rep;
}

CheckReport check_subsolution(const TreeNetwork& net,
                              const ResolvedBuffer& buf,
                              const MollifierParams& params,
                              const SubsolutionCheckOptions& opt) {
  const int d = net.node_count();
  const GradientTable table = GradientTable::build(net);
  MollifierParams p = params;
  p.gamma += opt.gamma_bump;

  CheckReport rep;
  rep.name = "subsolution";
  std::ostringstream detail;
  bool pass = true;

  // item 1: Hamiltonian lower bound, C1 fitted
  const auto pts = sample_points(d, opt.sample_count, opt.seed);
  double c1 = 0.0;
  double min_h = std::numeric_limits<double>::infinity();
  std::vector<double> witness1;
  const double floor_scale = std::exp(-p.epsilon / p.delta);
  for (const auto& x : pts) {
    const std::vector<double> g = mollified_gradient(x, table, p);
    const double H = hamiltonian(net, boundary_of_point(x, d), g).H;
    if (H < min_h) {
      min_h = H;
      witness1 = x;
    }
    if (H < 0.0) c1 = std::max(c1, -H / floor_scale);
  }
  if (!std::isfinite(c1) || !std::isfinite(min_h)) pass = false;
  detail << "item1: min H = " << fmt(min_h) << ", fitted C1 = " << fmt(c1)
         << " (floor " << fmt(floor_scale) << ")\n";

  // item 2: W(0) against the closed form
  {
    std::vector<double> zero(d + 1, 0.0);
    const double w0 = mollified_value(zero, table, p);
    const double cf = closed_form_w0(table, p);
    const double err = std::abs(w0 - cf);
    if (err > opt.tol) pass = false;
    detail << "item2: |W(0) - closed form| = " << fmt(err) << "\n";
  }

  // item 3: W <= 0 on the exit set
  {
    Xoshiro256pp rng(opt.seed ^ 0xfaceULL);
    double worst = -std::numeric_limits<double>::infinity();
    const int faces = buf.per_node() ? d : 1;
    const int per_face = std::max(1, opt.sample_count / faces);
    for (int f = 1; f <= faces; ++f) {
      for (int s = 0; s < per_face; ++s) {
        const std::vector<double> x = exit_point(buf, d, f, rng);
        worst = std::max(worst, mollified_value(x, table, p));
      }
    }
    if (worst > opt.tol) pass = false;
    detail << "item3: max W on exit set = " << fmt(worst) << "\n";
  }

  // item 4: Hessian bound C2/delta, C2 stable under delta halving
  {
    Xoshiro256pp rng(opt.seed ^ 0xbeefULL);
    std::vector<double> c2s;
    for (double dl : {p.delta, p.delta / 2.0, p.delta / 4.0}) {
      MollifierParams q = p;
      q.delta = dl;
      const double h = dl / 100.0;
      double maxh = 0.0;
      for (int s = 0; s < opt.hessian_points; ++s) {
        std::vector<double> x(d + 1, 0.0);
        for (int i = 1; i <= d; ++i) x[i] = rng.uniform01();
        for (int i = 1; i <= d; ++i) {
          for (int j = i; j <= d; ++j) {
            std::vector<double> a = x;
            double v;
            if (i == j) {
              a[i] = x[i] + h;
              const double wp = mollified_value(a, table, q);
              a[i] = x[i] - h;
              const double wm = mollified_value(a, table, q);
              a[i] = x[i];
              v = (wp - 2.0 * mollified_value(a, table, q) + wm) / (h * h);
            } else {
              a[i] = x[i] + h;
              a[j] = x[j] + h;
              const double wpp = mollified_value(a, table, q);
              a[j] = x[j] - h;
              const double wpm = mollified_value(a, table, q);
              a[i] = x[i] - h;
              const double wmm = mollified_value(a, table, q);
              a[j] = x[j] + h;
              const double wmp = mollified_value(a, table, q);
              v = (wpp - wpm - wmp + wmm) / (4.0 * h * h);
            }
            maxh = std::max(maxh, std::abs(v));
          }
        }
      }
      c2s.push_back(maxh * dl);
    }
    const double lo = *std::min_element(c2s.begin(), c2s.end());
    const double hi = *std::max_element(c2s.begin(), c2s.end());
    if (!(lo > 0.0) || hi / lo > 4.0) pass = false;
    detail << "item4: C2 at delta/{1,2,4} = " << fmt(c2s[0]) << ", "
           << fmt(c2s[1]) << ", " << fmt(c2s[2]) << " (spread "
           << fmt(hi / lo) << ")";
  }

  rep.pass = pass;
  rep.detail = detail.str();
  return rep;
}

EpsilonCheckResult check_epsilon_subsolution_definition(
    const TreeNetwork& net, const ResolvedBuffer& buf,
    const MollifierParams& params, const SubsolutionCheckOptions& opt) {
  const int d = net.node_count();
  const GradientTable table = GradientTable::build(net);
  MollifierParams p = params;
  p.gamma += opt.gamma_bump;

  double min_h = std::numeric_limits<double>::infinity();
  for (const auto& x : sample_points(d, opt.sample_count, opt.seed)) {
    const std::vector<double> g = mollified_gradient(x, table, p);
    min_h = std::min(min_h, hamiltonian(net, boundary_of_point(x, d), g).H);
  }

  std::vector<double> zero(d + 1, 0.0);
  const double w0 = mollified_value(zero, table, p);

  Xoshiro256pp rng(opt.seed ^ 0xfaceULL);
  double max_ws = -std::numeric_limits<double>::infinity();
  const int faces = buf.per_node() ? d : 1;
  const int per_face = std::max(1, opt.sample_count / faces);
  for (int f = 1; f <= faces; ++f)
    for (int s = 0; s < per_face; ++s)
      max_ws = std::max(max_ws, mollified_value(exit_point(buf, d, f, rng),
                                                table, p));

  EpsilonCheckResult out;
  out.eps_eff = std::max({0.0, -min_h, 2.0 * params.gamma - w0, max_ws});
  out.report.name = "epsilon_subsolution_definition";
  out.report.pass = std::isfinite(out.eps_eff);
  std::ostringstream os;
  os << "eps_eff = " << fmt(out.eps_eff) << " (min H = " << fmt(min_h)
     << ", 2g - W(0) = " << fmt(2.0 * params.gamma - w0)
     << ", max W on exit = " << fmt(max_ws) << ")";
  out.report.detail = os.str();
  return out;
}

CheckReport check_epsilon_shrinks(const TreeNetwork& net,
                                  const BufferStructure& buf, double C,
                                  const std::vector<long long>& n_list,
                                  const SubsolutionCheckOptions& opt,
                                  bool couple) {
  CheckReport rep;
  rep.name = "epsilon_shrinks_under_coupling";
  std::ostringstream detail;
  double prev = std::numeric_limits<double>::infinity();
  bool pass = true;
  for (long long n : n_list) {
    const ResolvedBuffer rbuf = resolve_buffer(buf, net.node_count(), n);
    const double gamma = decay_rate(net, rbuf);
    const MollifierParams params =
        couple ? choose_params(n, C, gamma)
               : choose_params(n_list.front(), C, gamma);
    const EpsilonCheckResult r =
        check_epsilon_subsolution_definition(net, rbuf, params, opt);
    detail << "n = " << n << ": eps_eff = " << fmt(r.eps_eff) << "\n";
    if (!(r.eps_eff < prev * (1.0 - 1e-6))) pass = false;
    prev = r.eps_eff;
  }
  rep.pass = pass;
  rep.detail = detail.str();
  return rep;
}

}  // namespace treeq
