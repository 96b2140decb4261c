#include "treeq/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace treeq {

namespace {

constexpr double kStabilityMargin = 1e-12;
constexpr double kNormalizeTol = 1e-9;

std::string node_str(int i) { return "node " + std::to_string(i); }

}  // namespace

TreeNetwork TreeNetwork::validate(const NetworkSpec& spec) {
  const int d = spec.nodes;
  if (d < 1) throw ConfigError("network needs at least one node");
  if (!(spec.lambda > 0.0)) throw ConfigError("arrival rate must be positive");

  TreeNetwork net;
  net.d_ = d;
  net.parent_.assign(d + 1, -1);
  net.children_.assign(d + 1, {});
  net.mu_child_.assign(d + 1, {});
  net.mu_exit_.assign(d + 1, 0.0);
  net.mu_total_.assign(d + 1, 0.0);

  for (const auto& e : spec.edges) {
    if (e.from < 1 || e.from > d || e.to < 0 || e.to > d)
      throw ConfigError("edge endpoints must be node ids in 1..d (0 = exit)");
    if (e.rate < 0.0) throw ConfigError("service rates must be nonnegative");
    if (e.to == 0) {
      net.mu_exit_[e.from] += e.rate;
    } else {
      if (e.to == e.from)
        throw ValidationError(ValidationError::Kind::NotATree,
                              "self-loop at " + node_str(e.from));
      if (!(e.rate > 0.0))
        throw ValidationError(ValidationError::Kind::ZeroServiceRate,
                              "zero-rate edge " + std::to_string(e.from) +
                                  "->" + std::to_string(e.to));
      if (net.parent_[e.to] == e.from) {
        // duplicate edge: merge rates
        for (size_t k = 0; k < net.children_[e.from].size(); ++k)
          if (net.children_[e.from][k] == e.to) net.mu_child_[e.from][k] += e.rate;
      } else {
        if (net.parent_[e.to] != -1)
          throw ValidationError(ValidationError::Kind::NotATree,
                                node_str(e.to) + " has two parents");
        net.parent_[e.to] = e.from;
        net.children_[e.from].push_back(e.to);
        net.mu_child_[e.from].push_back(e.rate);
      }
    }
  }
  if (net.parent_[1] != -1)
    throw ValidationError(ValidationError::Kind::NotATree,
                          "node 1 must be the root (it has a parent)");
  net.parent_[1] = 0;

  // keep children sorted by id, rates aligned
  for (int i = 1; i <= d; ++i) {
    auto& ch = net.children_[i];
    auto& mu = net.mu_child_[i];
    std::vector<size_t> ord(ch.size());
    std::iota(ord.begin(), ord.end(), size_t{0});
    std::sort(ord.begin(), ord.end(), [&](size_t a, size_t b) { return ch[a] < ch[b]; });
    std::vector<int> ch2;
    std::vector<double> mu2;
    for (size_t k : ord) {
      ch2.push_back(ch[k]);
      mu2.push_back(mu[k]);
    }
    ch = std::move(ch2);
    mu = std::move(mu2);
  }

  // reachability from the root; since each node has at most one parent and
  // the root has none, full reachability rules out cycles as well
  net.topo_.clear();
  net.topo_.push_back(1);
  std::vector<bool> seen(d + 1, false);
  seen[1] = true;
  for (size_t k = 0; k < net.topo_.size(); ++k) {
    for (int c : net.children_[net.topo_[k]]) {
      if (seen[c])
        throw ValidationError(ValidationError::Kind::NotATree,
                              "cycle through " + node_str(c));
      seen[c] = true;
      net.topo_.push_back(c);
    }
  }
  for (int i = 1; i <= d; ++i) {
    if (!seen[i]) {
      // distinguish a detached subtree (disconnected) from a cycle
      bool on_cycle = false;
      int walk = i;
      std::vector<bool> mark(d + 1, false);
      while (walk >= 1 && net.parent_[walk] > 0) {
        if (mark[walk]) {
          on_cycle = true;
          break;
        }
        mark[walk] = true;
        walk = net.parent_[walk];
      }
      if (on_cycle)
        throw ValidationError(ValidationError::Kind::NotATree,
                              "cycle through " + node_str(i));
      throw ValidationError(ValidationError::Kind::DisconnectedNode,
                            node_str(i) + " is not reachable from the root");
    }
  }

  double total = spec.lambda;
  for (int i = 1; i <= d; ++i) {
    net.mu_total_[i] = net.mu_exit_[i] +
                       std::accumulate(net.mu_child_[i].begin(),
                                       net.mu_child_[i].end(), 0.0);
    if (!(net.mu_total_[i] > 0.0))
      throw ValidationError(ValidationError::Kind::ZeroServiceRate,
                            node_str(i) + " has zero total service rate");
    total += net.mu_total_[i];
  }

  net.lambda_ = spec.lambda;
  net.norm_factor_ = total;
  if (std::abs(total - 1.0) > kNormalizeTol) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "rates sum to %.12g; renormalizing (jump chain unchanged)",
                  total);
    net.norm_warning_ = buf;
  }
  net.lambda_ /= total;
  for (int i = 1; i <= d; ++i) {
    net.mu_exit_[i] /= total;
    net.mu_total_[i] /= total;
    for (double& r : net.mu_child_[i]) r /= total;
  }

  // stability, strict margin so the decay rate stays bounded away from 0
  DerivedRates der = derived_rates(net);
  for (int i = 1; i <= d; ++i) {
    if (der.rho[i] >= 1.0 - kStabilityMargin) {
      std::ostringstream os;
      os << "unstable: rho_" << i << " = " << der.rho[i];
      throw ValidationError(ValidationError::Kind::Unstable, os.str());
    }
  }
  return net;
}

double TreeNetwork::service_rate(int i, int j) const {
  if (j == 0) return mu_exit_[i];
  const auto& ch = children_[i];
  for (size_t k = 0; k < ch.size(); ++k)
    if (ch[k] == j) return mu_child_[i][k];
  return 0.0;
}

NetworkSpec TreeNetwork::to_spec() const {
  NetworkSpec spec;
  spec.nodes = d_;
  spec.lambda = lambda_;
  for (int i = 1; i <= d_; ++i) {
    const auto& ch = children_[i];
    for (size_t k = 0; k < ch.size(); ++k)
      spec.edges.push_back({i, ch[k], mu_child_[i][k]});
    if (mu_exit_[i] > 0.0) spec.edges.push_back({i, 0, mu_exit_[i]});
  }
  return spec;
}

DerivedRates derived_rates(const TreeNetwork& net) {
  const int d = net.node_count();
  DerivedRates der;
  der.Lambda.assign(d + 1, 0.0);
  der.rho.assign(d + 1, 0.0);
  der.mu_exit_eff.assign(d + 1, 0.0);
  der.Lambda[1] = net.arrival_rate();
  for (int i : net.topological_order()) {
    for (int c : net.children(i))
      der.Lambda[c] = der.Lambda[i] * net.service_rate(i, c) / net.total_service(i);
  }
  for (int i = 1; i <= d; ++i) {
    der.rho[i] = der.Lambda[i] / net.total_service(i);
    der.mu_exit_eff[i] = der.Lambda[i] * net.exit_rate(i) / net.total_service(i);
  }
  return der;
}

BufferStructure BufferStructure::shared() {
  BufferStructure b;
  b.kind = Kind::Shared;
  return b;
}

BufferStructure BufferStructure::per_node(std::vector<double> beta) {
  BufferStructure b;
  b.kind = Kind::PerNode;
  double maxb = 0.0;
  for (size_t i = 1; i < beta.size(); ++i) {
    if (!(beta[i] > 0.0) || beta[i] > 1.0 + 1e-12)
      throw ConfigError("beta values must lie in (0,1]");
    maxb = std::max(maxb, beta[i]);
  }
  if (beta.size() < 2 || std::abs(maxb - 1.0) > 1e-12)
    throw ConfigError("max beta must equal 1");
  b.beta = std::move(beta);
  return b;
}

double ResolvedBuffer::beta(int i) const {
  return static_cast<double>(sizes[i]) / static_cast<double>(n);
}

ResolvedBuffer resolve_buffer(const BufferStructure& buf, int d, long long n) {
  if (n < 1) throw ConfigError("buffer scale n must be >= 1");
  ResolvedBuffer r;
  r.kind = buf.kind;
  r.n = n;
  if (buf.kind == BufferStructure::Kind::PerNode) {
    if (static_cast<int>(buf.beta.size()) != d + 1)
      throw ConfigError("beta must list one value per node");
    r.sizes.assign(d + 1, 0);
    for (int i = 1; i <= d; ++i) {
      // floor(n*beta) with a one-ulp guard so beta given as a decimal for
      // an exact rational size/n still resolves to that size
      r.sizes[i] = static_cast<long long>(
          std::floor(static_cast<double>(n) * buf.beta[i] + 1e-9));
    }
  }
  return r;
}

double decay_rate(const TreeNetwork& net, const ResolvedBuffer& buf) {
  DerivedRates der = derived_rates(net);
  double gamma = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= net.node_count(); ++i) {
    const double li = -std::log(der.rho[i]);
    const double scaled = buf.per_node() ? buf.beta(i) * li : li;
    gamma = std::min(gamma, scaled);
  }
  if (!(gamma > 0.0))
    throw ValidationError(ValidationError::Kind::Unstable,
                          "decay rate is not positive");
  return gamma;
}

GeneralNetwork GeneralNetwork::from_rates(
    int d, double lambda, const std::vector<std::vector<double>>& mu) {
  if (d < 1) throw ConfigError("network needs at least one node");
  GeneralNetwork g;
  g.d_ = d;
  g.mu_ = mu;
  g.mu_total_.assign(d + 1, 0.0);
  double total = lambda;
  for (int i = 1; i <= d; ++i) {
    for (int j = 0; j <= d; ++j) g.mu_total_[i] += mu[i][j];
    if (!(g.mu_total_[i] > 0.0))
      throw ValidationError(ValidationError::Kind::ZeroServiceRate,
                            "node " + std::to_string(i) + " has zero service");
    total += g.mu_total_[i];
  }
  g.lambda_ = lambda / total;
  for (int i = 1; i <= d; ++i) {
    g.mu_total_[i] /= total;
    for (int j = 0; j <= d; ++j) g.mu_[i][j] /= total;
  }

  // traffic equations: Lambda_j = lambda 1{j=1} + sum_i Lambda_i p_ij,
  // solved by Gaussian elimination on (I - P^T)
  std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0.0));
  for (int j = 1; j <= d; ++j) {
    for (int i = 1; i <= d; ++i)
      a[j - 1][i - 1] = (i == j ? 1.0 : 0.0) - g.routing(i, j);
    a[j - 1][d] = (j == 1) ? g.lambda_ : 0.0;
  }
  for (int col = 0; col < d; ++col) {
    int piv = col;
    for (int r = col + 1; r < d; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[piv], a[col]);
    if (std::abs(a[col][col]) < 1e-14)
      throw ConfigError("traffic equations are singular");
    for (int r = 0; r < d; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c <= d; ++c) a[r][c] -= f * a[col][c];
    }
  }
  g.Lambda_.assign(d + 1, 0.0);
  g.rho_.assign(d + 1, 0.0);
  for (int i = 1; i <= d; ++i) {
    g.Lambda_[i] = a[i - 1][d] / a[i - 1][i - 1];
    g.rho_[i] = g.Lambda_[i] / g.mu_total_[i];
    if (g.rho_[i] >= 1.0 - kStabilityMargin)
      throw ValidationError(ValidationError::Kind::Unstable,
                            "unstable: rho_" + std::to_string(i));
  }
  return g;
}

GeneralNetwork GeneralNetwork::from_tree(const TreeNetwork& net) {
  const int d = net.node_count();
  std::vector<std::vector<double>> mu(d + 1, std::vector<double>(d + 1, 0.0));
  for (int i = 1; i <= d; ++i) {
    mu[i][0] = net.exit_rate(i);
    for (int c : net.children(i)) mu[i][c] = net.service_rate(i, c);
  }
  return GeneralNetwork::from_rates(d, net.arrival_rate(), mu);
}

}  // namespace treeq
