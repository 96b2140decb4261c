#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "treeq/errors.hpp"

namespace treeq {

/// Raw network description as read from a config. Node ids are 1..d, id 0
/// denotes the outside of the system (an edge to 0 is an exit).
struct NetworkSpec {
  int nodes = 0;
  double lambda = 0.0;
  struct Edge {
    int from = 0;
    int to = 0;
    double rate = 0.0;
  };
  std::vector<Edge> edges;
};

/// Validated, normalized tree-topology Jackson network. Customers arrive at
/// the root (node 1) with probability `lambda` per jump; node i serves to
/// child j with probability mu(i,j) and to the outside with mu(i,0). After
/// construction lambda + sum_i mu_total(i) == 1, which makes the rates the
/// jump probabilities of the embedded chain directly.
///
/// Immutable after construction; safe to share across threads.
class TreeNetwork {
 public:
  /// Validates a raw spec and normalizes total rate to 1. Throws
  /// ValidationError (NotATree, Unstable, ZeroServiceRate, DisconnectedNode)
  /// on structural problems. If the raw rates do not already sum to 1
  /// (tolerance 1e-9) a note is recorded in normalization_warning().
  static TreeNetwork validate(const NetworkSpec& spec);

  int node_count() const { return d_; }
  double arrival_rate() const { return lambda_; }

  /// Children of node i in increasing id order.
  const std::vector<int>& children(int i) const { return children_[i]; }
  int parent(int i) const { return parent_[i]; }

  /// Service rate from i to child j, or to the outside for j == 0.
  /// Zero when the edge does not exist.
  double service_rate(int i, int j) const;
  double exit_rate(int i) const { return mu_exit_[i]; }
  double total_service(int i) const { return mu_total_[i]; }

  /// Nodes ordered root first, every parent before its children.
  const std::vector<int>& topological_order() const { return topo_; }

  /// Factor T the raw rates were divided by (1 when already normalized).
  double normalization_factor() const { return norm_factor_; }
  const std::string& normalization_warning() const { return norm_warning_; }

  /// The spec this network normalizes to (for config round-trips).
  NetworkSpec to_spec() const;

 private:
  TreeNetwork() = default;

  int d_ = 0;
  double lambda_ = 0.0;
  std::vector<int> parent_;                     // [1..d], 0 for the root
  std::vector<std::vector<int>> children_;      // [1..d]
  std::vector<std::vector<double>> mu_child_;   // aligned with children_
  std::vector<double> mu_exit_;                 // [1..d]
  std::vector<double> mu_total_;                // [1..d]
  std::vector<int> topo_;
  double norm_factor_ = 1.0;
  std::string norm_warning_;
};

/// Static per-node quantities implied by the rates. Vectors are indexed by
/// node id; slot 0 is unused.
struct DerivedRates {
  std::vector<double> Lambda;       // long-run arrival rate per node
  std::vector<double> rho;          // utility Lambda_i / mu_i
  std::vector<double> mu_exit_eff;  // fluid exit traffic Lambda_i mu_i0 / mu_i
};

DerivedRates derived_rates(const TreeNetwork& net);

/// Buffer structure: one shared buffer of size n, or per-node buffers of
/// size floor(n * beta(i)) with max beta == 1.
struct BufferStructure {
  enum class Kind { Shared, PerNode };

  static BufferStructure shared();
  /// Throws ConfigError unless every beta is in (0,1] and max beta == 1.
  static BufferStructure per_node(std::vector<double> beta);

  Kind kind = Kind::Shared;
  std::vector<double> beta;  // [1..d] for PerNode, empty for Shared
};

/// Buffer structure resolved against a concrete scale n. Per-node sizes are
/// kept as integers and beta as the exact rational size/n so exit-boundary
/// checks never depend on floating point.
struct ResolvedBuffer {
  BufferStructure::Kind kind = BufferStructure::Kind::Shared;
  long long n = 0;
  std::vector<long long> sizes;  // [1..d], PerNode only

  bool per_node() const { return kind == BufferStructure::Kind::PerNode; }
  /// Exact rational beta(i) = sizes[i]/n evaluated in double.
  double beta(int i) const;
};

ResolvedBuffer resolve_buffer(const BufferStructure& buf, int d, long long n);

/// Large-deviations decay rate of the overflow probability:
/// min_i -log rho_i for a shared buffer, min_i -beta(i) log rho_i for
/// per-node buffers. Throws ValidationError(Unstable) if some rho_i >= 1.
double decay_rate(const TreeNetwork& net, const ResolvedBuffer& buf);

/// Jackson network with arbitrary routing (cycles allowed), arrivals at
/// node 1. Used by the general effective-rate fixed point; the tree case is
/// embedded via from_tree().
class GeneralNetwork {
 public:
  /// mu[i][j] = service rate i -> j (j == 0 exits); mu must be
  /// (d+1)x(d+1). Solves the traffic equations for Lambda and checks
  /// stability.
  static GeneralNetwork from_rates(int d, double lambda,
                                   const std::vector<std::vector<double>>& mu);
  static GeneralNetwork from_tree(const TreeNetwork& net);

  int node_count() const { return d_; }
  double arrival_rate() const { return lambda_; }
  double service_rate(int i, int j) const { return mu_[i][j]; }
  double total_service(int i) const { return mu_total_[i]; }
  double routing(int i, int j) const { return mu_[i][j] / mu_total_[i]; }
  const std::vector<double>& Lambda() const { return Lambda_; }
  const std::vector<double>& rho() const { return rho_; }

 private:
  int d_ = 0;
  double lambda_ = 0.0;
  std::vector<std::vector<double>> mu_;
  std::vector<double> mu_total_;
  std::vector<double> Lambda_;
  std::vector<double> rho_;
};

}  // namespace treeq
