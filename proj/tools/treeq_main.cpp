#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "treeq/exact.hpp"
#include "treeq/json_io.hpp"
#include "treeq/network.hpp"
#include "treeq/sampler.hpp"
#include "treeq/subsolution.hpp"
#include "treeq/verify.hpp"

namespace {

using namespace treeq;

struct CommonOpts {
  std::string config_path;
  std::optional<long long> n;
  std::uint64_t K = 10000;
  std::uint64_t seed = 0;
  std::optional<double> eps;
  std::optional<double> delta;
  double C = 2.4;
  std::string policy = "is";
  int threads = 1;
  bool dump_config = false;
};

struct Loaded {
  TreeNetwork net;
  BufferStructure buffer;
  long long n;
};

Loaded load(const CommonOpts& o) {
  const Config cfg = load_config(o.config_path);
  TreeNetwork net = TreeNetwork::validate(cfg.network);
  if (!net.normalization_warning().empty())
    std::cerr << "note: " << net.normalization_warning() << "\n";
  BufferStructure buf = cfg.buffer.value_or(BufferStructure::shared());
  std::optional<long long> n = o.n ? o.n : cfg.buffer_n;
  if (!n) throw ConfigError("no buffer scale: pass --n or set buffer.n");
  return {std::move(net), std::move(buf), *n};
}

bool maybe_dump(const CommonOpts& o) {
  if (!o.dump_config) return false;
  const Loaded L = load(o);
  std::cout << dump_config(L.net, L.buffer, L.n);
  return true;
}

MollifierParams params_for(const CommonOpts& o, const Loaded& L,
                           const ResolvedBuffer& rbuf) {
  return choose_params(L.n, o.C, decay_rate(L.net, rbuf), o.eps, o.delta);
}

Policy policy_for(const CommonOpts& o) {
  if (o.policy == "is") return Policy::IS;
  if (o.policy == "naive") return Policy::Naive;
  throw ConfigError("policy must be \"is\" or \"naive\"");
}

void add_common(CLI::App* cmd, CommonOpts& o, bool with_sampling) {
  cmd->add_option("--config", o.config_path, "network config (JSON)")
      ->required();
  cmd->add_option("--n", o.n, "buffer scale (overrides config)");
  cmd->add_option("--threads", o.threads, "worker threads");
  cmd->add_flag("--dump-config", o.dump_config,
                "print the normalized config and exit");
  if (with_sampling) {
    cmd->add_option("--K", o.K, "sample paths per estimation");
    cmd->add_option("--seed", o.seed, "master seed (echoed in output)");
    cmd->add_option("--eps", o.eps, "mollifier epsilon (default -delta log delta)");
    cmd->add_option("--delta", o.delta, "mollifier delta (default C/n)");
    cmd->add_option("--C", o.C, "coupling constant for delta = C/n");
    cmd->add_option("--policy", o.policy, "is | naive");
  }
}

int cmd_estimate(const CommonOpts& o) {
  if (maybe_dump(o)) return 0;
  const Loaded L = load(o);
  const ResolvedBuffer rbuf = resolve_buffer(L.buffer, L.net.node_count(), L.n);
  const MollifierParams params = params_for(o, L, rbuf);
  const EstimatorSummary s = estimate(L.net, rbuf, o.K, params,
                                      policy_for(o), o.seed, o.threads);
  if (s.hit_count == 0)
    std::cerr << "warning: no path reached the exit set; the estimate is 0 "
                 "and the event is likely out of reach for this policy/K\n";
  std::cout << summary_to_json(s);
  return 0;
}

int cmd_exact(const CommonOpts& o, const std::string& method, double tol,
              std::uint64_t cap) {
  if (maybe_dump(o)) return 0;
  const Loaded L = load(o);
  const ResolvedBuffer rbuf = resolve_buffer(L.buffer, L.net.node_count(), L.n);
  ExactOptions opt;
  if (method == "gs")
    opt.method = ExactMethod::GaussSeidel;
  else if (method == "vi")
    opt.method = ExactMethod::ValueIteration;
  else
    throw ConfigError("method must be \"gs\" or \"vi\"");
  opt.tol = tol;
  opt.state_cap = cap;
  opt.threads = o.threads;
  const ExactResult r = first_passage(L.net, rbuf, opt);
  std::printf(
      "{\n  \"p_exact\": %.17g,\n  \"iterations\": %llu,\n"
      "  \"residual\": %.17g,\n  \"states\": %llu\n}\n",
      r.p, static_cast<unsigned long long>(r.iterations), r.residual,
      static_cast<unsigned long long>(r.states));
  return 0;
}

int cmd_verify(const CommonOpts& o, int samples) {
  if (maybe_dump(o)) return 0;
  const Loaded L = load(o);
  const ResolvedBuffer rbuf = resolve_buffer(L.buffer, L.net.node_count(), L.n);
  const MollifierParams params = params_for(o, L, rbuf);

  SubsolutionCheckOptions sopt;
  sopt.sample_count = samples;
  sopt.seed = o.seed + 1;

  std::vector<CheckReport> reports;
  reports.push_back(check_simple_gradient_roots(L.net));
  reports.push_back(check_effective_gradient_supersolution(L.net));
  reports.push_back(check_subsolution(L.net, rbuf, params, sopt));
  reports.push_back(
      check_epsilon_subsolution_definition(L.net, rbuf, params, sopt).report);
  reports.push_back(check_epsilon_shrinks(L.net, L.buffer, o.C,
                                          {L.n, 2 * L.n, 4 * L.n}, sopt));

  bool all = true;
  for (const auto& r : reports) {
    std::printf("[%s] %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str());
    std::istringstream lines(r.detail);
    std::string line;
    while (std::getline(lines, line))
      std::printf("    %s\n", line.c_str());
    all = all && r.pass;
  }
  return all ? 0 : 1;
}

int cmd_sweep(const CommonOpts& o, const std::string& n_csv,
              const std::string& out_path) {
  if (maybe_dump(o)) return 0;
  const Loaded L = load(o);
  std::vector<long long> ns;
  std::stringstream ss(n_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) ns.push_back(std::stoll(tok));
  if (ns.empty()) throw ConfigError("--n list is empty");
  const auto rows =
      decay_diagnostics(L.net, L.buffer, ns, o.K, o.C, o.eps, o.delta,
                        policy_for(o), o.seed, o.threads);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw ConfigError("cannot open output file: " + out_path);
    out = &file;
  }
  char buf[256];
  (*out) << "n,p_hat,se,rate1,rate2\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g\n", r.n,
                  r.p_hat, r.std_err, r.rate1, r.rate2);
    (*out) << buf;
  }
  return 0;
}

int cmd_table(const CommonOpts& o, int runs) {
  if (maybe_dump(o)) return 0;
  const Loaded L = load(o);
  const ResolvedBuffer rbuf = resolve_buffer(L.buffer, L.net.node_count(), L.n);
  const MollifierParams params = params_for(o, L, rbuf);
  const GradientTable table = GradientTable::build(L.net);

  try {
    const ExactResult ex = first_passage(L.net, rbuf);
    std::printf("Exact probability p_%lld = %.4e\n", L.n, ex.p);
  } catch (const RuntimeLimitError&) {
    std::printf("Exact probability p_%lld: lattice too large, skipped\n", L.n);
  }
  std::printf("%-8s %-12s %-14s %s\n", "", "Estimate", "Standard Error",
              "95% CI");
  for (int r = 0; r < runs; ++r) {
    const EstimatorSummary s =
        estimate(L.net, rbuf, o.K, params, policy_for(o), o.seed + r,
                 o.threads, &table);
    std::printf("Est. %-3d %-12.3e %-14.3e [%.3e, %.3e]\n", r + 1, s.p_hat,
                s.std_err, s.ci_lo, s.ci_hi);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Overflow probabilities of tree Jackson networks: "
               "subsolution-based importance sampling, exact solves, and "
               "numerical verification"};
  app.require_subcommand(1);

  CommonOpts est_o, exa_o, ver_o, swp_o, tab_o;
  std::string method = "gs";
  double exact_tol = 1e-14;
  std::uint64_t exact_cap = 50000000ull;
  int verify_samples = 2000;
  std::string sweep_n, sweep_out;
  int table_runs = 5;

  CLI::App* est = app.add_subcommand("estimate", "importance-sampling estimate");
  add_common(est, est_o, true);

  CLI::App* exa = app.add_subcommand("exact", "exact first-passage probability");
  add_common(exa, exa_o, false);
  exa->add_option("--method", method, "gs | vi");
  exa->add_option("--tol", exact_tol, "relative successive-change tolerance");
  exa->add_option("--cap", exact_cap, "lattice cell cap");

  CLI::App* ver = app.add_subcommand("verify", "numerical lemma checks");
  add_common(ver, ver_o, true);
  ver->add_option("--samples", verify_samples, "sample points per check");

  CLI::App* swp = app.add_subcommand("sweep", "decay-rate diagnostics over n");
  add_common(swp, swp_o, true);
  swp->add_option("--out", sweep_out, "write CSV here instead of stdout");
  // sweep takes a comma list, so its --n is a string
  swp->remove_option(swp->get_option("--n"));
  swp->add_option("--n", sweep_n, "comma-separated scales, e.g. 10,20,40")
      ->required();

  CLI::App* tab = app.add_subcommand("table", "repeated estimations vs exact");
  add_common(tab, tab_o, true);
  tab->add_option("--runs", table_runs, "number of estimations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (est->parsed()) return cmd_estimate(est_o);
    if (exa->parsed()) return cmd_exact(exa_o, method, exact_tol, exact_cap);
    if (ver->parsed()) return cmd_verify(ver_o, verify_samples);
    if (swp->parsed()) return cmd_sweep(swp_o, sweep_n, sweep_out);
    if (tab->parsed()) return cmd_table(tab_o, table_runs);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
