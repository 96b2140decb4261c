#include "treeq/json_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace treeq {

using nlohmann::ordered_json;

Config parse_config(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Config cfg;
  try {
    cfg.network.nodes = j.at("nodes").get<int>();
    cfg.network.lambda = j.at("lambda").get<double>();
    for (const auto& e : j.at("edges")) {
      NetworkSpec::Edge edge;
      edge.from = e.at("from").get<int>();
      edge.to = e.at("to").get<int>();
      edge.rate = e.at("rate").get<double>();
      cfg.network.edges.push_back(edge);
    }
    if (j.contains("buffer")) {
      const auto& b = j.at("buffer");
      const std::string type = b.at("type").get<std::string>();
      if (b.contains("n")) cfg.buffer_n = b.at("n").get<long long>();
      if (type == "shared") {
        cfg.buffer = BufferStructure::shared();
      } else if (type == "per_node") {
        std::vector<double> beta(1, 0.0);  // slot 0 unused
        for (const auto& v : b.at("beta")) beta.push_back(v.get<double>());
        cfg.buffer = BufferStructure::per_node(std::move(beta));
      } else {
        throw ConfigError("buffer type must be \"shared\" or \"per_node\"");
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const TreeNetwork& net,
                        const std::optional<BufferStructure>& buffer,
                        std::optional<long long> buffer_n) {
  ordered_json j;
  const NetworkSpec spec = net.to_spec();
  j["nodes"] = spec.nodes;
  j["lambda"] = spec.lambda;
  j["edges"] = ordered_json::array();
  for (const auto& e : spec.edges)
    j["edges"].push_back({{"from", e.from}, {"to", e.to}, {"rate", e.rate}});
  if (buffer) {
    ordered_json b;
    b["type"] =
        buffer->kind == BufferStructure::Kind::Shared ? "shared" : "per_node";
    if (buffer_n) b["n"] = *buffer_n;
    if (buffer->kind == BufferStructure::Kind::PerNode) {
      b["beta"] = ordered_json::array();
      for (size_t i = 1; i < buffer->beta.size(); ++i)
        b["beta"].push_back(buffer->beta[i]);
    }
    j["buffer"] = b;
  }
  return j.dump(2) + "\n";
}

std::string summary_to_json(const EstimatorSummary& s, bool with_wall) {
  ordered_json j;
  j["p_hat"] = s.p_hat;
  j["std_err"] = s.std_err;
  j["ci95"] = {s.ci_lo, s.ci_hi};
  j["K"] = s.K;
  j["seed"] = s.seed;
  j["hits"] = s.hit_count;
  j["second_moment"] = s.second_moment;
  if (with_wall) j["wall_ms"] = s.wall_ms;
  return j.dump(2) + "\n";
}

}  // namespace treeq
