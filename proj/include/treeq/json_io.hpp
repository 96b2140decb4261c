#pragma once

#include <optional>
#include <string>

#include "treeq/network.hpp"
#include "treeq/sampler.hpp"

namespace treeq {

/// A parsed config: the network plus an optional buffer section
/// {"type": "shared"|"per_node", "n": ..., "beta": [...]}.
struct Config {
  NetworkSpec network;
  std::optional<BufferStructure> buffer;
  std::optional<long long> buffer_n;
};

/// Parses {"nodes": d, "lambda": x, "edges": [{"from","to","rate"}, ...],
/// "buffer": {...}} from a JSON string. Unknown keys are ignored so configs
/// can carry notes. Throws ConfigError on malformed input.
Config parse_config(const std::string& json_text);
Config load_config(const std::string& path);

/// Normalized config document for --dump-config; re-parsing it yields an
/// equivalent network.
std::string dump_config(const TreeNetwork& net,
                        const std::optional<BufferStructure>& buffer,
                        std::optional<long long> buffer_n);

/// {"p_hat", "std_err", "ci95", "K", "seed", "hits", "second_moment",
/// "wall_ms"}. Every field except wall_ms is deterministic for a fixed
/// seed and config; with_wall = false omits it (used by determinism
/// checks).
std::string summary_to_json(const EstimatorSummary& s, bool with_wall = true);

}  // namespace treeq
