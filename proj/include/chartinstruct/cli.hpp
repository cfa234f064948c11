#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chartinstruct/analysis.hpp"
#include "chartinstruct/corpus.hpp"
#include "chartinstruct/gateway.hpp"
#include "chartinstruct/metrics.hpp"
#include "chartinstruct/taskgen.hpp"

namespace chartinstruct::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitConfig = 2;

// Effective settings of one run: defaults, then the config file, then flags.
struct RunConfig {
  std::filesystem::path corpus;
  std::filesystem::path templates;  // empty: built-in templates
  std::filesystem::path replay_dir;
  std::filesystem::path out = "out";
  gateway::Mode mode = gateway::Mode::Replay;
  std::uint64_t seed = 0;
  std::vector<taskgen::TaskKind> tasks;
  std::optional<taskgen::TaskMix> mix;
  std::size_t requests_per_chart = 1;
  gateway::ProviderConfig provider;
  taskgen::RoutingConfig routing;
  gateway::ModelTier inference_tier = gateway::ModelTier::Standard;
  analysis::AnalysisOptions analysis;
  metrics::HumanEvalConfig human_eval;
  corpus::SplitRatios split;

  // Archived as run_config.json next to every run's outputs.
  nlohmann::ordered_json to_json() const;
};

// Reads a JSON config document. Paths inside it are relative to the file's
// directory. Throws Error(Config) naming the key and its line:column.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& source_name,
                       const std::filesystem::path& base_dir);

struct CliEnv {
  // Called only in live or record mode; defaults to the HTTP transport.
  std::function<std::shared_ptr<gateway::Transport>()> transport_factory;
  gateway::ChatClient::EnvLookup env_lookup;  // defaults to getenv
  gateway::ChatClient::Sleeper sleeper;       // defaults to sleeping
  std::ostream* out = nullptr;                // defaults to std::cout
  std::ostream* err = nullptr;                // defaults to std::cerr
};

// args excludes the program name. Returns kExitOk, kExitPartial or
// kExitConfig.
int run(const std::vector<std::string>& args, const CliEnv& env = {});

}  // namespace chartinstruct::cli
