#pragma once

#include <cstdlib>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dycp/embedding.hpp"
#include "dycp/kadane.hpp"
#include "dycp/scoring.hpp"

namespace dycp::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kProvider = 3,
};

/// Values that may come from a flag, DYCP_* environment variables or a JSON
/// config file, in that order of precedence.
struct Settings {
  double tau = 0.6;
  double theta = 1.0;
  std::string embedder = "test:256";
  Similarity similarity = Similarity::kDot;
};

struct SettingOverrides {
  std::optional<double> tau;
  std::optional<double> theta;
  std::optional<std::string> embedder;
  std::optional<std::string> similarity;
  std::optional<std::string> config_file;
};

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

std::optional<std::string> process_env(const char* name);

/// Throws std::invalid_argument on unparsable values.
Settings resolve_settings(const SettingOverrides& flags, const EnvLookup& env = process_env);

/// "test:<dim>" or "http:<url>[:model]" (a bare http://... URL also works).
std::unique_ptr<EmbeddingProvider> make_embedder(const std::string& spec);

/// Runs the command line; returns the process exit code. `argv[0]` is ignored.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvLookup& env = process_env);

}  // namespace dycp::cli
