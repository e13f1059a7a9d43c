#pragma once

// Command layer behind the `trafficguard` executable. Every command reads
// and writes artifacts under one output directory and records their digests
// in run_manifest.json.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "trafficguard/config.hpp"

namespace trafficguard::cli {

struct Context {
  config::RunConfig config;
  std::filesystem::path out = "out";
};

// Loads the config file (ConfigError when missing) and applies --seed.
Context make_context(const std::filesystem::path& config_path, std::optional<std::uint64_t> seed,
                     const std::filesystem::path& out);

// Artifact layout under the output directory.
namespace paths {
std::filesystem::path records(const Context& ctx);   // records.csv (+ .manifest.json)
std::filesystem::path control(const Context& ctx);   // control.csv (+ .manifest.json)
std::filesystem::path dataset_dir(const Context& ctx);
std::filesystem::path model(const Context& ctx);
std::filesystem::path metrics(const Context& ctx);
std::filesystem::path explain_dir(const Context& ctx);
std::filesystem::path triage(const Context& ctx);
std::filesystem::path pca(const Context& ctx);
std::filesystem::path run_manifest(const Context& ctx);
}  // namespace paths

void cmd_simulate(const Context& ctx, std::ostream& log);
void cmd_dataset(const Context& ctx, std::ostream& log, bool export_csv = false);
void cmd_train(const Context& ctx, std::ostream& log);
void cmd_eval(const Context& ctx, std::ostream& log);

// `selector`: comma-separated test indices, or all | misclassified | normal | hacked.
void cmd_explain(const Context& ctx, std::ostream& log, std::string_view method,
                 std::string_view selector);
void cmd_triage(const Context& ctx, std::ostream& log);
void cmd_pca(const Context& ctx, std::ostream& log);

// Full command line; returns the process exit code
// (0 success, 1 runtime failure, 2 usage or config error).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace trafficguard::cli
