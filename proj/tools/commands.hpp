// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <CLI11.hpp>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace padmae::cli {

/// Values bound to the command line. Empty optionals fall back to the config.
struct CliOptions {
  std::string config_path;
  std::optional<std::string> profile;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string run_dir;

  // generate
  std::string gen_out;
  std::string gen_kind = "thermal";
  std::size_t gen_count = 64;
  std::optional<std::size_t> gen_size;

  // prepare
  std::string data_dir;
  std::string prep_out;
  std::size_t stride = 1;
  std::string on_error = "skip";

  // pretrain
  std::optional<std::string> paradigm;
  std::optional<std::string> manifest;
  std::optional<std::string> stage_a;
  std::optional<std::size_t> epochs;

  // probe and analyze
  std::vector<std::string> checkpoints;
  std::vector<std::string> logs;
  std::optional<std::size_t> images;
  std::string layers;
  int attention_layer = -1;
  std::optional<double> scale_override;
  bool overlay = false;
  std::string k_values;
  std::string middle_dims;
  std::optional<std::size_t> window;
  std::optional<std::size_t> bins;
};

/// Declares every subcommand and flag on `app`; the chosen subcommand is read
/// back from `app` after parsing.
void build_app(CLI::App& app, CliOptions& opts);

/// Runs the parsed command. Returns the process exit code.
int run_command(const CLI::App& app, const CliOptions& opts, std::ostream& out);

/// Config after applying the file, the profile and the flag overrides.
RunConfig resolve_config(const CliOptions& opts);

}  // namespace padmae::cli
