// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "commands.hpp"
#include "padmae/train/config_json.hpp"

int main(int argc, char** argv) {
  CLI::App app{"padmae"};
  padmae::cli::CliOptions opts;
  padmae::cli::build_app(app, opts);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return padmae::cli::run_command(app, opts, std::cout);
  } catch (const padmae::train::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
