#include <CLI11.hpp>

#include <cstdio>

int main(int argc, char** argv) {
  CLI::App app{"graphpde: graph-transformer PDE surrogate toolkit"};
  app.set_version_flag("--version", "graphpde 0.1.0");
  app.require_subcommand(0, 1);
  CLI11_PARSE(app, argc, argv);
  std::puts("subcommands not wired up yet");
  return 0;
}
