#include "ncl/experiments.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Non-negative contrastive learning on exact latent-class models"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_flag;
  for (const auto& name : ncl::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "key = value config file");
    sub->add_option("-s,--set", overrides, "override, key=value (repeatable)");
    sub->add_option("-o,--out", out_flag, "output directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    ncl::Config user = config_path.empty() ? ncl::Config() : ncl::Config::load(config_path);
    for (const auto& o : overrides) user.apply_override(o);
    const ncl::Config cfg = ncl::resolve_config(user);
    std::string out = cfg.get_string("output.dir");
    if (const char* env = std::getenv("NCL_OUTPUT_DIR"); env && *env) out = env;
    if (!out_flag.empty()) out = out_flag;
    return ncl::run_command(command, cfg, out, std::cerr);
  } catch (const ncl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ncl::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
