#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "moralbench/harness.hpp"
#include "moralbench/http_transport.hpp"

namespace {

namespace mb = moralbench;

std::shared_ptr<mb::Transport> http_transport(const mb::EndpointConfig&) {
  return std::make_shared<mb::HttpTransport>();
}

mb::RunConfig load_config(const std::string& config_path, const std::string& manifest_path) {
  auto config = mb::load_run_config(config_path);
  if (!manifest_path.empty()) config.manifests = mb::read_manifest(manifest_path);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moral judgment benchmark harness"};
  app.require_subcommand(1);

  std::string config_path, manifest_path;
  auto* eval = app.add_subcommand("eval", "Run zero-shot evaluation over the test splits");
  eval->add_option("--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", manifest_path, "Override the config's split manifest")->check(CLI::ExistingFile);

  std::string input_path, reference = "baseline.label_only", output_dir;
  auto* regress = app.add_subcommand("regress", "Estimate strategy effects from an aggregate CSV");
  regress->add_option("--input", input_path, "aggregate.csv from an eval run")->required()->check(CLI::ExistingFile);
  regress->add_option("--reference", reference, "Reference strategy")->capture_default_str();
  regress->add_option("--output", output_dir, "Output directory (defaults to the input's directory)");

  std::string teacher, strategy;
  auto* distill = app.add_subcommand("distill-corpus", "Generate a filtered distillation corpus");
  distill->add_option("--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  distill->add_option("--manifest", manifest_path, "Override the config's split manifest")->check(CLI::ExistingFile);
  distill->add_option("--teacher", teacher, "Teacher endpoint name")->required();
  distill->add_option("--strategy", strategy, "Distillation strategy id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*eval) {
      auto summary = mb::cmd_eval(load_config(config_path, manifest_path), http_transport);
      return summary.exit_code();
    }
    if (*regress) {
      std::filesystem::path out = output_dir.empty() ? std::filesystem::path(input_path).parent_path()
                                                     : std::filesystem::path(output_dir);
      auto result = mb::cmd_regress(input_path, reference, out);
      mb::write_summary(std::cout, result);
      return 0;
    }
    if (*distill) {
      auto summary = mb::cmd_distill_corpus(load_config(config_path, manifest_path), teacher, strategy,
                                            http_transport, std::cout);
      return summary.exit_code();
    }
  } catch (const mb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
