// Command-line entry point: cfaug <command> --config FILE [options]

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfaug/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual augmentation pipeline for opinion summarization corpora"};
  app.require_subcommand(1, 1);

  cfaug::CommandOptions opts;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string resume, endpoint;

  std::vector<CLI::App*> commands;
  auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "INI configuration file")->required();
    sub->add_option("--seed", seed, "RNG seed (overrides run.seed)");
    sub->add_option("--workers", workers, "concurrent workers (overrides run.workers)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--service-endpoint", endpoint, "generation service base URL");
    sub->add_flag("--mock-service", opts.mock_service, "use the deterministic offline service");
    sub->add_option("--set", opts.overrides, "section.key=value override (repeatable)");
    commands.push_back(sub);
    return sub;
  };
  add("stats", "report the rating distribution of the corpus");
  add("optimize-prompt", "optimize the demonstration set of the rewrite prompt");
  add("rewrite", "produce seed counterfactual pairs through the generation service");
  add("train", "train the disentangled autoencoder on the seed pairs");
  add("reproduce", "synthesize and filter new negative reviews");
  add("evaluate", "compute the metric report");
  add("pipeline", "run every stage in order")
      ->add_option("--resume-from", resume, "first stage to run")
      ->check(CLI::IsMember(cfaug::pipeline_stages()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  std::string command;
  for (auto* sub : commands)
    if (sub->parsed()) {
      command = sub->get_name();
      if (sub->count("--seed")) opts.seed = seed;
      if (sub->count("--workers")) opts.workers = workers;
      if (sub->count("--service-endpoint")) opts.service_endpoint = endpoint;
      if (command == "pipeline" && sub->count("--resume-from")) opts.resume_from = resume;
    }
  return cfaug::run_command(command, opts, std::cout, std::cerr);
}
