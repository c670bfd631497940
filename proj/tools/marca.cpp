// MaRCA experiment driver. Every subcommand takes an experiment config
// (JSON) and reads/writes the pipeline workspace under its output_dir.
// Failures exit nonzero with one machine-parseable JSON object on stderr.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "marca/exp/pipeline.hpp"

namespace {

marca::exp::ExperimentConfig load_config(const std::string& path) {
  return marca::exp::ExperimentConfig::load(path);
}

void emit_error(const std::string& command, const std::string& what) {
  nlohmann::ordered_json j;
  j["error"] = true;
  j["command"] = command;
  j["message"] = what;
  std::fprintf(stderr, "%s\n", j.dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MaRCA: multi-agent computation allocation laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  bool force = false;
  std::string method;
  std::vector<std::string> methods;
  std::uint64_t seed = 0;
  bool sweeps = false;

  auto add_config = [&config_path](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "experiment config JSON")->required();
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the logged dataset + manifest");
  add_config(gen);
  gen->add_flag("--force", force, "overwrite existing outputs");

  CLI::App* bench = app.add_subcommand("bench-cost", "run the AutoBucket cost bench");
  add_config(bench);
  bench->add_flag("--force", force, "overwrite existing outputs");

  CLI::App* train = app.add_subcommand("train", "train methods across seeds");
  add_config(train);
  train->add_option("-m,--method", methods, "method tag(s); default: config methods");
  train->add_flag("--force", force, "retrain even if checkpoints exist");

  CLI::App* evaluate = app.add_subcommand("evaluate", "offline evaluation report");
  add_config(evaluate);

  CLI::App* allocate = app.add_subcommand("allocate", "export an allocation plan CSV");
  add_config(allocate);
  allocate->add_option("-m,--method", method, "method tag")->required();
  allocate->add_option("-s,--seed", seed, "trained seed to use")->required();

  CLI::App* control = app.add_subcommand("control", "closed-loop balancer runs");
  add_config(control);
  control->add_flag("--sweeps", sweeps, "also run the alpha/beta/horizon sweeps");

  CLI::App* report = app.add_subcommand("report", "consolidated markdown + CSV bundle");
  add_config(report);

  CLI11_PARSE(app, argc, argv);

  const std::string cmd_name = app.get_subcommands().front()->get_name();
  try {
    marca::exp::ExperimentConfig cfg = load_config(config_path);
    if (gen->parsed()) marca::exp::cmd_gen_data(cfg, force);
    if (bench->parsed()) marca::exp::cmd_bench_cost(cfg, force);
    if (train->parsed()) marca::exp::cmd_train(cfg, methods, force);
    if (evaluate->parsed()) marca::exp::cmd_evaluate(cfg);
    if (allocate->parsed()) marca::exp::cmd_allocate(cfg, method, seed);
    if (control->parsed()) marca::exp::cmd_control(cfg, sweeps);
    if (report->parsed()) marca::exp::cmd_report(cfg);
  } catch (const std::exception& ex) {
    emit_error(cmd_name, ex.what());
    return 1;
  }
  return 0;
}
