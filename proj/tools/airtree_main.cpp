// airtree CLI: build -> gen -> train -> bench -> report pipeline over one
// output directory. Flags set config fields; a --config JSON file is applied
// after the flags and overrides them.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "airtree/bench.hpp"
#include "airtree/errors.hpp"
#include "airtree/serialize.hpp"

namespace {

struct CliState {
  airtree::BenchConfig config;
  std::string config_path;
  std::vector<std::string> report_dirs;
  std::string report_out = "report";
  bool verify = false;
};

int dispatch(const std::string& command, CliState& state) {
  if (!state.config_path.empty()) {
    std::string text;
    try {
      text = airtree::read_file(state.config_path);
    } catch (const airtree::DataError& e) {
      throw airtree::UsageError(std::string("config: ") + e.what());
    }
    state.config.merge_json_text(text);
  } else {
    state.config.validate();
  }

  if (command == "build") {
    airtree::cmd_build(state.config, std::cout);
  } else if (command == "gen") {
    airtree::cmd_gen(state.config, state.verify, std::cout);
  } else if (command == "train") {
    airtree::cmd_train(state.config, std::cout);
  } else if (command == "bench") {
    airtree::cmd_bench(state.config, std::cout);
  } else {  // report
    std::vector<std::filesystem::path> dirs(state.report_dirs.begin(), state.report_dirs.end());
    if (dirs.empty()) dirs.push_back(state.config.out_dir);
    airtree::cmd_report(dirs, state.report_out, std::cout);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"airtree: hybrid learned/R-tree range-query benchmark pipeline"};
  app.require_subcommand(1);

  CliState state;
  std::uint64_t seed = state.config.seed;
  std::string out_dir = state.config.out_dir.string();
  std::uint32_t reps = state.config.reps;

  app.add_option("--config", state.config_path,
                 "JSON config file; applied after flags and overrides them");
  app.add_option("--seed", seed, "master seed for every stochastic stage");
  app.add_option("--out-dir", out_dir, "artifact directory shared by the pipeline stages");

  CLI::App* build = app.add_subcommand("build", "ingest or synthesize points, build the R-tree");
  CLI::App* gen = app.add_subcommand("gen", "synthesize the per-alpha-bucket query workload");
  gen->add_flag("--verify", state.verify, "reload every workload file and re-derive its labels");
  CLI::App* train = app.add_subcommand("train", "fit AI-tree bundles and the routing forest");
  train->add_flag("--train-union", state.config.train_union,
                  "one bundle over the pooled workload instead of one per bucket");
  CLI::App* bench = app.add_subcommand("bench", "run the three-way benchmark and emit reports");
  bench->add_option("--reps", reps, "timing repetitions per query (default 3)");
  bench->add_flag_callback("--serial", [&] { state.config.threads = 1; },
                           "single-threaded measurement");
  CLI::App* report = app.add_subcommand("report", "aggregate per-query logs into plot CSVs");
  report->add_option("dirs", state.report_dirs, "run directories holding perquery.csv");
  report->add_option("--out", state.report_out, "where the aggregate CSVs go (default report/)");
  (void)build;

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  state.config.seed = seed;
  state.config.out_dir = out_dir;
  state.config.reps = reps;

  try {
    return dispatch(app.get_subcommands().front()->get_name(), state);
  } catch (const airtree::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const airtree::CorrectnessError& e) {
    std::cerr << "correctness gate failed: " << e.what() << "\n";
    return 3;
  } catch (const airtree::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
