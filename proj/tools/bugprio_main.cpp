// bugprio: command-line driver for the ingest / train / evaluate / predict /
// report pipeline.
//
// Exit codes: 0 success, 1 internal failure, 2 bad input or configuration,
// 3 integrity mismatch, 4 external worker protocol failure. Failures print a
// single JSON object {"error": {"code", "message"}} to stderr.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bugprio/error.hpp"
#include "bugprio/pipeline.hpp"

namespace {

using namespace bugprio;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kInput:
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kIntegrity:
      return 3;
    case ErrorKind::kProtocol:
      return 4;
  }
  return 1;
}

int fail(std::string_view code, std::string_view message, int exit_code) {
  nlohmann::json j;
  j["error"] = {{"code", code}, {"message", message}};
  std::cerr << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  return exit_code;
}

struct ConfigFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> kind;

  void attach(CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("-c,--config", config, "pipeline config file (JSON)")->check(CLI::ExistingFile);
    if (required) opt->required();
    cmd->add_option("--set", sets, "override a config key, e.g. lda.num_topics=20")->take_all();
    cmd->add_option("--seed", seed, "override the seed");
    cmd->add_option("-o,--output", output, "override the run directory");
    cmd->add_option("--kind", kind, "override the classifier kind")
        ->check(CLI::IsMember({"gaussian_nb", "multinomial_nb", "external"}));
  }

  PipelineConfig load() const {
    std::vector<std::string> overrides = sets;
    if (seed) overrides.push_back("seed=" + std::to_string(*seed));
    if (output) overrides.push_back("output_dir=" + nlohmann::json(*output).dump());
    if (kind) overrides.push_back("classifier.kind=" + *kind);
    auto c = load_config(config, overrides);
    // A command-line output directory is relative to the working directory.
    if (output) c.output_dir = *output;
    return c;
  }
};

int run_predict(const std::string& bundle_dir, const ConfigFlags& flags, const std::string& input,
                const std::string& output) {
  const auto bundle = ModelBundle::load(bundle_dir);
  std::optional<bridge::WorkerClient> worker;
  if (bundle.router.kind() == ClassifierKind::External) {
    if (flags.config.empty()) {
      throw Error(ErrorKind::kConfig, "bundle uses the external kind; pass --config with an external section");
    }
    const auto config = flags.load();
    if (!config.external || config.external->command.empty()) {
      throw Error(ErrorKind::kConfig, "config has no external.command for the external kind");
    }
    worker.emplace(bridge::spawn_worker(config.external->command, config.external->options));
  }
  RemoteClassifier* remote = worker ? &*worker : nullptr;

  std::ifstream in_file;
  std::ofstream out_file;
  if (input != "-") {
    in_file.open(input);
    if (!in_file) throw Error(ErrorKind::kInput, "cannot open " + input);
  }
  if (output != "-") {
    out_file.open(output, std::ios::trunc);
    if (!out_file) throw Error(ErrorKind::kInput, "cannot write " + output);
  }
  std::istream& in = input == "-" ? std::cin : in_file;
  std::ostream& out = output == "-" ? std::cout : out_file;
  const auto stats = cmd_predict(bundle, in, out, remote);
  std::cerr << "predicted " << stats.predicted << " reports, " << stats.errors << " errors\n";
  if (worker) worker->shutdown();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topic-routed bug report priority prediction"};
  app.require_subcommand(1);

  ConfigFlags ingest_flags, train_flags, evaluate_flags, predict_flags, report_flags;
  auto* ingest = app.add_subcommand("ingest", "parse the dataset into the canonical corpus");
  ingest_flags.attach(ingest, true);
  auto* train = app.add_subcommand("train", "split, fit topics and train the routed classifiers");
  train_flags.attach(train, true);
  auto* evaluate = app.add_subcommand("evaluate", "score the test split and write metrics");
  evaluate_flags.attach(evaluate, true);

  auto* predict = app.add_subcommand("predict", "predict priorities for JSONL reports");
  std::string bundle_dir, input = "-", output = "-";
  predict->add_option("-b,--bundle", bundle_dir, "model bundle directory")->required();
  predict->add_option("-i,--input", input, "JSONL reports, - for stdin");
  predict->add_option("--predictions", output, "JSONL output, - for stdout");
  predict_flags.attach(predict, false);

  auto* report = app.add_subcommand("report", "print the tables stored in a run directory");
  std::string run_dir;
  auto* run_opt = report->add_option("-r,--run", run_dir, "run directory");
  report_flags.attach(report, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*ingest) {
      cmd_ingest(ingest_flags.load(), std::cout);
    } else if (*train) {
      cmd_train(train_flags.load(), std::cout);
    } else if (*evaluate) {
      cmd_evaluate(evaluate_flags.load(), std::cout);
    } else if (*predict) {
      return run_predict(bundle_dir, predict_flags, input, output);
    } else if (*report) {
      if (run_opt->count() == 0) {
        if (report_flags.config.empty()) return fail("usage", "report needs --run or --config", 2);
        run_dir = report_flags.load().output_dir.string();
      }
      cmd_report(run_dir, std::cout);
    }
  } catch (const Error& e) {
    return fail(to_string(e.kind()), e.what(), exit_code_for(e.kind()));
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
