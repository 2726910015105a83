#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "synthetic.hpp"

using namespace bugprio;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

Result run(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = quote(BUGPRIO_CLI) + " " + args + " >" + quote(out) + " 2>" + quote(err);
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = fixtures::read_text(out);
  r.err = fixtures::read_text(err);
  return r;
}

json parse_error(const Result& r) {
  auto line = r.err.substr(r.err.rfind('{', r.err.find("\"error\"")));
  return json::parse(line.substr(0, line.find('\n')));
}

class Cli : public ::testing::Test {
 protected:
  fixtures::TempDir dir;
  fs::path config = dir / "config.json";

  void write_config(json extra = json::object()) {
    fixtures::ReportSpec spec;
    spec.count = 300;
    spec.label_signal = 0.3;
    fixtures::write_csv(dir / "bugs.csv", fixtures::synthetic_reports(spec));
    json c{{"seed", 3},
           {"dataset", {{"path", "bugs.csv"}}},
           {"lda", {{"num_topics", 3}, {"iterations", 80}, {"burn_in", 20}, {"inference_iterations", 20}}},
           {"classifier", {{"min_topic_size", 10}}},
           {"output_dir", "run"}};
    c.merge_patch(extra);
    std::ofstream(config) << c.dump(2);
  }
};

}  // namespace

TEST_F(Cli, FullRunSucceeds) {
  write_config();
  for (const char* cmd : {"ingest", "train", "evaluate"}) {
    auto r = run(std::string(cmd) + " -c " + quote(config), dir.path());
    ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
  }
  EXPECT_TRUE(fs::exists(dir / "run/reports/metrics.json"));
  auto r = run("report -r " + quote(dir / "run"), dir.path());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Macro"), std::string::npos);

  r = run("predict -b " + quote(dir / "run/bundle") + " <" + quote(dir / "run/split/test.jsonl"), dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, fixtures::read_text(dir / "run/reports/predictions.jsonl"));
}

TEST_F(Cli, SetOverridesConfig) {
  write_config();
  auto r = run("ingest -c " + quote(config) + " --set output_dir=other", dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "other/corpus/reports.jsonl"));
}

TEST_F(Cli, EmptyDatasetExitsTwoWithJsonError) {
  write_config();
  std::ofstream(dir / "bugs.csv", std::ios::trunc).close();
  auto r = run("ingest -c " + quote(config), dir.path());
  EXPECT_EQ(r.code, 2);
  auto e = parse_error(r);
  EXPECT_EQ(e["error"]["code"], "input");
  EXPECT_FALSE(e["error"]["message"].get<std::string>().empty());
}

TEST_F(Cli, MissingSeedExitsTwo) {
  std::ofstream(config) << R"({"dataset": {"path": "bugs.csv"}})";
  auto r = run("ingest -c " + quote(config), dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(parse_error(r)["error"]["code"], "config");
}

TEST_F(Cli, SeedFlagSatisfiesMissingSeed) {
  write_config();
  auto c = json::parse(fixtures::read_text(config));
  c.erase("seed");
  std::ofstream(config, std::ios::trunc) << c.dump();
  EXPECT_EQ(run("ingest -c " + quote(config) + " --seed 4", dir.path()).code, 0);
}

TEST_F(Cli, TamperedBundleExitsThree) {
  write_config();
  ASSERT_EQ(run("ingest -c " + quote(config), dir.path()).code, 0);
  ASSERT_EQ(run("train -c " + quote(config), dir.path()).code, 0);
  std::ofstream(dir / "run/bundle/classifiers.json", std::ios::app) << " ";
  auto r = run("evaluate -c " + quote(config), dir.path());
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(parse_error(r)["error"]["code"], "integrity");
}

TEST_F(Cli, ExternalWithoutWorkerExitsTwo) {
  write_config({{"classifier", {{"kind", "external"}}}});
  ASSERT_EQ(run("ingest -c " + quote(config), dir.path()).code, 0);
  auto r = run("train -c " + quote(config), dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(dir / "run/bundle"));
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("frobnicate", dir.path()).code, 2);
  EXPECT_EQ(run("train", dir.path()).code, 2);
  EXPECT_EQ(run("", dir.path()).code, 2);
}

TEST_F(Cli, HelpExitsZero) {
  auto r = run("--help", dir.path());
  EXPECT_EQ(r.code, 0);
  for (const char* s : {"ingest", "train", "evaluate", "predict", "report"}) {
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
  }
}
