#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "nce/io.hpp"
#include "oracles.hpp"

using namespace nce;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "nce_io_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

int run(const std::string& args) {
  const std::string cmd = std::string(NCE_LAB_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ProblemJson, RoundTripEveryVariant) {
  const std::vector<ConditionalProblem> problems = {
      make_synthetic_problem(3, 5, 4, 1), make_self_normalized_problem(4, 3, 2, 2), counterexample_problem()};
  for (const auto& p : problems) {
    const auto q = problem_from_json(problem_to_json(p));
    EXPECT_EQ(q.m_x(), p.m_x());
    EXPECT_EQ(q.model.variant_name(), p.model.variant_name());
    EXPECT_EQ((q.p_y_given_x - p.p_y_given_x).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((q.truth->theta - p.truth->theta).norm(), 0.0);
    EXPECT_EQ(q.truth->gamma.has_value(), p.truth->gamma.has_value());
  }
}

TEST(ProblemJson, FieldLevelErrors) {
  Json j = problem_to_json(counterexample_problem());
  j.erase("p_x");
  try {
    problem_from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("p_x"), std::string::npos);
  }
  j = problem_to_json(counterexample_problem());
  j["m_y"] = 1;
  EXPECT_THROW(problem_from_json(j), ConfigError);
}

TEST(DatasetJsonl, RoundTrip) {
  const auto p = make_random_linear_problem(3, 4, 2, 3);
  const auto d = generate_dataset(p, 25, SamplingConfig{3, 9, 0}, NoiseDistribution::uniform(4));
  const auto e = dataset_from_jsonl(dataset_to_jsonl(d));
  EXPECT_EQ(e.hash(), d.hash());
  EXPECT_EQ(e.K, 3);
  EXPECT_EQ(e.provenance.seed, 9u);
  EXPECT_THROW(dataset_from_jsonl("{\"x\": 0}\n"), ConfigError);
}

TEST(Manifest, HashIgnoresWallClock) {
  RunManifest a;
  a.command = "fit";
  a.args = {"--K", "4"};
  a.seed = 3;
  RunManifest b = a;
  b.wall_clock_seconds = 12.5;
  EXPECT_EQ(a.hash(), b.hash());
  b.args.push_back("--tol");
  EXPECT_NE(a.hash(), b.hash());
  const std::string csv = csv_with_manifest(a, "K,x", {"1,2"});
  EXPECT_EQ(csv.rfind("# manifest " + hex64(a.hash()) + "\nK,x\n1,2\n", 0), 0u);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("synth --m-y 1 --out " + scratch("bad.json").string()), 2);
  EXPECT_EQ(run("synth --no-such-flag --out x"), 2);
  EXPECT_EQ(run("fit --problem " + scratch("missing.json").string() + " --out " + scratch("f.json").string()), 2);
  const std::string prob = scratch("p.json").string();
  ASSERT_EQ(run("synth --self-normalized --d 2 --m-x 10 --m-y 10 --seed 1 --out " + prob), 0);
  EXPECT_EQ(run("fit --problem " + prob + " --estimator nope --out " + scratch("f.json").string()), 2);
  EXPECT_EQ(run("asymptotics --problem " + prob + " --estimator ranking --K 9 --out " + scratch("a.csv").string()), 4);
  // softmax weights shifted by a common vector leave every conditional unchanged
  const std::string soft = scratch("soft.json").string();
  ASSERT_EQ(run("synth --d 2 --m-x 10 --m-y 10 --seed 1 --out " + soft), 0);
  EXPECT_EQ(run("asymptotics --problem " + soft + " --estimator mle --out " + scratch("b.csv").string()), 3);
}

TEST(Cli, SynthIsByteDeterministic) {
  const std::string a = scratch("s1.json").string(), b = scratch("s2.json").string();
  ASSERT_EQ(run("synth --seed 5 --out " + a), 0);
  ASSERT_EQ(run("synth --seed 5 --out " + b), 0);
  EXPECT_EQ(read_file(a), read_file(b));
  const auto p = read_problem(a);
  EXPECT_EQ(p.m_x(), 200);
  EXPECT_EQ(p.m_y(), 100);
  EXPECT_EQ(p.model.num_params(), 400);
  EXPECT_TRUE(fs::exists(scratch("s1.json.manifest.json")));
}

TEST(Cli, CounterexampleCsv) {
  const std::string out = scratch("cex.csv").string();
  ASSERT_EQ(run("counterexample --K 1,2 --out " + out), 0);
  const std::string csv = read_file(out);
  EXPECT_EQ(csv.rfind("# manifest ", 0), 0u);
  EXPECT_NE(csv.find("K,binary_ratio"), std::string::npos);
}

TEST(Cli, FitWritesReportAndTrace) {
  const std::string prob = scratch("fp.json").string();
  ASSERT_EQ(run("synth --d 2 --m-x 5 --m-y 4 --seed 2 --out " + prob), 0);
  const std::string out = scratch("fit.json").string();
  ASSERT_EQ(run("fit --problem " + prob + " --estimator ranking --K 3 --n 500 --out " + out), 0);
  const Json j = Json::parse(read_file(out));
  EXPECT_TRUE(j.contains("theta"));
  EXPECT_TRUE(fs::exists(scratch("fit.trace.csv")));
}
