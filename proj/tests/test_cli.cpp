#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "uwer/cli.hpp"

using namespace uwer;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "uwer");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  // Silence the command's own chatter.
  std::ostringstream sink, err_sink;
  auto* out = std::cout.rdbuf(sink.rdbuf());
  auto* err = std::cerr.rdbuf(err_sink.rdbuf());
  const int code = cli::main(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(out);
  std::cerr.rdbuf(err);
  return code;
}

std::string capture_stdout(std::vector<std::string> args) {
  args.insert(args.begin(), "uwer");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream sink;
  auto* out = std::cout.rdbuf(sink.rdbuf());
  cli::main(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(out);
  return sink.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

const std::vector<std::string> kTinyGen = {"--n-tx", "1", "--n-rb", "2", "--n-rx", "1", "--n-paths", "3",
                                           "--lookback", "4", "--n-samples", "240", "--speeds", "30,90",
                                           "--seed", "5"};
const std::vector<std::string> kTinyTrain = {"--hidden", "4", "--layers", "1", "--epochs", "1", "--batch", "8",
                                             "--k", "2", "--seeds", "0", "--buffer", "20"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("uwer_test_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    ASSERT_EQ(run(concat({"gen", "--out", (root_ / "data").string()}, kTinyGen)), cli::kExitOk);
  }
  static fs::path dataset() { return root_ / "data" / "dataset.uwer"; }
  static fs::path root_;
};
fs::path CliTest::root_;

}  // namespace

TEST_F(CliTest, GenWritesDatasetSidecarAndManifest) {
  EXPECT_TRUE(fs::exists(dataset()));
  EXPECT_TRUE(fs::exists(root_ / "data" / "dataset.uwer.json"));
  const auto check = cli::verify_manifest(root_ / "data");
  EXPECT_TRUE(check.ok);
  const auto ds = cli::load_dataset(dataset());
  EXPECT_EQ(ds.window_count(), 236u);
  EXPECT_EQ(ds.frame_size(), 4u);
  EXPECT_EQ(ds.env_count(), 2);
}

TEST_F(CliTest, GenIsIdempotent) {
  const fs::path again = root_ / "data_again";
  ASSERT_EQ(run(concat({"gen", "--out", again.string()}, kTinyGen)), cli::kExitOk);
  EXPECT_EQ(slurp(dataset()), slurp(again / "dataset.uwer"));
  EXPECT_EQ(slurp(root_ / "data" / "dataset.uwer.json"), slurp(again / "dataset.uwer.json"));
  auto a = config::read_json(root_ / "data" / "manifest.json");
  auto b = config::read_json(again / "manifest.json");
  a.erase("wall_clock_s");
  b.erase("wall_clock_s");
  EXPECT_EQ(a, b);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({"gen"}), cli::kExitUsage);
  EXPECT_EQ(run({"gen", "--out", (root_ / "x").string(), "--bogus"}), cli::kExitUsage);
  EXPECT_EQ(run({"gen", "--out", (root_ / "x").string(), "--n-samples", "0"}), cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}), cli::kExitUsage);
  EXPECT_EQ(run({"train", "--dataset", (root_ / "missing.uwer").string(), "--out", (root_ / "t").string()}),
            cli::kExitUsage);
  EXPECT_EQ(run({"train", "--dataset", dataset().string(), "--out", (root_ / "t").string(), "--lambda", "2"}),
            cli::kExitUsage);
  EXPECT_EQ(run({"train", "--dataset", dataset().string(), "--out", (root_ / "t").string(), "--policy", "greedy"}),
            cli::kExitUsage);
  EXPECT_EQ(run({"eval", "--dataset", dataset().string(), "--out", (root_ / "e").string(), "--checkpoint",
                 (root_ / "missing.uwerck").string()}),
            cli::kExitUsage);
}

TEST_F(CliTest, EmitDefaultConfigsParse) {
  const auto ch = config::Json::parse(capture_stdout({"gen", "--emit-default-config"}));
  EXPECT_EQ(config::channel_from_json(ch).n_samples, channel::ChannelConfig{}.n_samples);
  const auto tr = config::Json::parse(capture_stdout({"train", "--emit-default-config"}));
  EXPECT_EQ(config::train_from_json(tr).capacity, 3000);
  const auto grid = cli::grid_from_json(config::Json::parse(capture_stdout({"ablate", "--emit-default-config"})));
  EXPECT_EQ(grid.policies.size(), 4u);
  EXPECT_EQ(grid.buffers, (std::vector<int>{1000, 3000, 8000}));
}

TEST_F(CliTest, CorruptDatasetIsDetected) {
  const fs::path dir = root_ / "corrupt";
  fs::create_directories(dir);
  fs::copy_file(dataset(), dir / "dataset.uwer", fs::copy_options::overwrite_existing);
  fs::copy_file(root_ / "data" / "dataset.uwer.json", dir / "dataset.uwer.json", fs::copy_options::overwrite_existing);
  fs::copy_file(root_ / "data" / "manifest.json", dir / "manifest.json", fs::copy_options::overwrite_existing);
  {
    std::fstream f(dir / "dataset.uwer", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    f.put('\x7f');
  }
  EXPECT_THROW(cli::load_dataset(dir / "dataset.uwer"), std::runtime_error);
  const auto check = cli::verify_manifest(dir);
  EXPECT_FALSE(check.ok);
  EXPECT_EQ(run(concat({"train", "--dataset", (dir / "dataset.uwer").string(), "--out", (root_ / "tc").string()},
                       kTinyTrain)),
            cli::kExitRuntime);
}

TEST_F(CliTest, TrainWritesRunArtifacts) {
  const fs::path out = root_ / "train";
  ASSERT_EQ(run(concat({"train", "--dataset", dataset().string(), "--out", out.string()}, kTinyTrain)), cli::kExitOk);
  const fs::path seed = out / "seed_0";
  for (const char* f : {"accuracy_matrix.csv", "per_sample.csv", "incidents.log", "config.json",
                        "checkpoint_env_0.uwerck", "checkpoint_env_1.uwerck", "checkpoint_env_1.uwerck.json"})
    EXPECT_TRUE(fs::exists(seed / f)) << f;
  EXPECT_TRUE(fs::exists(out / "summary.json"));
  EXPECT_TRUE(cli::verify_manifest(out).ok);

  const auto side = config::read_json(seed / "checkpoint_env_1.uwerck.json");
  EXPECT_EQ(side["format"], "UWERCK01");
  EXPECT_EQ(side["hidden"], 4);
  const auto ck = model::read_checkpoint(seed / "checkpoint_env_1.uwerck");
  EXPECT_EQ(side["adam_step"].get<std::uint64_t>(), ck.adam.step);

  const auto summary = config::read_json(out / "summary.json");
  EXPECT_EQ(summary["policy"], "uwer");
  EXPECT_EQ(summary["seeds"].size(), 1u);
  EXPECT_EQ(summary["mean_accuracy_matrix"].size(), 2u);

  const fs::path again = root_ / "train_again";
  ASSERT_EQ(run(concat({"train", "--dataset", dataset().string(), "--out", again.string()}, kTinyTrain)), cli::kExitOk);
  EXPECT_EQ(slurp(seed / "per_sample.csv"), slurp(again / "seed_0" / "per_sample.csv"));
  EXPECT_EQ(slurp(seed / "checkpoint_env_1.uwerck"), slurp(again / "seed_0" / "checkpoint_env_1.uwerck"));
}

TEST_F(CliTest, EvalFromCheckpointAndPersistence) {
  const fs::path tr = root_ / "train_eval";
  ASSERT_EQ(run(concat({"train", "--dataset", dataset().string(), "--out", tr.string()}, kTinyTrain)), cli::kExitOk);
  const fs::path out = root_ / "eval";
  ASSERT_EQ(run({"eval", "--dataset", dataset().string(), "--out", out.string(), "--checkpoint",
                 (tr / "seed_0" / "checkpoint_env_1.uwerck").string(), "--k", "4"}),
            cli::kExitOk);
  for (const char* f : {"cdf.csv", "hist.csv", "per_rb.csv", "calibration.csv", "magnitude.csv", "summary.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_TRUE(cli::verify_manifest(out).ok);
  EXPECT_EQ(lines(out / "per_rb.csv").size(), 3u);
  EXPECT_EQ(lines(out / "magnitude.csv").size(), 3u);

  const fs::path pers = root_ / "eval_persistence";
  ASSERT_EQ(run({"eval", "--dataset", dataset().string(), "--out", pers.string(), "--predictor", "persistence"}),
            cli::kExitOk);
  const auto s = config::read_json(pers / "summary.json");
  const auto ds = cli::load_dataset(dataset());
  std::vector<train::Evaluation> evals;
  for (const auto& sp : train::split_environments(ds, 0.1)) evals.push_back(train::evaluate_persistence(ds, sp.val));
  EXPECT_NEAR(s["nmse_pooled"].get<double>(), train::pooled_nmse(evals, ds), 1e-12);
}

TEST_F(CliTest, EvalRejectsMismatchedCheckpoint) {
  const fs::path other = root_ / "data_wide";
  ASSERT_EQ(run({"gen", "--out", other.string(), "--n-tx", "2", "--n-rb", "2", "--n-rx", "1", "--n-paths", "3",
                 "--lookback", "4", "--n-samples", "240", "--speeds", "30,90"}),
            cli::kExitOk);
  const fs::path tr = root_ / "train_mismatch";
  ASSERT_EQ(run(concat({"train", "--dataset", dataset().string(), "--out", tr.string()}, kTinyTrain)), cli::kExitOk);
  EXPECT_EQ(run({"eval", "--dataset", (other / "dataset.uwer").string(), "--out", (root_ / "em").string(),
                 "--checkpoint", (tr / "seed_0" / "checkpoint_env_0.uwerck").string()}),
            cli::kExitUsage);
}

TEST_F(CliTest, PerfectPredictorCollapsesCdfAtFloor) {
  const auto ds = cli::load_dataset(dataset());
  const cli::Predictor oracle = [](const channel::CsiDataset& d, std::span<const std::size_t> windows) {
    train::Evaluation ev;
    ev.windows.assign(windows.begin(), windows.end());
    ev.mean.resize(static_cast<Eigen::Index>(d.frame_size()), static_cast<Eigen::Index>(windows.size()));
    for (std::size_t j = 0; j < windows.size(); ++j) {
      const auto y = d.y(windows[j]);
      for (std::size_t e = 0; e < y.size(); ++e) ev.mean(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(j)) = y[e];
      ev.nmse.push_back(0.0);
      ev.uncertainty.push_back(0.0);
    }
    return ev;
  };
  const fs::path out = root_ / "eval_oracle";
  const auto s = cli::cmd_eval(ds, oracle, {}, out);
  EXPECT_EQ(s["nmse_db_pooled"].get<double>(), -120.0);
  EXPECT_EQ(s["clamped_samples"].get<std::size_t>(), s["windows"].get<std::size_t>());
  EXPECT_TRUE(s["pearson_r"].is_null());
  const auto cdf = lines(out / "cdf.csv");
  ASSERT_GE(cdf.size(), 2u);
  for (std::size_t i = 1; i < cdf.size(); ++i) EXPECT_EQ(cdf[i].rfind("-120,", 0), 0u) << cdf[i];
  EXPECT_NE(cdf.back().find(",1"), std::string::npos);
}

TEST_F(CliTest, AblationRowsCoverGrid) {
  const fs::path grid_file = root_ / "grid.json";
  {
    std::ofstream g(grid_file);
    g << R"({"policies": ["uwer", "no_replay"], "buffers": [10, 20], "betas": [1.0],
            "train": {"hidden": 4, "n_layers": 1, "epochs_per_task": 1, "batch": 8, "k_passes": 2, "seeds": [0]}})";
  }
  const fs::path out = root_ / "ablate";
  ASSERT_EQ(run({"ablate", "--dataset", dataset().string(), "--grid", grid_file.string(), "--out", out.string()}),
            cli::kExitOk);
  const auto rows = lines(out / "ablation.csv");
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "policy,buffer,beta,seed,val_nmse_db_pooled,forgetting_std,forgetting_as_written,pearson_r");
  EXPECT_EQ(rows[1].rfind("uwer,10,1,0,", 0), 0u);
  EXPECT_EQ(rows[4].rfind("no_replay,20,1,0,", 0), 0u);
  EXPECT_TRUE(cli::verify_manifest(out).ok);
  EXPECT_TRUE(slurp(out / "failures.log").empty());
}

TEST(CliGrid, RejectsBadFields) {
  EXPECT_THROW(cli::grid_from_json(config::Json::parse(R"({"policy": []})")), channel::ConfigError);
  EXPECT_THROW(cli::grid_from_json(config::Json::parse(R"({"policies": ["x"]})")), channel::ConfigError);
  EXPECT_THROW(cli::grid_from_json(config::Json::parse(R"({"buffers": [0]})")), channel::ConfigError);
  EXPECT_THROW(cli::grid_from_json(config::Json::parse(R"({"train": {"lamda": 0.1}})")), channel::ConfigError);
}

TEST(CliConfig, JsonRoundTrip) {
  train::TrainConfig t;
  t.policy = train::Policy::LarsOnly;
  t.refresh_every_n_updates = 7;
  t.grad_passes = train::GradPasses::First;
  const auto back = config::train_from_json(config::to_json(t));
  EXPECT_EQ(config::to_json(back), config::to_json(t));
  channel::ChannelConfig c;
  c.env_speeds_kmh = {10, 20};
  EXPECT_EQ(config::to_json(config::channel_from_json(config::to_json(c))), config::to_json(c));
  EXPECT_THROW(config::train_from_json(config::Json::parse(R"({"lamda": 0.1})")), channel::ConfigError);
  EXPECT_THROW(config::train_from_json(config::Json::parse(R"({"lambda": "x"})")), channel::ConfigError);
}
