#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "jumplab/commands.hpp"

using namespace jumplab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("jumplab_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const auto path = dir / "run.json";
    std::ofstream(path) << text;
    return path;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const char* kOu = R"({
  "space": {"n": 1, "p": 2, "mode": "euclidean"},
  "operator": {"kind": "custom_fd", "function": "linear:1"},
  "noise": {"coupling": "additive",
            "marks": [{"id": "unit", "mass": 1.0, "g": {"kind": "constant", "value": 1.0}}]},
  "sim": {"dt": 0.01, "horizon": 4, "members": 40, "checkpoint_stride": 5},
  "initial": {"kind": "constant", "value": 1.0},
  "experiment": {"simulate": {"paths": 2},
                 "check_operator": {"conditions": ["MONOTONE_2_1", "COERCIVE_2_2", "STRICT_2_5"],
                                    "samples": 200},
                 "ergodicity": {"burn_in": 2},
                 "kolmogorov": {"burn_in": 2},
                 "mixing": {"pairs": 16, "x0": {"kind": "constant", "value": 2.0}}},
  "seed": 3
})";

Overrides to(const fs::path& dir) { return Overrides{(dir / "out").string(), std::nullopt}; }

}  // namespace

TEST(Cli, CheckOperatorPassesAndWritesReports) {
    const auto dir = scratch("check_pass");
    std::ostringstream err;
    EXPECT_EQ(run_command("check-operator", write_config(dir, kOu), to(dir), err), kExitPass);
    EXPECT_TRUE(fs::exists(dir / "out/reports/MONOTONE_2_1.json"));
    EXPECT_TRUE(fs::exists(dir / "out/reports/STRICT_2_5.json"));
    const auto manifest = json::parse(slurp(dir / "out/manifest.json"));
    EXPECT_EQ(manifest.at("exit_code"), 0);
    EXPECT_EQ(manifest.at("status"), "pass");
}

TEST(Cli, NonMonotoneFluxFailsWithNegativeGap) {
    const auto dir = scratch("check_fail");
    const auto cfg = write_config(dir, R"({
      "space": {"n": 16, "p": 2, "mode": "sobolev"},
      "operator": {"kind": "p_laplace", "function": "linear:-1"},
      "experiment": {"check_operator": {"conditions": ["MONOTONE_2_1"], "samples": 100}}})");
    std::ostringstream err;
    EXPECT_EQ(run_command("check-operator", cfg, to(dir), err), kExitCheckFailed);
    const auto rep = json::parse(slurp(dir / "out/reports/MONOTONE_2_1.json"));
    EXPECT_LT(rep.at("min_gap").get<double>(), 0.0);
    EXPECT_FALSE(rep.at("pass").get<bool>());
}

TEST(Cli, OutputsAreByteIdenticalAcrossRuns) {
    const auto dir = scratch("determinism");
    const auto cfg = write_config(dir, kOu);
    std::ostringstream err;
    for (const std::string cmd : {"simulate", "ergodicity", "check-operator"}) {
        const auto out = dir / cmd;
        auto snapshot = [&] {
            std::map<std::string, std::string> files;
            for (const auto& e : fs::recursive_directory_iterator(out))
                if (e.is_regular_file()) files[fs::relative(e.path(), out).string()] = slurp(e.path());
            return files;
        };
        run_command(cmd, cfg, {out.string(), std::nullopt}, err);
        const auto first = snapshot();
        fs::remove_all(out);
        run_command(cmd, cfg, {out.string(), std::nullopt}, err);
        const auto second = snapshot();
        EXPECT_GE(first.size(), 3u) << cmd;
        EXPECT_EQ(first, second) << cmd;
    }
}

TEST(Cli, EveryOutputEmbedsTheConfigHash) {
    const auto dir = scratch("hash");
    const auto cfg = write_config(dir, kOu);
    std::ostringstream err;
    ASSERT_EQ(run_command("ergodicity", cfg, to(dir), err), kExitPass) << err.str();
    const auto manifest = json::parse(slurp(dir / "out/manifest.json"));
    const std::string hash = manifest.at("config_hash");
    EXPECT_EQ(hash, config_hash(load_config(cfg)));
    for (const auto& f : manifest.at("files")) {
        const std::string text = slurp(dir / "out" / f.get<std::string>());
        EXPECT_NE(text.find(hash), std::string::npos) << f;
    }
    EXPECT_TRUE(fs::exists(dir / "out/measures/kb_average.csv"));
    EXPECT_TRUE(fs::exists(dir / "out/trajectories/ensemble.csv"));
}

TEST(Cli, WrittenConfigReloadsToSameHash) {
    const auto dir = scratch("reload");
    const auto cfg = write_config(dir, kOu);
    std::ostringstream err;
    run_command("simulate", cfg, to(dir), err);
    EXPECT_EQ(config_hash(load_config(dir / "out/config.json")), config_hash(load_config(cfg)));
}

TEST(Cli, SeedOverrideChangesHashAndOutputs) {
    const auto dir = scratch("seed");
    const auto cfg = write_config(dir, kOu);
    std::ostringstream err;
    run_command("simulate", cfg, {(dir / "a").string(), std::nullopt}, err);
    run_command("simulate", cfg, {(dir / "b").string(), 99}, err);
    const auto ma = json::parse(slurp(dir / "a/manifest.json"));
    const auto mb = json::parse(slurp(dir / "b/manifest.json"));
    EXPECT_NE(ma.at("config_hash"), mb.at("config_hash"));
    EXPECT_EQ(mb.at("seed"), 99);
    EXPECT_NE(slurp(dir / "a/trajectories/path_0.csv"), slurp(dir / "b/trajectories/path_0.csv"));
}

TEST(Cli, ConfigErrorsExitTwo) {
    const auto dir = scratch("config_error");
    std::ostringstream err;
    EXPECT_EQ(run_command("simulate", dir / "absent.json", to(dir), err), kExitConfig);
    auto cfg = write_config(dir, R"({"space": {"n": 4}, "bogus": 1})");
    EXPECT_EQ(run_command("simulate", cfg, to(dir), err), kExitConfig);
    cfg = write_config(dir, R"({"experiment": {"simulate": {"pathz": 1}}})");
    EXPECT_EQ(run_command("simulate", cfg, to(dir), err), kExitConfig);
    cfg = write_config(dir, R"({"experiment": {"regularize": {"eps": [0.1, 0.0]}}})");
    EXPECT_EQ(run_command("regularize", cfg, to(dir), err), kExitConfig);
    EXPECT_EQ(run_command("frobnicate", cfg, to(dir), err), kExitConfig);
}

TEST(Cli, BurnInCoveringHorizonIsRejected) {
    const auto dir = scratch("burn_in");
    std::string text = kOu;
    text.replace(text.find("\"burn_in\": 2}"), 13, "\"burn_in\": 4}");
    std::ostringstream err;
    EXPECT_EQ(run_command("ergodicity", write_config(dir, text), to(dir), err), kExitConfig);
}

TEST(Cli, MixingRefusedWithoutStrictDissipativity) {
    const auto dir = scratch("refuse");
    const auto cfg = write_config(dir, R"({
      "space": {"n": 1, "p": 2, "mode": "euclidean"},
      "operator": {"kind": "custom_fd", "function": "tanh:1"},
      "sim": {"dt": 0.01, "horizon": 1},
      "experiment": {"mixing": {"pairs": 4, "certificate_samples": 200}}})");
    std::ostringstream err;
    EXPECT_EQ(run_command("mixing", cfg, to(dir), err), kExitCheckFailed);
    const auto manifest = json::parse(slurp(dir / "out/manifest.json"));
    EXPECT_EQ(manifest.at("status"), "refused");
}

TEST(Cli, MixingRecoversLinearRate) {
    const auto dir = scratch("mixing");
    std::ostringstream err;
    ASSERT_EQ(run_command("mixing", write_config(dir, kOu), to(dir), err), kExitPass) << err.str();
    const auto rep = json::parse(slurp(dir / "out/reports/mixing.json"));
    EXPECT_NEAR(rep.at("mixing").at("alpha_hat").get<double>(), 2.0, 0.05);
}

TEST(Cli, KolmogorovRefusesMultiplicativeNoise) {
    const auto dir = scratch("kolmo_refuse");
    const auto cfg = write_config(dir, R"({
      "space": {"n": 1, "p": 2, "mode": "euclidean"},
      "operator": {"kind": "custom_fd", "function": "linear:1"},
      "noise": {"coupling": "mult_scalar", "marks": [{"id": "m", "mass": 1.0, "sigma": 0.5}]},
      "sim": {"dt": 0.01, "horizon": 1}})");
    std::ostringstream err;
    EXPECT_EQ(run_command("kolmogorov", cfg, to(dir), err), kExitCheckFailed);
}

TEST(Cli, KolmogorovOnOuPasses) {
    const auto dir = scratch("kolmo");
    const auto cfg = write_config(dir, R"({
      "space": {"n": 1, "p": 2, "mode": "euclidean"},
      "operator": {"kind": "custom_fd", "function": "linear:1"},
      "noise": {"coupling": "additive",
                "marks": [{"id": "unit", "mass": 1.0, "g": {"kind": "constant", "value": 1.0}}]},
      "sim": {"dt": 0.005, "horizon": 10, "members": 200, "checkpoint_stride": 20},
      "experiment": {"kolmogorov": {"burn_in": 3}},
      "seed": 17})");
    std::ostringstream err;
    EXPECT_EQ(run_command("kolmogorov", cfg, to(dir), err), kExitPass) << err.str();
    const auto rep = json::parse(slurp(dir / "out/reports/kolmogorov.json"));
    for (const auto& row : rep.at("identity")) EXPECT_LE(row.at("max_rel_error").get<double>(), 1e-9);
}

TEST(Cli, SolverFailureExitsThree) {
    const auto dir = scratch("abort");
    const auto cfg = write_config(dir, R"({
      "space": {"n": 1, "p": 4, "mode": "euclidean"},
      "operator": {"kind": "custom_fd", "function": "cubic:1"},
      "sim": {"dt": 1.0, "horizon": 1, "solver_max_iter": 1, "max_halvings": 0, "solver_tol": 1e-14},
      "initial": {"kind": "constant", "value": 1000.0}})");
    std::ostringstream err;
    EXPECT_EQ(run_command("simulate", cfg, to(dir), err), kExitNumerical);
    const auto manifest = json::parse(slurp(dir / "out/manifest.json"));
    EXPECT_EQ(manifest.at("status"), "numerical_abort");
}

TEST(Cli, RegularizeSweepPasses) {
    const auto dir = scratch("regularize");
    const auto cfg = write_config(dir, R"({
      "space": {"n": 32, "p": 3, "mode": "sobolev"},
      "operator": {"kind": "p_laplace", "function": "power:1"}})");
    std::ostringstream err;
    EXPECT_EQ(run_command("regularize", cfg, to(dir), err), kExitPass) << err.str();
    const auto rep = json::parse(slurp(dir / "out/reports/regularize.json"));
    EXPECT_TRUE(rep.at("error_monotone").get<bool>());
    EXPECT_LE(rep.at("tiny_eps").at("error").get<double>(), 1e-4);
}
