#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "jumplab/config.hpp"
#include "jumplab/io.hpp"

using namespace jumplab;

namespace {

json sample_json() {
    return json::parse(R"({
      "space": {"n": 8, "p": 3, "mode": "sobolev"},
      "operator": {"kind": "p_laplace", "function": "power:1"},
      "noise": {"coupling": "additive",
                "marks": [{"id": "a", "mass": 0.5, "g": {"kind": "eigen", "mode": 2, "amplitude": 0.1}}]},
      "sim": {"dt": 0.01, "horizon": 2, "members": 4},
      "initial": {"kind": "constant", "value": 0.25},
      "experiment": {"simulate": {"paths": 1}},
      "seed": 9,
      "output_dir": "somewhere"
    })");
}

}  // namespace

TEST(Config, ReserializationRoundTrips) {
    const auto c = run_config_from_json(sample_json());
    const json once = to_json(c);
    const json twice = to_json(run_config_from_json(once));
    EXPECT_EQ(once.dump(), twice.dump());
    EXPECT_EQ(c.space.n, 8u);
    EXPECT_EQ(c.noise.marks.at(0).g->mode, 2);
    EXPECT_EQ(c.sim.members, 4u);
}

TEST(Config, HashIgnoresOutputDirButNotSeed) {
    auto a = run_config_from_json(sample_json());
    auto b = a;
    b.output_dir = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.seed = 10;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, HashIsStableAcrossReparse) {
    const auto a = run_config_from_json(sample_json());
    const auto b = run_config_from_json(json::parse(to_json(a).dump()));
    EXPECT_EQ(config_hash(a), config_hash(b));
}

TEST(Config, Fnv1aKnownValues) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Config, UnknownKeysRejected) {
    auto j = sample_json();
    j["spcae"] = json::object();
    EXPECT_THROW(run_config_from_json(j), ConfigError);
    j = sample_json();
    j["sim"]["dtt"] = 0.1;
    EXPECT_THROW(run_config_from_json(j), ConfigError);
    j = sample_json();
    j["noise"]["marks"][0]["g"]["colour"] = 1;
    EXPECT_THROW(run_config_from_json(j), ConfigError);
}

TEST(Config, BadValuesRejected) {
    auto j = sample_json();
    j["sim"]["dt"] = "fast";
    EXPECT_THROW(run_config_from_json(j), ConfigError);
    j = sample_json();
    j["space"]["mode"] = "banach";
    EXPECT_THROW(build_model(run_config_from_json(j)), ConfigError);
    j = sample_json();
    j["sim"]["dt"] = -1.0;
    EXPECT_THROW(build_model(run_config_from_json(j)), ConfigError);
    j = sample_json();
    j["noise"]["marks"][0].erase("g");
    EXPECT_THROW(build_model(run_config_from_json(j)), ConfigError);
    j = sample_json();
    j["operator"]["function"] = "wiggle:1";
    EXPECT_THROW(build_model(run_config_from_json(j)), ConfigError);
}

TEST(Config, MissingVectorFileRejected) {
    auto j = sample_json();
    j["initial"] = {{"kind", "file"}, {"file", "does-not-exist.csv"}};
    const auto c = run_config_from_json(j);
    EXPECT_THROW(build_vector(build_space(c), c.initial, c.base_dir), ConfigError);
}

TEST(Config, BuildsModelMatchingSections) {
    const auto c = run_config_from_json(sample_json());
    const Model m = build_model(c);
    EXPECT_EQ(m.space.n(), 8u);
    EXPECT_EQ(m.op.kind(), OperatorKind::PLaplace);
    EXPECT_EQ(m.marks.size(), 1u);
    EXPECT_TRUE(m.coupling.is_additive());
    EXPECT_DOUBLE_EQ(m.sim.dt_max, 0.01);
    EXPECT_EQ(m.sim.seed, 9u);
    const auto x = build_vector(m.space, c.initial, c.base_dir);
    for (double v : x) EXPECT_EQ(v, 0.25);
}

TEST(Config, LoadAcceptsCommentsAndResolvesFilesRelativeToConfig) {
    const auto dir = std::filesystem::temp_directory_path() / "jumplab_cfg_load";
    std::filesystem::create_directories(dir);
    {
        std::ofstream v(dir / "x0.csv");
        v << "# initial\n1\n2\n3\n";
        std::ofstream f(dir / "run.json");
        f << "// comment line\n"
          << R"({"space": {"n": 3, "p": 2, "mode": "euclidean"},
                 "operator": {"kind": "custom_fd", "function": "linear:1"},
                 "initial": {"kind": "file", "file": "x0.csv"}})";
    }
    const auto c = load_config(dir / "run.json");
    const auto x = build_vector(build_space(c), c.initial, c.base_dir);
    EXPECT_EQ(x[0], 1.0);
    EXPECT_EQ(x[2], 3.0);
    EXPECT_THROW(load_config(dir / "absent.json"), ConfigError);
}

TEST(Io, FormatDoubleRoundTrips) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0}) EXPECT_EQ(std::stod(format_double(v)), v);
    EXPECT_EQ(format_double(0.5), "0.5");
    EXPECT_EQ(format_double(INFINITY), "inf");
}

TEST(Io, MeasureCsvRoundTrips) {
    const auto dir = std::filesystem::temp_directory_path() / "jumplab_io_measure";
    std::filesystem::remove_all(dir);
    OutputWriter out(dir, "0123456789abcdef");
    const GridSpace space(2, 2.0, SpaceMode::Euclidean);
    std::vector<Atom> atoms{{StateVector{0.1, 0.2}, 0.25, 0, 1.0},
                            {StateVector{1.0 / 3.0, -4.0}, 0.75, 1, 2.0}};
    const EmpiricalMeasure nu(atoms, {"run", 0.5, 1});
    write_measure(out, "measures/nu", nu, space);
    const auto back = read_measure(dir / "measures/nu.csv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].state[0], 1.0 / 3.0);
    EXPECT_EQ(back[1].group, 1u);
    EXPECT_NEAR(back[0].weight, 0.25, 1e-15);
    std::ifstream f(dir / "measures/nu.csv");
    std::string first;
    std::getline(f, first);
    EXPECT_EQ(first, "# config_hash=0123456789abcdef");
    const auto meta = json::parse(std::ifstream(dir / "measures/nu.json"));
    EXPECT_EQ(meta.at("config_hash"), "0123456789abcdef");
    EXPECT_EQ(meta.at("atoms"), 2);
}
