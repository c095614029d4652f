#include "sprl_cli.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace {

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun invoke(std::vector<std::string> args)
{
    args.insert(args.begin(), "sprl_cli");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = sprl::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

} // namespace

TEST(Cli, Counterexample)
{
    const CliRun r = invoke({"counterexample", "--gamma", "0.9"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("first OMP-TD selection: feature 1, outside opt = {2, 3, 4}"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("misses opt on its first step: yes"), std::string::npos);
}

TEST(Cli, CounterexampleSmallGammaReportsNoMiss)
{
    // gamma + gamma^2 + gamma^3 < 1 lets the in-opt indicators win
    const CliRun r = invoke({"counterexample", "--gamma", "0.5"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("misses opt on its first step: no"), std::string::npos) << r.out;
}

TEST(Cli, RecoverExact)
{
    const CliRun r = invoke({"recover", "--env", "chain50", "--mode", "exact", "--solver", "brm", "--k-total", "100",
                       "--k-candidates", "300"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("opt recovered: true"), std::string::npos) << r.out;
    const auto pos = r.out.find("selection order: [");
    ASSERT_NE(pos, std::string::npos);
    const std::string order = r.out.substr(pos + 18, 7);
    for (char c : {'1', '2', '3'}) EXPECT_NE(order.find(c), std::string::npos) << order;
}

TEST(Cli, RecoverBasisFileRoundTrip)
{
    const std::string path = (std::filesystem::temp_directory_path() / "sprl_cli_basis.txt").string();
    const CliRun a = invoke({"recover", "--k-total", "60", "--k-candidates", "200", "--save-basis", path});
    ASSERT_EQ(a.code, 0) << a.err;
    const CliRun b = invoke({"recover", "--basis", path, "--mode", "sampled", "--solver", "td", "--max-iterations", "4"});
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_NE(b.out.find("designed features selected first:"), std::string::npos);
    std::remove(path.c_str());
}

TEST(Cli, RecoverRejectsContinuousEnv)
{
    const CliRun r = invoke({"recover", "--env", "mountain_car"});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("continuous"), std::string::npos);
}

TEST(Cli, ExactDiscrete)
{
    const CliRun r = invoke({"exact", "--env", "chain50"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 51);
    EXPECT_EQ(r.out.rfind("state,value\n", 0), 0u);
}

TEST(Cli, ExactContinuous)
{
    const CliRun r = invoke({"exact", "--env", "mountain_car", "--states", "3", "--rollouts", "4"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("x0,x1,value,std_error"), std::string::npos);
}

TEST(Cli, SweepMissingConfig)
{
    const CliRun r = invoke({"sweep", "--config", "/nonexistent/sweep.cfg"});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("cannot open"), std::string::npos);
}

TEST(Cli, SweepWritesCsvAndSeedOverride)
{
    const auto dir = std::filesystem::temp_directory_path();
    const std::string cfg = (dir / "sprl_cli_sweep.cfg").string();
    const std::string out = (dir / "sprl_cli_sweep.csv").string();
    {
        std::ofstream os(cfg);
        os << "env = chain50\nsolver = omp-td\nbeta_grid = 0.1,0.01\nn_samples = 100\nn_trials = 2\nrecord_timing = false\n";
    }
    const CliRun r = invoke({"sweep", "--config", cfg, "--out", out, "--seed", "99"});
    ASSERT_EQ(r.code, 0) << r.err;
    const sprl::SweepResult res = sprl::read_csv(out);
    ASSERT_EQ(res.rows.size(), 4u);
    EXPECT_EQ(res.rows[0].seed, sprl::derive_seed(99, 1));

    // without --out the CSV goes to stdout
    const CliRun s = invoke({"sweep", "--config", cfg});
    ASSERT_EQ(s.code, 0) << s.err;
    EXPECT_EQ(s.out.rfind(sprl::csv_header, 0), 0u);
    std::remove(cfg.c_str());
    std::remove(out.c_str());
}

TEST(Cli, MalformedConfig)
{
    const std::string cfg = (std::filesystem::temp_directory_path() / "sprl_cli_bad.cfg").string();
    {
        std::ofstream os(cfg);
        os << "solver = omp-td\nmystery = 1\n";
    }
    const CliRun r = invoke({"sweep", "--config", cfg});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("unknown key"), std::string::npos);
    std::remove(cfg.c_str());
}

TEST(Cli, UsageErrors)
{
    EXPECT_NE(invoke({}).code, 0);
    EXPECT_NE(invoke({"frobnicate"}).code, 0);
    const CliRun r = invoke({"counterexample", "--bogus"});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("Usage"), std::string::npos);
    EXPECT_NE(invoke({"recover", "--mode", "psychic"}).code, 0);
    EXPECT_NE(invoke({"sweep"}).code, 0);
}
