#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fjsync/cli.hpp"

namespace fs = std::filesystem;
using namespace fjsync;

namespace {

struct Parsed {
    std::unique_ptr<CLI::App> app = std::make_unique<CLI::App>("test");
    cli::ExperimentConfig cfg;
};

std::unique_ptr<Parsed> parse(std::vector<std::string> args) {
    auto p = std::make_unique<Parsed>();
    cli::configure(*p->app, p->cfg);
    std::reverse(args.begin(), args.end());
    p->app->parse(args);
    return p;
}

std::string selected(const CLI::App& app) {
    for (const auto* sub : app.get_subcommands()) return sub->get_name();
    return {};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("fjsync_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    fs::path dir;
};

}  // namespace

TEST(Format, ShortestRoundTripWithDotSeparator) {
    EXPECT_EQ(io::format_number(0.1), "0.1");
    EXPECT_EQ(io::format_number(1e-11), "1e-11");
    EXPECT_EQ(io::format_number(10.0), "10");
    EXPECT_EQ(io::format_number(-2.5), "-2.5");
    const double x = 0.1 + 0.2;
    EXPECT_EQ(std::stod(io::format_number(x)), x);
}

TEST(NetworkFlags, ResolvesUtilizationOrRate) {
    cli::NetworkFlags f;
    f.lambda = 1.5;
    f.n_a = "3";
    f.psi_a = 0.5;
    f.n_b = "inf";
    f.mu_b = 0.7;
    const auto p = f.resolve();
    EXPECT_DOUBLE_EQ(p.a.mu, 1.0);
    EXPECT_TRUE(p.b.servers.is_infinite());
    f.mu_b.reset();
    EXPECT_THROW(f.resolve(), std::invalid_argument);
}

TEST(Config, AnalyticExamples) {
    {
        auto p = parse({"analytic", "--lambda", "0.3", "--na", "1", "--mua", "0.4", "--nb", "1", "--mub", "0.4"});
        EXPECT_NEAR(analytic::mean_wait(p->cfg.analytic.net.resolve()), 10.0, 1e-12);
    }
    {
        auto p = parse({"analytic", "--inf-servers", "--mua", "1", "--mub", "1"});
        const auto params = p->cfg.analytic.net.resolve();
        EXPECT_EQ(params.lambda, 1.0);
        EXPECT_NEAR(analytic::mean_wait(params), 1.0, 1e-15);
    }
    {
        auto p = parse({"analytic", "--lambda", "1.5", "--na", "3", "--mua", "0.6", "--nb", "5", "--mub", "0.5"});
        std::ostringstream out;
        EXPECT_EQ(cli::dispatch(*p->app, p->cfg, out), 0);
        const auto j = nlohmann::json::parse(out.str());
        EXPECT_EQ(j["mixture"].size(), 4u);
        EXPECT_NEAR(j["mean_wait"].get<double>(), 3.2032075545031304, 1e-12);
    }
}

TEST(Config, SeedIsMandatory) {
    EXPECT_THROW(parse({"simulate", "--lambda", "0.3", "--psia", "0.5", "--psib", "0.5"}), CLI::RequiredError);
    EXPECT_THROW(parse({"validate"}), CLI::RequiredError);
    EXPECT_THROW(parse({}), CLI::RequiredError);
}

TEST_F(TempDir, ConfigRoundTrip) {
    const auto first = parse({"validate", "--table", "regions", "--seed", "17", "--seeds", "3", "--psi", "0.1", "0.5",
                              "--servers", "1", "6", "--pairs", "all", "--exact-critical", "--out-dir", dir.string()});
    const auto file = dir / "run.json";
    {
        std::ofstream out(file);
        out << first->app->config_to_str(false, true);
    }
    const auto second = parse({"--config", file.string()});
    EXPECT_EQ(selected(*second->app), "validate");
    EXPECT_TRUE(first->cfg == second->cfg);
    EXPECT_EQ(second->cfg.validate.psi, (std::vector<double>{0.1, 0.5}));
    EXPECT_TRUE(second->cfg.validate.exact_critical);
}

TEST_F(TempDir, FlagsOverrideConfig) {
    const auto file = dir / "run.json";
    {
        std::ofstream out(file);
        out << R"({"out-dir": "x", "simulate": {"lambda": 0.3, "psia": 0.5, "psib": 0.25, "seed": 4, "jobs": 1000}})";
    }
    const auto p = parse({"--config", file.string(), "simulate", "--seed", "9"});
    EXPECT_EQ(selected(*p->app), "simulate");
    EXPECT_EQ(p->cfg.simulate.seed, 9u);
    EXPECT_EQ(p->cfg.simulate.n_jobs, 1000u);
    EXPECT_EQ(p->cfg.simulate.net.psi_b, 0.25);
    EXPECT_EQ(p->cfg.out_dir, "x");
}

TEST_F(TempDir, SimulateWritesIdenticalFilesForSameSeed) {
    auto run = [&](const std::string& prefix) {
        auto p = parse({"simulate", "--lambda", "1.5", "--na", "3", "--psia", "0.5", "--nb", "5", "--psib", "0.7",
                        "--jobs", "3000", "--seed", "12", "--trace", "--prefix", prefix, "--out-dir", dir.string()});
        std::ostringstream out;
        EXPECT_EQ(cli::dispatch(*p->app, p->cfg, out), 0);
    };
    run("one");
    run("two");
    const auto csv = slurp(dir / "one_samples.csv");
    EXPECT_EQ(csv, slurp(dir / "two_samples.csv"));
    EXPECT_EQ(slurp(dir / "one_occupancy.csv"), slurp(dir / "two_occupancy.csv"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,t_a,t_b,t_sync,first_branch");

    const auto summary = nlohmann::json::parse(slurp(dir / "one_summary.json"));
    EXPECT_EQ(summary["seed"], 12);
    EXPECT_EQ(summary["params"]["n_b"], 5);
    EXPECT_EQ(summary["samples"], 3000);
}

TEST_F(TempDir, CkSolveWritesGridAndDiagnostics) {
    auto p = parse({"ck-solve", "--psia", "0.3", "--psib", "0.3", "--grid", "40", "--out-dir", dir.string()});
    std::ostringstream out;
    EXPECT_EQ(cli::dispatch(*p->app, p->cfg, out), 0);
    const auto grid = slurp(dir / "ck_grid.csv");
    EXPECT_EQ(std::count(grid.begin(), grid.end(), '\n'), 40);
    const auto diag = nlohmann::json::parse(slurp(dir / "ck_diagnostics.json"));
    EXPECT_TRUE(diag["diagnostics"]["converged"].get<bool>());
    EXPECT_NEAR(diag["params"]["psi_a"].get<double>(), 0.3, 1e-15);
}

TEST_F(TempDir, Fig3Csv) {
    auto p = parse({"fig3", "--psia-values", "0.2", "0.9", "--psib-values", "0.05", "0.9", "--grid", "60",
                    "--out-dir", dir.string()});
    std::ostringstream out;
    EXPECT_EQ(cli::dispatch(*p->app, p->cfg, out), 0);
    std::istringstream csv(slurp(dir / "fig3.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "psi_a,psi_b,R");
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 4);
}

TEST_F(TempDir, ValidateEmptyGrid) {
    cli::ExperimentConfig cfg;
    cfg.out_dir = dir.string();
    cfg.validate.table = "regions";
    cfg.validate.psi.clear();
    std::ostringstream out;
    EXPECT_EQ(cli::run_validate(cfg, out), 0);
    EXPECT_EQ(slurp(dir / "validate_regions.csv"), "n_a,n_b,psi_a,psi_b,chi2,accepted,delta_t_rel\n");
    EXPECT_EQ(nlohmann::json::parse(slurp(dir / "validate_regions.json"))["points"], 0);
}

TEST_F(TempDir, ValidateRejectVerdictIsNotAnError) {
    cli::ExperimentConfig cfg;
    cfg.out_dir = dir.string();
    cfg.validate.table = "regions";
    cfg.validate.psi = {0.8};
    cfg.validate.servers = {1};
    cfg.validate.seeds = 1;
    cfg.validate.n_jobs = 20000;
    std::ostringstream out;
    EXPECT_EQ(cli::run_validate(cfg, out), 0);
    const auto j = nlohmann::json::parse(slurp(dir / "validate_regions.json"));
    ASSERT_EQ(j["rows"].size(), 1u);
    EXPECT_FALSE(j["rows"][0]["accepted"].get<bool>());
    EXPECT_FALSE(j["rows"][0]["expected"].get<bool>());
}

TEST(RegionGrid, CoveredPairsOnly) {
    const auto regions = reference::load_regions();
    cli::ValidateConfig v;
    v.psi = {0.5};
    const auto pts = cli::region_grid(v, regions);
    // {1,2}^2, {3,5}^2, {6,8}^2
    EXPECT_EQ(pts.size(), 12u);
    v.pairs = "all";
    EXPECT_EQ(cli::region_grid(v, regions).size(), 36u);
}

TEST(Reference, FixturesLoad) {
    const auto cells = reference::load_cells();
    ASSERT_EQ(cells.size(), 21u);
    EXPECT_EQ(cells[0].lambda, 0.3);
    EXPECT_FALSE(cells[0].accepted);
    EXPECT_EQ(cells[0].delta_t_rel_percent, 17.5);
    EXPECT_EQ(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return c.accepted; }), 9);

    const auto regions = reference::load_regions();
    ASSERT_EQ(regions.size(), 4u);
    using P = gof::RegionPoint;
    EXPECT_TRUE(reference::expected_accept(regions, P{ServerCount(8), ServerCount(6), 0.75, 0.75}));
    EXPECT_TRUE(reference::expected_accept(regions, P{ServerCount::infinite(), ServerCount(40), 0.5, 0.1}));
    EXPECT_FALSE(reference::expected_accept(regions, P{ServerCount(1), ServerCount(1), 0.75, 0.75}));
    EXPECT_TRUE(reference::expected_accept(regions, P{ServerCount(3), ServerCount(5), 0.5, 0.8}));
    EXPECT_FALSE(reference::expected_accept(regions, P{ServerCount(3), ServerCount(5), 0.75, 0.75}));

    const auto diag = reference::load_ck_diagnostics();
    ASSERT_EQ(diag.size(), 4u);
    EXPECT_EQ(diag[3].psi, 0.9);
    EXPECT_EQ(diag[3].d12, 0.76e-3);
}

TEST(Tolerance, DeltaBands) {
    EXPECT_TRUE(cli::delta_within_tolerance(17.5, 13.0));
    EXPECT_FALSE(cli::delta_within_tolerance(17.5, 12.0));
    EXPECT_TRUE(cli::delta_within_tolerance(1.4, 3.3));
    EXPECT_FALSE(cli::delta_within_tolerance(1.4, 3.5));
}
