#include <gtest/gtest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cli.hpp"
#include "spreadvol/calibration.hpp"
#include "spreadvol/csv.hpp"

namespace fs = std::filesystem;
using namespace spreadvol;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args, std::map<std::string, std::string> env = {}) {
    args.insert(args.begin(), "spreadvol");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err, [env](const std::string& k) -> std::optional<std::string> {
        const auto it = env.find(k);
        if (it == env.end()) return std::nullopt;
        return it->second;
    });
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

double cell(const csv::Table& t, std::size_t row, std::string_view column) {
    return *csv::parse_double(csv::split(t.rows()[row])[t.require(column)]);
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("spreadvol_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }

    fs::path dir;
};

}  // namespace

TEST(Duration, Suffixes) {
    EXPECT_DOUBLE_EQ(cli::parse_duration("250ms", 1000), 0.25);
    EXPECT_DOUBLE_EQ(cli::parse_duration("1.5s", 1000), 1.5);
    EXPECT_DOUBLE_EQ(cli::parse_duration("2m", 1000), 120.0);
    EXPECT_DOUBLE_EQ(cli::parse_duration("1h", 60000), 60.0);
    EXPECT_DOUBLE_EQ(cli::parse_duration("1d", 3.6e6), 24.0);
    EXPECT_DOUBLE_EQ(cli::parse_duration("390", 60000), 390.0);
    EXPECT_THROW(cli::parse_duration("soon", 1000), InvalidInputError);
    EXPECT_THROW(cli::parse_duration("-1s", 1000), InvalidInputError);
}

TEST_F(Cli, HelpAndVersion) {
    EXPECT_EQ(run({"--help"}).code, 0);
    const auto v = run({"--version"});
    EXPECT_EQ(v.code, 0);
    EXPECT_NE(v.out.find("0.1.0"), std::string::npos);
    EXPECT_EQ(run({}).code, 3);
    EXPECT_EQ(run({"simulate", "--no-such-flag"}).code, 3);
}

TEST_F(Cli, SingleStepSimulation) {
    const auto r = run({"simulate", "--steps", "1", "--seed", "7", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream bars(slurp(dir / "bars.csv"));
    const auto t = csv::Table::read(bars);
    EXPECT_EQ(t.rows().size(), 1u);
    const auto s = read_json(dir / "summary.json");
    EXPECT_EQ(s["result"]["steps"], 1);
    EXPECT_TRUE(s["result"]["empirical_volatility"].is_null());
    EXPECT_EQ(s["config"]["seed"], 7);
}

TEST_F(Cli, SameSeedSameBytes) {
    ASSERT_EQ(run({"simulate", "--steps", "300", "--seed", "11", "--write-quotes", "--out", path("a")}).code, 0);
    ASSERT_EQ(run({"simulate", "--steps", "300", "--seed", "11", "--write-quotes", "--out", path("b")}).code, 0);
    ASSERT_EQ(run({"simulate", "--steps", "300", "--seed", "12", "--write-quotes", "--out", path("c")}).code, 0);
    EXPECT_EQ(slurp(dir / "a" / "bars.csv"), slurp(dir / "b" / "bars.csv"));
    EXPECT_EQ(slurp(dir / "a" / "quotes.csv"), slurp(dir / "b" / "quotes.csv"));
    EXPECT_NE(slurp(dir / "a" / "bars.csv"), slurp(dir / "c" / "bars.csv"));
}

TEST_F(Cli, MissingColumnIsNamed) {
    spit(dir / "q.csv", "timestamp,bid,volume\n1000,10,5\n");
    const auto r = run({"curve", "--input", path("q.csv"), "--out", dir.string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("ask"), std::string::npos);
}

TEST_F(Cli, MissingInputFileIsIoError) {
    EXPECT_EQ(run({"curve", "--input", path("absent.csv"), "--out", dir.string()}).code, 2);
}

TEST_F(Cli, QuotesWithoutVolumeNeedTrades) {
    spit(dir / "q.csv", "timestamp,bid,ask\n1000,10,10.5\n2000,10,10.4\n");
    const auto r = run({"curve", "--input", path("q.csv"), "--out", dir.string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("trades"), std::string::npos);
}

TEST_F(Cli, HorizonBelowBaseIsRejected) {
    const auto r = run({"scale", "--base-spread", "0.1", "--eta", "0.05", "--horizon", "10", "--horizons", "20,5",
                        "--out", dir.string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_FALSE(fs::exists(dir / "scale.csv"));
}

TEST_F(Cli, ScaleTableMatchesLibrary) {
    ASSERT_EQ(run({"scale", "--base-spread", "0.1", "--eta", "0.05", "--lambda", "1.5", "--horizon", "1m",
                   "--horizons", "60,600,6000", "--out", dir.string()})
                  .code,
              0);
    std::istringstream in(slurp(dir / "scale.csv"));
    const auto t = csv::Table::read(in);
    ASSERT_EQ(t.rows().size(), 3u);
    const double k = 1.5 * 0.05 / 0.1;
    EXPECT_NEAR(cell(t, 2, "delta_quantum"), 0.1 * std::sqrt(1 + k * k * 99), 1e-15);
    EXPECT_NEAR(cell(t, 2, "delta_classical"), 1.0, 1e-15);
}

TEST_F(Cli, UnwritableOutputIsIoError) {
    spit(dir / "file", "x");
    const auto r = run({"simulate", "--steps", "2", "--out", path("file") + "/sub"});
    EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, UnknownConfigKeysAreRejected) {
    spit(dir / "c.json", R"({"simulate": {"stepz": 3}})");
    const auto r = run({"simulate", "--config", path("c.json"), "--out", dir.string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("stepz"), std::string::npos);
    spit(dir / "d.json", R"({"colour": "red"})");
    EXPECT_EQ(run({"simulate", "--config", path("d.json"), "--out", dir.string()}).code, 3);
    spit(dir / "e.json", R"({"simulate": {"steps": "many"}})");
    EXPECT_EQ(run({"simulate", "--config", path("e.json"), "--out", dir.string()}).code, 3);
}

TEST_F(Cli, PrecedenceFileEnvFlag) {
    spit(dir / "c.json", R"({"seed": 5, "simulate": {"steps": 3}, "curve": {"buckets": 4}})");
    const auto steps = [&](const Result& r) {
        EXPECT_EQ(r.code, 0) << r.err;
        return read_json(dir / "summary.json")["result"]["steps"].get<int>();
    };
    EXPECT_EQ(steps(run({"simulate", "--config", path("c.json"), "--out", dir.string()})), 3);
    EXPECT_EQ(read_json(dir / "summary.json")["config"]["seed"], 5);
    EXPECT_EQ(steps(run({"simulate", "--config", path("c.json"), "--out", dir.string()}, {{"SPREADVOL_STEPS", "4"}})),
              4);
    EXPECT_EQ(steps(run({"simulate", "--config", path("c.json"), "--steps", "6", "--out", dir.string()},
                        {{"SPREADVOL_STEPS", "4"}})),
              6);
    EXPECT_EQ(steps(run({"simulate", "--out", dir.string()}, {{"SPREADVOL_CONFIG", path("c.json")}})), 3);
    EXPECT_EQ(run({"simulate", "--out", dir.string()}, {{"SPREADVOL_STEPS", "x"}}).code, 3);
}

TEST_F(Cli, GlobalFlagsAfterSubcommand) {
    ASSERT_EQ(run({"simulate", "--steps", "2", "--seed", "3", "--out", dir.string()}).code, 0);
    ASSERT_EQ(run({"--seed", "3", "simulate", "--steps", "2", "--out", dir.string() + "/b"}).code, 0);
    EXPECT_EQ(slurp(dir / "bars.csv"), slurp(dir / "b" / "bars.csv"));
}

TEST_F(Cli, ConstantSpreadGivesFlatCurve) {
    std::ostringstream q;
    q << "timestamp,bid,ask,volume\n";
    for (int i = 0; i < 2000; ++i) q << 1000 * (i + 1) << ",99.5,100.5," << 1 + (i * 37) % 500 << "\n";
    spit(dir / "q.csv", q.str());
    ASSERT_EQ(run({"curve", "--input", path("q.csv"), "--out", dir.string()}).code, 0);
    std::istringstream in(slurp(dir / "curve.csv"));
    const auto curve = read_curve_csv(in);
    for (const auto& b : curve.buckets) {
        if (b.trade_count == 0) continue;
        EXPECT_NEAR(b.spread_quantile, 0.01, 1e-15);
    }
    EXPECT_EQ(curve.total_count(), 2000u);
    const auto j = read_json(dir / "curve.json");
    EXPECT_EQ(j["result"]["observations"], 2000);
    EXPECT_EQ(j["inputs"].size(), 1u);
}

TEST_F(Cli, RejectedRowsAreCounted) {
    spit(dir / "q.csv", "timestamp,bid,ask,volume\n1000,10,10.5,3\n2000,10.6,10.5,3\n3000,10,10.2,4\n4000,10,10.1,5\n");
    ASSERT_EQ(run({"curve", "--input", path("q.csv"), "--buckets", "1", "--out", dir.string()}).code, 0);
    const auto j = read_json(dir / "curve.json");
    EXPECT_EQ(j["result"]["ingest"]["accepted"], 3);
    EXPECT_EQ(j["result"]["ingest"]["rejected"]["crossed quote"], 1);
}

TEST_F(Cli, SimulateCurveCalibrateRoundTrip) {
    const std::string out = dir.string();
    ASSERT_EQ(run({"simulate", "--steps", "40000", "--drive", "bid_ask", "--sigma", "0.01", "--lambda", "2", "--rho",
                   "0.5", "--n", "100", "--tau0", "0.05", "--volume-median", "300", "--write-quotes", "--out", out})
                  .code,
              0);
    ASSERT_EQ(run({"curve", "--input", path("quotes.csv"), "--out", out}).code, 0);
    const auto r = run({"calibrate", "--curve", path("curve.csv"), "--n", "100", "--sigma", "0.01", "--tau0", "0.05",
                        "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = read_json(dir / "calibration.json");
    const double lambda = j["result"]["lambda_hat"];
    const double rho = j["result"]["rho_hat"];
    EXPECT_NEAR(lambda, 2.0, 0.3);
    EXPECT_NEAR(rho, 0.5, 0.1);
    EXPECT_EQ(j["inputs"].size(), 1u);
    EXPECT_EQ(j["inputs"][path("curve.csv")], cli::sha256_file(path("curve.csv")));
    EXPECT_TRUE(fs::exists(dir / "overlay.csv"));

    const auto o = run({"optimize", "--calibration", path("calibration.json"), "--commission", "0.001", "--lambda0",
                        "3", "--out", out});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto p = read_json(dir / "policy.json");
    EXPECT_EQ(p["result"]["points"].size(), 100u);
    EXPECT_DOUBLE_EQ(p["result"]["lambda_ref"].get<double>(), lambda);
}

TEST_F(Cli, CalibrateFromTradesFile) {
    const std::string out = dir.string();
    ASSERT_EQ(run({"simulate", "--steps", "20000", "--drive", "bid_ask", "--sigma", "0.01", "--tau0", "0.05",
                   "--volume-median", "300", "--write-quotes", "--write-trades", "--out", out})
                  .code,
              0);
    ASSERT_EQ(run({"curve", "--input", path("quotes.csv"), "--out", out}).code, 0);
    const auto r = run({"calibrate", "--curve", path("curve.csv"), "--trades", path("trades.csv"), "--tau0", "0.05",
                        "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = read_json(dir / "calibration.json");
    EXPECT_EQ(j["inputs"].size(), 2u);
    EXPECT_NEAR(j["result"]["flow"]["n"].get<double>(), 100.0, 1e-12);
    EXPECT_GT(j["result"]["sigma_used"].get<double>(), 0.0);
}

TEST_F(Cli, CalibrateNeedsFlowStatistics) {
    spit(dir / "c.csv", "v_lo,v_hi,v_mid,spread_q,count\n1,2,1.5,0.1,30\n2,3,2.5,0.1,30\n3,4,3.5,0.1,30\n");
    EXPECT_EQ(run({"calibrate", "--curve", path("c.csv"), "--out", dir.string()}).code, 3);
}

TEST_F(Cli, OptimizeWithoutCommissionNeverHalts) {
    ASSERT_EQ(run({"optimize", "--commission", "0", "--lambda0", "2", "--out", dir.string()}).code, 0);
    const auto j = read_json(dir / "policy.json");
    EXPECT_EQ(j["result"]["halted_points"], 0);
    for (const auto& pt : j["result"]["points"]) EXPECT_FALSE(pt["halt"].get<bool>());
}

TEST_F(Cli, OptimizedBeatsNaive) {
    ASSERT_EQ(run({"optimize", "--a", "10", "--commission", "3", "--lambda0", "3", "--out", dir.string()}).code, 0);
    std::istringstream in(slurp(dir / "policy.csv"));
    const auto t = csv::Table::read(in);
    ASSERT_EQ(t.rows().size(), 100u);
    for (std::size_t i = 0; i < t.rows().size(); ++i) EXPECT_GE(cell(t, i, "pnl_opt"), cell(t, i, "pnl_naive"));
}

TEST_F(Cli, BarModeAndHalt) {
    ASSERT_EQ(run({"optimize", "--mode", "bar", "--floor", "0.1", "--cubic", "0.01", "--commission", "50",
                   "--lambda0", "1", "--v-max", "2", "--v-points", "5", "--out", dir.string()})
                  .code,
              0);
    const auto j = read_json(dir / "policy.json");
    EXPECT_EQ(j["result"]["halted_points"], 5);
    EXPECT_EQ(run({"optimize", "--mode", "sideways", "--out", dir.string()}).code, 3);
}

TEST_F(Cli, SurfaceSchema) {
    ASSERT_EQ(run({"scale", "--surface", "--v-points", "4", "--t-points", "3", "--out", dir.string()}).code, 0);
    std::istringstream in(slurp(dir / "surface.csv"));
    const auto t = csv::Table::read(in);
    EXPECT_EQ(t.header(), (std::vector<std::string>{"T", "v", "delta"}));
    EXPECT_EQ(t.rows().size(), 12u);
}
