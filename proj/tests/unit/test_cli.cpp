#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "app.hpp"
#include "json.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result cli(std::vector<std::string> args) {
    args.insert(args.begin(), "outagewatch");
    std::ostringstream out, err;
    const int code = outagewatch::run(args, out, err);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("outagewatch_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const char* name) const { return (dir_ / name).string(); }
    static std::string data(const char* name) { return (oracle::data_dir() / name).string(); }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, CalibrateTable) {
    const Result r = cli({"calibrate", "--table"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("1/24,13.89,15.25,18.50"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("30,20.47,21.83,25.08"), std::string::npos);
    EXPECT_EQ(cli({"calibrate", "--arl0-days", "1", "--pmus", "39"}).out, "18.43\n");
}

TEST_F(CliTest, ParseDays) {
    EXPECT_DOUBLE_EQ(outagewatch::parse_days("1/24"), 1.0 / 24);
    EXPECT_DOUBLE_EQ(outagewatch::parse_days("0.5"), 0.5);
    EXPECT_THROW(outagewatch::parse_days("x"), std::exception);
    EXPECT_THROW(outagewatch::parse_days("-1"), std::exception);
}

TEST_F(CliTest, HelpAndUsageErrors) {
    EXPECT_EQ(cli({"--help"}).code, 0);
    const Result detect_help = cli({"detect", "--help"});
    EXPECT_EQ(detect_help.code, 0);
    EXPECT_NE(detect_help.out.find("--continue-after-alarm"), std::string::npos);
    EXPECT_EQ(cli({}).code, 1);
    EXPECT_EQ(cli({"detect", "--case", data("triangle.json")}).code, 1);
    EXPECT_EQ(cli({"scenarios", "--case", path("missing.json")}).code, 1);
}

TEST_F(CliTest, ScenariosListsExclusions) {
    const Result r = cli({"scenarios", "--case", data("case39.json")});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("admissible scenarios: 35"), std::string::npos);
    EXPECT_NE(r.out.find("excluded: 11"), std::string::npos);
    const Result j = cli({"scenarios", "--case", data("triangle.json"), "--json"});
    const auto doc = nlohmann::json::parse(j.out);
    EXPECT_EQ(doc["admissible"].size(), 3u);
}

TEST_F(CliTest, SimulateThenDetectAlarm) {
    const std::string stream = path("s.csv");
    Result sim = cli({"simulate", "--case", data("case39.json"), "--out", stream, "--outage-line", "10",
                      "--outage-sample", "90", "--duration", "200", "--seed", "3", "--noise", "0"});
    ASSERT_EQ(sim.code, 0) << sim.err;
    ASSERT_TRUE(fs::exists(path("s.truth.json")));

    const Result det = cli({"detect", "--case", data("case39.json"), "--stream", stream, "--report", path("r.json"),
                            "--trace", path("t.jsonl"), "--plot-data", path("p.csv")});
    EXPECT_EQ(det.code, 2) << det.err;
    std::ifstream in(path("r.json"));
    const auto report = nlohmann::json::parse(in);
    EXPECT_TRUE(report["alarm"].get<bool>());
    EXPECT_GE(report["delay_samples"].get<long>(), 0);
    EXPECT_EQ(report["config"]["pmu_count"], 39);
    EXPECT_NEAR(report["config"]["threshold"].get<double>(), 18.43, 0.005);
    EXPECT_EQ(report["top3"].size(), 3u);
    EXPECT_TRUE(report["truth_in_top3"].get<bool>());
    EXPECT_EQ(report["top3"][0]["lines"][0], 10);

    std::ifstream trace(path("t.jsonl"));
    std::string line;
    long lines = 0;
    while (std::getline(trace, line)) {
        const auto row = nlohmann::json::parse(line);
        EXPECT_TRUE(row.contains("sample") && row.contains("overall_W") && row.contains("alarm") && row.contains("top3"));
        ++lines;
    }
    EXPECT_EQ(lines, report["alarm_sample"].get<long>());
}

TEST_F(CliTest, NullStreamExitsZero) {
    const std::string stream = path("n.csv");
    ASSERT_EQ(cli({"simulate", "--case", data("case39.json"), "--out", stream, "--duration", "100", "--noise", "0"}).code, 0);
    const Result det = cli({"detect", "--case", data("case39.json"), "--stream", stream, "--mode", "dc"});
    EXPECT_EQ(det.code, 0) << det.err;
    const auto report = nlohmann::json::parse(det.out);
    EXPECT_FALSE(report["alarm"].get<bool>());
    EXPECT_EQ(report["config"]["mode"], "dc");
}

TEST_F(CliTest, LimitedPlacementInferredFromColumns) {
    const std::string stream = path("l.csv");
    ASSERT_EQ(cli({"simulate", "--case", data("case39.json"), "--pmus", "2,3,4,5,6,25,31", "--out", stream,
                   "--duration", "50", "--noise", "0"})
                  .code,
              0);
    const Result det = cli({"detect", "--case", data("case39.json"), "--stream", stream, "--arl0-days", "30"});
    const auto report = nlohmann::json::parse(det.out);
    EXPECT_EQ(report["config"]["monitored_buses"].size(), 6u);
    EXPECT_EQ(report["config"]["pmu_count"], 6);  // the reference bus has no column
}

TEST_F(CliTest, StreamErrorsExitOne) {
    std::ofstream(path("bad.csv")) << "sample,bus_1\n0,0.0\n9,0.1\n";
    const Result r = cli({"detect", "--case", data("triangle.json"), "--stream", path("bad.csv")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(CliTest, ConfigFile) {
    std::ofstream(path("cfg.ini")) << "[calibrate]\narl0-days=1/24\npmus=10\n";
    const Result r = cli({"--config", path("cfg.ini"), "calibrate"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "13.89\n");
}

TEST_F(CliTest, BatchWritesDelayTables) {
    const Result r = cli({"batch", "--case", data("case39.json"), "--runs", "2", "--lines", "1,10", "--arl0-days",
                          "1", "1/24", "--noise", "0", "--threads", "2", "--out-dir", dir_.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir_ / "batch_delays.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "batch_heatmap.csv"));
    std::ifstream in(dir_ / "batch_delays.csv");
    std::string line;
    int rows = -1;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 2 * 2 * 2);
}

TEST_F(CliTest, ConvertWritesJsonAndAngles) {
    const Result r = cli({"convert", "--case", data("case39.m"), "--out", path("c.json"), "--theta0-out", path("t0.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("warning"), std::string::npos);
    EXPECT_EQ(cli({"scenarios", "--case", path("c.json")}).code, 0);
    const Result sim = cli({"simulate", "--case", path("c.json"), "--out", path("s.csv"), "--theta0", path("t0.csv"),
                            "--voltage", "case", "--duration", "5"});
    EXPECT_EQ(sim.code, 0) << sim.err;
}
