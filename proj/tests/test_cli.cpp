#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct RunResult {
    int rc{-1};
    std::string out;
};

RunResult run(const std::string& args) {
    const std::string cmd = std::string(DTLS_CLI_PATH) + " " + args + " 2>/dev/null";
    RunResult r;
    FILE* p = popen(cmd.c_str(), "r");
    if (p == nullptr) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int st = pclose(p);
    r.rc = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string slurp(const fs::path& f) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string l; std::getline(ss, l);) out.push_back(l);
    return out;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("dtls_cli_" + std::to_string(::getpid()) + "_" +
                                           ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string at(const std::string& name) const { return (dir / name).string(); }
    fs::path dir;
};

}  // namespace

TEST_F(Cli, RatesWritesCsvAndMetadata) {
    const RunResult r = run("--out " + at("r") + " rates --omega 2 --eps 4.1 --beta 10 --kappa 0.01 --amp-range 0:2:0.5");
    ASSERT_EQ(r.rc, 0);
    const auto rows = lines(slurp(at("r.csv")));
    ASSERT_EQ(rows.size(), 6u);
    EXPECT_EQ(rows[0], "A,grel_rwa,grel_vv2,gdeph_rwa,gdeph_vv2");
    const json meta = json::parse(slurp(at("r.json")));
    EXPECT_EQ(meta.at("command"), "rates");
    EXPECT_EQ(meta.at("format_version"), 1);
    EXPECT_TRUE(meta.at("library_version").is_string());
    EXPECT_DOUBLE_EQ(meta.at("params").at("eps").get<double>(), 4.1);
    EXPECT_DOUBLE_EQ(meta.at("params").at("kappa").get<double>(), 0.01);
    EXPECT_TRUE(meta.contains("argv"));
    // A = 0 lies on a zero of the dressed coupling: no relaxation in the RWA
    const std::string first = rows[1];
    EXPECT_EQ(first.substr(0, 2), "0,");
    std::stringstream ss(first);
    std::string a, grel;
    std::getline(ss, a, ',');
    std::getline(ss, grel, ',');
    EXPECT_LT(std::stod(grel), 1e-30);
}

TEST_F(Cli, OutputIsDeterministic) {
    const std::string args = " spectrum --omega 2 --amp 3 --eps-range 0:8:0.5";
    ASSERT_EQ(run("--out " + at("a") + args).rc, 0);
    ASSERT_EQ(run("--threads 2 --out " + at("b") + args).rc, 0);
    const std::string a = slurp(at("a.csv"));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(at("b.csv")));
    EXPECT_EQ(lines(a)[0].substr(0, 14), "eps,m,e_numeri");
    EXPECT_EQ(lines(a).size(), 18u);
}

TEST_F(Cli, MetadataSufficesToRerun) {
    ASSERT_EQ(run("--out " + at("x") + " xcoeffs --omega 2 --eps 4 --amp-range 0:4:1 --harmonics 0,2").rc, 0);
    const json meta = json::parse(slurp(at("x.json")));
    std::string args;
    const auto& argv = meta.at("argv");
    for (std::size_t i = 1; i < argv.size(); ++i) {
        std::string s = argv[i].get<std::string>();
        if (s == at("x")) s = at("y");
        args += " '" + s + "'";
    }
    ASSERT_EQ(run(args).rc, 0);
    EXPECT_EQ(slurp(at("x.csv")), slurp(at("y.csv")));
}

TEST_F(Cli, CsvToStdout) {
    const RunResult r = run("--out - dynamics --eps 4 --omega 4 --amp 4.1 --tiers rwa,vv2 --t-max 10 --points 11");
    ASSERT_EQ(r.rc, 0);
    const auto rows = lines(r.out);
    ASSERT_EQ(rows.size(), 12u);
    EXPECT_EQ(rows[1].substr(0, 2), "0,");
    EXPECT_NE(rows[1].find(",1,1"), std::string::npos);
}

TEST_F(Cli, ConfigFileWithCommandLinePrecedence) {
    {
        std::ofstream cfg(at("run.ini"));
        cfg << "[rates]\nomega = 2\neps = 4.1\nkappa = 0.02\nbeta = 5\n";
    }
    ASSERT_EQ(run("--config " + at("run.ini") + " --out " + at("c") + " rates --kappa 0.03 --amp-range 1:2:1").rc, 0);
    const json meta = json::parse(slurp(at("c.json")));
    EXPECT_DOUBLE_EQ(meta.at("params").at("kappa").get<double>(), 0.03);
    EXPECT_DOUBLE_EQ(meta.at("params").at("beta").get<double>(), 5.0);
    EXPECT_DOUBLE_EQ(meta.at("params").at("eps").get<double>(), 4.1);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run("--bogus").rc, 2);
    EXPECT_EQ(run("nosuchcommand").rc, 2);
    EXPECT_EQ(run("").rc, 2);
    EXPECT_EQ(run("--out " + at("e") + " rates --kappa -1 --amp-range 0:1:1").rc, 2);
    EXPECT_EQ(run("--out " + at("e") + " rates --amp-range 1:0:0.1").rc, 2);
    EXPECT_EQ(run("--out " + at("e") + " rates --amp-range abc").rc, 2);
    EXPECT_EQ(run("--config " + at("missing.ini") + " rates").rc, 2);
    EXPECT_EQ(run("--out /nonexistent_dir/x rates --amp-range 0:1:1").rc, 2);
    // no resonance root without driving
    EXPECT_EQ(run("--out " + at("e") + " scenario dito --m 1 --omega 1 --amp 0 --t-max 10 --points 11").rc, 3);
    EXPECT_EQ(run("--help").rc, 0);
}

TEST_F(Cli, ScenarioReport) {
    ASSERT_EQ(run("--out " + at("s") + " scenario cdt --m 3 --omega 2 --kappa 0 --t-max 20 --points 201").rc, 0);
    const json meta = json::parse(slurp(at("s.json")));
    EXPECT_NEAR(meta.at("results").at("amp").get<double>(), 12.7603, 1e-4);
    EXPECT_LT(meta.at("results").at("omega_vv2").get<double>(), 1e-6);
    const auto rows = lines(slurp(at("s.csv")));
    EXPECT_EQ(rows.size(), 202u);
    EXPECT_EQ(rows[0], "t,P_numeric,P_rwa,P_vv2");
}

TEST_F(Cli, FourierAndValidity) {
    ASSERT_EQ(run("--out " + at("f") + " fourier --eps 4 --omega 4 --amp 4.1 --tiers rwa --t-max 600 --points 6001").rc, 0);
    const json f = json::parse(slurp(at("f.json")));
    ASSERT_TRUE(f.at("spectra").at("rwa").contains("peaks"));
    ASSERT_EQ(run("--out " + at("v") + " validity --eps 4 --omega-range 0.5:1:0.5 --amp-range 1:3:1").rc, 0);
    const auto rows = lines(slurp(at("v.csv")));
    EXPECT_EQ(rows.size(), 7u);
}
