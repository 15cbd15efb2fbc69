#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

using namespace plsearch;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "plsearch");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("plsearch_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    const auto b = read_file_bytes(p);
    return std::string(b.begin(), b.end());
}

} // namespace

TEST(CliConfig, TomlSubsetAndJsonAgree) {
    const auto toml = cli::parse_toml_subset(
        "# comment\n[index]\nwindow_frames = 300\nsigma = 0.85 # trailing\n[search]\nmode = \"tas\"\ntheta = 40\n");
    cli::Settings a;
    cli::apply_config(a, toml);
    EXPECT_EQ(a.index.window, 300u);
    EXPECT_DOUBLE_EQ(a.index.sigma, 0.85);
    EXPECT_EQ(a.mode, "tas");
    EXPECT_DOUBLE_EQ(a.theta, 40.0);

    nlohmann::json flat = nlohmann::json::object();
    cli::flatten_into(nlohmann::json::parse(R"({"index": {"window_frames": 300, "sigma": 0.85}, "mode": "tas", "theta": 40})"), flat);
    cli::Settings b;
    cli::apply_config(b, flat);
    EXPECT_EQ(b.index, a.index);
    EXPECT_EQ(b.mode, a.mode);

    cli::Settings c;
    EXPECT_THROW(cli::apply_config(c, nlohmann::json{{"windw_frames", 3}}), ConfigError);
    EXPECT_THROW(cli::apply_config(c, nlohmann::json{{"sigma", "high"}}), ConfigError);
}

TEST(CliExitCodes, UsageAndDataErrors) {
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({"validate-index"}).code, 1);
    EXPECT_EQ(run_cli({"--help"}).code, 0);

    const auto dir = scratch("exit");
    EXPECT_EQ(run_cli({"validate-index", "--index", (dir / "missing.pli").string()}).code, 2);
    write_file_bytes(dir / "junk.pli", std::vector<std::uint8_t>(64, 7));
    EXPECT_EQ(run_cli({"validate-index", "--index", (dir / "junk.pli").string()}).code, 2);

    std::ofstream(dir / "bad.toml") << "no_such_key = 1\n";
    EXPECT_EQ(run_cli({"--config", (dir / "bad.toml").string(), "validate-index", "--index", "x"}).code, 1);
    fs::remove_all(dir);
}

TEST(CliExitCodes, InvariantViolationExitsWithThree) {
    StreamSpec spec;
    spec.length = 2000;
    spec.alphabet = 16;
    spec.max_support = 8;
    spec.min_dwell = 50;
    spec.max_dwell = 300;
    const auto s = synth_codeword_stream(spec, 1);
    IndexParams p;
    p.window = 100;
    p.segments = 4;
    p.delta = 10;
    auto bytes = serialize_index(build_index(s, p));
    bytes[53] = 16;  // first codeword outside the alphabet
    const auto body = std::span<const std::uint8_t>(bytes).first(bytes.size() - 8);
    const auto crc = crc64(body);
    for (int i = 0; i < 8; ++i) bytes[bytes.size() - 8 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(crc >> (8 * i));
    const auto dir = scratch("invariant");
    write_file_bytes(dir / "bad.pli", bytes);
    const auto r = run_cli({"validate-index", "--index", (dir / "bad.pli").string()});
    EXPECT_EQ(r.code, 3) << r.err;
    fs::remove_all(dir);
}

TEST(CliGen, SameSeedGivesIdenticalFiles) {
    const auto a = scratch("gen_a"), b = scratch("gen_b"), c = scratch("gen_c");
    const std::vector<std::string> common = {"--stored-seconds", "20", "--queries", "2", "--query-seconds", "3"};
    auto args = [&](const fs::path& dir, const std::string& seed) {
        std::vector<std::string> v = {"--seed", seed, "gen", "--out-dir", dir.string()};
        v.insert(v.end(), common.begin(), common.end());
        return v;
    };
    ASSERT_EQ(run_cli(args(a, "5")).code, 0);
    ASSERT_EQ(run_cli(args(b, "5")).code, 0);
    ASSERT_EQ(run_cli(args(c, "6")).code, 0);
    for (const char* f : {"stored.wav", "query_00.wav", "query_01.wav", "truth.json"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    EXPECT_NE(slurp(a / "stored.wav"), slurp(c / "stored.wav"));
    const auto truth = nlohmann::json::parse(slurp(a / "truth.json"));
    EXPECT_EQ(truth["queries"].size(), 2u);
    EXPECT_EQ(truth["queries"][0]["copies"].size(), 1u);
    for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST(CliPipeline, PlantedCopiesAreFoundAndModesAgree) {
    const auto dir = scratch("pipeline");
    const auto d = [&](const char* f) { return (dir / f).string(); };
    ASSERT_EQ(run_cli({"--seed", "3", "gen", "--out-dir", d(""), "--stored-seconds", "60", "--queries", "2",
                       "--query-seconds", "5"}).code, 0);
    auto r = run_cli({"build-codebook", "--input", d("stored.wav"), "--size", "16", "--out", d("cb.bin"), "--trace",
                      d("trace.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    r = run_cli({"--threads", "2", "build-index", "--input", d("stored.wav"), "--codebook", d("cb.bin"),
                 "--window-frames", "400", "--segments", "12", "--delta", "20", "--block", "20", "--out", d("idx.pli"),
                 "--stats", d("stats.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    r = run_cli({"validate-index", "--index", d("idx.pli")});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("index ok"), std::string::npos);

    const auto truth = nlohmann::json::parse(slurp(dir / "truth.json"));
    for (std::size_t q = 0; q < 2; ++q) {
        const std::string query = d(("query_0" + std::to_string(q) + ".wav").c_str());
        const std::string json = d(("hits_" + std::to_string(q) + ".json").c_str());
        r = run_cli({"search", "--index", d("idx.pli"), "--codebook", d("cb.bin"), "--query", query, "--theta", "30",
                     "--json", json});
        ASSERT_EQ(r.code, 0) << r.err;
        const auto hits = nlohmann::json::parse(slurp(json));
        const long expect = truth["queries"][q]["copies"][0]["start_frame"].get<long>();
        bool found = false;
        for (const auto& m : hits["matches"]) found |= std::abs(m["position_frames"].get<long>() - expect) <= 2;
        EXPECT_TRUE(found) << "query " << q;
    }

    r = run_cli({"bench", "--index", d("idx.pli"), "--codebook", d("cb.bin"), "--query", d("query_00.wav"),
                 d("query_01.wav"), "--theta", "10", "60", "--csv", d("bench.csv")});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("match sets agree"), std::string::npos);

    // A different codebook is refused.
    ASSERT_EQ(run_cli({"build-codebook", "--input", d("query_00.wav"), "--size", "8", "--out", d("other.bin")}).code, 0);
    r = run_cli({"search", "--index", d("idx.pli"), "--codebook", d("other.bin"), "--query", d("query_00.wav")});
    EXPECT_EQ(r.code, 2);
    fs::remove_all(dir);
}
