#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "acv/cli.hpp"
#include "acv/config.hpp"

using namespace acv;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("acv_cli_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int n = 0;
        return n;
    }
};

}  // namespace

TEST_CASE("config parse, getters and serialize round trip") {
    const std::string text =
        "# comment\n"
        "seed=42\n"
        "optimizer.model.lr = 0.01\n"
        "static.checkpoints=10,200,1000\n"
        "\n"
        "model.kind=logistic\n";
    const Config config = Config::parse_string(text);
    CHECK(config.get_u64("seed", 0) == 42);
    CHECK(config.get_double("optimizer.model.lr", 0.0) == doctest::Approx(0.01));
    CHECK(config.get_int_list("static.checkpoints", {}) == std::vector<int>{10, 200, 1000});
    CHECK(config.get_str("model.kind", "") == "logistic");
    CHECK(config.get_int("missing", 7) == 7);

    // fixed point: parse(serialize(c)) == c
    const Config again = Config::parse_string(config.serialize());
    CHECK(again.serialize() == config.serialize());
    CHECK(again.hash() == config.hash());
}

TEST_CASE("config rejects malformed and duplicate input") {
    CHECK_THROWS_AS(Config::parse_string("just a line\n"), std::runtime_error);
    CHECK_THROWS_AS(Config::parse_string("a=1\na=2\n"), std::runtime_error);
    const Config config = Config::parse_string("k=abc\n");
    CHECK_THROWS_AS(config.get_int("k", 0), std::runtime_error);
    CHECK_THROWS_AS(config.get_double("k", 0.0), std::runtime_error);
}

TEST_CASE("config hash distinguishes different content") {
    const Config a = Config::parse_string("seed=1\n");
    const Config b = Config::parse_string("seed=2\n");
    CHECK(a.hash() != b.hash());
}

TEST_CASE("cli usage errors exit with code 2") {
    CHECK(run_command({}) == 2);
    CHECK(run_command({"unknown-subcommand"}) == 2);
    CHECK(run_command({"theorem-check", "--not.a.key=1"}) == 2);
    CHECK(run_command({"theorem-check", "--seed=1", "--seed=2"}) == 2);
    CHECK(run_command({"theorem-check", "--config", "/nonexistent.cfg"}) == 2);
    CHECK(run_command({"theorem-check", "stray"}) == 2);
}

TEST_CASE("cli config files with unknown keys are rejected") {
    TempDir dir;
    const fs::path cfg = dir.path / "bad.cfg";
    std::ofstream(cfg) << "mystery.key=1\n";
    CHECK(run_command({"theorem-check", "--config", cfg.string()}) == 2);
}

TEST_CASE("theorem-check happy path writes the trajectory table and manifest") {
    TempDir dir;
    const std::string out = (dir.path / "quad").string();
    const int code = run_command({"theorem-check", "--theorem.steps=20", "--theorem.seeds=5",
                                  "--theorem.cv_scale=0.5", "--output.path=" + out});
    CHECK(code == 0);

    const std::string csv = slurp(out + ".csv");
    CHECK(csv.rfind("# config_hash=", 0) == 0);
    CHECK(csv.find("t,empirical,bound,seeds") != std::string::npos);
    CHECK(csv.find("\n0,") != std::string::npos);
    CHECK(csv.find("\n20,") != std::string::npos);

    const std::string manifest = slurp(out + ".manifest.cfg");
    CHECK(manifest.find("subcommand=theorem-check") != std::string::npos);
    CHECK(manifest.find("artifact.version=") != std::string::npos);
    CHECK(manifest.find("theorem.cv_scale=0.5") != std::string::npos);
}

TEST_CASE("identical invocations produce byte-identical outputs") {
    TempDir dir;
    const std::string out = (dir.path / "a").string();
    const std::vector<std::string> args = {"theorem-check",        "--theorem.steps=30",
                                           "--theorem.seeds=7",    "--theorem.cv_scale=0.5",
                                           "--seed=9",             "--output.path=" + out};
    REQUIRE(run_command(args) == 0);
    const std::string first_csv = slurp(out + ".csv");
    const std::string first_manifest = slurp(out + ".manifest.cfg");
    REQUIRE(run_command(args) == 0);
    CHECK(slurp(out + ".csv") == first_csv);
    CHECK(slurp(out + ".manifest.cfg") == first_manifest);
}

TEST_CASE("runtime failures remove partial outputs and exit with code 1") {
    TempDir dir;
    const std::string out = (dir.path / "broken").string();
    const int code = run_command({"train", "--data.csv=/nonexistent/data.csv",
                                  "--train.iterations=2", "--output.path=" + out});
    CHECK(code == 1);
    CHECK(!fs::exists(out + ".csv"));
    CHECK(!fs::exists(out + ".manifest.cfg"));
}

TEST_CASE("flag overrides take precedence over the config file") {
    TempDir dir;
    const fs::path cfg = dir.path / "run.cfg";
    std::ofstream(cfg) << "theorem.steps=10\ntheorem.seeds=3\ntheorem.cv_scale=0.5\n";
    const std::string out = (dir.path / "o").string();
    REQUIRE(run_command({"theorem-check", "--config", cfg.string(), "--theorem.steps=4",
                         "--output.path=" + out}) == 0);
    const std::string csv = slurp(out + ".csv");
    CHECK(csv.find("\n4,") != std::string::npos);
    CHECK(csv.find("\n5,") == std::string::npos);
    // the manifest echoes the effective configuration
    const std::string manifest = slurp(out + ".manifest.cfg");
    CHECK(manifest.find("theorem.steps=4") != std::string::npos);
}
