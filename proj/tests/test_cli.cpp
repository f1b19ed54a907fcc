#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "tg/cli.hpp"

using namespace tg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string corpus_path(const std::string& stem) {
    return std::string(TG_CORPUS_DIR) + "/" + stem + ".gasm";
}

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

CliRun run(std::vector<std::string> args) {
    std::ostringstream out, err;
    CliRun r;
    r.code = run_cli(std::move(args), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

} // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"verify"}).code == 2);
    CHECK(run({"difftest", corpus_path("ex1"), "--seed", "99"}).code == 2);
    CHECK(run({"verify", "/nonexistent/file.gasm"}).code == 2);
}

TEST_CASE("help exits cleanly") {
    CliRun r = run({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("verify") != std::string::npos);
    CHECK(r.out.find("gadgets") != std::string::npos);
}

TEST_CASE("verify reports a clean corpus program") {
    CliRun r = run({"verify", corpus_path("ex1")});
    CHECK(r.code == 0);

    CliRun j = run({"verify", corpus_path("ex1"), "--json"});
    CHECK(j.code == 0);
    json parsed = json::parse(j.out);
    CHECK(parsed["ok"] == true);
    CHECK(parsed["errors"].empty());
}

TEST_CASE("gadgets lists endpoints and writes artifacts") {
    CliRun r = run({"gadgets", corpus_path("ex1"), "--json"});
    REQUIRE(r.code == 0);
    json parsed = json::parse(r.out);
    REQUIRE(parsed["endpoints"].size() == 1);
    const json& ep = parsed["endpoints"][0];
    CHECK(ep["endpoint"] == "Ex1.doGet/2");
    CHECK(ep["status"] == "ok");
    CHECK(ep["gadgets"].size() == 2);
    for (const json& g : ep["gadgets"]) CHECK(g["hash"].get<std::string>().size() == 16);

    fs::path dir = fs::temp_directory_path() / "tgx-cli-test";
    fs::remove_all(dir);
    CliRun w = run({"gadgets", corpus_path("ex1"), "--out", dir.string(), "--emit-baselines"});
    REQUIRE(w.code == 0);
    fs::path ep_dir = dir / "Ex1.doGet_2";
    CHECK(fs::exists(ep_dir / "function.pseudo"));
    CHECK(fs::exists(ep_dir / "slice0.pseudo"));
    int gasm = 0, pseudo = 0;
    for (const auto& e : fs::directory_iterator(ep_dir)) {
        if (e.path().extension() == ".gasm") ++gasm;
        if (e.path().extension() == ".pseudo") ++pseudo;
    }
    CHECK(gasm == 2);
    CHECK(pseudo == 2 + 2); // per-gadget renderings plus the two baselines
    fs::remove_all(dir);
}

TEST_CASE("difftest passes the corpus and honours --seed") {
    CliRun r = run({"difftest", corpus_path("ex5"), "--json"});
    REQUIRE(r.code == 0);
    json parsed = json::parse(r.out);
    CHECK(parsed["all_pass"] == true);
    CHECK(parsed["endpoints"][0]["pass_rate"] == 1.0);
    REQUIRE(parsed["endpoints"][0]["inputs"].size() >= 2);

    CliRun one = run({"difftest", corpus_path("ex5"), "--seed", "1", "--json"});
    REQUIRE(one.code == 0);
    json filtered = json::parse(one.out);
    CHECK(filtered["endpoints"][0]["inputs"].size() == 1);
    CHECK(filtered["endpoints"][0]["inputs"][0]["seed"] == 1);
}

TEST_CASE("classify flags the vulnerable and clears the benign") {
    CliRun vuln = run({"classify", corpus_path("ex1"), "--json"});
    CHECK(vuln.code == 1);
    json parsed = json::parse(vuln.out);
    CHECK(parsed["endpoints"][0]["flagged"] == true);
    CHECK(parsed["endpoints"][0]["score"] == 1.0);

    CliRun benign = run({"classify", corpus_path("ex7"), "--json"});
    CHECK(benign.code == 0);
    json b = json::parse(benign.out);
    CHECK(b["endpoints"][0]["flagged"] == false);

    // A threshold above every score suppresses the flag.
    CliRun high = run({"classify", corpus_path("ex1"), "--threshold", "1.5"});
    CHECK(high.code == 0);
    CHECK(high.out.find("clean") != std::string::npos);
}

TEST_CASE("stats prints the three-way comparison") {
    CliRun r = run({"stats", corpus_path("exs1"), corpus_path("exs3"), "--json"});
    REQUIRE(r.code == 0);
    json parsed = json::parse(r.out);
    REQUIRE(parsed["programs"].size() == 2);
    for (const json& p : parsed["programs"]) {
        CHECK(p["trace_gadget_tokens"].get<double>() <= p["code_gadget_tokens"].get<double>());
        CHECK(p["code_gadget_tokens"].get<double>() <= p["function_tokens"].get<double>());
    }
    CHECK(parsed["median_reduction"].get<double>() >= 0.20);

    CliRun text = run({"stats", corpus_path("exs1")});
    CHECK(text.code == 0);
    CHECK(text.out.find("median reduction") != std::string::npos);
}

TEST_CASE("emulation limit flags reach the pipeline") {
    // A tiny state budget forces the many-branch program into the timeout
    // bucket instead of completing.
    CliRun r = run({"gadgets", corpus_path("exs3"), "--max-states", "4", "--json"});
    REQUIRE(r.code == 0);
    json parsed = json::parse(r.out);
    CHECK(parsed["endpoints"][0]["status"] == "timeout");
}
