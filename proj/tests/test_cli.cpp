// Drives the built command-line binary end to end. The binary path comes in
// through the TKR_CLI_PATH compile definition set by the build.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "support/synthetic.hpp"

#ifndef TKR_CLI_PATH
#error "TKR_CLI_PATH must point at the built binary"
#endif

namespace {

namespace fs = std::filesystem;

struct RunResult {
    int exit_code;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run(const std::string& args, const std::string& env = "") {
    fs::path out = fs::temp_directory_path() / "tkr_cli_stdout";
    fs::path err = fs::temp_directory_path() / "tkr_cli_stderr";
    std::string cmd = env + " " + std::string(TKR_CLI_PATH) + " " + args + " > " +
                      out.string() + " 2> " + err.string();
    int status = std::system(cmd.c_str());
    int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return {code, slurp(out), slurp(err)};
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
    std::ofstream out(p);
    for (const std::string& l : lines) out << l << "\n";
}

// handcrafted 3-fact graph plus a valid-layer padding fact (timestamp 3)
fs::path handcrafted_dir() {
    fs::path dir = fs::temp_directory_path() / "tkr_cli_handcrafted";
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_lines(dir / "train.txt", fixtures::handcrafted_lines());
    write_lines(dir / "valid.txt", {fixtures::quad_line("Z", "r_pad", "Z", "3")});
    write_lines(dir / "test.txt", {});
    return dir;
}

fs::path desk_dir() {
    fs::path dir = fs::temp_directory_path() / "tkr_cli_desk";
    if (fs::exists(dir / "train.txt")) return dir;
    fs::create_directories(dir);
    auto splits = fixtures::desk_lines();
    write_lines(dir / "train.txt", splits[0]);
    write_lines(dir / "valid.txt", splits[1]);
    write_lines(dir / "test.txt", splits[2]);
    return dir;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(run("").exit_code == 1);
    CHECK(run("no-such-command").exit_code == 1);
    CHECK(run("oracle --graph /nonexistent --query x").exit_code == 1);
    CHECK(run("--help").exit_code == 0);
}

TEST_CASE("stats-graph emits the dictionary sizes") {
    fs::path dir = handcrafted_dir();
    RunResult r = run("stats-graph --graph " + dir.string());
    REQUIRE(r.exit_code == 0);
    nlohmann::json j = nlohmann::json::parse(r.out);
    CHECK(j["entities"] == 4);
    CHECK(j["relations"] == 2);
    CHECK(j["timestamps"] == 3);
    CHECK(j["splits"]["train"]["input_facts"] == 3);
}

TEST_CASE("oracle answers with surface strings") {
    fs::path dir = handcrafted_dir();
    std::string g = " --graph " + dir.string();

    RunResult r = run("oracle" + g + " --layer train --query \"before(Pt(e:A, r:r, e:C))\"");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out == "1\n");

    // empty answer: exit 0, no lines
    r = run("oracle" + g + " --layer train --query \"Pt(e:C, r:r, e:A)\"");
    CHECK(r.exit_code == 0);
    CHECK(r.out.empty());

    // unknown surface string names the culprit
    r = run("oracle" + g + " --layer train --query \"Pe(e:MISSING, r:r, t:1)\"");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("MISSING") != std::string::npos);

    // ill-typed query
    r = run("oracle" + g + " --layer train --query \"before(Pe(e:A, r:r, t:1))\"");
    CHECK(r.exit_code == 1);

    // inverse relations via the _inv suffix
    r = run("oracle" + g + " --layer train --query \"Pe(e:C, r:r_inv, t:2)\"");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out == "A\nB\n");
}

TEST_CASE("sample is byte-deterministic and honest about exhaustion") {
    fs::path dir = handcrafted_dir();
    fs::path plan = fs::temp_directory_path() / "tkr_cli_plan.json";
    std::ofstream(plan) << R"({"Pe": [5, 0, 0], "Pt": [5, 0, 0]})";
    fs::path d1 = fs::temp_directory_path() / "tkr_cli_ds1";
    fs::path d2 = fs::temp_directory_path() / "tkr_cli_ds2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    std::string base = "sample --graph " + dir.string() + " --plan " + plan.string() + " --seed 5";
    CHECK(run(base + " --out " + d1.string()).exit_code == 0);
    CHECK(run(base + " --out " + d2.string()).exit_code == 0);
    CHECK(slurp(d1 / "train.jsonl") == slurp(d2 / "train.jsonl"));
    CHECK_FALSE(slurp(d1 / "train.jsonl").empty());

    RunResult r = run("stats-data --data " + d1.string());
    REQUIRE(r.exit_code == 0);
    CHECK(nlohmann::json::parse(r.out)["train"]["Pe"]["count"] == 5);

    // unknown structure: exit 1
    std::ofstream(plan) << R"({"NoSuch": [1, 0, 0]})";
    CHECK(run(base + " --out " + d1.string() + "_x").exit_code == 1);

    // the test layer adds no facts here, so non-trivial test records cannot
    // exist: partial output, exit 2
    std::ofstream(plan) << R"({"Pe": [2, 0, 0], "Pt": [0, 0, 2]})";
    fs::remove_all(d2);
    r = run(base + " --out " + d2.string() + " --max-attempts 16");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("Pt") != std::string::npos);
}

TEST_CASE("train, eval, answer and probe-time pipeline") {
    fs::path graph = desk_dir();
    fs::path plan = fs::temp_directory_path() / "tkr_cli_plan2.json";
    std::ofstream(plan) << R"({"Pe": [40, 4, 4], "Pt": [40, 4, 4]})";
    fs::path data = fs::temp_directory_path() / "tkr_cli_ds_desk";
    fs::remove_all(data);
    REQUIRE(run("sample --graph " + graph.string() + " --plan " + plan.string() +
                " --out " + data.string() + " --seed 2")
                .exit_code == 0);

    fs::path ckpt = fs::temp_directory_path() / "tkr_cli.ckpt";
    fs::path log = fs::temp_directory_path() / "tkr_cli.log";
    RunResult r = run("train --data " + data.string() + " --graph " + graph.string() +
                      " --preset desk --dim 8 --steps 40 --log-every 20 --ckpt-out " +
                      ckpt.string() + " --log " + log.string());
    REQUIRE(r.exit_code == 0);
    // log: line-delimited step,loss,wall
    std::string logged = slurp(log);
    CHECK(std::count(logged.begin(), logged.end(), '\n') == 2);
    CHECK(std::count(logged.begin(), logged.end(), ',') == 4);

    fs::path csv = fs::temp_directory_path() / "tkr_cli_eval.csv";
    r = run("eval --data " + data.string() + " --graph " + graph.string() + " --ckpt " +
            ckpt.string() + " --split valid --out " + csv.string() + " --threads 2");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("MRR") != std::string::npos);
    std::string rows = slurp(csv);
    // (Pe + Pt + macro + micro) x 4 metrics + header
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 1 + 4 * 4);

    // answer: distances ascending, topk respected
    r = run("answer --graph " + graph.string() + " --ckpt " + ckpt.string() +
            " --query \"Pe(e:e1, r:r1, t:t5)\" --topk 7");
    REQUIRE(r.exit_code == 0);
    std::istringstream lines(r.out);
    std::string line;
    double prev = -1.0;
    int n = 0;
    while (std::getline(lines, line)) {
        double d = std::stod(line.substr(line.find('\t') + 1));
        CHECK(d >= prev);
        prev = d;
        ++n;
    }
    CHECK(n == 7);

    // probe-time: one row per timestamp plus header, entity query rejected
    r = run("probe-time --graph " + graph.string() + " --ckpt " + ckpt.string() +
            " --pt-query \"Pt(e:e1, r:r1, e:e2)\"");
    REQUIRE(r.exit_code == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1 + 20);
    CHECK(r.out.rfind("t,d_base,d_after,d_before", 0) == 0);
    CHECK(run("probe-time --graph " + graph.string() + " --ckpt " + ckpt.string() +
              " --pt-query \"Pe(e:e1, r:r1, t:t5)\"")
              .exit_code == 1);

    // checkpoint/graph mismatch is a data error
    fs::path other = handcrafted_dir();
    CHECK(run("answer --graph " + other.string() + " --ckpt " + ckpt.string() +
              " --query \"Pe(e:A, r:r, t:1)\"")
              .exit_code == 1);
}

TEST_CASE("environment variable and config file supply defaults") {
    fs::path dir = handcrafted_dir();
    RunResult r = run("oracle --layer train --query \"Pe(e:A, r:r, t:1)\"",
                      "TKR_DATA_DIR=" + dir.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out == "B\n");

    fs::path conf = fs::temp_directory_path() / "tkr_cli.toml";
    std::ofstream(conf) << "threads=2\n[stats-graph]\ngraph=\"" << dir.string() << "\"\n";
    r = run("--config " + conf.string() + " stats-graph");
    REQUIRE(r.exit_code == 0);
    CHECK(nlohmann::json::parse(r.out)["entities"] == 4);
}
