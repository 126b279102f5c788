#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridmtl/common.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = GRIDMTL_CLI_PATH;
const std::string kFixtures = GRIDMTL_FIXTURE_DIR;

int run(const std::string& args, const std::string& log = "cli_log.txt") {
    std::string cmd = kCli + " " + args + " >" + log + " 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string write_smoke_config(const std::string& path, const std::string& out_dir,
                               std::uint64_t seed = 12) {
    std::string text = slurp(kFixtures + "/config_smoke.json");
    auto fpos = text.find("FIXTURES");
    text.replace(fpos, 8, kFixtures);
    auto opos = text.find("\"cli_out\"");
    text.replace(opos, 9, "\"" + out_dir + "\"");
    auto spos = text.find("\"seed\": 12");
    text.replace(spos, 10, "\"seed\": " + std::to_string(seed));
    std::ofstream out(path);
    out << text;
    return path;
}

} // namespace

TEST_CASE("bad invocations exit with the configuration code") {
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("generate --config does_not_exist.json") == 2);

    std::ofstream bad("cli_bad_config.json");
    bad << R"({"grid_path": "g.json", "sampler": {"std_dev": 1}})";
    bad.close();
    CHECK(run("generate --config cli_bad_config.json") == 2);
    CHECK(slurp("cli_log.txt").find("std_dev") != std::string::npos);
}

TEST_CASE("generate is idempotent and writes the documented artifacts") {
    fs::remove_all("cli_out_a");
    write_smoke_config("cli_smoke_a.json", "cli_out_a");
    REQUIRE(run("generate --config cli_smoke_a.json") == 0);

    CHECK(fs::exists("cli_out_a/dataset_full.ds"));
    CHECK(fs::exists("cli_out_a/dataset_train.ds"));
    CHECK(fs::exists("cli_out_a/dataset_test.ds"));
    CHECK(fs::exists("cli_out_a/generation_report.json"));

    auto report = nlohmann::json::parse(slurp("cli_out_a/generation_report.json"));
    CHECK(report.contains("class_balance"));
    CHECK(report["class_balance"].contains("transient"));
    CHECK(report.contains("dataset_digest"));

    std::uint64_t digest1 = gridmtl::fnv1a64_file("cli_out_a/dataset_full.ds");
    REQUIRE(run("generate --config cli_smoke_a.json") == 0);
    CHECK(gridmtl::fnv1a64_file("cli_out_a/dataset_full.ds") == digest1);

    SUBCASE("the seed env var overrides the config") {
        int status = std::system(("GRIDMTL_SEED=777 " + kCli +
                                  " generate --config cli_smoke_a.json >cli_log.txt 2>&1")
                                     .c_str());
        REQUIRE(WEXITSTATUS(status) == 0);
        CHECK(gridmtl::fnv1a64_file("cli_out_a/dataset_full.ds") != digest1);
        REQUIRE(run("generate --config cli_smoke_a.json") == 0); // restore
    }

    SUBCASE("train, evaluate and report run end to end") {
        REQUIRE(run("train --config cli_smoke_a.json") == 0);
        CHECK(fs::exists("cli_out_a/model.gmtl"));
        CHECK(fs::exists("cli_out_a/train_report.csv"));

        std::string csv = slurp("cli_out_a/train_report.csv");
        CHECK(csv.rfind("epoch,lr,", 0) == 0);

        REQUIRE(run("evaluate --config cli_smoke_a.json --plots") == 0);
        CHECK(fs::exists("cli_out_a/eval_report.csv"));
        CHECK(fs::exists("cli_out_a/eval_report.svg"));
        CHECK(slurp("cli_out_a/eval_report.csv").find("overall,conjunction") != std::string::npos);

        REQUIRE(run("report --input cli_out_a/eval_report.csv --plots --out-svg cli_out_a/summary.svg") == 0);
        CHECK(fs::exists("cli_out_a/summary.svg"));

        // second train run reproduces the model bit for bit
        std::uint64_t model_digest = gridmtl::fnv1a64_file("cli_out_a/model.gmtl");
        REQUIRE(run("train --config cli_smoke_a.json") == 0);
        CHECK(gridmtl::fnv1a64_file("cli_out_a/model.gmtl") == model_digest);

        // weighting override flips the report digest
        REQUIRE(run("train --config cli_smoke_a.json --weighting adaptive") == 0);
        CHECK(gridmtl::fnv1a64_file("cli_out_a/model.gmtl") != model_digest);
    }

    SUBCASE("evaluate rejects a dataset with a different layout") {
        fs::remove_all("cli_out_b");
        write_smoke_config("cli_smoke_b.json", "cli_out_b");
        std::string text = slurp("cli_smoke_b.json");
        auto pos = text.find("grid_3bus");
        text.replace(pos, 9, "wscc9");
        std::ofstream out("cli_smoke_b.json");
        out << text;
        out.close();
        REQUIRE(run("generate --config cli_smoke_b.json") == 0);
        REQUIRE(run("train --config cli_smoke_a.json") == 0);
        CHECK(run("evaluate --config cli_smoke_a.json --model cli_out_a/model.gmtl --dataset "
                  "cli_out_b/dataset_test.ds") == 1);
    }
}

TEST_CASE("leaveout commands emit the study tables") {
    fs::remove_all("cli_out_l");
    // three topologies so the topology study has enough groups
    std::string path = write_smoke_config("cli_smoke_l.json", "cli_out_l", 21);
    std::string text = slurp(path);
    auto pos = text.find("\"topologies\": 2");
    text.replace(pos, 15, "\"topologies\": 3");
    std::ofstream out(path);
    out << text;
    out.close();

    REQUIRE(run("generate --config cli_smoke_l.json") == 0);
    REQUIRE(run("leaveout --config cli_smoke_l.json --mode category") == 0);
    std::string cat = slurp("cli_out_l/leaveout_category.csv");
    CHECK(std::count(cat.begin(), cat.end(), '\n') == 5); // header + 4 criteria rows
    CHECK(cat.find("small_signal") != std::string::npos);

    REQUIRE(run("leaveout --config cli_smoke_l.json --mode topology") == 0);
    std::string topo = slurp("cli_out_l/leaveout_topology.csv");
    CHECK(topo.find("mean,") != std::string::npos);
    CHECK(topo.find("variance,") != std::string::npos);
    CHECK(std::count(topo.begin(), topo.end(), '\n') == 6); // header + 3 rows + mean + variance

    CHECK(run("leaveout --config cli_smoke_l.json --mode nonsense") == 2);
}
