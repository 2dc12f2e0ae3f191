#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "calderon/commands.hpp"
#include "calderon/error.hpp"
#include "calderon/output.hpp"

using namespace calderon;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("calderon_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_file(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
    return p;
}

int run_binary(const std::string& args)
{
    const std::string cmd = std::string(CALDERON_BINARY) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string default_config() { return std::string(CALDERON_SOURCE_DIR) + "/tools/configs/default.toml"; }

// Small recover-gamma setup so the command runs in about a second.
const char* small_gamma = R"({
  "gamma": {"N": [4, 8]},
  "solver": {"h_far": 0.1, "ppw": 6},
  "seeds": [3, 4]
})";

} // namespace

TEST_CASE("default config parses and round-trips through JSON")
{
    const ExperimentConfig c = load_config(default_config());
    CHECK(c.theta == 0.5);
    CHECK(c.gamma.N == std::vector<double>{8, 16, 32, 64, 128});
    CHECK(c.noise.K == 0);
    CHECK(c.conductivity.name == "affine");
    const ExperimentConfig back = config_from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.hash() == c.hash());
    CHECK(c.hash().size() == 16);
}

TEST_CASE("config rejects unknown keys and bad values")
{
    CHECK_THROWS_AS(parse_config("thetta = 0.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[solver]\nspeed = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("theta = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("theta = \"half\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[gamma]\nN = [16, 8]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[conductivity]\nname = \"affine\"\nparams = { a = 0.5, bx = 1.0 }\n"),
                    ConfigError);
    CHECK_THROWS_AS(parse_config("t_override = \"fast\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("theta = 0.5\n[[x\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"theta\": }"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.toml"), ConfigError);
}

TEST_CASE("JSON and TOML describe the same experiment")
{
    const ExperimentConfig t = parse_config("theta = 0.4\n[noise]\nK = 50\nseed = 9\n[gamma]\nN = [4, 8]\n");
    const ExperimentConfig j = parse_config(R"({"theta": 0.4, "noise": {"K": 50, "seed": 9}, "gamma": {"N": [4, 8]}})");
    CHECK(t.hash() == j.hash());
    CHECK(j.noise.K == 50);
    const ExperimentConfig s = parse_config("seeds = { start = 5, count = 3 }\n");
    CHECK(s.seeds == std::vector<std::uint64_t>{5, 6, 7});
}

TEST_CASE("config hash ignores the output directory only")
{
    ExperimentConfig a = parse_config("output = \"x\"\n");
    ExperimentConfig b = parse_config("output = \"y\"\n");
    CHECK(a.hash() == b.hash());
    CommandOptions o;
    o.seed = 17;
    apply_overrides(b, o);
    CHECK(a.hash() != b.hash());
    CHECK(b.seeds == std::vector<std::uint64_t>{17});
    // FNV-1a 64 reference values
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("exception classes map onto exit codes")
{
    CHECK(exit_code_for(ConfigError("x")) == 1);
    CHECK(exit_code_for(GeometryError("x")) == 1);
    CHECK(exit_code_for(BudgetError("x")) == 3);
    CHECK(exit_code_for(ResolutionError("x")) == 2);
    CHECK(exit_code_for(std::runtime_error("x")) == 2);
}

TEST_CASE("binary exit codes")
{
    const fs::path dir = scratch("exit");
    CHECK(run_binary("validate --config " + default_config() + " --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "validation.csv"));

    const fs::path coarse = write_file(dir / "coarse.json", R"({"validate": {"h": 0.5}})");
    CHECK(run_binary("validate --config " + coarse.string() + " --out " + dir.string()) == 2);

    const fs::path bad = write_file(dir / "bad.toml", "[conductivity]\nparams = { a = 0.5, bx = 1.0 }\n");
    CHECK(run_binary("validate --config " + bad.string()) == 1);
    CHECK(run_binary("validate --config " + (dir / "missing.toml").string()) == 1);
    CHECK(run_binary("validate") == 1);
    CHECK(run_binary("validate --config " + default_config() + " --bogus") == 1);
    CHECK(run_binary("validate --config " + default_config() + " --t-override fast") == 1);

    const fs::path tight =
        write_file(dir / "tight.json", R"({"gamma": {"N": [256]}, "solver": {"max_triangles": 100}})");
    CHECK(run_binary("recover-gamma --config " + tight.string() + " --out " + dir.string()) == 3);
}

TEST_CASE("CSV preamble carries the command, hash and units")
{
    const fs::path dir = scratch("preamble");
    ExperimentConfig c = parse_config(small_gamma);
    c.output = dir.string();
    std::ostringstream log;
    REQUIRE(run_command("recover-gamma", c, log) == 0);
    std::ifstream in(dir / "recover_gamma.csv");
    std::string l1, l2, l3;
    std::getline(in, l1);
    std::getline(in, l2);
    std::getline(in, l3);
    CHECK(l1.rfind("# calderon recover-gamma config_hash=" + c.hash() + " generated=", 0) == 0);
    CHECK(l2.rfind("# units: ", 0) == 0);
    CHECK(l3 == "seed,N,estimate_re,estimate_im,clean_re,clean_im,noise_re,noise_im,truth,abs_err");
    CHECK(csv_data_rows(dir / "recover_gamma.csv").size() == 4);
    CHECK(fs::exists(dir / "recover_gamma.gp"));
}

TEST_CASE("disabled noise leaves the noise columns at zero")
{
    const fs::path dir = scratch("quiet");
    ExperimentConfig c = parse_config(small_gamma);
    CommandOptions o;
    o.no_noise = true;
    o.out = dir.string();
    apply_overrides(c, o);
    std::ostringstream log;
    REQUIRE(run_command("recover-gamma", c, log) == 0);
    for (const std::string& row : csv_data_rows(dir / "recover_gamma.csv")) {
        std::vector<std::string> cells;
        std::stringstream ss(row);
        for (std::string cell; std::getline(ss, cell, ',');)
            cells.push_back(cell);
        REQUIRE(cells.size() == 10);
        CHECK(cells[6] == "0");
        CHECK(cells[7] == "0");
        CHECK(cells[2] == cells[4]);
    }
}

TEST_CASE("identical configs give identical data rows")
{
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    ExperimentConfig c = parse_config(small_gamma);
    std::ostringstream log;
    c.output = a.string();
    REQUIRE(run_command("recover-gamma", c, log) == 0);
    c.output = b.string();
    REQUIRE(run_command("recover-gamma", c, log) == 0);
    const auto ra = csv_data_rows(a / "recover_gamma.csv");
    CHECK(!ra.empty());
    CHECK(ra == csv_data_rows(b / "recover_gamma.csv"));
}

TEST_CASE("recover-grad with constant conductivity stays near zero")
{
    const fs::path dir = scratch("grad");
    ExperimentConfig c = parse_config(R"({
      "conductivity": {"name": "constant", "params": {"c": 2.0}},
      "solver": {"h_far": 0.1, "ppw": 6},
      "t_override": "4"
    })");
    c.output = dir.string();
    c.noise.enabled = false;
    std::ostringstream log;
    REQUIRE(run_command("recover-grad", c, log) == 0);
    const auto rows = csv_data_rows(dir / "recover_grad.csv");
    REQUIRE(rows.size() == 1);
    std::vector<std::string> cells;
    std::stringstream ss(rows[0]);
    for (std::string cell; std::getline(ss, cell, ',');)
        cells.push_back(cell);
    const double T = std::stod(cells[2]);
    CHECK(T == 4.0);
    CHECK(std::hypot(std::stod(cells[8]), std::stod(cells[9])) <= 1.0 / T);
    CHECK(fs::exists(dir / "recover_grad_nodes.csv"));
}
