#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("muss_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path at(const std::string& name) { return workdir() / name; }

Run muss(const std::string& args) {
  const fs::path out = at("stdout.txt"), err = at("stderr.txt");
  const std::string cmd = std::string("MUSS_THREADS=1 \"") + MUSS_CLI_PATH + "\" " + args + " >\"" + out.string() +
                          "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

bool one_error_line(const Run& r, int code) {
  static const std::regex line(R"(error: code=(\d) kind=[a-z_]+ message="[^"\n]*"\n)");
  std::smatch m;
  return std::regex_match(r.err, m, line) && std::stoi(m[1]) == code;
}

const std::string kSmallConfig = R"({"network": {"hidden_width": 8, "hidden_depth": 2, "context_dim": 2},
  "train": {"epochs": 5, "batch_budget": 64},
  "generator": {"units": 4, "points_mean": 60},
  "scaling": {"m_list": [1, 2, 4], "repetitions": 1}})";

}  // namespace

TEST_CASE("exit codes and error format") {
  write(at("small.json"), kSmallConfig);

  Run r = muss("");
  CHECK(r.code == 2);
  r = muss("generate --bogus 1 --out x.csv");
  CHECK(r.code == 2);
  CHECK(one_error_line(r, 2));
  r = muss("predict --model m.json --x 0.1,zz");
  CHECK(r.code == 2);

  write(at("bad.json"), R"({"train": {"epochz": 1}})");
  r = muss("generate --config " + at("bad.json").string() + " --out " + at("x.csv").string());
  CHECK(r.code == 3);
  CHECK(one_error_line(r, 3));
  write(at("broken.json"), "{ not json");
  r = muss("predict --model " + at("broken.json").string() + " --unit a --x 0");
  CHECK(r.code == 3);
  CHECK(one_error_line(r, 3));

  r = muss("pretrain --data " + at("missing.csv").string() + " --out " + at("m.json").string());
  CHECK(r.code == 4);
  CHECK(one_error_line(r, 4));
  r = muss("generate --units 2 --out /nonexistent_dir/out.csv");
  CHECK(r.code == 4);
  CHECK(one_error_line(r, 4));
}

TEST_CASE("generate, pretrain, calibrate, predict") {
  write(at("small.json"), kSmallConfig);
  const std::string cfg = " --config " + at("small.json").string();

  REQUIRE(muss("generate --seed 5" + cfg + " --out " + at("a.csv").string()).code == 0);
  REQUIRE(muss("generate --seed 5" + cfg + " --out " + at("b.csv").string()).code == 0);
  CHECK(slurp(at("a.csv")) == slurp(at("b.csv")));
  REQUIRE(muss("generate --seed 6" + cfg + " --out " + at("c.csv").string()).code == 0);
  CHECK(slurp(at("a.csv")) != slurp(at("c.csv")));

  const std::string data = " --data " + at("a.csv").string();
  REQUIRE(muss("pretrain" + data + cfg + " --units unit_000,unit_001,unit_002 --history " +
               at("h.csv").string() + " --out " + at("m.json").string())
              .code == 0);
  REQUIRE(muss("pretrain" + data + cfg + " --units unit_000,unit_001,unit_002 --out " + at("m2.json").string())
              .code == 0);
  CHECK(slurp(at("m.json")) == slurp(at("m2.json")));
  CHECK(!slurp(at("h.csv")).empty());

  const std::string model = " --model " + at("m.json").string();
  Run r = muss("predict" + model + " --unit unit_001 --x 0.5,0.5,0.6,0.4,0.5,0.5,0.5");
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(header == "unit,mean,std");
  const auto c1 = row.find(','), c2 = row.rfind(',');
  const double mean = std::stod(row.substr(c1 + 1, c2 - c1 - 1)), sd = std::stod(row.substr(c2 + 1));
  CHECK(std::isfinite(mean));
  CHECK(sd > 0.0);

  CHECK(muss("predict" + model + " --unit unit_003 --x 0.5,0.5,0.6,0.4,0.5,0.5,0.5").code == 1);
  CHECK(muss("predict" + model + " --unit unit_001 --x 0.5,0.5").code != 0);

  REQUIRE(muss("calibrate" + model + data + " --unit unit_003 --points 3 --out " + at("u.json").string()).code ==
          0);
  r = muss("predict" + model + " --calibrated " + at("u.json").string() + " --x 0.5,0.5,0.6,0.4,0.5,0.5,0.5");
  CHECK(r.code == 0);

  REQUIRE(muss("infogain" + model + data + " --out " + at("ig.csv").string()).code == 0);
  CHECK(slurp(at("ig.csv")).find("unit_003") != std::string::npos);
}

TEST_CASE("scaling command is deterministic") {
  write(at("small.json"), kSmallConfig);
  const std::string cfg = " --config " + at("small.json").string();
  REQUIRE(muss("generate --seed 9" + cfg + " --out " + at("s.csv").string()).code == 0);
  const std::string base = "scaling --data " + at("s.csv").string() + cfg;
  REQUIRE(muss(base + " --out " + at("r1.csv").string() + " --summary " + at("c1.csv").string()).code == 0);
  REQUIRE(muss(base + " --out " + at("r2.csv").string()).code == 0);
  CHECK(slurp(at("r1.csv")) == slurp(at("r2.csv")));
  CHECK(!slurp(at("c1.csv")).empty());
  fs::remove_all(workdir());
}
