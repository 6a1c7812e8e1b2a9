#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "scope/data_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = scope::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("scope_cli_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  std::string file(const std::string& name, const std::string& content = {}) const {
    const auto p = (path_ / name).string();
    if (!content.empty()) std::ofstream(p, std::ios::binary) << content;
    return p;
  }

 private:
  fs::path path_;
};

std::string grouped_csv(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> lvl(0, 5);
  std::normal_distribution<double> eps(0.0, 0.3);
  const double effect[] = {-2, -2, 0, 0, 2, 2};
  std::ostringstream os;
  os << "g,h,y\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int k = lvl(rng);
    os << "L" << k << ",H" << i % 3 << "," << effect[k] + eps(rng) << "\n";
  }
  return os.str();
}

}  // namespace

TEST_CASE("cli fit writes a model and a cluster report") {
  TempDir tmp;
  const auto data = tmp.file("d.csv", grouped_csv(1, 300));
  const auto model = tmp.file("m.json");
  const auto report = tmp.file("r.csv");
  const auto r = run({"fit", "--data", data, "--gamma", "8", "--out", model, "--report", report});
  REQUIRE(r.code == scope::cli::kOk);
  CHECK(r.err.find("EBIC") != std::string::npos);

  const auto m = scope::load_model(model);
  REQUIRE(m.categorical_names == std::vector<std::string>{"g", "h"});
  const auto& ids = m.clusters[0];
  CHECK(ids[0] != ids[2]);
  std::ifstream in(report);
  const auto t = scope::parse_csv(in);
  REQUIRE(t.header == std::vector<std::string>{"kind", "variable", "group", "coefficient", "levels"});
  std::size_t g_groups = 0;
  for (const auto& row : t.rows) g_groups += row[1] == "g";
  CHECK(g_groups == 3);

  const auto pr = run({"predict", "--model", model, "--data", data});
  REQUIRE(pr.code == scope::cli::kOk);
  CHECK(pr.out.rfind("row,prediction\n", 0) == 0);
  CHECK(pr.err.find("mean squared error") != std::string::npos);
}

TEST_CASE("cli fixed lambda and strict convergence") {
  TempDir tmp;
  const auto data = tmp.file("d.csv", grouped_csv(2, 200));
  CHECK(run({"fit", "--data", data, "--lambda", "0.05"}).code == scope::cli::kOk);
  const auto r = run({"fit", "--data", data, "--lambda", "0.001", "--max-sweeps", "1", "--tol", "1e-15", "--strict"});
  CHECK(r.code == scope::cli::kNotConverged);
  CHECK(r.err.find("not converged") != std::string::npos);
  CHECK(run({"fit", "--data", data, "--lambda", "0.001", "--max-sweeps", "1", "--tol", "1e-15"}).code ==
        scope::cli::kOk);
}

TEST_CASE("cli data errors exit 2") {
  TempDir tmp;
  const auto data = tmp.file("d.csv", grouped_csv(3, 60));
  CHECK(run({"fit", "--data", tmp.file("missing.csv")}).code == scope::cli::kDataError);
  CHECK(run({"fit", "--data", data, "--response", "nope"}).code == scope::cli::kDataError);
  CHECK(run({"fit", "--data", data, "--hierarchy", "g"}).code == scope::cli::kDataError);
  CHECK(run({"fit", "--data", data, "--family", "logistic"}).code == scope::cli::kDataError);
  CHECK(run({"fit", "--data", tmp.file("ragged.csv", "a,y\n1\n")}).code == scope::cli::kDataError);
  CHECK(run({"bogus"}).code == scope::cli::kDataError);
  CHECK(run({"--help"}).code == scope::cli::kOk);

  const auto model = tmp.file("m.json");
  REQUIRE(run({"fit", "--data", data, "--lambda", "0.1", "--out", model}).code == scope::cli::kOk);
  const auto r = run({"predict", "--model", model, "--data", tmp.file("new.csv", "h,y\nH1,0\n")});
  CHECK(r.code == scope::cli::kDataError);
  CHECK(r.err.find("schema mismatch") != std::string::npos);
}

TEST_CASE("cli predict reports unseen levels") {
  TempDir tmp;
  const auto model = tmp.file("m.json");
  REQUIRE(run({"fit", "--data", tmp.file("d.csv", grouped_csv(4, 120)), "--lambda", "0.1", "--out", model}).code ==
          scope::cli::kOk);
  const auto r = run({"predict", "--model", model, "--data", tmp.file("n.csv", "g,h\nL9,H0\nL0,H1\n")});
  REQUIRE(r.code == scope::cli::kOk);
  CHECK(r.err.find("unseen") != std::string::npos);
  std::istringstream in(r.out);
  CHECK(scope::parse_csv(in).rows.size() == 2);
}

TEST_CASE("cli cv table and refit") {
  TempDir tmp;
  const auto data = tmp.file("d.csv", grouped_csv(5, 200));
  const auto model = tmp.file("m.json");
  const auto r = run({"cv", "--data", data, "--gamma", "8,32", "--path", "10", "--folds", "4", "--refit", model});
  REQUIRE(r.code == scope::cli::kOk);
  std::istringstream in(r.out);
  const auto t = scope::parse_csv(in);
  CHECK(t.header == std::vector<std::string>{"gamma", "lambda_index", "lambda", "cv_error"});
  CHECK(t.rows.size() == 20);
  CHECK(r.err.find("chosen gamma") != std::string::npos);
  CHECK(scope::load_model(model).lambda > 0.0);
}

TEST_CASE("cli simulate, verify and bench") {
  SUBCASE("simulate") {
    const auto r = run({"simulate", "--setting", "ld1", "--reps", "2", "--gamma", "8", "--path", "10", "--folds", "3",
                        "--n-test", "500"});
    REQUIRE(r.code == scope::cli::kOk);
    std::istringstream in(r.out);
    const auto t = scope::parse_csv(in);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[2][1] == "mean");
    CHECK(run({"simulate", "--reps", "1"}).code == scope::cli::kDataError);
  }
  SUBCASE("simulate from a json spec") {
    TempDir tmp;
    const auto spec = tmp.file("s.json", R"({"name": "tiny", "n": 120, "p": 2, "K": 4,
      "theta0": [[-1, -1, 1, 1], [0, 0, 0, 0]]})");
    const auto r = run({"simulate", "--spec", spec, "--reps", "1", "--gamma", "8", "--path", "10", "--n-test", "200"});
    REQUIRE(r.code == scope::cli::kOk);
    CHECK(r.out.find("tiny,1,") != std::string::npos);
    CHECK(run({"simulate", "--spec", tmp.file("b.json", "{\"n\": 5}"), "--reps", "1"}).code ==
          scope::cli::kDataError);
  }
  SUBCASE("verify") {
    const auto r = run({"verify", "--theta=-2,-2,2,2", "--per-level", "40", "--gamma", "8", "--lambda", "0.05",
                        "--sigma", "0.2", "--checks", "20"});
    REQUIRE(r.code == scope::cli::kOk);
    CHECK(r.out.find("satisfied yes") != std::string::npos);
    CHECK(r.out.find("exact <= brute-force grid: 20/20") != std::string::npos);
    CHECK(r.out.find("discrete table == brute-force grid: 20/20") != std::string::npos);
  }
  SUBCASE("bench") {
    const auto r = run({"bench", "--sizes", "20,40", "--reps", "2"});
    REQUIRE(r.code == scope::cli::kOk);
    std::istringstream in(r.out);
    const auto t = scope::parse_csv(in);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][0] == "40");
  }
}
