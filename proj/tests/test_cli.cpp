// Drives the installed binary through std::system; the path arrives in
// EPIREADER_CLI (set by ctest).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string cli() {
  const char* path = std::getenv("EPIREADER_CLI");
  REQUIRE_MESSAGE(path != nullptr, "EPIREADER_CLI not set");
  return path;
}

int run(const std::string& args, const std::string& log = "/dev/null") {
  const std::string cmd = cli() + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

const fs::path kWork = fs::temp_directory_path() / "epireader_cli_test";

struct Workspace {
  Workspace() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
} workspace;

std::string path(const char* name) { return (kWork / name).string(); }

}  // namespace

TEST_CASE("usage errors exit with code 1") {
  CHECK(run("no-such-command") == 1);
  CHECK(run("train --train a.txt") == 1);  // missing required flags
  CHECK(run("train --train a.txt --valid b.txt --out o --preset bogus") == 1);
}

TEST_CASE("data errors exit with code 2") {
  CHECK(run("train --train /nonexistent.txt --valid /nonexistent.txt --out " +
            path("r")) == 2);
  CHECK(run("eval --checkpoint /nonexistent.epir --test /nonexistent.txt") ==
        2);
}

TEST_CASE("an injected backward fault exits with code 3") {
  CHECK(run("grad-check --break-op conv") == 3);
  CHECK(run("grad-check") == 0);
}

TEST_CASE("gen-data is byte-reproducible per seed") {
  REQUIRE(run("gen-data --task locate --examples 40 --seed 12 --out " +
              path("gen_a")) == 0);
  REQUIRE(run("gen-data --task locate --examples 40 --seed 12 --out " +
              path("gen_b")) == 0);
  CHECK(read_file(path("gen_a") + "/train.txt") ==
        read_file(path("gen_b") + "/train.txt"));
  CHECK(read_file(path("gen_a") + "/test.txt") ==
        read_file(path("gen_b") + "/test.txt"));
  CHECK(!read_file(path("gen_a") + "/train.txt").empty());
}

TEST_CASE("train, then eval on the validation split reproduces the log") {
  REQUIRE(run("gen-data --task locate --examples 120 --seed 9 --out " +
              path("data")) == 0);
  REQUIRE(run("train --seed 4 --epochs 2 --train " + path("data") +
              "/train.txt --valid " + path("data") + "/valid.txt --out " +
              path("run")) == 0);

  // Pick the best epoch's logged full accuracy from the metrics.
  std::ifstream metrics(path("run") + "/metrics.jsonl");
  REQUIRE(metrics.good());
  double best_acc = -1.0;
  std::string line;
  while (std::getline(metrics, line)) {
    auto j = nlohmann::json::parse(line);
    best_acc = std::max(best_acc, j.at("valid_acc_full").get<double>());
  }

  REQUIRE(run("eval --checkpoint " + path("run") + "/checkpoint.epir" +
              " --test " + path("data") + "/valid.txt --mode full --out " +
              path("eval_out"), path("eval.log")) == 0);
  auto report =
      nlohmann::json::parse(read_file(path("eval_out") + "/eval_report.json"));
  CHECK(report.at("accuracy_full").get<double>() == best_acc);

  // The resolved config artifact exists and round-trips.
  auto config = nlohmann::json::parse(read_file(path("run") + "/config.json"));
  CHECK(config.at("command") == "train");
  CHECK(config.at("config").at("seed") == 4);
}

TEST_CASE("predict prints one row per slate entry with pi summing to 1") {
  // Reuses the corpus and checkpoint from the training test above.
  std::ifstream in(path("data") + "/test.txt");
  REQUIRE(in.good());
  std::ofstream one(path("one.txt"));
  std::string line;
  while (std::getline(in, line)) {
    one << line << "\n";
    if (line.empty()) break;
  }
  one.close();
  REQUIRE(run("predict --checkpoint " + path("run") + "/checkpoint.epir" +
              " --example " + path("one.txt"), path("predict.out")) == 0);
  std::istringstream out(read_file(path("predict.out")));
  std::string header;
  std::getline(out, header);
  CHECK(header == "candidate\tp\te\tpi");
  double pi_total = 0.0, last_pi = 1.0;
  int rows = 0;
  std::string candidate;
  double p = 0, e = 0, pi = 0;
  while (out >> candidate >> p >> e >> pi) {
    ++rows;
    pi_total += pi;
    CHECK(pi <= last_pi);  // sorted by pi
    last_pi = pi;
  }
  CHECK(rows == 5);  // toy preset K
  CHECK(pi_total == doctest::Approx(1.0).epsilon(1e-6));
}
