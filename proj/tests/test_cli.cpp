#include <doctest.h>

#include "stache/commands.hpp"
#include "stache/explanation_io.hpp"
#include "support.hpp"

using namespace stache;
using namespace testing;

namespace {

int cli(std::vector<std::string> args) { return run_cli(args); }

}  // namespace

TEST_CASE("train, explain, sweep, verify and render") {
  const auto dir = scratch_dir("cli");
  const auto out = dir.string();
  REQUIRE(cli({"train", "--out", out, "--episodes", "400"}) == 0);
  CHECK(std::filesystem::exists(dir / "vi.json"));
  CHECK(std::filesystem::exists(dir / "checkpoints" / "checkpoints.json"));
  CHECK(std::filesystem::exists(dir / "train_report.json"));

  const auto vi = (dir / "vi.json").string();
  REQUIRE(cli({"explain", "--env", "taxi", "--policy", vi, "--state", "0,0,0,2", "--mode", "exact", "--out",
               (dir / "s1.json").string(), "--svg", (dir / "s1.svg").string()}) == 0);
  const auto doc = read_json_file(dir / "s1.json");
  CHECK(doc["seed_action_name"] == "Pickup");
  CHECK(doc["mode"] == "exact");
  CHECK(std::filesystem::exists(dir / "s1.svg"));

  REQUIRE(cli({"explain", "--policy", vi, "--state", "row=0,col=0,P=0,D=2", "--mode", "cutoff", "--out",
               (dir / "s1_cut.json").string()}) == 0);
  const auto cut = read_json_file(dir / "s1_cut.json");
  CHECK(cut["counterfactuals"]["states"] == doc["counterfactuals"]["states"]);
  CHECK(cut["mode"] == "cutoff");

  REQUIRE(cli({"sweep", "--out", out, "--checkpoints", (dir / "checkpoints" / "checkpoints.json").string()}) == 0);
  CHECK(slurp(dir / "sweep.csv").starts_with("checkpoint,seed,action_name,rr_size,cf_min_distance,cf_count,"));
  CHECK(std::filesystem::exists(dir / "sweep.md"));

  CHECK(cli({"verify", "--policy", vi, "--seeds", "0,0,0,2;0,1,2,1", "--out", (dir / "verify.json").string()}) == 0);
  CHECK(read_json_file(dir / "verify.json")["ok"] == true);

  REQUIRE(cli({"render", "--explanation", (dir / "s1.json").string(), "--out", (dir / "r.svg").string()}) == 0);
  CHECK(slurp(dir / "r.svg") == slurp(dir / "s1.svg"));
  REQUIRE(cli({"render", "--explanation", (dir / "s1.json").string(), "--format", "text", "--out",
               (dir / "r.txt").string()}) == 0);
  CHECK(slurp(dir / "r.txt").find('S') != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("bad input exits non-zero") {
  const auto dir = scratch_dir("cli_bad");
  CHECK(cli({"explain", "--policy", "vi", "--state", "0,0,9,2", "--out", (dir / "x.json").string()}) != 0);
  CHECK_FALSE(std::filesystem::exists(dir / "x.json"));
  CHECK(cli({"explain", "--policy", (dir / "missing.json").string(), "--state", "0,0,0,2"}) != 0);
  CHECK(cli({"explain", "--state", "0,0,0,2"}) != 0);
  CHECK(cli({"explain", "--policy", "vi", "--state", "0,0,0,2", "--mode", "fast"}) != 0);
  CHECK(cli({"--env", "cartpole", "factorization"}) != 0);
  CHECK(cli({}) != 0);
  CHECK(cli({"render", "--env", "minigrid", "--explanation", (dir / "missing.json").string()}) != 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("empty seed list") {
  const auto dir = scratch_dir("cli_empty");
  REQUIRE(cli({"sweep", "--seeds", "", "--out", dir.string()}) == 0);
  CHECK(slurp(dir / "sweep.csv") ==
        "checkpoint,seed,action_name,rr_size,cf_min_distance,cf_count,cf_changed_factors\n");
  CHECK(slurp(dir / "sweep.md").empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("external policy through the command line") {
  const auto dir = scratch_dir("cli_exec");
  REQUIRE(cli({"train", "--method", "vi", "--out", dir.string()}) == 0);
  const auto vi = (dir / "vi.json").string();
  REQUIRE(cli({"explain", "--policy", vi, "--state", "0,1,2,1", "--out", (dir / "local.json").string()}) == 0);
  REQUIRE(cli({"explain", "--policy", std::string("exec:") + FAKE_POLICY_SERVER + " --table " + vi, "--batch",
               "--state", "0,1,2,1", "--out", (dir / "wire.json").string()}) == 0);
  auto local = read_json_file(dir / "local.json");
  auto wire = read_json_file(dir / "wire.json");
  local.erase("policy");
  wire.erase("policy");
  CHECK(local == wire);
  std::filesystem::remove_all(dir);
}

TEST_CASE("minigrid through the command line") {
  const auto dir = scratch_dir("cli_minigrid");
  REQUIRE(cli({"--env", "minigrid", "explain", "--policy", "vi", "--state", "1,2,1,4,4", "--out",
               (dir / "m.json").string()}) == 0);
  CHECK(read_json_file(dir / "m.json")["seed_action_name"] == "MoveForward");
  REQUIRE(cli({"--env", "minigrid", "factorization", "--out", (dir / "f.json").string()}) == 0);
  CHECK(read_json_file(dir / "f.json")["factors"].size() == 5);
  std::filesystem::remove_all(dir);
}

TEST_CASE("the executable reports usage errors") {
  CHECK(std::system((std::string(STACHE_CLI) + " --help > /dev/null").c_str()) == 0);
  CHECK(std::system((std::string(STACHE_CLI) + " explain > /dev/null 2>&1").c_str()) != 0);
}
