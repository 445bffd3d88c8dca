// Apache License, Version 2.0, refer to LICENSE.txt

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "tvcluster/cli.hpp"
#include "tvcluster/io.hpp"
#include "tvcluster/pipeline.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = TVC_SOURCE_DIR;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = tvc::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json load(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

void dump(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << j.dump(2);
}

struct Scratch {
  fs::path root;
  explicit Scratch(const std::string& name) : root(fs::temp_directory_path() / ("tvc_cli_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() { fs::remove_all(root); }
};

// Desk-sized model with a short schedule and a short series.
fs::path small_config(const fs::path& dir, int iterations = 60, int burn = 20, int thin = 2, int chains = 2) {
  json c = load(kSource / "configs" / "desk.json");
  c["mcmc"]["n_iterations"] = iterations;
  c["mcmc"]["burn_in"] = burn;
  c["mcmc"]["thin"] = thin;
  c["mcmc"]["n_chains"] = chains;
  dump(dir / "config.json", c);
  return dir / "config.json";
}

fs::path small_truth(const fs::path& dir) {
  json t = load(kSource / "configs" / "desk_truth.json");
  t["design"]["n_times"] = 60;
  dump(dir / "truth.json", t);
  return dir / "truth.json";
}

fs::path simulate(const fs::path& dir, const fs::path& config, const std::string& seed = "7") {
  const auto r = run({"--seed", seed, "simulate", "--config", config.string(), "--truth", small_truth(dir).string(),
                      "--out", (dir / "sim").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  return dir / "sim";
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("decreasing decay rates are rejected with exit code 2") {
  Scratch s("decay");
  json c = load(kSource / "configs" / "desk.json");
  c["decay_rates"] = json::array({1.0, 1.0 / 3.0});
  dump(s.root / "bad.json", c);
  const auto r = run({"simulate", "--config", (s.root / "bad.json").string(), "--truth",
                      (kSource / "configs" / "desk_truth.json").string(), "--out", (s.root / "o").string()});
  CHECK(r.code == tvc::cli::kExitInvalid);
  CHECK(r.err.find("increasing") != std::string::npos);
}

TEST_CASE("unknown command line options exit with code 2") {
  CHECK(run({"fit", "--bogus"}).code == tvc::cli::kExitInvalid);
  CHECK(run({}).code == tvc::cli::kExitInvalid);
}

TEST_CASE("the shipped configs pass validation") {
  Scratch s("configs");
  for (const char* name : {"desk.json", "full_scale.json"}) {
    // Validation happens before any data is touched, so a missing dataset
    // must surface as a runtime error rather than a config error.
    const auto r = run({"fit", "--config", (kSource / "configs" / name).string(), "--data", (s.root / "none").string(),
                        "--out", (s.root / name).string()});
    INFO(name << ": " << r.err);
    CHECK(r.code == tvc::cli::kExitRuntime);
    CHECK(r.err.find("invalid") == std::string::npos);
  }
}

TEST_CASE("simulation is a pure function of the seed") {
  Scratch s("determinism");
  const auto cfg = small_config(s.root);
  const auto truth = small_truth(s.root);
  auto sim = [&](const std::string& seed, const std::string& out) {
    const auto r = run({"--seed", seed, "simulate", "--config", cfg.string(), "--truth", truth.string(), "--out",
                        (s.root / out).string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
  };
  sim("11", "a");
  sim("11", "b");
  sim("12", "c");
  for (const char* f : {"y.csv", "x.csv", "z.csv", "times.csv"})
    CHECK(slurp(s.root / "a" / "data" / f) == slurp(s.root / "b" / "data" / f));
  CHECK(slurp(s.root / "a" / "data" / "y.csv") != slurp(s.root / "c" / "data" / "y.csv"));
  const json m = load(s.root / "a" / "manifest.json");
  CHECK(m.at("seed").get<std::uint64_t>() == 11);
  CHECK(m.contains("config_sha256"));
}

TEST_CASE("an interrupted fit resumes to the same output as an uninterrupted one") {
  Scratch s("resume");
  const auto cfg = small_config(s.root, 80, 20, 3, 2);
  const auto sim = simulate(s.root, cfg);
  const auto data = (sim / "data").string();
  auto fit = [&](std::vector<std::string> extra, const std::string& out) {
    std::vector<std::string> args = {"fit", "--config", cfg.string(), "--data", data, "--out", (s.root / out).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = run(args);
    REQUIRE_MESSAGE(r.code == 0, r.err);
  };
  fit({}, "full");
  fit({"--stop-after", "37", "--checkpoint-every", "10"}, "split");
  fit({"--resume", "--checkpoint-every", "10"}, "split");
  for (int j = 0; j < 2; ++j) {
    const fs::path a = s.root / "full" / ("chain" + std::to_string(j));
    const fs::path b = s.root / "split" / ("chain" + std::to_string(j));
    for (const char* f : {"states/tau2.csv", "states/labels.csv", "states/atoms.csv", "states/lambda.csv", "sweeps.csv"})
      CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  }
  // (80 - 20) / 3 retained draws, one row per component, plus the header.
  CHECK(lines(s.root / "full" / "chain0" / "states" / "tau2.csv").size() == 2 * 20 + 1);

  // Resuming with a different config is refused.
  json c = load(cfg);
  c["dp_concentration"] = 2.0;
  dump(s.root / "other.json", c);
  const auto r = run({"fit", "--config", (s.root / "other.json").string(), "--data", data, "--out",
                      (s.root / "split").string(), "--resume"});
  CHECK(r.code != 0);
}

TEST_CASE("summarize reports per-chain counts and recovery against the truth") {
  Scratch s("summarize");
  const auto cfg = small_config(s.root, 40, 10, 5, 2);
  const auto sim = simulate(s.root, cfg);
  REQUIRE(run({"fit", "--config", cfg.string(), "--data", (sim / "data").string(), "--out", (s.root / "fit").string()})
              .code == 0);
  const auto r = run({"summarize", "--run", (s.root / "fit").string(), "--figure-data", "--out",
                      (s.root / "sum").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  // 2 chains x 2 months x 1 channel plus the header.
  CHECK(lines(s.root / "sum" / "chain_cluster_counts.csv").size() == 5);
  CHECK(lines(s.root / "sum" / "ari_vs_truth.csv").size() == 3);
  CHECK(lines(s.root / "sum" / "modal_partition.csv").size() > 1);
  for (const char* f : {"gram_vs_distance.csv", "cooccurrence_heatmap.csv", "factor_shares.csv", "clusters_by_month.csv",
                        "cluster_coefficients.csv", "cluster_map.csv"})
    CHECK_MESSAGE(fs::exists(s.root / "sum" / "plot_data" / f), f);
}

TEST_CASE("summarize works from a single retained draw") {
  Scratch s("one_draw");
  const auto cfg = small_config(s.root, 3, 2, 1, 1);
  const auto sim = simulate(s.root, cfg);
  REQUIRE(run({"fit", "--config", cfg.string(), "--data", (sim / "data").string(), "--out", (s.root / "fit").string()})
              .code == 0);
  const auto r = run({"summarize", "--run", (s.root / "fit").string(), "--out", (s.root / "sum").string()});
  CHECK_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(s.root / "sum" / "coefficients.csv"));
}

TEST_CASE("summarize fails cleanly when a chain is missing") {
  Scratch s("missing_chain");
  const auto cfg = small_config(s.root, 10, 4, 2, 2);
  const auto sim = simulate(s.root, cfg);
  REQUIRE(run({"fit", "--config", cfg.string(), "--data", (sim / "data").string(), "--out", (s.root / "fit").string()})
              .code == 0);
  fs::remove_all(s.root / "fit" / "chain1");
  const auto r = run({"summarize", "--run", (s.root / "fit").string(), "--out", (s.root / "sum").string()});
  CHECK(r.code == tvc::cli::kExitRuntime);
  CHECK(r.err.find("chain 1") != std::string::npos);
}

TEST_CASE("the shipped sweep grids are accepted and fill the table") {
  Scratch s("sweep");
  const auto cfg = small_config(s.root, 6, 2, 2, 1);
  const auto sim = simulate(s.root, cfg);
  struct Grid {
    const char* file;
    std::size_t cells;
  };
  for (const Grid grid : {Grid{"sweep_alpha_tau2.json", 10}, Grid{"sweep_base_measure.json", 3}}) {
    const fs::path out = s.root / grid.file;
    const auto r = run({"sweep", "--config", cfg.string(), "--data", (sim / "data").string(), "--spec",
                        (kSource / "configs" / grid.file).string(), "--out", out.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto rows = lines(out / "sweep.csv");
    CHECK(rows.size() == grid.cells + 1);
    for (std::size_t q = 1; q < rows.size(); ++q) CHECK(rows[q].find(",ok,") != std::string::npos);
  }
}

TEST_CASE("explore writes one least-squares row per station, month and component") {
  Scratch s("explore");
  tvc::Rng rng = tvc::Rng::stream(3, 0);
  const auto start = tvc::hours_from_civil({2017, 1, 1, 0});
  // Two calendar months, January and February.
  const auto table = tvc::synthetic_raw_table({"B", "A", "C"}, start, 24 * 59, rng);
  tvc::write_raw(s.root / "raw.csv", table);
  const auto ing = run({"ingest", "--input", (s.root / "raw.csv").string(), "--out", (s.root / "ds").string()});
  REQUIRE_MESSAGE(ing.code == 0, ing.err);
  const auto r = run({"explore", "--data", (s.root / "ds" / "data").string(), "--out", (s.root / "ex").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = lines(s.root / "ex" / "monthly_ols.csv");
  CHECK(rows.size() == 3 * 2 * 2 + 1);
  CHECK(lines(s.root / "ex" / "hour_of_day_means.csv").size() == 3 * 2 * 24 + 1);
  CHECK(lines(s.root / "ex" / "daily_means.csv").size() == 3 * 2 * 59 + 1);
}

TEST_CASE("a constant covariate is reported as rank deficient") {
  Scratch s("constant");
  tvc::RawTable table;
  const auto start = tvc::hours_from_civil({2017, 3, 1, 0});
  for (const char* st : {"A", "B"})
    for (int t = 0; t < 48; ++t) {
      const auto h = start + t;
      table.rows.push_back({st, h, tvc::Variable::ozone, 4.0 + t % 5, 0});
      table.rows.push_back({st, h, tvc::Variable::pm10, 10.0 + t % 7, 0});
      table.rows.push_back({st, h, tvc::Variable::temperature, 20.0 + (st[0] == 'A' ? 0.0 : t % 3), 0});
      table.rows.push_back({st, h, tvc::Variable::relative_humidity, 50.0 + t % 11, 0});
    }
  tvc::write_raw(s.root / "raw.csv", table);
  REQUIRE(run({"ingest", "--input", (s.root / "raw.csv").string(), "--out", (s.root / "ds").string()}).code == 0);
  REQUIRE(run({"explore", "--data", (s.root / "ds" / "data").string(), "--out", (s.root / "ex").string()}).code == 0);
  int deficient = 0;
  for (const auto& row : lines(s.root / "ex" / "monthly_ols.csv"))
    if (row.rfind("A,", 0) == 0 && row.find(",1,") != std::string::npos) ++deficient;
  CHECK(deficient == 2);
}

TEST_CASE("ingest refuses gaps unless a fill policy is given") {
  Scratch s("gaps");
  tvc::Rng rng = tvc::Rng::stream(5, 0);
  auto table = tvc::synthetic_raw_table({"A", "B"}, tvc::hours_from_civil({2017, 1, 1, 0}), 48, rng);
  table.rows.erase(table.rows.begin() + 3);
  tvc::write_raw(s.root / "raw.csv", table);
  std::ofstream(s.root / "coords.csv") << "station,x,y\nA,0,0\nB,1,0\n";
  CHECK(run({"ingest", "--input", (s.root / "raw.csv").string(), "--out", (s.root / "a").string()}).code ==
        tvc::cli::kExitInvalid);
  const auto r = run({"ingest", "--input", (s.root / "raw.csv").string(), "--coords", (s.root / "coords.csv").string(),
                      "--gaps", "nearest-station", "--out", (s.root / "b").string()});
  CHECK_MESSAGE(r.code == 0, r.err);
}

TEST_CASE("sha256 of a known string") {
  CHECK(tvc::cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
