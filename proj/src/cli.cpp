// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/cli.hpp"

#include "tvcluster/gibbs.hpp"
#include "tvcluster/io.hpp"
#include "tvcluster/model.hpp"
#include "tvcluster/pipeline.hpp"
#include "tvcluster/posterior.hpp"
#include "tvcluster/simulate.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#ifndef TVC_VERSION
#define TVC_VERSION "0.0.0"
#endif

namespace tvc::cli {

using nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream os;
  for (unsigned int q = 0; q < len; ++q) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[q]);
  return os.str();
}

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(slurp(path)); }

namespace {

// Seeds below this stream index belong to chains.
constexpr std::uint32_t kSimulationStream = 1u << 20;

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out;
};

// Digests of a file, or of every regular file below a directory.
json digests(const fs::path& path) {
  json d = json::object();
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) d[fs::relative(f, path).generic_string()] = sha256_file(f);
  } else {
    d[path.filename().string()] = sha256_file(path);
  }
  return d;
}

class Manifest {
 public:
  Manifest(const std::vector<std::string>& args, const std::string& command) {
    doc_["command"] = command;
    doc_["argv"] = args;
    doc_["version"] = TVC_VERSION;
    doc_["inputs"] = json::object();
    start_ = std::chrono::steady_clock::now();
  }
  void input(const std::string& role, const fs::path& path) {
    doc_["inputs"][role] = {{"path", fs::absolute(path).lexically_normal().string()}, {"sha256", digests(path)}};
  }
  void config(const ModelConfig& c) {
    doc_["config_sha256"] = sha256_hex(config_to_json(c).dump());
    doc_["seed"] = c.mcmc.rng_seed;
  }
  void set(const std::string& key, json value) { doc_[key] = std::move(value); }
  const json& doc() const { return doc_; }
  void write(const fs::path& dir, bool finished) {
    fs::create_directories(dir);
    json d = doc_;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    d["timings"] = {{"wall_seconds", secs}, {"finished", finished}};
    std::ofstream out(dir / "manifest.json");
    out << d.dump(2) << '\n';
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

void require_valid(const ModelConfig& config) {
  const auto issues = validate_config(config);
  if (!issues.empty()) throw ValidationError(issues);
}

ModelConfig load_checked_config(const fs::path& path, const Globals& g) {
  ModelConfig c = load_config(path);
  if (g.seed) c.mcmc.rng_seed = *g.seed;
  require_valid(c);
  return c;
}

fs::path out_dir(const Globals& g) {
  if (g.out.empty()) throw ValidationError({"--out is required"});
  return g.out;
}

// ---------------------------------------------------------------------------
// simulate

MatrixXd matrix_from_json(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty() || !v[0].is_array()) throw ValidationError({where + ": expected a matrix"});
  MatrixXd m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v[0].size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto& row = v[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols()) throw ValidationError({where + ": ragged matrix"});
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
  }
  return m;
}

VectorXd vector_from_json(const json& v, const std::string& where) {
  if (!v.is_array()) throw ValidationError({where + ": expected an array"});
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t q = 0; q < v.size(); ++q) out[static_cast<Eigen::Index>(q)] = v[q].get<double>();
  return out;
}

// Fields given in the truth file replace prior draws.
ParameterState truth_from_json(const json& t, const Model& model, Rng& rng) {
  ParameterState s = draw_prior_state(model, rng);
  const int K = model.K(), p_x = model.p_x(), p_z = model.p_z();
  try {
    if (t.contains("labels") || t.contains("atoms")) {
      if (!t.contains("labels") || !t.contains("atoms"))
        throw ValidationError({"truth: labels and atoms must be given together"});
      const auto& labels = t["labels"];
      const auto& atoms = t["atoms"];
      const auto dps = s.clusters.dps.size();
      if (labels.size() != dps || atoms.size() != dps)
        throw ValidationError({"truth: labels and atoms need one entry per (partition, channel) = " + std::to_string(dps)});
      for (std::size_t q = 0; q < dps; ++q) {
        const int g = static_cast<int>(q) % s.clusters.n_channels();
        std::vector<Atom> table;
        for (const auto& cl : atoms[q]) {
          Atom a;
          for (const auto& coef : cl) a.push_back(vector_from_json(coef, "truth.atoms"));
          if (a.size() != s.clusters.components_of(g).size())
            throw ValidationError({"truth: each atom needs one coefficient vector per component of its channel"});
          table.push_back(std::move(a));
        }
        s.clusters.dps[q] = DpClusters::from_labels(labels[q].get<std::vector<int>>(), std::move(table));
      }
    }
    if (t.contains("gamma")) {
      const VectorXd g = vector_from_json(t["gamma"], "truth.gamma");
      for (auto& v : s.gamma) v = g;
    }
    if (t.contains("lambda")) {
      const auto& l = t["lambda"];
      if (static_cast<int>(l.size()) != K) throw ValidationError({"truth.lambda: one n x r matrix per component"});
      for (int k = 0; k < K; ++k) s.lambda[static_cast<std::size_t>(k)] = matrix_from_json(l[static_cast<std::size_t>(k)], "truth.lambda");
    }
    if (t.contains("coreg")) s.coreg = matrix_from_json(t["coreg"], "truth.coreg");
    if (t.contains("tau2")) s.tau2 = vector_from_json(t["tau2"], "truth.tau2");
  } catch (const json::exception& e) {
    throw ValidationError({std::string("truth file: ") + e.what()});
  }
  const auto issues = validate_state(s, model.config(), model.T(), p_x, p_z);
  if (!issues.empty()) throw ValidationError(issues);
  return s;
}

int cmd_simulate(const Globals& g, const std::string& config_path, const std::string& truth_path,
                 const std::vector<std::string>& args, std::ostream& out) {
  const fs::path dir = out_dir(g);
  Manifest manifest(args, "simulate");
  manifest.input("config", config_path);
  manifest.input("truth", truth_path);
  const ModelConfig config = load_checked_config(config_path, g);
  manifest.config(config);
  manifest.write(dir, false);

  json t;
  try {
    std::ifstream in(truth_path);
    if (!in) throw IoError("cannot open " + truth_path);
    t = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError({std::string("truth file is not valid JSON: ") + e.what()});
  }
  if (!t.contains("design") || !t["design"].contains("n_times"))
    throw ValidationError({"truth file needs design.n_times"});
  const int T = t["design"]["n_times"].get<int>();
  const int p_x = t["design"].value("p_x", 2);
  if (T < 1 || p_x < 1) throw ValidationError({"design.n_times and design.p_x must be positive"});

  Rng rng = Rng::stream(config.mcmc.rng_seed, kSimulationStream);
  const Design design = synthetic_design(config.n_sites, T, config.n_partitions, p_x, rng);
  Dataset placeholder;
  placeholder.times = design.times;
  placeholder.x = design.x;
  placeholder.z = design.z;
  placeholder.partition_of = design.partition_of;
  placeholder.y.assign(static_cast<std::size_t>(config.n_sites), MatrixXd::Zero(T, config.n_components));
  const Model shape_model(config, placeholder);
  const ParameterState truth = truth_from_json(t, shape_model, rng);
  SimulatedData sim = simulate_dataset(config, truth, design, rng);
  write_dataset(dir / "data", sim.data);
  write_state(dir / "truth", sim.truth);
  save_config(dir / "config.echo", config);
  manifest.write(dir, true);
  out << "simulated " << config.n_sites << " sites x " << T << " hours into " << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
  bool resume = false;
  int stop_after = 0;  // 0: run to the end
  int checkpoint_every = 500;
};

// Runs or resumes one chain; returns the number of sweeps completed.
int fit_chain(const Model& model, const fs::path& run_dir, int chain, const FitOptions& opt) {
  const ChainPaths paths = chain_paths(run_dir, chain);
  const auto& sched = model.config().mcmc;
  ChainCursor cursor;
  bool append = false;
  if (opt.resume && has_checkpoint(paths)) {
    cursor = read_checkpoint(paths, model.config());
    for (const auto& e : fs::directory_iterator(paths.states())) truncate_after(e.path(), cursor.iteration);
    truncate_after(paths.sweeps(), cursor.iteration);
    truncate_after(paths.timings(), cursor.iteration);
    append = true;
  } else {
    fs::remove_all(paths.root);
    cursor = start_chain(model, chain);
  }
  DrawWriter draws(paths.states(), append);
  SweepWriter sweeps(paths, model.config(), append);
  ChainObserver obs;
  obs.on_sweep = [&](const SweepReport& r) { sweeps.write(r); };
  obs.on_retained = [&](int it, const ParameterState& s) { draws.write(it, s); };

  const int stop = opt.stop_after > 0 ? std::min(opt.stop_after, sched.n_iterations) : sched.n_iterations;
  const int every = std::max(1, opt.checkpoint_every);
  while (cursor.iteration < stop) {
    const int next = std::min(stop, (cursor.iteration / every + 1) * every);
    advance_chain(model, cursor, next, obs);
    draws.flush();
    sweeps.flush();
    write_checkpoint(paths, cursor);
  }
  if (!has_checkpoint(paths)) write_checkpoint(paths, cursor);
  return cursor.iteration;
}

int cmd_fit(const Globals& g, const std::string& config_path, const std::string& data_path, const FitOptions& opt,
            const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const fs::path dir = out_dir(g);
  Manifest manifest(args, "fit");
  manifest.input("config", config_path);
  manifest.input("data", data_path);
  const ModelConfig config = load_checked_config(config_path, g);
  manifest.config(config);

  if (opt.resume && fs::exists(dir / "config.echo")) {
    const ModelConfig previous = load_config(dir / "config.echo");
    if (config_to_json(previous) != config_to_json(config))
      throw ValidationError({"--resume with a configuration that differs from " + (dir / "config.echo").string()});
  }
  const Dataset data = read_dataset(data_path);
  const Model model(config, data);  // validates config against data

  fs::create_directories(dir);
  save_config(dir / "config.echo", config);
  manifest.set("data_dir", fs::absolute(data_path).lexically_normal().string());
  manifest.write(dir, false);

  const int chains = config.mcmc.n_chains;
  std::vector<int> done(static_cast<std::size_t>(chains), 0);
  std::vector<std::string> failures(static_cast<std::size_t>(chains));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int j = next++; j < chains; j = next++) {
      try {
        done[static_cast<std::size_t>(j)] = fit_chain(model, dir, j, opt);
      } catch (const std::exception& e) {
        failures[static_cast<std::size_t>(j)] = e.what();
      }
    }
  };
  const int n_threads = std::clamp(g.threads, 1, std::max(1, chains));
  std::vector<std::thread> pool;
  for (int q = 1; q < n_threads; ++q) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  bool failed = false;
  for (int j = 0; j < chains; ++j) {
    const auto& f = failures[static_cast<std::size_t>(j)];
    if (!f.empty()) {
      err << "chain " << j << " failed: " << f << '\n';
      failed = true;
    }
  }
  manifest.set("iterations_completed", done);
  manifest.write(dir, !failed);
  if (failed) return kExitRuntime;
  const int completed = *std::min_element(done.begin(), done.end());
  if (completed < config.mcmc.n_iterations) {
    out << "stopped after iteration " << completed << " of " << config.mcmc.n_iterations
        << "; rerun with --resume to continue\n";
  } else {
    out << "fit " << chains << " chain(s), " << config.mcmc.retained_draws() << " retained draws each, into "
        << dir.string() << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// summarize

struct SummarizeOptions {
  std::string run_dir;
  std::string data_dir;
  std::string truth_dir;
  bool figure_data = false;
};

void write_plot_data(const fs::path& dir, const PosteriorSummary& s, const Dataset& data) {
  fs::create_directories(dir);
  const int G = s.cooc.n_channels;
  {
    std::ofstream f(dir / "gram_vs_distance.csv");
    f << "k,site_a,site_b,distance,gram\n";
    for (const auto& p : s.gram_pairs)
      for (std::size_t q = 0; q < p.gram.size(); ++q)
        f << p.component << ',' << data.site_names.at(static_cast<std::size_t>(p.site_a[q])) << ','
          << data.site_names.at(static_cast<std::size_t>(p.site_b[q])) << ',' << format_double(p.distance[q]) << ','
          << format_double(p.gram[q]) << '\n';
  }
  {
    std::ofstream f(dir / "cooccurrence_heatmap.csv");
    f << "g,site_a,site_b,probability\n";
    for (int g = 0; g < G; ++g) {
      const auto& C = s.cooc.average[static_cast<std::size_t>(g)];
      for (Eigen::Index a = 0; a < C.rows(); ++a)
        for (Eigen::Index b = 0; b < C.cols(); ++b)
          f << g << ',' << data.site_names.at(static_cast<std::size_t>(a)) << ','
            << data.site_names.at(static_cast<std::size_t>(b)) << ',' << format_double(C(a, b)) << '\n';
    }
  }
  {
    std::ofstream f(dir / "factor_shares.csv");
    f << "k,factor,share\n";
    for (Eigen::Index k = 0; k < s.norms.rows(); ++k)
      for (Eigen::Index j = 0; j < s.norms.cols(); ++j) f << k << ',' << j << ',' << format_double(s.norms(k, j)) << '\n';
  }
  {
    std::ofstream f(dir / "clusters_by_month.csv");
    f << "m,g,mean,median\n";
    for (int m = 0; m < s.cooc.n_partitions; ++m)
      for (int g = 0; g < G; ++g)
        f << m << ',' << g << ',' << format_double(s.counts.mean(m, g)) << ',' << format_double(s.counts.median(m, g)) << '\n';
  }
  {
    std::ofstream f(dir / "cluster_coefficients.csv");
    f << "m,g,cluster,k,predictor,size,mean,lower,upper\n";
    for (const auto& c : s.coefficients)
      f << c.partition << ',' << c.channel << ',' << c.cluster << ',' << c.component << ',' << c.predictor << ','
        << c.members.size() << ',' << format_double(c.value.mean) << ',' << format_double(c.value.lower) << ','
        << format_double(c.value.upper) << '\n';
  }
  {
    std::ofstream f(dir / "cluster_map.csv");
    f << "m,g,site,x,y,cluster\n";
    for (int m = 0; m < s.cooc.n_partitions; ++m)
      for (int g = 0; g < G; ++g) {
        const auto& lab = s.modal_labels[static_cast<std::size_t>(m * G + g)];
        for (std::size_t i = 0; i < lab.size(); ++i) {
          f << m << ',' << g << ',' << data.site_names.at(i) << ',';
          if (data.site_coords) {
            f << format_double((*data.site_coords)(static_cast<Eigen::Index>(i), 0)) << ','
              << format_double((*data.site_coords)(static_cast<Eigen::Index>(i), 1));
          } else {
            f << ",";
          }
          f << ',' << lab[i] << '\n';
        }
      }
  }
}

int cmd_summarize(const Globals& g, const SummarizeOptions& opt, const std::vector<std::string>& args, std::ostream& out) {
  const fs::path dir = out_dir(g);
  const fs::path run = opt.run_dir;
  if (!fs::exists(run / "config.echo")) throw IoError(run.string() + " is not a fit run directory (no config.echo)");
  Manifest manifest(args, "summarize");
  manifest.input("config", run / "config.echo");
  const ModelConfig config = load_config(run / "config.echo");
  manifest.config(config);

  fs::path data_dir = opt.data_dir;
  if (data_dir.empty() && fs::exists(run / "manifest.json")) {
    std::ifstream in(run / "manifest.json");
    data_dir = json::parse(in).value("data_dir", "");
  }
  if (data_dir.empty()) throw ValidationError({"cannot locate the dataset; pass --data"});
  Dataset data = read_dataset(data_dir);
  if (data.site_names.empty())
    for (int i = 0; i < data.n_sites(); ++i) data.site_names.push_back("site" + std::to_string(i));

  Draws pooled;
  std::vector<std::vector<double>> per_chain_means;
  for (int j = 0; j < config.mcmc.n_chains; ++j) {
    const ChainPaths paths = chain_paths(run, j);
    if (!fs::exists(paths.states())) throw IoError("missing chain " + std::to_string(j) + " in " + run.string());
    DrawSet d = read_draws(paths.states(), config);
    if (d.draws.empty()) throw IoError("chain " + std::to_string(j) + " has no retained draws yet");
    const CountSeries counts = cluster_count_series(d.draws);
    per_chain_means.emplace_back(counts.mean.data(), counts.mean.data() + counts.mean.size());
    for (auto& s : d.draws) pooled.push_back(std::move(s));
  }
  for (const auto& [role, path] : {std::pair{"data", data_dir}, std::pair{"draws", run}}) manifest.input(role, path);
  manifest.write(dir, false);

  const PosteriorSummary summary = summarize_posterior(pooled, data.site_coords);
  write_summary(dir, summary);
  {
    std::ofstream f(dir / "chain_cluster_counts.csv");
    f << "chain,m,g,mean\n";
    const int G = config.n_channels();
    for (std::size_t j = 0; j < per_chain_means.size(); ++j)
      for (int m = 0; m < config.n_partitions; ++m)
        for (int gg = 0; gg < G; ++gg)
          // CountSeries::mean is column-major M x G.
          f << j << ',' << m << ',' << gg << ','
            << format_double(per_chain_means[j][static_cast<std::size_t>(gg * config.n_partitions + m)]) << '\n';
  }
  fs::path truth_dir = opt.truth_dir;
  if (truth_dir.empty() && fs::exists(data_dir.parent_path() / "truth" / "labels.csv")) truth_dir = data_dir.parent_path() / "truth";
  if (!truth_dir.empty()) {
    const ParameterState truth = read_state(truth_dir, config);
    std::ofstream f(dir / "ari_vs_truth.csv");
    f << "m,g,ari\n";
    const int G = config.n_channels();
    for (int m = 0; m < config.n_partitions; ++m)
      for (int gg = 0; gg < G; ++gg)
        f << m << ',' << gg << ','
          << format_double(adjusted_rand_index(summary.modal_labels[static_cast<std::size_t>(m * G + gg)],
                                               truth.clusters.dp(m, gg).labels))
          << '\n';
  }
  if (opt.figure_data) write_plot_data(dir / "plot_data", summary, data);
  manifest.write(dir, true);
  out << "summarised " << summary.n_draws << " draws; grand mean cluster count "
      << format_double(summary.counts.grand_mean) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepCell {
  double alpha = 1.0;
  double tau2_shape = 1.0;
  double tau2_rate = 1.0;
  std::optional<double> base_variance;
  DpMode mode = DpMode::joint;
};

std::vector<SweepCell> sweep_grid(const json& spec, const ModelConfig& base) {
  auto list = [&](const char* key, auto fallback) {
    using T = decltype(fallback);
    if (!spec.contains(key)) return std::vector<T>{fallback};
    try {
      auto v = spec.at(key).get<std::vector<T>>();
      if (v.empty()) throw ValidationError({std::string("sweep spec: '") + key + "' is empty"});
      return v;
    } catch (const json::exception& e) {
      throw ValidationError({std::string("sweep spec: '") + key + "': " + e.what()});
    }
  };
  const auto alphas = list("alpha", base.dp_concentration);
  const auto tau = list("tau2_prior", std::vector<double>{base.priors.shape_for(0), base.priors.rate_for(0)});
  const auto bases = spec.contains("base_variance") ? list("base_variance", 0.0) : std::vector<double>{};
  const auto modes = list("dp_mode", to_string(base.dp_mode));
  std::vector<SweepCell> cells;
  for (const auto& mode : modes)
    for (std::size_t b = 0; b < std::max<std::size_t>(1, bases.size()); ++b)
      for (const auto& t : tau)
        for (double a : alphas) {
          if (t.size() != 2) throw ValidationError({"sweep spec: tau2_prior entries are [shape, rate] pairs"});
          SweepCell c;
          c.alpha = a;
          c.tau2_shape = t[0];
          c.tau2_rate = t[1];
          if (!bases.empty()) c.base_variance = bases[b];
          try {
            c.mode = dp_mode_from_string(mode);
          } catch (const std::exception& e) {
            throw ValidationError({std::string("sweep spec: ") + e.what()});
          }
          cells.push_back(c);
        }
  return cells;
}

ModelConfig apply_cell(ModelConfig c, const SweepCell& cell) {
  c.dp_concentration = cell.alpha;
  c.priors.tau2_shape = {cell.tau2_shape};
  c.priors.tau2_rate = {cell.tau2_rate};
  c.dp_mode = cell.mode;
  if (cell.base_variance) {
    for (auto& p : c.priors.beta_base) {
      if (p.cov.rows() == 1) {
        p.cov(0, 0) = *cell.base_variance;
      } else {
        p.cov = MatrixXd::Identity(p.cov.rows(), p.cov.cols()) * *cell.base_variance;
      }
    }
  }
  return c;
}

struct CellResult {
  bool ok = false;
  std::string message;
  CountSeries counts;
};

int cmd_sweep(const Globals& g, const std::string& config_path, const std::string& data_path,
              const std::string& spec_path, bool parallel, const std::vector<std::string>& args, std::ostream& out,
              std::ostream& err) {
  const fs::path dir = out_dir(g);
  Manifest manifest(args, "sweep");
  manifest.input("config", config_path);
  manifest.input("data", data_path);
  manifest.input("sweep_spec", spec_path);
  ModelConfig base = load_checked_config(config_path, g);
  manifest.config(base);
  json spec;
  try {
    std::ifstream in(spec_path);
    if (!in) throw IoError("cannot open " + spec_path);
    spec = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError({std::string("sweep spec is not valid JSON: ") + e.what()});
  }
  for (const char* key : {"n_iterations", "burn_in", "thin", "n_chains"})
    if (spec.contains(key)) {
      int& field = std::string(key) == "n_iterations" ? base.mcmc.n_iterations
                   : std::string(key) == "burn_in"    ? base.mcmc.burn_in
                   : std::string(key) == "thin"       ? base.mcmc.thin
                                                      : base.mcmc.n_chains;
      field = spec[key].get<int>();
    }
  const auto cells = sweep_grid(spec, base);
  std::vector<ModelConfig> configs;
  for (const auto& c : cells) {
    configs.push_back(apply_cell(base, c));
    require_valid(configs.back());
  }
  const Dataset data = read_dataset(data_path);
  manifest.write(dir, false);

  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t q = next++; q < cells.size(); q = next++) {
      auto& r = results[q];
      try {
        const Model model(configs[q], data);
        Draws draws;
        for (int j = 0; j < configs[q].mcmc.n_chains; ++j) {
          ChainOutput o = run_chain(model, j, {false, false});
          for (auto& s : o.draws) draws.push_back(std::move(s));
        }
        r.counts = cluster_count_series(draws);
        r.ok = true;
      } catch (const std::exception& e) {
        r.message = e.what();
      }
    }
  };
  const int n_threads = parallel ? std::clamp(g.threads, 1, static_cast<int>(cells.size())) : 1;
  std::vector<std::thread> pool;
  for (int q = 1; q < n_threads; ++q) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  fs::create_directories(dir);
  auto base_text = [](const SweepCell& c) { return c.base_variance ? format_double(*c.base_variance) : std::string(); };
  {
    std::ofstream f(dir / "sweep.csv");
    f << "cell,alpha,tau2_shape,tau2_rate,base_variance,dp_mode,status,grand_mean,message\n";
    for (std::size_t q = 0; q < cells.size(); ++q) {
      const auto& c = cells[q];
      const auto& r = results[q];
      std::string msg = r.message;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      f << q << ',' << format_double(c.alpha) << ',' << format_double(c.tau2_shape) << ',' << format_double(c.tau2_rate)
        << ',' << base_text(c) << ',' << to_string(c.mode) << ',' << (r.ok ? "ok" : "failed") << ','
        << (r.ok ? format_double(r.counts.grand_mean) : "") << ',' << msg << '\n';
      if (!r.ok) err << "cell " << q << " failed: " << r.message << '\n';
    }
  }
  {
    std::ofstream f(dir / "sweep_months.csv");
    f << "cell,m,g,mean,median\n";
    for (std::size_t q = 0; q < cells.size(); ++q) {
      if (!results[q].ok) continue;
      const auto& c = results[q].counts;
      for (Eigen::Index m = 0; m < c.mean.rows(); ++m)
        for (Eigen::Index gg = 0; gg < c.mean.cols(); ++gg)
          f << q << ',' << m << ',' << gg << ',' << format_double(c.mean(m, gg)) << ',' << format_double(c.median(m, gg))
            << '\n';
    }
  }
  {
    // Grand means laid out with one row per prior setting and one column per alpha.
    std::vector<double> alphas;
    for (const auto& c : cells)
      if (std::find(alphas.begin(), alphas.end(), c.alpha) == alphas.end()) alphas.push_back(c.alpha);
    std::ofstream f(dir / "sweep_table.csv");
    f << "dp_mode,base_variance,tau2_shape,tau2_rate";
    for (double a : alphas) f << ",alpha=" << format_double(a);
    f << '\n';
    for (std::size_t q = 0; q < cells.size(); q += alphas.size()) {
      const auto& c = cells[q];
      f << to_string(c.mode) << ',' << base_text(c) << ',' << format_double(c.tau2_shape) << ','
        << format_double(c.tau2_rate);
      for (std::size_t a = 0; a < alphas.size(); ++a) {
        const auto& r = results[q + a];
        f << ',' << (r.ok ? format_double(r.counts.grand_mean) : "NA");
      }
      f << '\n';
    }
  }
  manifest.write(dir, true);
  const auto failed = std::count_if(results.begin(), results.end(), [](const CellResult& r) { return !r.ok; });
  out << "sweep: " << cells.size() - static_cast<std::size_t>(failed) << " of " << cells.size() << " cells completed\n";
  return failed == static_cast<long>(cells.size()) ? kExitRuntime : kExitOk;
}

// ---------------------------------------------------------------------------
// explore and ingest

int cmd_explore(const Globals& g, const std::string& data_path, const std::vector<std::string>& args, std::ostream& out) {
  const fs::path dir = out_dir(g);
  Manifest manifest(args, "explore");
  manifest.input("data", data_path);
  manifest.write(dir, false);
  Dataset data = read_dataset(data_path);
  const auto issues = validate_dataset(data);
  if (!issues.empty()) throw ValidationError(issues);
  if (data.site_names.empty())
    for (int i = 0; i < data.n_sites(); ++i) data.site_names.push_back("site" + std::to_string(i));
  auto comp_name = [&](int k) {
    return k < static_cast<int>(data.transform_log.size()) ? data.transform_log[static_cast<std::size_t>(k)].variable
                                                           : "y" + std::to_string(k);
  };
  auto write_profile = [&](const char* name, const char* index, const std::vector<ProfilePoint>& pts) {
    std::ofstream f(dir / name);
    f << "site,component," << index << ",mean\n";
    for (const auto& p : pts)
      f << data.site_names[static_cast<std::size_t>(p.site)] << ',' << comp_name(p.component) << ',' << p.index << ','
        << format_double(p.mean) << '\n';
  };
  write_profile("daily_means.csv", "day", daily_means(data));
  write_profile("hour_of_day_means.csv", "hour", hour_of_day_means(data));
  const auto fits = explore_monthly_ols(data);
  {
    std::ofstream f(dir / "monthly_ols.csv");
    f << "site,month,component,rank_deficient,intercept";
    for (int j = 0; j < data.p_x(); ++j) {
      const auto q = static_cast<std::size_t>(data.n_components() + j);
      f << ",slope_" << (q < data.transform_log.size() ? data.transform_log[q].variable : "x" + std::to_string(j));
    }
    f << '\n';
    for (const auto& fit : fits) {
      f << data.site_names[static_cast<std::size_t>(fit.site)] << ',' << fit.partition << ',' << comp_name(fit.component)
        << ',' << (fit.rank_deficient ? 1 : 0);
      for (int j = 0; j <= data.p_x(); ++j) f << ',' << (fit.rank_deficient ? "" : format_double(fit.coef[j]));
      f << '\n';
    }
  }
  manifest.write(dir, true);
  out << "explored " << data.n_sites() << " sites; " << fits.size() << " monthly fits\n";
  return kExitOk;
}

int cmd_ingest(const Globals& g, const std::string& input, const std::string& coords_path, const std::string& policy,
               const std::string& delimiter, const std::vector<std::string>& args, std::ostream& out) {
  const fs::path dir = out_dir(g);
  if (delimiter.size() != 1) throw ValidationError({"--delimiter must be a single character"});
  Manifest manifest(args, "ingest");
  manifest.input("raw", input);
  if (!coords_path.empty()) manifest.input("coords", coords_path);
  manifest.write(dir, false);
  GapPolicy gaps;
  try {
    gaps = gap_policy_from_string(policy);
  } catch (const std::exception& e) {
    throw ValidationError({e.what()});
  }
  RawTable table = ingest(input, delimiter[0]);
  StationCoords coords;
  if (!coords_path.empty()) coords = read_station_coords(coords_path, delimiter[0]);
  if (gaps == GapPolicy::nearest_station) {
    if (coords.empty()) throw ValidationError({"--gaps nearest-station needs --coords"});
    table = fill_gaps(table, coords, gaps);
  }
  const Dataset data = build_dataset(table, {}, coords.empty() ? nullptr : &coords);
  write_dataset(dir / "data", data);
  const auto imputed = std::count_if(table.rows.begin(), table.rows.end(), [](const RawRow& r) { return r.imputed; });
  if (imputed) write_raw(dir / "imputed_table.csv", table);
  manifest.set("imputed_rows", imputed);
  manifest.write(dir, true);
  out << "ingested " << data.n_sites() << " stations x " << data.n_times() << " hours (" << imputed
      << " imputed values)\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Clustering of multivariate hourly air-quality functions"};
  app.set_version_flag("--version", std::string(TVC_VERSION));
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override the configured root seed");
  app.add_option("--threads", g.threads, "Worker threads for chains or sweep cells")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");

  std::string config_path, truth_path, data_path, spec_path, input, coords_path;
  std::string policy = "fail", delimiter = ",";
  FitOptions fit_opt;
  SummarizeOptions sum_opt;
  bool parallel = false;

  auto* sim = app.add_subcommand("simulate", "Simulate a dataset from the forward model");
  sim->add_option("--config", config_path, "Model config (JSON)")->required();
  sim->add_option("--truth", truth_path, "Design and true parameters (JSON)")->required();

  auto* fit = app.add_subcommand("fit", "Run the Gibbs sampler");
  fit->add_option("--config", config_path, "Model config (JSON)")->required();
  fit->add_option("--data", data_path, "Dataset directory")->required();
  fit->add_flag("--resume", fit_opt.resume, "Continue from the last checkpoint");
  fit->add_option("--stop-after", fit_opt.stop_after, "Stop after this many sweeps (resumable)");
  fit->add_option("--checkpoint-every", fit_opt.checkpoint_every, "Sweeps between checkpoints")->check(CLI::PositiveNumber);

  auto* sum = app.add_subcommand("summarize", "Summarise retained draws");
  sum->add_option("--run", sum_opt.run_dir, "Fit output directory")->required();
  sum->add_option("--data", sum_opt.data_dir, "Dataset directory (default: from the run manifest)");
  sum->add_option("--truth", sum_opt.truth_dir, "True state directory for recovery metrics");
  sum->add_flag("--figure-data,--plot-data", sum_opt.figure_data, "Also write plotting series");

  auto* swp = app.add_subcommand("sweep", "Prior sensitivity grid");
  swp->add_option("--config", config_path, "Base model config (JSON)")->required();
  swp->add_option("--data", data_path, "Dataset directory")->required();
  swp->add_option("--spec", spec_path, "Sweep grid (JSON)")->required();
  swp->add_flag("--parallel", parallel, "Run cells concurrently on --threads workers");

  auto* exp = app.add_subcommand("explore", "Daily, hour-of-day and monthly least-squares tables");
  exp->add_option("--data", data_path, "Dataset directory")->required();

  auto* ing = app.add_subcommand("ingest", "Build a dataset from long-format hourly measurements");
  ing->add_option("--input", input, "Raw table station,timestamp,variable,value")->required();
  ing->add_option("--coords", coords_path, "Station coordinates station,x,y");
  ing->add_option("--gaps", policy, "Gap policy: fail or nearest-station");
  ing->add_option("--delimiter", delimiter, "Field delimiter");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << TVC_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  if (*seed_opt) g.seed = seed;
  std::vector<std::string> argv{"tvcluster"};
  argv.insert(argv.end(), args.begin(), args.end());

  try {
    if (*sim) return cmd_simulate(g, config_path, truth_path, argv, out);
    if (*fit) return cmd_fit(g, config_path, data_path, fit_opt, argv, out, err);
    if (*sum) return cmd_summarize(g, sum_opt, argv, out);
    if (*swp) return cmd_sweep(g, config_path, data_path, spec_path, parallel, argv, out, err);
    if (*exp) return cmd_explore(g, data_path, argv, out);
    if (*ing) return cmd_ingest(g, input, coords_path, policy, delimiter, argv, out);
  } catch (const ValidationError& e) {
    err << "invalid input:\n";
    for (const auto& v : e.violations()) err << "  " << v << '\n';
    return kExitInvalid;
  } catch (const PipelineError& e) {
    err << "invalid input:\n";
    for (const auto& v : e.issues()) err << "  " << v << '\n';
    return kExitInvalid;
  } catch (const ChainError& e) {
    err << "sampler failure: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitInvalid;
}

}  // namespace tvc::cli
