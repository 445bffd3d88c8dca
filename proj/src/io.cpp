// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/io.hpp"

#include "tvcluster/model.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace tvc {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && *begin == ' ') ++begin;
  if (begin < end && *begin == '+') ++begin;
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) throw IoError("not a number: '" + s + "'");
  return v;
}

namespace {

int parse_int(const std::string& s) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw IoError("not an integer: '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char delimiter) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, delimiter)) out.push_back(cell);
  if (!line.empty() && line.back() == delimiter) out.emplace_back();
  return out;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw IoError("missing column '" + name + "'");
  return static_cast<int>(it - header.begin());
}

int CsvTable::integer(std::size_t row, int col) const { return parse_int(rows[row][static_cast<std::size_t>(col)]); }

double CsvTable::real(std::size_t row, int col) const { return parse_double(rows[row][static_cast<std::size_t>(col)]); }

CsvTable read_csv(const fs::path& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split(line, delimiter);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line, delimiter);
    if (cells.size() != t.header.size()) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                    " fields, found " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void write_csv(const fs::path& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out << (c ? "," : "") << cells[c];
    out << '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
}

// ---------------------------------------------------------------------------
// Config

namespace {

json vector_json(const VectorXd& v) {
  if (v.size() == 1) return v[0];
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

json matrix_json(const MatrixXd& m) {
  if (m.rows() == 1 && m.cols() == 1) return m(0, 0);
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

json prior_json(const std::vector<GaussianPrior>& priors) {
  auto one = [](const GaussianPrior& p) { return json{{"mean", vector_json(p.mean)}, {"cov", matrix_json(p.cov)}}; };
  if (priors.size() == 1) return one(priors.front());
  json arr = json::array();
  for (const auto& p : priors) arr.push_back(one(p));
  return arr;
}

json scalar_list_json(const std::vector<double>& v) {
  if (v.size() == 1) return v.front();
  return json(v);
}

struct Reader {
  std::vector<std::string> issues;

  template <class T>
  T get(const json& obj, const std::string& key, T fallback, bool required) {
    if (!obj.is_object() || !obj.contains(key)) {
      if (required) issues.push_back("missing key '" + key + "'");
      return fallback;
    }
    try {
      return obj.at(key).get<T>();
    } catch (const json::exception& e) {
      issues.push_back("key '" + key + "': " + e.what());
      return fallback;
    }
  }

  VectorXd vector(const json& v, const std::string& where) {
    if (v.is_number()) return VectorXd::Constant(1, v.get<double>());
    if (v.is_array()) {
      VectorXd out(static_cast<Eigen::Index>(v.size()));
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) {
          issues.push_back(where + ": expected numbers");
          return VectorXd::Zero(1);
        }
        out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
      }
      if (out.size() == 0) issues.push_back(where + ": empty vector");
      return out.size() ? out : VectorXd::Zero(1);
    }
    issues.push_back(where + ": expected a number or an array");
    return VectorXd::Zero(1);
  }

  MatrixXd matrix(const json& v, const std::string& where) {
    if (v.is_number()) return MatrixXd::Constant(1, 1, v.get<double>());
    if (v.is_array() && !v.empty() && v[0].is_array()) {
      const auto rows = static_cast<Eigen::Index>(v.size());
      const auto cols = static_cast<Eigen::Index>(v[0].size());
      MatrixXd out(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = v[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
          issues.push_back(where + ": ragged matrix");
          return MatrixXd::Identity(1, 1);
        }
        for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = row[static_cast<std::size_t>(j)].get<double>();
      }
      return out;
    }
    issues.push_back(where + ": expected a number or a matrix");
    return MatrixXd::Identity(1, 1);
  }

  GaussianPrior prior(const json& v, const std::string& where) {
    GaussianPrior p;
    if (!v.is_object()) {
      issues.push_back(where + ": expected an object with 'mean' and 'cov'");
      return p;
    }
    p.mean = v.contains("mean") ? vector(v["mean"], where + ".mean") : VectorXd::Zero(1);
    if (v.contains("cov")) {
      p.cov = matrix(v["cov"], where + ".cov");
    } else {
      issues.push_back(where + ": missing 'cov'");
    }
    return p;
  }

  std::vector<GaussianPrior> prior_list(const json& obj, const std::string& key) {
    if (!obj.contains(key)) {
      issues.push_back("missing key 'priors." + key + "'");
      return {GaussianPrior{}};
    }
    const json& v = obj[key];
    if (v.is_array()) {
      std::vector<GaussianPrior> out;
      for (std::size_t k = 0; k < v.size(); ++k) out.push_back(prior(v[k], "priors." + key + "[" + std::to_string(k) + "]"));
      return out;
    }
    return {prior(v, "priors." + key)};
  }

  std::vector<double> scalar_list(const json& obj, const std::string& key) {
    if (!obj.contains(key)) {
      issues.push_back("missing key 'priors." + key + "'");
      return {1.0};
    }
    const VectorXd v = vector(obj[key], "priors." + key);
    return {v.data(), v.data() + v.size()};
  }
};

}  // namespace

json config_to_json(const ModelConfig& c) {
  json doc;
  doc["n_sites"] = c.n_sites;
  doc["n_components"] = c.n_components;
  doc["n_factors"] = c.n_factors;
  doc["n_partitions"] = c.n_partitions;
  doc["decay_rates"] = c.decay_rates;
  doc["dp_concentration"] = c.dp_concentration;
  doc["dp_mode"] = to_string(c.dp_mode);
  json pri;
  pri["gamma"] = prior_json(c.priors.gamma);
  pri["beta_base"] = prior_json(c.priors.beta_base);
  pri["lambda"] = prior_json(c.priors.lambda);
  pri["a_mean"] = c.priors.a_mean;
  pri["a_var"] = c.priors.a_var;
  pri["tau2_shape"] = scalar_list_json(c.priors.tau2_shape);
  pri["tau2_rate"] = scalar_list_json(c.priors.tau2_rate);
  doc["priors"] = pri;
  doc["mcmc"] = {{"n_iterations", c.mcmc.n_iterations},
                 {"burn_in", c.mcmc.burn_in},
                 {"thin", c.mcmc.thin},
                 {"rng_seed", c.mcmc.rng_seed},
                 {"n_chains", c.mcmc.n_chains}};
  return doc;
}

ModelConfig config_from_json(const json& doc) {
  Reader rd;
  ModelConfig c;
  if (!doc.is_object()) throw ValidationError({"config must be a JSON object"});
  c.n_sites = rd.get<int>(doc, "n_sites", 1, true);
  c.n_components = rd.get<int>(doc, "n_components", 1, true);
  c.n_factors = rd.get<int>(doc, "n_factors", 1, true);
  c.n_partitions = rd.get<int>(doc, "n_partitions", 1, true);
  c.dp_concentration = rd.get<double>(doc, "dp_concentration", 1.0, true);
  try {
    c.dp_mode = dp_mode_from_string(rd.get<std::string>(doc, "dp_mode", "joint", false));
  } catch (const std::exception& e) {
    rd.issues.push_back(e.what());
  }
  if (doc.contains("decay_rates")) {
    const json& d = doc["decay_rates"];
    if (d.is_array() && !d.empty() && d[0].is_number()) {
      // One row shared by every component.
      const auto row = rd.vector(d, "decay_rates");
      c.decay_rates.assign(static_cast<std::size_t>(std::max(c.n_components, 0)),
                           std::vector<double>(row.data(), row.data() + row.size()));
    } else {
      c.decay_rates = rd.get<std::vector<std::vector<double>>>(doc, "decay_rates", {}, true);
    }
  } else {
    rd.issues.push_back("missing key 'decay_rates'");
  }
  if (doc.contains("priors") && doc["priors"].is_object()) {
    const json& p = doc["priors"];
    c.priors.gamma = rd.prior_list(p, "gamma");
    c.priors.beta_base = rd.prior_list(p, "beta_base");
    c.priors.lambda = rd.prior_list(p, "lambda");
    c.priors.a_mean = rd.get<double>(p, "a_mean", 0.0, false);
    c.priors.a_var = rd.get<double>(p, "a_var", 100.0, false);
    c.priors.tau2_shape = rd.scalar_list(p, "tau2_shape");
    c.priors.tau2_rate = rd.scalar_list(p, "tau2_rate");
  } else {
    rd.issues.push_back("missing object 'priors'");
  }
  if (doc.contains("mcmc") && doc["mcmc"].is_object()) {
    const json& m = doc["mcmc"];
    c.mcmc.n_iterations = rd.get<int>(m, "n_iterations", 1, true);
    c.mcmc.burn_in = rd.get<int>(m, "burn_in", 0, false);
    c.mcmc.thin = rd.get<int>(m, "thin", 1, false);
    c.mcmc.rng_seed = rd.get<std::uint64_t>(m, "rng_seed", 1, false);
    c.mcmc.n_chains = rd.get<int>(m, "n_chains", 1, false);
  } else {
    rd.issues.push_back("missing object 'mcmc'");
  }
  if (!rd.issues.empty()) throw ValidationError(rd.issues);
  return c;
}

ModelConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError({std::string("config is not valid JSON: ") + e.what()});
  }
  return config_from_json(doc);
}

void save_config(const fs::path& path, const ModelConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << config_to_json(config).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Dataset

void write_dataset(const fs::path& dir, const Dataset& d) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "times.csv");
    out << "t,time,partition\n";
    for (int t = 0; t < d.n_times(); ++t) {
      out << t << ',' << format_double(d.times[t]) << ',' << d.partition_of[static_cast<std::size_t>(t)] << '\n';
    }
  }
  auto write_cube = [&](const char* name, const char* col, const std::vector<MatrixXd>& cube) {
    std::ofstream out(dir / name);
    out << "i," << col << ",t,value\n";
    for (std::size_t i = 0; i < cube.size(); ++i)
      for (Eigen::Index j = 0; j < cube[i].cols(); ++j)
        for (Eigen::Index t = 0; t < cube[i].rows(); ++t)
          out << i << ',' << j << ',' << t << ',' << format_double(cube[i](t, j)) << '\n';
  };
  write_cube("y.csv", "k", d.y);
  write_cube("x.csv", "j", d.x);
  write_cube("z.csv", "j", d.z);
  if (d.site_coords || !d.site_names.empty()) {
    std::ofstream out(dir / "coords.csv");
    out << "i,name,x,y\n";
    for (int i = 0; i < d.n_sites(); ++i) {
      const std::string name = i < static_cast<int>(d.site_names.size()) ? d.site_names[static_cast<std::size_t>(i)] : "";
      out << i << ',' << name << ',';
      if (d.site_coords) {
        out << format_double((*d.site_coords)(i, 0)) << ',' << format_double((*d.site_coords)(i, 1)) << '\n';
      } else {
        out << "nan,nan\n";
      }
    }
  }
  if (!d.transform_log.empty()) {
    std::ofstream out(dir / "transforms.csv");
    out << "k,variable,kind,center,scale\n";
    for (std::size_t k = 0; k < d.transform_log.size(); ++k) {
      const auto& r = d.transform_log[k];
      out << k << ',' << r.variable << ',' << to_string(r.kind) << ',' << format_double(r.center) << ','
          << format_double(r.scale) << '\n';
    }
  }
}

namespace {

std::vector<MatrixXd> read_cube(const fs::path& path, const char* col, int n_times, int n_sites_hint) {
  const CsvTable t = read_csv(path);
  const int ci = t.column("i"), cj = t.column(col), ct = t.column("t"), cv = t.column("value");
  int n = n_sites_hint, p = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    n = std::max(n, t.integer(r, ci) + 1);
    p = std::max(p, t.integer(r, cj) + 1);
  }
  std::vector<MatrixXd> cube(static_cast<std::size_t>(n), MatrixXd::Constant(n_times, p, std::nan("")));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const int i = t.integer(r, ci), j = t.integer(r, cj), s = t.integer(r, ct);
    if (i < 0 || j < 0 || s < 0 || s >= n_times) throw IoError(path.string() + ": index out of range");
    cube[static_cast<std::size_t>(i)](s, j) = t.real(r, cv);
  }
  if (static_cast<long long>(t.rows.size()) != static_cast<long long>(n) * p * n_times) {
    throw IoError(path.string() + ": expected " + std::to_string(static_cast<long long>(n) * p * n_times) +
                  " rows, found " + std::to_string(t.rows.size()));
  }
  return cube;
}

}  // namespace

Dataset read_dataset(const fs::path& dir) {
  Dataset d;
  const CsvTable times = read_csv(dir / "times.csv");
  const int ct = times.column("t"), ch = times.column("time"), cp = times.column("partition");
  const auto T = static_cast<int>(times.rows.size());
  d.times.resize(T);
  d.partition_of.resize(static_cast<std::size_t>(T));
  for (std::size_t r = 0; r < times.rows.size(); ++r) {
    const int t = times.integer(r, ct);
    if (t < 0 || t >= T) throw IoError("times.csv: index out of range");
    d.times[t] = times.real(r, ch);
    d.partition_of[static_cast<std::size_t>(t)] = times.integer(r, cp);
  }
  d.y = read_cube(dir / "y.csv", "k", T, 0);
  d.x = read_cube(dir / "x.csv", "j", T, static_cast<int>(d.y.size()));
  d.z = read_cube(dir / "z.csv", "j", T, static_cast<int>(d.y.size()));
  if (fs::exists(dir / "coords.csv")) {
    const CsvTable c = read_csv(dir / "coords.csv");
    const int ci = c.column("i"), cn = c.column("name"), cx = c.column("x"), cy = c.column("y");
    const int n = d.n_sites();
    d.site_names.assign(static_cast<std::size_t>(n), "");
    MatrixXd coords(n, 2);
    bool finite = true;
    for (std::size_t r = 0; r < c.rows.size(); ++r) {
      const int i = c.integer(r, ci);
      if (i < 0 || i >= n) throw IoError("coords.csv: site index out of range");
      d.site_names[static_cast<std::size_t>(i)] = c.rows[r][static_cast<std::size_t>(cn)];
      coords(i, 0) = c.real(r, cx);
      coords(i, 1) = c.real(r, cy);
      finite = finite && std::isfinite(coords(i, 0)) && std::isfinite(coords(i, 1));
    }
    if (finite && static_cast<int>(c.rows.size()) == n) d.site_coords = coords;
  }
  if (fs::exists(dir / "transforms.csv")) {
    const CsvTable tr = read_csv(dir / "transforms.csv");
    const int cv = tr.column("variable"), ck = tr.column("kind"), cc = tr.column("center"), cs = tr.column("scale");
    for (std::size_t r = 0; r < tr.rows.size(); ++r) {
      d.transform_log.push_back({tr.rows[r][static_cast<std::size_t>(cv)],
                                 transform_from_string(tr.rows[r][static_cast<std::size_t>(ck)]), tr.real(r, cc),
                                 tr.real(r, cs)});
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Parameter state

namespace {

const std::vector<std::pair<std::string, std::string>> kStateBlocks = {
    {"gamma", "i,m,k,j,value"}, {"labels", "m,g,i,label"}, {"atoms", "m,g,c,k,j,value"},
    {"lambda", "k,i,j,value"},  {"coreg", "k,j,value"},    {"tau2", "k,value"},
    {"nu", "k,j,t,value"}};

// Writes the rows of one block, each prefixed by `prefix`.
void emit_block(const std::string& block, const ParameterState& s, const std::string& prefix, std::ostream& out) {
  const int K = static_cast<int>(s.tau2.size());
  const int M = s.clusters.n_partitions;
  if (block == "gamma") {
    const int n = M > 0 && K > 0 ? static_cast<int>(s.gamma.size()) / (M * K) : 0;
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < M; ++m)
        for (int k = 0; k < K; ++k) {
          const VectorXd& g = s.gamma_at(i, m, k, M, K);
          for (Eigen::Index j = 0; j < g.size(); ++j)
            out << prefix << i << ',' << m << ',' << k << ',' << j << ',' << format_double(g[j]) << '\n';
        }
  } else if (block == "labels") {
    for (int m = 0; m < M; ++m)
      for (int g = 0; g < s.clusters.n_channels(); ++g) {
        const auto& dp = s.clusters.dp(m, g);
        for (std::size_t i = 0; i < dp.labels.size(); ++i)
          out << prefix << m << ',' << g << ',' << i << ',' << dp.labels[i] << '\n';
      }
  } else if (block == "atoms") {
    for (int m = 0; m < M; ++m)
      for (int g = 0; g < s.clusters.n_channels(); ++g) {
        const auto comps = s.clusters.components_of(g);
        const auto& dp = s.clusters.dp(m, g);
        for (int c = 0; c < dp.n_clusters(); ++c)
          for (std::size_t slot = 0; slot < comps.size(); ++slot) {
            const VectorXd& b = dp.atoms[static_cast<std::size_t>(c)][slot];
            for (Eigen::Index j = 0; j < b.size(); ++j)
              out << prefix << m << ',' << g << ',' << c << ',' << comps[slot] << ',' << j << ','
                  << format_double(b[j]) << '\n';
          }
      }
  } else if (block == "lambda") {
    for (int k = 0; k < K; ++k) {
      const auto& L = s.lambda[static_cast<std::size_t>(k)];
      for (Eigen::Index i = 0; i < L.rows(); ++i)
        for (Eigen::Index j = 0; j < L.cols(); ++j)
          out << prefix << k << ',' << i << ',' << j << ',' << format_double(L(i, j)) << '\n';
    }
  } else if (block == "coreg") {
    for (Eigen::Index k = 0; k < s.coreg.rows(); ++k)
      for (Eigen::Index j = 0; j < s.coreg.cols(); ++j)
        out << prefix << k << ',' << j << ',' << format_double(s.coreg(k, j)) << '\n';
  } else if (block == "tau2") {
    for (int k = 0; k < K; ++k) out << prefix << k << ',' << format_double(s.tau2[k]) << '\n';
  } else if (block == "nu") {
    for (std::size_t k = 0; k < s.nu.size(); ++k) {
      const auto& P = s.nu[k];
      for (Eigen::Index j = 0; j < P.rows(); ++j)
        for (Eigen::Index t = 0; t < P.cols(); ++t)
          out << prefix << k << ',' << j << ',' << t << ',' << format_double(P(j, t)) << '\n';
    }
  }
}

struct StateShape {
  int n, K, r, M, p_x, p_z, T;
  DpMode mode;
};

ParameterState empty_state(const StateShape& sh) {
  ParameterState s;
  s.gamma.assign(static_cast<std::size_t>(sh.n * sh.M * sh.K), VectorXd::Zero(sh.p_z));
  s.clusters.mode = sh.mode;
  s.clusters.n_partitions = sh.M;
  s.clusters.n_components = sh.K;
  s.clusters.dps.assign(static_cast<std::size_t>(sh.M * s.clusters.n_channels()), DpClusters{});
  for (auto& dp : s.clusters.dps) dp.labels.assign(static_cast<std::size_t>(sh.n), -1);
  s.lambda.assign(static_cast<std::size_t>(sh.K), MatrixXd::Zero(sh.n, sh.r));
  s.coreg = MatrixXd::Zero(sh.K, sh.K);
  s.tau2 = VectorXd::Zero(sh.K);
  if (sh.T > 0) s.nu.assign(static_cast<std::size_t>(sh.K), MatrixXd::Zero(sh.r, sh.T));
  return s;
}

// Applies the rows of one block table to the state selected per row.
template <class Select>
void apply_block(const std::string& block, const CsvTable& t, int offset, Select state_for) {
  auto col = [&](int c) { return c + offset; };
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    ParameterState& s = state_for(r);
    const int K = static_cast<int>(s.tau2.size());
    const int M = s.clusters.n_partitions;
    if (block == "gamma") {
      s.gamma_at(t.integer(r, col(0)), t.integer(r, col(1)), t.integer(r, col(2)), M, K)[t.integer(r, col(3))] =
          t.real(r, col(4));
    } else if (block == "labels") {
      s.clusters.dp(t.integer(r, col(0)), t.integer(r, col(1))).labels.at(static_cast<std::size_t>(t.integer(r, col(2)))) =
          t.integer(r, col(3));
    } else if (block == "atoms") {
      auto& dp = s.clusters.dp(t.integer(r, col(0)), t.integer(r, col(1)));
      const int c = t.integer(r, col(2)), k = t.integer(r, col(3)), j = t.integer(r, col(4));
      const auto width = static_cast<std::size_t>(s.clusters.components_of(t.integer(r, col(1))).size());
      if (static_cast<int>(dp.atoms.size()) <= c) dp.atoms.resize(static_cast<std::size_t>(c + 1), Atom(width));
      auto& v = dp.atoms[static_cast<std::size_t>(c)][static_cast<std::size_t>(s.clusters.slot_of(k))];
      if (v.size() <= j) v.conservativeResize(j + 1);
      v[j] = t.real(r, col(5));
    } else if (block == "lambda") {
      s.lambda.at(static_cast<std::size_t>(t.integer(r, col(0))))(t.integer(r, col(1)), t.integer(r, col(2))) =
          t.real(r, col(3));
    } else if (block == "coreg") {
      s.coreg(t.integer(r, col(0)), t.integer(r, col(1))) = t.real(r, col(2));
    } else if (block == "tau2") {
      s.tau2[t.integer(r, col(0))] = t.real(r, col(1));
    } else if (block == "nu") {
      s.nu.at(static_cast<std::size_t>(t.integer(r, col(0))))(t.integer(r, col(1)), t.integer(r, col(2))) =
          t.real(r, col(3));
    }
  }
}

void finish_counts(ParameterState& s) {
  for (auto& dp : s.clusters.dps) {
    dp.counts.assign(dp.atoms.size(), 0);
    for (int l : dp.labels) {
      if (l < 0 || l >= dp.n_clusters()) throw IoError("labels reference a missing atom");
      ++dp.counts[static_cast<std::size_t>(l)];
    }
  }
}

int max_index(const CsvTable& t, const std::string& name) {
  const int c = t.column(name);
  int m = -1;
  for (std::size_t r = 0; r < t.rows.size(); ++r) m = std::max(m, t.integer(r, c));
  return m + 1;
}

StateShape shape_from(const ModelConfig& config, const CsvTable& gamma, const CsvTable& atoms, const CsvTable* nu) {
  return {config.n_sites, config.n_components, config.n_factors, config.n_partitions,
          max_index(atoms, "j"), max_index(gamma, "j"), nu ? max_index(*nu, "t") : 0, config.dp_mode};
}

}  // namespace

void write_state(const fs::path& dir, const ParameterState& state) {
  fs::create_directories(dir);
  for (const auto& [block, header] : kStateBlocks) {
    std::ofstream out(dir / (block + ".csv"));
    if (!out) throw IoError("cannot write " + (dir / (block + ".csv")).string());
    out << header << '\n';
    emit_block(block, state, "", out);
  }
}

ParameterState read_state(const fs::path& dir, const ModelConfig& config) {
  std::map<std::string, CsvTable> tables;
  for (const auto& [block, header] : kStateBlocks) {
    if (block == "nu" && !fs::exists(dir / "nu.csv")) continue;
    tables[block] = read_csv(dir / (block + ".csv"));
  }
  const CsvTable* nu = tables.count("nu") ? &tables["nu"] : nullptr;
  ParameterState s = empty_state(shape_from(config, tables["gamma"], tables["atoms"], nu));
  for (const auto& [block, table] : tables) apply_block(block, table, 0, [&](std::size_t) -> ParameterState& { return s; });
  finish_counts(s);
  return s;
}

DrawWriter::DrawWriter(const fs::path& dir, bool append) {
  fs::create_directories(dir);
  for (const auto& [block, header] : kStateBlocks) {
    if (block == "nu") continue;
    const fs::path path = dir / (block + ".csv");
    const bool fresh = !append || !fs::exists(path) || fs::file_size(path) == 0;
    auto& f = files_[block];
    f.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!f) throw IoError("cannot write " + path.string());
    if (fresh) f << "draw," << header << '\n';
  }
}

void DrawWriter::write(int iteration, const ParameterState& state) {
  const std::string prefix = std::to_string(iteration) + ",";
  for (auto& [block, f] : files_) emit_block(block, state, prefix, f);
}

void DrawWriter::flush() {
  for (auto& [block, f] : files_) f.flush();
}

DrawSet read_draws(const fs::path& dir, const ModelConfig& config) {
  std::map<std::string, CsvTable> tables;
  for (const auto& [block, header] : kStateBlocks) {
    if (block == "nu") continue;
    tables[block] = read_csv(dir / (block + ".csv"));
  }
  // Draw order follows the tau2 file, which has one row per component.
  DrawSet out;
  std::map<int, std::size_t> slot;
  const CsvTable& tau = tables["tau2"];
  const int cd = tau.column("draw");
  for (std::size_t r = 0; r < tau.rows.size(); ++r) {
    const int it = tau.integer(r, cd);
    if (slot.emplace(it, out.iterations.size()).second) out.iterations.push_back(it);
  }
  StateShape sh = shape_from(config, tables["gamma"], tables["atoms"], nullptr);
  out.draws.assign(out.iterations.size(), empty_state(sh));
  for (const auto& [block, table] : tables) {
    const int c = table.column("draw");
    apply_block(block, table, 1, [&](std::size_t r) -> ParameterState& {
      const auto it = slot.find(table.integer(r, c));
      if (it == slot.end()) throw IoError(block + ".csv: draw without tau2 row");
      return out.draws[it->second];
    });
  }
  for (auto& s : out.draws) finish_counts(s);
  return out;
}

void truncate_after(const fs::path& csv, int last) {
  if (!fs::exists(csv)) return;
  std::ifstream in(csv);
  std::ostringstream kept;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      kept << line << '\n';
      header = false;
      continue;
    }
    // An unterminated final line is a partial write from an interrupted run.
    if (in.eof()) break;
    const auto comma = line.find(',');
    if (parse_int(line.substr(0, comma)) <= last) kept << line << '\n';
  }
  in.close();
  std::ofstream out(csv, std::ios::trunc);
  out << kept.str();
}

// ---------------------------------------------------------------------------
// Chain directories

ChainPaths chain_paths(const fs::path& run_dir, int chain_index) {
  return {run_dir / ("chain" + std::to_string(chain_index))};
}

void write_checkpoint(const ChainPaths& paths, const ChainCursor& cursor) {
  // Write into a sibling directory, then swap, so an interrupted checkpoint
  // never replaces a good one.
  const fs::path tmp = paths.root / "last.tmp";
  fs::remove_all(tmp);
  write_state(tmp, cursor.state);
  {
    std::ofstream rng(tmp / "rng.txt");
    rng << cursor.rng.save();
    std::ofstream cur(tmp / "cursor.json");
    cur << json{{"iteration", cursor.iteration}}.dump() << '\n';
  }
  fs::remove_all(paths.last());
  fs::rename(tmp, paths.last());
}

bool has_checkpoint(const ChainPaths& paths) { return fs::exists(paths.last() / "cursor.json"); }

ChainCursor read_checkpoint(const ChainPaths& paths, const ModelConfig& config) {
  ChainCursor c;
  std::ifstream cur(paths.last() / "cursor.json");
  if (!cur) throw IoError("no checkpoint in " + paths.root.string());
  c.iteration = json::parse(cur).at("iteration").get<int>();
  c.state = read_state(paths.last(), config);
  std::ifstream rng(paths.last() / "rng.txt");
  std::stringstream buf;
  buf << rng.rdbuf();
  c.rng.restore(buf.str());
  return c;
}

SweepWriter::SweepWriter(const ChainPaths& paths, const ModelConfig& config, bool append) {
  fs::create_directories(paths.root);
  const bool fresh = !append || !fs::exists(paths.sweeps());
  sweeps_.open(paths.sweeps(), fresh ? std::ios::trunc : std::ios::app);
  timings_.open(paths.timings(), fresh ? std::ios::trunc : std::ios::app);
  if (!sweeps_ || !timings_) throw IoError("cannot write sweep files in " + paths.root.string());
  if (fresh) {
    sweeps_ << "iteration,log_likelihood";
    for (int m = 0; m < config.n_partitions; ++m)
      for (int g = 0; g < config.n_channels(); ++g) sweeps_ << ",clusters_" << m << '_' << g;
    sweeps_ << '\n';
    timings_ << "iteration";
    for (const char* b : kBlockNames) timings_ << ',' << b << "_ms";
    timings_ << '\n';
  }
}

void SweepWriter::write(const SweepReport& r) {
  sweeps_ << r.iteration << ',' << format_double(r.log_likelihood);
  for (int c : r.cluster_counts) sweeps_ << ',' << c;
  sweeps_ << '\n';
  timings_ << r.iteration;
  for (double ms : r.block_ms) timings_ << ',' << format_double(ms);
  timings_ << '\n';
}

void SweepWriter::flush() {
  sweeps_.flush();
  timings_.flush();
}

}  // namespace tvc
