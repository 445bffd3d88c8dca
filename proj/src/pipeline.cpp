// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/pipeline.hpp"

#include "tvcluster/io.hpp"
#include "tvcluster/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <tuple>

namespace tvc {

namespace {

std::string join(const std::vector<std::string>& issues) {
  std::string out;
  for (const auto& s : issues) out += (out.empty() ? "" : "; ") + s;
  return out;
}

// Keeps error messages short when a file has thousands of bad rows.
void note(std::vector<std::string>& issues, std::string msg) {
  constexpr std::size_t kMax = 20;
  if (issues.size() < kMax) {
    issues.push_back(std::move(msg));
  } else if (issues.size() == kMax) {
    issues.emplace_back("further problems omitted");
  }
}

}  // namespace

PipelineError::PipelineError(std::vector<std::string> issues)
    : std::runtime_error(join(issues)), issues_(std::move(issues)) {}

std::string to_string(Variable v) {
  switch (v) {
    case Variable::ozone: return "ozone";
    case Variable::pm10: return "pm10";
    case Variable::temperature: return "temperature";
    case Variable::relative_humidity: return "relative_humidity";
  }
  return "?";
}

Variable variable_from_string(const std::string& s) {
  for (Variable v : {Variable::ozone, Variable::pm10, Variable::temperature, Variable::relative_humidity})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown variable '" + s + "'");
}

// ---------------------------------------------------------------------------
// Calendar

std::int64_t days_from_civil(int year, int month, int day) {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) throw std::invalid_argument("invalid calendar date");
  return sys_days{ymd}.time_since_epoch().count();
}

std::int64_t hours_from_civil(const CivilHour& c) {
  if (c.hour < 0 || c.hour > 23) throw std::invalid_argument("hour out of range");
  return days_from_civil(c.year, c.month, c.day) * 24 + c.hour;
}

CivilHour civil_from_hours(std::int64_t hours) {
  using namespace std::chrono;
  const std::int64_t day = hours >= 0 ? hours / 24 : -((-hours + 23) / 24);
  const year_month_day ymd{sys_days{days{day}}};
  return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
          static_cast<int>(static_cast<unsigned>(ymd.day())), static_cast<int>(hours - day * 24)};
}

std::int64_t parse_timestamp(const std::string& s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  char sep = 0;
  int used = 0;
  const int got = std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d%n", &y, &mo, &d, &sep, &h, &used);
  if (got != 5 || (sep != 'T' && sep != ' ')) throw std::invalid_argument("bad timestamp '" + s + "'");
  std::string rest = s.substr(static_cast<std::size_t>(used));
  if (!rest.empty()) {
    int more = 0;
    if (std::sscanf(rest.c_str(), ":%2d%n", &mi, &more) != 1) throw std::invalid_argument("bad timestamp '" + s + "'");
    rest = rest.substr(static_cast<std::size_t>(more));
    if (!rest.empty()) {
      if (std::sscanf(rest.c_str(), ":%2d%n", &se, &more) != 1 || static_cast<std::size_t>(more) != rest.size())
        throw std::invalid_argument("bad timestamp '" + s + "'");
    }
  }
  if (mi != 0 || se != 0) throw std::invalid_argument("timestamp '" + s + "' is off the hourly grid");
  return hours_from_civil({y, mo, d, h});
}

std::string format_timestamp(std::int64_t hours) {
  const CivilHour c = civil_from_hours(hours);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:00", c.year, c.month, c.day, c.hour);
  return buf;
}

// ---------------------------------------------------------------------------
// Raw table

RawTable parse_raw(std::istream& in, char delimiter) {
  std::string line;
  if (!std::getline(in, line)) throw PipelineError({"schema error: input is empty, expected header station,timestamp,variable,value"});
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, delimiter)) header.push_back(cell);
    if (!line.empty() && line.back() == delimiter) header.emplace_back();
  }
  int col[4];
  const char* names[4] = {"station", "timestamp", "variable", "value"};
  std::vector<std::string> issues;
  for (int q = 0; q < 4; ++q) {
    const auto it = std::find(header.begin(), header.end(), names[q]);
    col[q] = it == header.end() ? -1 : static_cast<int>(it - header.begin());
    if (col[q] < 0) issues.push_back(std::string("schema error: missing column '") + names[q] + "'");
  }
  if (!issues.empty()) throw PipelineError(issues);

  RawTable table;
  std::set<std::tuple<std::string, std::int64_t, Variable>> keys;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, delimiter)) cells.push_back(cell);
    if (line.back() == delimiter) cells.emplace_back();
    if (cells.size() != header.size()) {
      note(issues, "line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " fields");
      continue;
    }
    RawRow row;
    row.line = lineno;
    try {
      row.station = cells[static_cast<std::size_t>(col[0])];
      if (row.station.empty()) throw std::invalid_argument("empty station");
      row.hour = parse_timestamp(cells[static_cast<std::size_t>(col[1])]);
      row.variable = variable_from_string(cells[static_cast<std::size_t>(col[2])]);
      row.value = parse_double(cells[static_cast<std::size_t>(col[3])]);
    } catch (const std::exception& e) {
      note(issues, "line " + std::to_string(lineno) + ": " + e.what());
      continue;
    }
    if (!keys.emplace(row.station, row.hour, row.variable).second) {
      note(issues, "line " + std::to_string(lineno) + ": duplicate key (" + row.station + ", " +
                       format_timestamp(row.hour) + ", " + to_string(row.variable) + ")");
      continue;
    }
    table.rows.push_back(std::move(row));
  }
  if (!issues.empty()) throw PipelineError(issues);
  if (table.rows.empty()) throw PipelineError({"schema error: no data rows"});
  return table;
}

RawTable ingest(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw PipelineError({"cannot open " + path.string()});
  return parse_raw(in, delimiter);
}

void write_raw(const std::filesystem::path& path, const RawTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "station,timestamp,variable,value,imputed,donor\n";
  for (const auto& r : table.rows)
    out << r.station << ',' << format_timestamp(r.hour) << ',' << to_string(r.variable) << ','
        << format_double(r.value) << ',' << (r.imputed ? 1 : 0) << ',' << r.donor << '\n';
}

StationCoords read_station_coords(const std::filesystem::path& path, char delimiter) {
  const CsvTable t = read_csv(path, delimiter);
  const int cs = t.column("station"), cx = t.column("x"), cy = t.column("y");
  StationCoords out;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    out[t.rows[r][static_cast<std::size_t>(cs)]] = {t.real(r, cx), t.real(r, cy)};
  return out;
}

GapPolicy gap_policy_from_string(const std::string& s) {
  if (s == "fail") return GapPolicy::fail;
  if (s == "nearest-station") return GapPolicy::nearest_station;
  throw std::invalid_argument("unknown gap policy '" + s + "' (expected fail or nearest-station)");
}

namespace {

struct Grid {
  std::vector<std::string> stations;  // sorted
  std::vector<Variable> variables;    // sorted by enum value
  std::int64_t first = 0;
  std::int64_t last = 0;
  // (station, variable) -> per-hour row index or -1
  std::vector<std::vector<int>> index;

  int n_hours() const { return static_cast<int>(last - first + 1); }
  int slot(std::size_t s, std::size_t v) const { return static_cast<int>(s * variables.size() + v); }
};

Grid make_grid(const RawTable& table, const std::vector<Variable>& wanted) {
  Grid g;
  std::set<std::string> st;
  std::set<Variable> vars;
  g.first = table.rows.front().hour;
  g.last = g.first;
  for (const auto& r : table.rows) {
    st.insert(r.station);
    vars.insert(r.variable);
    g.first = std::min(g.first, r.hour);
    g.last = std::max(g.last, r.hour);
  }
  g.stations.assign(st.begin(), st.end());
  if (wanted.empty()) {
    g.variables.assign(vars.begin(), vars.end());
  } else {
    g.variables = wanted;
  }
  g.index.assign(g.stations.size() * g.variables.size(), std::vector<int>(static_cast<std::size_t>(g.n_hours()), -1));
  for (std::size_t q = 0; q < table.rows.size(); ++q) {
    const auto& r = table.rows[q];
    const auto s = static_cast<std::size_t>(std::lower_bound(g.stations.begin(), g.stations.end(), r.station) - g.stations.begin());
    const auto v = std::find(g.variables.begin(), g.variables.end(), r.variable);
    if (v == g.variables.end()) continue;
    g.index[static_cast<std::size_t>(g.slot(s, static_cast<std::size_t>(v - g.variables.begin())))]
           [static_cast<std::size_t>(r.hour - g.first)] = static_cast<int>(q);
  }
  return g;
}

}  // namespace

RawTable fill_gaps(const RawTable& table, const StationCoords& coords, GapPolicy policy) {
  if (table.rows.empty()) return table;
  const Grid g = make_grid(table, {});
  std::vector<std::string> issues;
  for (const auto& s : g.stations)
    if (!coords.count(s)) note(issues, "no coordinates for station " + s);
  if (!issues.empty()) throw PipelineError(issues);

  // Donor stations in order of distance, nearest first; ties by name.
  std::vector<std::vector<std::size_t>> donors(g.stations.size());
  for (std::size_t a = 0; a < g.stations.size(); ++a) {
    const auto [ax, ay] = coords.at(g.stations[a]);
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t b = 0; b < g.stations.size(); ++b) {
      if (a == b) continue;
      const auto [bx, by] = coords.at(g.stations[b]);
      d.emplace_back(std::hypot(ax - bx, ay - by), b);
    }
    std::sort(d.begin(), d.end());
    for (const auto& p : d) donors[a].push_back(p.second);
  }

  RawTable out = table;
  for (std::size_t s = 0; s < g.stations.size(); ++s)
    for (std::size_t v = 0; v < g.variables.size(); ++v)
      for (int h = 0; h < g.n_hours(); ++h) {
        if (g.index[static_cast<std::size_t>(g.slot(s, v))][static_cast<std::size_t>(h)] >= 0) continue;
        const std::string where = g.stations[s] + ", " + format_timestamp(g.first + h) + ", " + to_string(g.variables[v]);
        int found = -1;
        for (std::size_t b : donors[s]) {
          found = g.index[static_cast<std::size_t>(g.slot(b, v))][static_cast<std::size_t>(h)];
          if (found >= 0) break;
        }
        if (found < 0) {
          note(issues, "gap at (" + where + ") has no donor station");
          continue;
        }
        if (policy == GapPolicy::fail) {
          note(issues, "gap at (" + where + ")");
          continue;
        }
        RawRow row = table.rows[static_cast<std::size_t>(found)];
        row.donor = row.station;
        row.station = g.stations[s];
        row.imputed = true;
        row.line = 0;
        out.rows.push_back(std::move(row));
      }
  if (!issues.empty()) throw PipelineError(issues);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset

double apply_transform(double raw, const TransformRecord& r) {
  double v = raw;
  switch (r.kind) {
    case Transform::sqrt:
      if (!(raw >= 0.0)) throw std::domain_error("square root of a negative value");
      v = std::sqrt(raw);
      break;
    case Transform::log:
      if (!(raw > 0.0)) throw std::domain_error("log of a nonpositive value");
      v = std::log(raw);
      break;
    case Transform::none:
      break;
  }
  return (v - r.center) / r.scale;
}

double inverse_transform(double value, const TransformRecord& r) {
  const double v = value * r.scale + r.center;
  switch (r.kind) {
    case Transform::sqrt: return v * v;
    case Transform::log: return std::exp(v);
    case Transform::none: return v;
  }
  return v;
}

namespace {

// Pooled mean and sample standard deviation.
std::pair<double, double> center_scale(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {mean, sd > 0.0 ? sd : 1.0};
}

}  // namespace

Dataset build_dataset(const RawTable& table, const BuildOptions& options, const StationCoords* coords) {
  if (table.rows.empty()) throw PipelineError({"no data rows"});
  std::vector<Variable> wanted;
  for (const auto& [v, t] : options.responses) wanted.push_back(v);
  for (Variable v : options.covariates) wanted.push_back(v);
  const Grid g = make_grid(table, wanted);
  const auto n = static_cast<int>(g.stations.size());
  const int T = g.n_hours();
  const auto K = static_cast<int>(options.responses.size());
  const auto P = static_cast<int>(options.covariates.size());

  std::vector<std::string> issues;
  for (std::size_t s = 0; s < g.stations.size(); ++s)
    for (std::size_t v = 0; v < g.variables.size(); ++v) {
      const auto& idx = g.index[static_cast<std::size_t>(g.slot(s, v))];
      const auto missing = std::count(idx.begin(), idx.end(), -1);
      if (missing)
        note(issues, std::to_string(missing) + " missing hours for (" + g.stations[s] + ", " + to_string(g.variables[v]) +
                         "); fill gaps first");
    }
  if (!issues.empty()) throw PipelineError(issues);

  auto value = [&](std::size_t s, std::size_t v, int h) -> const RawRow& {
    return table.rows[static_cast<std::size_t>(g.index[static_cast<std::size_t>(g.slot(s, v))][static_cast<std::size_t>(h)])];
  };

  Dataset d;
  const CivilHour c0 = civil_from_hours(g.first);
  const std::int64_t origin = g.first - c0.hour;
  d.times.resize(T);
  d.partition_of.resize(static_cast<std::size_t>(T));
  int month_id = -1, prev_key = -1;
  for (int h = 0; h < T; ++h) {
    d.times[h] = static_cast<double>(g.first + h - origin);
    const CivilHour c = civil_from_hours(g.first + h);
    const int key = c.year * 12 + c.month;
    if (key != prev_key) {
      ++month_id;
      prev_key = key;
    }
    d.partition_of[static_cast<std::size_t>(h)] = month_id;
  }

  // Transform each variable, pooled over stations and hours.
  auto column = [&](std::size_t v, Transform kind, const std::string& name, bool scale) {
    std::vector<double> all;
    all.reserve(static_cast<std::size_t>(n * T));
    TransformRecord rec{name, kind, 0.0, 1.0};
    for (std::size_t s = 0; s < g.stations.size(); ++s)
      for (int h = 0; h < T; ++h) {
        const RawRow& r = value(s, v, h);
        try {
          all.push_back(apply_transform(r.value, rec));
        } catch (const std::domain_error& e) {
          note(issues, (r.line ? "line " + std::to_string(r.line) + ": " : "") + e.what() + " for " + name + " at (" +
                           r.station + ", " + format_timestamp(r.hour) + ")");
          all.push_back(0.0);
        }
      }
    if (scale) std::tie(rec.center, rec.scale) = center_scale(all);
    for (double& x : all) x = (x - rec.center) / rec.scale;
    return std::make_pair(rec, all);
  };

  d.y.assign(static_cast<std::size_t>(n), MatrixXd(T, K));
  d.x.assign(static_cast<std::size_t>(n), MatrixXd(T, P));
  for (int k = 0; k < K; ++k) {
    const auto [var, kind] = options.responses[static_cast<std::size_t>(k)];
    auto [rec, vals] = column(static_cast<std::size_t>(k), kind, to_string(var), true);
    d.transform_log.push_back(rec);
    for (int i = 0; i < n; ++i)
      for (int h = 0; h < T; ++h) d.y[static_cast<std::size_t>(i)](h, k) = vals[static_cast<std::size_t>(i * T + h)];
  }
  for (int j = 0; j < P; ++j) {
    const Variable var = options.covariates[static_cast<std::size_t>(j)];
    auto [rec, vals] = column(static_cast<std::size_t>(K + j), Transform::none, to_string(var), options.scale_covariates);
    d.transform_log.push_back(rec);
    for (int i = 0; i < n; ++i)
      for (int h = 0; h < T; ++h) d.x[static_cast<std::size_t>(i)](h, j) = vals[static_cast<std::size_t>(i * T + h)];
  }
  if (!issues.empty()) throw PipelineError(issues);

  const MatrixXd z = harmonic_covariates(d.times);
  d.z.assign(static_cast<std::size_t>(n), z);
  d.site_names = g.stations;
  if (coords) {
    MatrixXd xy(n, 2);
    for (int i = 0; i < n; ++i) {
      const auto it = coords->find(g.stations[static_cast<std::size_t>(i)]);
      if (it == coords->end()) throw PipelineError({"no coordinates for station " + g.stations[static_cast<std::size_t>(i)]});
      xy.row(i) << it->second.first, it->second.second;
    }
    d.site_coords = xy;
  }
  return d;
}

std::vector<MatrixXd> raw_responses(const Dataset& data) {
  std::vector<MatrixXd> out = data.y;
  const int K = data.n_components();
  if (static_cast<int>(data.transform_log.size()) < K) return out;
  for (auto& Y : out)
    for (int k = 0; k < K; ++k)
      for (Eigen::Index t = 0; t < Y.rows(); ++t) Y(t, k) = inverse_transform(Y(t, k), data.transform_log[static_cast<std::size_t>(k)]);
  return out;
}

// ---------------------------------------------------------------------------
// Exploration

std::vector<OlsFit> explore_monthly_ols(const Dataset& data) {
  const auto segs = partition_segments(data.partition_of,
                                       data.partition_of.empty() ? 0 : data.partition_of.back() + 1);
  std::vector<OlsFit> out;
  for (int i = 0; i < data.n_sites(); ++i)
    for (std::size_t m = 0; m < segs.size(); ++m) {
      const auto& seg = segs[m];
      MatrixXd D(seg.size(), data.p_x() + 1);
      D.col(0).setOnes();
      D.rightCols(data.p_x()) = data.x[static_cast<std::size_t>(i)].middleRows(seg.begin, seg.size());
      const Eigen::ColPivHouseholderQR<MatrixXd> qr(D);
      for (int k = 0; k < data.n_components(); ++k) {
        OlsFit f{i, static_cast<int>(m), k, qr.rank() < D.cols(), VectorXd()};
        if (!f.rank_deficient) f.coef = qr.solve(data.y[static_cast<std::size_t>(i)].col(k).segment(seg.begin, seg.size()));
        out.push_back(std::move(f));
      }
    }
  return out;
}

namespace {

template <class Key>
std::vector<ProfilePoint> profile(const Dataset& data, Key key, int n_keys) {
  const auto raw = raw_responses(data);
  std::vector<ProfilePoint> out;
  for (int i = 0; i < data.n_sites(); ++i)
    for (int k = 0; k < data.n_components(); ++k) {
      std::vector<double> sum(static_cast<std::size_t>(n_keys), 0.0);
      std::vector<int> count(static_cast<std::size_t>(n_keys), 0);
      for (int t = 0; t < data.n_times(); ++t) {
        const auto q = static_cast<std::size_t>(key(data.times[t]));
        sum[q] += raw[static_cast<std::size_t>(i)](t, k);
        ++count[q];
      }
      for (int q = 0; q < n_keys; ++q)
        if (count[static_cast<std::size_t>(q)])
          out.push_back({i, k, q, sum[static_cast<std::size_t>(q)] / count[static_cast<std::size_t>(q)]});
    }
  return out;
}

}  // namespace

std::vector<ProfilePoint> daily_means(const Dataset& data) {
  if (data.n_times() == 0) return {};
  const int days = static_cast<int>(std::floor(data.times[data.n_times() - 1] / 24.0)) + 1;
  return profile(data, [](double t) { return static_cast<int>(std::floor(t / 24.0)); }, days);
}

std::vector<ProfilePoint> hour_of_day_means(const Dataset& data) {
  return profile(data, [](double t) { return static_cast<int>(std::llround(t)) % 24; }, 24);
}

RawTable synthetic_raw_table(const std::vector<std::string>& stations, std::int64_t start, int n_hours, Rng& rng) {
  RawTable t;
  t.rows.reserve(stations.size() * static_cast<std::size_t>(n_hours) * 4);
  for (const auto& s : stations) {
    const double level = rng.normal(0.0, 1.0);
    for (int h = 0; h < n_hours; ++h) {
      const std::int64_t hour = start + h;
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(civil_from_hours(hour).hour - 9) / 24.0;
      const double temp = 16.0 + 2.0 * level + 6.0 * std::sin(phase) + rng.normal(0.0, 1.0);
      const double rh = std::clamp(55.0 - 15.0 * std::sin(phase) + rng.normal(0.0, 5.0), 5.0, 100.0);
      const double ozone = std::max(0.0, 30.0 + 4.0 * level + 18.0 * std::sin(phase) + 1.2 * (temp - 16.0) +
                                             rng.normal(0.0, 5.0));
      const double pm10 = std::exp(3.6 + 0.2 * level + 0.3 * std::cos(phase) + rng.normal(0.0, 0.25));
      t.rows.push_back({s, hour, Variable::ozone, ozone});
      t.rows.push_back({s, hour, Variable::pm10, pm10});
      t.rows.push_back({s, hour, Variable::temperature, temp});
      t.rows.push_back({s, hour, Variable::relative_humidity, rh});
    }
  }
  return t;
}

}  // namespace tvc
