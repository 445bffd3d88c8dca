// Apache License, Version 2.0, refer to LICENSE.txt
//
// Hourly station measurements in long format, from raw text to a model
// Dataset, plus the exploratory per-month regressions.

#pragma once

#include "tvcluster/core.hpp"
#include "tvcluster/random.hpp"

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace tvc {

class PipelineError : public std::runtime_error {
 public:
  explicit PipelineError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

enum class Variable { ozone, pm10, temperature, relative_humidity };

std::string to_string(Variable v);
Variable variable_from_string(const std::string& s);

// ---- calendar ------------------------------------------------------------

struct CivilHour {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;
  int hour = 0;
};

std::int64_t days_from_civil(int year, int month, int day);
// Hours since 1970-01-01T00:00 in the declared local zone.
std::int64_t hours_from_civil(const CivilHour& c);
CivilHour civil_from_hours(std::int64_t hours);
// Accepts YYYY-MM-DDTHH[:MM[:SS]] with 'T' or a space; minutes and seconds
// must be zero. Throws std::invalid_argument otherwise.
std::int64_t parse_timestamp(const std::string& s);
std::string format_timestamp(std::int64_t hours);

// ---- raw table -----------------------------------------------------------

struct RawRow {
  std::string station;
  std::int64_t hour = 0;
  Variable variable = Variable::ozone;
  double value = 0.0;
  int line = 0;          // source line, 0 when synthesised
  bool imputed = false;  // filled from another station
  std::string donor;
};

struct RawTable {
  std::vector<RawRow> rows;
};

// Header `station,timestamp,variable,value` in any column order.
RawTable parse_raw(std::istream& in, char delimiter = ',');
RawTable ingest(const std::filesystem::path& path, char delimiter = ',');
void write_raw(const std::filesystem::path& path, const RawTable& table);

// Planar coordinates per station, sidecar header `station,x,y`.
using StationCoords = std::map<std::string, std::pair<double, double>>;
StationCoords read_station_coords(const std::filesystem::path& path, char delimiter = ',');

enum class GapPolicy { fail, nearest_station };
GapPolicy gap_policy_from_string(const std::string& s);

// The expected grid is every station x every hour between the first and last
// timestamp x every variable present in the table.
RawTable fill_gaps(const RawTable& table, const StationCoords& coords, GapPolicy policy);

// ---- dataset -------------------------------------------------------------

struct BuildOptions {
  std::vector<std::pair<Variable, Transform>> responses = {{Variable::ozone, Transform::sqrt},
                                                           {Variable::pm10, Transform::log}};
  std::vector<Variable> covariates = {Variable::temperature, Variable::relative_humidity};
  bool scale_covariates = true;
};

double apply_transform(double raw, const TransformRecord& record);
double inverse_transform(double value, const TransformRecord& record);

// Stations are ordered by name; times are hours since midnight of the first
// day; partitions are calendar months in order of appearance. The transform
// log holds one record per response, then one per covariate.
Dataset build_dataset(const RawTable& table, const BuildOptions& options = {},
                      const StationCoords* coords = nullptr);

// Response values on the original measurement scale.
std::vector<MatrixXd> raw_responses(const Dataset& data);

// ---- exploration ---------------------------------------------------------

struct OlsFit {
  int site = 0;
  int partition = 0;
  int component = 0;
  bool rank_deficient = false;
  VectorXd coef;  // intercept, then one slope per covariate; empty when rank deficient
};

// Least squares of each response on [1, x] per site and partition.
std::vector<OlsFit> explore_monthly_ols(const Dataset& data);

struct ProfilePoint {
  int site = 0;
  int component = 0;
  int index = 0;  // day number or hour of day
  double mean = 0.0;
};
std::vector<ProfilePoint> daily_means(const Dataset& data);
std::vector<ProfilePoint> hour_of_day_means(const Dataset& data);

// A gap-free synthetic table on an hourly grid starting at `start`, with
// diurnal cycles and station-specific levels. Useful for demos and tests.
RawTable synthetic_raw_table(const std::vector<std::string>& stations, std::int64_t start, int n_hours, Rng& rng);

}  // namespace tvc
