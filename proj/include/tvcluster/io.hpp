// Apache License, Version 2.0, refer to LICENSE.txt
//
// Plain-text persistence. Configs are JSON; datasets and parameter states are
// one CSV per block with a header naming the index columns. All index columns
// are 0-based. Doubles are written in shortest round-trip form, so a
// write/read cycle is bit-exact.

#pragma once

#include "tvcluster/core.hpp"
#include "tvcluster/gibbs.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace tvc {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format_double(double v);
double parse_double(const std::string& s);

// A CSV file held as strings, addressed by column name.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // throws IoError if absent
  int integer(std::size_t row, int col) const;
  double real(std::size_t row, int col) const;
};

CsvTable read_csv(const fs::path& path, char delimiter = ',');
void write_csv(const fs::path& path, const CsvTable& table);

// ---- config --------------------------------------------------------------

nlohmann::json config_to_json(const ModelConfig& config);
// Throws ValidationError for shape or type problems in the document. Prior
// entries accept a scalar (isotropic shorthand) or a full vector / matrix.
ModelConfig config_from_json(const nlohmann::json& doc);
ModelConfig load_config(const fs::path& path);
void save_config(const fs::path& path, const ModelConfig& config);

// ---- dataset -------------------------------------------------------------

// times.csv (t,time,partition), y.csv (i,k,t,value), x.csv and z.csv
// (i,j,t,value), optional coords.csv (i,name,x,y) and transforms.csv.
void write_dataset(const fs::path& dir, const Dataset& data);
Dataset read_dataset(const fs::path& dir);

// ---- parameter state -----------------------------------------------------

// gamma.csv (i,m,k,j,value), labels.csv (m,g,i,label), atoms.csv
// (m,g,c,k,j,value), lambda.csv (k,i,j,value), coreg.csv (k,j,value),
// tau2.csv (k,value), nu.csv (k,j,t,value).
void write_state(const fs::path& dir, const ParameterState& state);
// Shapes come from the config (n, K, r, M, dp_mode) and from the files
// (p_x, p_z, T).
ParameterState read_state(const fs::path& dir, const ModelConfig& config);

// Appends retained draws to the same per-block files with a leading `draw`
// column (the iteration number). Factor paths are not written.
class DrawWriter {
 public:
  DrawWriter(const fs::path& dir, bool append);
  void write(int iteration, const ParameterState& state);
  void flush();

 private:
  std::map<std::string, std::ofstream> files_;
};

struct DrawSet {
  std::vector<int> iterations;
  std::vector<ParameterState> draws;
};
DrawSet read_draws(const fs::path& dir, const ModelConfig& config);

// Drops rows whose first column (an iteration number) exceeds `last`, so a
// chain resumed from a checkpoint does not duplicate output.
void truncate_after(const fs::path& csv, int last);

// ---- chain run directory -------------------------------------------------

// chain<j>/states/*.csv, chain<j>/sweeps.csv, chain<j>/timings.csv and the
// checkpoint chain<j>/last/ (full state, rng, iteration).
struct ChainPaths {
  fs::path root;
  fs::path states() const { return root / "states"; }
  fs::path sweeps() const { return root / "sweeps.csv"; }
  fs::path timings() const { return root / "timings.csv"; }
  fs::path last() const { return root / "last"; }
};
ChainPaths chain_paths(const fs::path& run_dir, int chain_index);

void write_checkpoint(const ChainPaths& paths, const ChainCursor& cursor);
bool has_checkpoint(const ChainPaths& paths);
ChainCursor read_checkpoint(const ChainPaths& paths, const ModelConfig& config);

// Streams per-sweep diagnostics. The sweeps file holds the deterministic
// columns; wall-clock timings go to their own file so reruns compare equal.
class SweepWriter {
 public:
  SweepWriter(const ChainPaths& paths, const ModelConfig& config, bool append);
  void write(const SweepReport& report);
  void flush();

 private:
  std::ofstream sweeps_;
  std::ofstream timings_;
};

}  // namespace tvc
