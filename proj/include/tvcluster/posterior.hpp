// Apache License, Version 2.0, refer to LICENSE.txt
//
// Summaries of retained draws. Everything here is a pure function of the
// draws, and nothing depends on cluster label identity within a draw.

#pragma once

#include "tvcluster/core.hpp"
#include "tvcluster/gibbs.hpp"

#include <filesystem>
#include <stdexcept>
#include <vector>

namespace tvc {

class SummaryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Draws = std::vector<ParameterState>;

// Occupied-cluster counts, one entry per (partition, channel). Rows are
// partitions, columns are channels.
struct CountSeries {
  MatrixXd mean;
  MatrixXd median;
  double grand_mean = 0.0;
  std::vector<std::vector<int>> per_draw;  // [draw][m * G + g]
};
CountSeries cluster_count_series(const Draws& draws);

struct Cooccurrence {
  int n_partitions = 0;
  int n_channels = 0;
  std::vector<MatrixXd> per_partition;  // index m * G + g
  std::vector<MatrixXd> average;        // per channel, mean over partitions

  const MatrixXd& at(int m, int g) const { return per_partition[static_cast<std::size_t>(m * n_channels + g)]; }
};
Cooccurrence cooccurrence(const Draws& draws);

// K x r; row k holds the column norms of the posterior-mean loading matrix,
// normalised to sum to 1.
MatrixXd factor_norms(const Draws& draws);

std::vector<MatrixXd> mean_lambda_gram(const Draws& draws);

struct GramPairs {
  int component = 0;
  std::vector<int> site_a, site_b;
  std::vector<double> distance, gram;
};
// One entry per component with every off-diagonal site pair (a < b).
std::vector<GramPairs> lambda_gram_vs_distance(const Draws& draws, const MatrixXd& site_coords);

struct Interval {
  double mean = 0.0;
  double lower = 0.0;  // 2.5% quantile
  double upper = 0.0;  // 97.5% quantile
};
// Linear interpolation between order statistics (Hyndman-Fan type 7).
double quantile(std::vector<double> values, double p);
Interval summarize(const std::vector<double>& values);

// Index of the draw whose labels for (m, g) agree best, on average over site
// pairs, with the co-occurrence matrix. Ties go to the earliest draw.
int modal_draw(const Draws& draws, const Cooccurrence& cooc, int m, int g);

struct CoefSummary {
  int partition = 0;
  int channel = 0;
  int cluster = 0;  // ordinal of the cluster in the modal partition, by first member
  int component = 0;
  int predictor = 0;
  std::vector<int> members;
  Interval value;
};
// For every cluster of the modal partition, the coefficient averaged over its
// member sites in each draw, summarised across draws.
std::vector<CoefSummary> coef_summaries(const Draws& draws, const Cooccurrence& cooc);

struct CoregSummary {
  int row = 0;
  int col = 0;
  Interval value;
};
std::vector<CoregSummary> coreg_summary(const Draws& draws);

// Labels are renumbered by first appearance. Returns 1 when both partitions
// are the trivial single cluster.
std::vector<int> canonical_labels(const std::vector<int>& labels);
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct PosteriorSummary {
  int n_draws = 0;
  CountSeries counts;
  Cooccurrence cooc;
  std::vector<std::vector<int>> modal_labels;  // index m * G + g
  std::vector<CoefSummary> coefficients;
  MatrixXd norms;
  std::vector<MatrixXd> lambda_gram;
  std::vector<GramPairs> gram_pairs;  // empty without coordinates
  std::vector<CoregSummary> coreg;
};
PosteriorSummary summarize_posterior(const Draws& draws, const std::optional<MatrixXd>& site_coords);

// Tidy CSV tables, one row per index combination.
void write_summary(const std::filesystem::path& dir, const PosteriorSummary& summary);

}  // namespace tvc
