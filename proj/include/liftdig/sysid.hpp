#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "liftdig/datagen.hpp"
#include "liftdig/model.hpp"

namespace liftdig {

struct LeastSquaresFit {
  Mat G;  // targets x regressors
  int rank = 0;
  bool rank_deficient = false;
  double residual_rms = 0;
};

// G = Xi * pinv(Ups) with samples as columns. Regressor rows are scaled to
// unit RMS before factorizing (complete orthogonal decomposition, minimum
// norm on rank deficiency) and the scale is folded back into G. ridge > 0
// adds a Tikhonov term in the scaled coordinates.
LeastSquaresFit fit_least_squares(const Mat& Xi, const Mat& Ups, double ridge = 0);

struct RegressOptions {
  double ridge = 0;
  double p_lo = 10;
  double p_hi = 90;
};

struct RegressResult {
  DiscreteLiftedModel model;
  std::size_t pairs = 0;
  int rank = 0;
  double residual_rms = 0;
  std::vector<std::string> warnings;
};

// Sample period of the dataset, read from the time column.
double dataset_dt(const Dataset& d);

// Direct discrete regression of [A B B_s] on transition pairs. Pairs never
// cross an episode boundary. Throws std::invalid_argument("insufficient
// data ...") when there are fewer pairs than regressors.
RegressResult regress_lifted(const Dataset& d, Lifting lifting, const RegressOptions& opt = {});

struct StructuredFit {
  ContinuousDflModel model;
  std::size_t samples = 0;
  int rank = 0;
  double residual_rms = 0;
  std::vector<std::string> warnings;
};

// Continuous DFL fit: the x and p rows are fixed by the state equations;
// only the eight auxiliary rows (14 + 3 + 2 columns) are regressed on
// central-difference derivatives of eta.
StructuredFit dfl_structured_fit(const Dataset& d, double ridge = 0);

// The structural part of the continuous model, shared by every fit.
void set_structural_rows(ContinuousDflModel& c);

// Nearest-rank percentiles per dimension of the lifted observables.
StateBounds compute_bounds(const Dataset& d, Lifting lifting, double p_lo = 10, double p_hi = 90);
double nearest_rank(std::vector<double> v, double p);

double spectral_radius(const DiscreteLiftedModel& m);

struct MseTable {
  std::vector<int> horizons;
  Mat mse;  // 3 x horizons, rows x, z, phi
  int starts_used = 0;
  int starts_available = 0;

  double mean_at(std::size_t h) const { return mse.col(static_cast<Eigen::Index>(h)).mean(); }
};

// Open-loop rollouts with recorded inputs and surface-evaluated soil input
// at the predicted x. Starts are drawn without replacement among positions
// that leave room for the longest horizon.
MseTable eval_prediction_mse(const DiscreteLiftedModel& m, const Dataset& test,
                             const std::map<std::uint64_t, SurfaceSpline>& surfaces,
                             const std::vector<int>& horizons, int starts, std::uint64_t seed);

nlohmann::json training_report(const RegressResult& r, const std::string& variant);

// "variable,horizon,mse[,extra columns]" rows for one model variant.
std::string mse_csv(const MseTable& t, const std::string& extra_header = "",
                    const std::string& extra_values = "");

}  // namespace liftdig
