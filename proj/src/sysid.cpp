#include "liftdig/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "liftdig/io_util.hpp"

namespace liftdig {

LeastSquaresFit fit_least_squares(const Mat& Xi, const Mat& Ups, double ridge) {
  if (Xi.cols() != Ups.cols()) throw std::invalid_argument("least squares: column counts differ");
  if (!Xi.allFinite() || !Ups.allFinite()) throw std::invalid_argument("least squares: non-finite data");
  const Eigen::Index r = Ups.rows();
  const Eigen::Index N = Ups.cols();
  Vec scale = (Ups.rowwise().squaredNorm() / static_cast<double>(std::max<Eigen::Index>(N, 1))).cwiseSqrt();
  for (Eigen::Index i = 0; i < r; ++i)
    if (!(scale[i] > 1e-300)) scale[i] = 1;

  Mat U = (scale.cwiseInverse().asDiagonal() * Ups).transpose();  // N x r
  Mat T = Xi.transpose();                                         // N x n
  if (ridge > 0) {
    Mat Ua(N + r, r), Ta(N + r, T.cols());
    Ua << U, std::sqrt(ridge * static_cast<double>(N)) * Mat::Identity(r, r);
    Ta << T, Mat::Zero(r, T.cols());
    U.swap(Ua);
    T.swap(Ta);
  }
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(U);
  LeastSquaresFit out;
  out.rank = static_cast<int>(cod.rank());
  out.rank_deficient = out.rank < r;
  Mat Gs = cod.solve(T).transpose();  // n x r in scaled coordinates
  out.G = Gs * scale.cwiseInverse().asDiagonal();
  Mat res = Xi - out.G * Ups;
  out.residual_rms = N > 0 ? std::sqrt(res.squaredNorm() / static_cast<double>(res.size())) : 0.0;
  return out;
}

double dataset_dt(const Dataset& d) {
  for (const auto& e : d.episodes)
    if (e.rows.size() >= 2) {
      double dt = e.rows[1].t - e.rows[0].t;
      if (dt > 0) return dt;
    }
  return 1.0 / 30.0;
}

RegressResult regress_lifted(const Dataset& d, Lifting lifting, const RegressOptions& opt) {
  const int n = lifted_order(lifting);
  const int r = n + kInputDim + kSoilDim;
  const std::size_t N = d.pairs();
  if (N < static_cast<std::size_t>(r))
    throw std::invalid_argument("insufficient data: " + std::to_string(N) + " transition pairs for a " +
                                std::to_string(r) + "-dimensional regressor");
  Mat Xi(n, static_cast<Eigen::Index>(N));
  Mat Ups(r, static_cast<Eigen::Index>(N));
  Eigen::Index col = 0;
  for (const auto& e : d.episodes) {
    if (e.rows.size() < 2) continue;
    Vec cur = observe(lifting, e.rows[0].xi);
    for (std::size_t k = 0; k + 1 < e.rows.size(); ++k) {
      Vec next = observe(lifting, e.rows[k + 1].xi);
      Ups.col(col) << cur, e.rows[k].u, e.rows[k].s;
      Xi.col(col) = next;
      cur.swap(next);
      ++col;
    }
  }
  LeastSquaresFit fit = fit_least_squares(Xi, Ups, opt.ridge);
  RegressResult out;
  out.pairs = N;
  out.rank = fit.rank;
  out.residual_rms = fit.residual_rms;
  if (fit.rank_deficient)
    out.warnings.push_back("regressor matrix is rank deficient (rank " + std::to_string(fit.rank) + " of " +
                           std::to_string(r) + "); using the minimum-norm solution");
  out.model.lifting = lifting;
  out.model.dt = dataset_dt(d);
  out.model.A = fit.G.leftCols(n);
  out.model.B = fit.G.middleCols(n, kInputDim);
  out.model.Bs = fit.G.rightCols(kSoilDim);
  out.model.bounds = compute_bounds(d, lifting, opt.p_lo, opt.p_hi);
  double rho = spectral_radius(out.model);
  if (rho > 1) out.warnings.push_back("identified model is unstable (spectral radius " + fmt_double(rho) + ")");
  return out;
}

void set_structural_rows(ContinuousDflModel& c) {
  c.Ac.topRows(kStateDim).setZero();
  c.Bc.topRows(kStateDim).setZero();
  c.Bsc.topRows(kStateDim).setZero();
  for (int i = 0; i < 3; ++i) {
    c.Ac(i, ix::vx + i) = 1.0;      // xdot = v
    c.Ac(3 + i, ix::etx + i) = -1.0;  // pdot = -e_T + u
    c.Bc(3 + i, i) = 1.0;
  }
}

StructuredFit dfl_structured_fit(const Dataset& d, double ridge) {
  const int r = kLiftedDim + kInputDim + kSoilDim;
  std::size_t N = 0;
  for (const auto& e : d.episodes)
    if (e.rows.size() >= 3) N += e.rows.size() - 2;
  if (N < static_cast<std::size_t>(r))
    throw std::invalid_argument("insufficient data: " + std::to_string(N) +
                                " interior samples for a 19-dimensional regressor");
  Mat Eta(kAuxDim, static_cast<Eigen::Index>(N));
  Mat Ups(r, static_cast<Eigen::Index>(N));
  Eigen::Index col = 0;
  for (const auto& e : d.episodes) {
    for (std::size_t k = 1; k + 1 < e.rows.size(); ++k) {
      const double h = e.rows[k + 1].t - e.rows[k - 1].t;
      Eta.col(col) = (e.rows[k + 1].xi.tail<kAuxDim>() - e.rows[k - 1].xi.tail<kAuxDim>()) / h;
      Ups.col(col) << e.rows[k].xi, e.rows[k].u, e.rows[k].s;
      ++col;
    }
  }
  LeastSquaresFit fit = fit_least_squares(Eta, Ups, ridge);
  StructuredFit out;
  out.samples = N;
  out.rank = fit.rank;
  out.residual_rms = fit.residual_rms;
  if (fit.rank_deficient)
    out.warnings.push_back("auxiliary regression is rank deficient; using the minimum-norm solution");
  set_structural_rows(out.model);
  out.model.Ac.bottomRows(kAuxDim) = fit.G.leftCols(kLiftedDim);
  out.model.Bc.bottomRows(kAuxDim) = fit.G.middleCols(kLiftedDim, kInputDim);
  out.model.Bsc.bottomRows(kAuxDim) = fit.G.rightCols(kSoilDim);
  return out;
}

double nearest_rank(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("percentile of empty data");
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

StateBounds compute_bounds(const Dataset& d, Lifting lifting, double p_lo, double p_hi) {
  const int n = lifted_order(lifting);
  std::vector<std::vector<double>> cols(n);
  for (const auto& e : d.episodes)
    for (const auto& r : e.rows) {
      Vec z = observe(lifting, r.xi);
      for (int i = 0; i < n; ++i) cols[i].push_back(z[i]);
    }
  if (cols[0].empty()) throw std::invalid_argument("compute_bounds: empty dataset");
  StateBounds b;
  b.lower.resize(n);
  b.upper.resize(n);
  for (int i = 0; i < n; ++i) {
    b.lower[i] = nearest_rank(cols[i], p_lo);
    b.upper[i] = nearest_rank(cols[i], p_hi);
  }
  return b;
}

double spectral_radius(const DiscreteLiftedModel& m) {
  Eigen::EigenSolver<Mat> es(m.A, false);
  if (es.info() != Eigen::Success) throw std::runtime_error("spectral_radius: eigensolver did not converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

MseTable eval_prediction_mse(const DiscreteLiftedModel& m, const Dataset& test,
                             const std::map<std::uint64_t, SurfaceSpline>& surfaces,
                             const std::vector<int>& horizons, int starts, std::uint64_t seed) {
  if (horizons.empty()) throw std::invalid_argument("eval: no horizons");
  for (int h : horizons)
    if (h < 1) throw std::invalid_argument("eval: horizons must be >= 1");
  const int hmax = *std::max_element(horizons.begin(), horizons.end());

  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  for (std::size_t e = 0; e < test.episodes.size(); ++e) {
    const auto& rows = test.episodes[e].rows;
    for (std::size_t k = 0; k + static_cast<std::size_t>(hmax) < rows.size(); ++k) candidates.emplace_back(e, k);
  }
  MseTable t;
  t.horizons = horizons;
  t.mse = Mat::Zero(3, static_cast<Eigen::Index>(horizons.size()));
  t.starts_available = static_cast<int>(candidates.size());
  std::mt19937_64 rng(seed);
  const std::size_t take = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(std::max(starts, 0)));
  for (std::size_t i = 0; i < take; ++i) {
    std::size_t j = std::uniform_int_distribution<std::size_t>(i, candidates.size() - 1)(rng);
    std::swap(candidates[i], candidates[j]);
  }
  Mat sum = Mat::Zero(3, hmax);
  for (std::size_t s = 0; s < take; ++s) {
    const auto [e, k0] = candidates[s];
    const Episode& ep = test.episodes[e];
    auto it = surfaces.find(ep.terrain_id);
    if (it == surfaces.end()) throw std::invalid_argument("eval: no surface for terrain " + std::to_string(ep.terrain_id));
    Vec z = observe(m.lifting, ep.rows[k0].xi);
    for (int h = 1; h <= hmax; ++h) {
      SoilLocal soil = it->second.eval(z[ix::x]);
      z = m.A * z + m.B * ep.rows[k0 + h - 1].u + m.Bs * soil.input();
      const LiftedState& truth = ep.rows[k0 + h].xi;
      for (int v = 0; v < 3; ++v) {
        double err = z[v] - truth[v];
        sum(v, h - 1) += err * err;
      }
    }
  }
  t.starts_used = static_cast<int>(take);
  if (take > 0)
    for (std::size_t i = 0; i < horizons.size(); ++i)
      t.mse.col(static_cast<Eigen::Index>(i)) = sum.col(horizons[i] - 1) / static_cast<double>(take);
  return t;
}

nlohmann::json training_report(const RegressResult& r, const std::string& variant) {
  nlohmann::json j;
  j["variant"] = variant;
  j["order"] = r.model.order();
  j["N_D"] = r.pairs;
  j["spectral_radius"] = spectral_radius(r.model);
  j["residual_rms"] = r.residual_rms;
  j["rank"] = r.rank;
  std::vector<double> lo(r.model.bounds.lower.data(), r.model.bounds.lower.data() + r.model.bounds.lower.size());
  std::vector<double> hi(r.model.bounds.upper.data(), r.model.bounds.upper.data() + r.model.bounds.upper.size());
  j["bounds"] = {{"lower", lo}, {"upper", hi}};
  // Rows of B_s that carry no soil influence, relative to the largest entry.
  const Mat& Bs = r.model.Bs;
  const double bs_max = Bs.size() ? Bs.cwiseAbs().maxCoeff() : 0.0;
  const std::vector<std::string> names = observable_names(r.model.lifting);
  std::vector<double> row_max;
  std::vector<std::string> vanishing;
  for (Eigen::Index i = 0; i < Bs.rows(); ++i) {
    row_max.push_back(Bs.row(i).cwiseAbs().maxCoeff());
    if (row_max.back() <= 1e-6 * bs_max) vanishing.push_back(names[static_cast<std::size_t>(i)]);
  }
  j["bs_row_max_abs"] = row_max;
  j["bs_vanishing_rows"] = vanishing;
  j["warnings"] = r.warnings;
  return j;
}

std::string mse_csv(const MseTable& t, const std::string& extra_header, const std::string& extra_values) {
  static const char* names[3] = {"x", "z", "phi"};
  std::string out = "variable,horizon,mse";
  if (!extra_header.empty()) out += "," + extra_header;
  out += "\n";
  for (int v = 0; v < 3; ++v)
    for (std::size_t i = 0; i < t.horizons.size(); ++i) {
      out += std::string(names[v]) + "," + std::to_string(t.horizons[i]) + "," +
             fmt_double(t.mse(v, static_cast<Eigen::Index>(i)));
      if (!extra_header.empty()) out += "," + extra_values;
      out += "\n";
    }
  return out;
}

}  // namespace liftdig
