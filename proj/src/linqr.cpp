#include "solarqr/linqr.hpp"

#include "solarqr/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace solarqr::linqr {

namespace {

real mean_loss(const Eigen::Ref<const vec>& residual, real tau) {
  // residual = y - y_hat
  real s = 0;
  for (index_t i = 0; i < residual.size(); ++i) s += qcore::pinball(0.0, residual[i], tau);
  return s / static_cast<real>(residual.size());
}

// Majorize-minimize on the eta-floored pinball loss:
//   |r| / 2 <= r^2 / (4 max(|r0|, eta)) + const,
// so each step is a weighted least-squares solve. Returns the best iterate seen.
vec irls(const mat& B, const vec& y, real tau, real tol, int max_iter) {
  const auto n = B.rows(), p = B.cols();
  vec beta = B.colPivHouseholderQr().solve(y);
  vec best = beta;
  real best_obj = mean_loss(y - B * beta, tau);
  const vec linear_term = B.transpose() * vec::Constant(n, (2.0 * tau - 1.0) / 4.0);

  int iter = 0;
  for (real eta = 1e-2; eta >= 1e-6 * 0.999 && iter < max_iter; eta *= 0.1) {
    real prev = std::numeric_limits<real>::infinity();
    for (int k = 0; k < 25 && iter < max_iter; ++k, ++iter) {
      const vec r = y - B * beta;
      const vec a = (4.0 * r.cwiseAbs().cwiseMax(eta)).cwiseInverse();
      mat H = B.transpose() * a.asDiagonal() * B;
      H.diagonal().array() += 1e-12 * (H.diagonal().array().abs().maxCoeff() + 1.0);
      const vec rhs = B.transpose() * a.cwiseProduct(y) + linear_term;
      beta = H.ldlt().solve(rhs);
      const real obj = mean_loss(y - B * beta, tau);
      if (obj < best_obj) {
        best_obj = obj;
        best = beta;
      }
      if (std::abs(prev - obj) <= tol * 1e-2 * std::max(obj, 1e-12)) break;
      prev = obj;
    }
  }
  (void)p;
  return best;
}

// Pick p linearly independent rows, preferring the smallest |residual|.
std::vector<index_t> initial_basis(const mat& B, const vec& r) {
  const auto n = B.rows(), p = B.cols();
  std::vector<index_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), index_t{0});
  std::stable_sort(order.begin(), order.end(), [&](index_t a, index_t b) { return std::abs(r[a]) < std::abs(r[b]); });

  std::vector<index_t> basis;
  mat Q(p, p);  // orthonormal rows spanning the chosen rows
  index_t rank = 0;
  for (auto i : order) {
    vec v = B.row(i).transpose();
    const real norm0 = v.norm();
    if (norm0 == 0) continue;
    for (int pass = 0; pass < 2; ++pass)
      for (index_t k = 0; k < rank; ++k) v -= Q.row(k).dot(v) * Q.row(k).transpose();
    if (v.norm() > 1e-9 * norm0) {
      Q.row(rank++) = v.normalized().transpose();
      basis.push_back(i);
      if (rank == p) break;
    }
  }
  return basis;
}

struct VertexResult {
  vec beta;
  real objective;
  bool converged;
};

// Simplex-style descent over basic solutions (p residuals exactly zero). From the current
// vertex, each basis row j can be released in either direction; the steepest descending
// edge is followed to the exact minimizer along it (a weighted-median line search), which
// makes another row basic.
VertexResult edge_walk(const mat& B, const vec& y, real tau, std::vector<index_t> basis, int max_pivots) {
  const auto n = B.rows(), p = B.cols();
  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  for (auto i : basis) in_basis[static_cast<std::size_t>(i)] = 1;

  mat BB(p, p);
  vec yB(p);
  auto solve_basis = [&](Eigen::PartialPivLU<mat>& lu) {
    for (index_t k = 0; k < p; ++k) {
      BB.row(k) = B.row(basis[static_cast<std::size_t>(k)]);
      yB[k] = y[basis[static_cast<std::size_t>(k)]];
    }
    lu.compute(BB);
    return vec(lu.solve(yB));
  };

  Eigen::PartialPivLU<mat> lu(p);
  vec beta = solve_basis(lu);
  real obj = mean_loss(y - B * beta, tau);
  const real scale = y.cwiseAbs().maxCoeff() + 1.0;

  for (int pivot = 0; pivot <= max_pivots; ++pivot) {
    vec r = y - B * beta;
    for (auto i : basis) r[i] = 0.0;
    const mat Binv = lu.inverse();
    const mat G = B * Binv;  // G(i, j) = x_i . d_j, with d_j moving only basis row j

    // Directional derivatives along +d_j and -d_j.
    vec slope_plus = vec::Constant(p, 1.0 - tau);
    vec slope_minus = vec::Constant(p, tau);
    const real zero_tol = 1e-13 * scale;
    for (index_t i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)]) continue;
      if (r[i] > zero_tol) {
        slope_plus -= tau * G.row(i).transpose();
        slope_minus += tau * G.row(i).transpose();
      } else if (r[i] < -zero_tol) {
        slope_plus += (1.0 - tau) * G.row(i).transpose();
        slope_minus -= (1.0 - tau) * G.row(i).transpose();
      } else {
        // Degenerate: residual leaves zero toward the sign of -g.
        for (index_t j = 0; j < p; ++j) {
          const real g = G(i, j);
          slope_plus[j] += g > 0 ? (1.0 - tau) * g : -tau * g;
          slope_minus[j] += -g > 0 ? (1.0 - tau) * -g : tau * g;
        }
      }
    }

    index_t best_j = -1;
    real best_sign = 0, best_slope = 0;
    for (index_t j = 0; j < p; ++j) {
      const real thresh = -1e-12 * (1.0 + G.col(j).cwiseAbs().sum());
      if (slope_plus[j] < std::min(best_slope, thresh)) best_j = j, best_sign = 1, best_slope = slope_plus[j];
      if (slope_minus[j] < std::min(best_slope, thresh)) best_j = j, best_sign = -1, best_slope = slope_minus[j];
    }
    if (best_j < 0) return {beta, obj, true};
    if (pivot == max_pivots) break;

    // Breakpoints where a non-basic residual crosses zero along the edge.
    struct Break {
      real t;
      real weight;
      index_t row;
    };
    std::vector<Break> breaks;
    for (index_t i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)]) continue;
      const real g = best_sign * G(i, best_j);
      if (g == 0.0) continue;
      const real t = r[i] / g;
      if (t > 0 && std::abs(r[i]) > zero_tol) breaks.push_back({t, std::abs(g), i});
    }
    std::sort(breaks.begin(), breaks.end(), [](const Break& a, const Break& b) {
      return a.t < b.t || (a.t == b.t && a.row < b.row);
    });
    real slope = best_slope;  // slopes above are of the summed objective
    std::size_t stop = breaks.size();
    for (std::size_t k = 0; k < breaks.size(); ++k) {
      slope += breaks[k].weight;
      if (slope >= 0) {
        stop = k;
        break;
      }
    }
    if (stop == breaks.size()) break;  // cannot happen for a bounded objective; treat as stall

    const auto leaving = basis[static_cast<std::size_t>(best_j)];
    in_basis[static_cast<std::size_t>(leaving)] = 0;
    basis[static_cast<std::size_t>(best_j)] = breaks[stop].row;
    in_basis[static_cast<std::size_t>(breaks[stop].row)] = 1;
    const vec next = solve_basis(lu);
    const real next_obj = mean_loss(y - B * next, tau);
    if (!(next_obj <= obj + 1e-15 * scale)) break;  // numerical trouble
    beta = next;
    obj = next_obj;
  }
  return {beta, obj, false};
}

}  // namespace

LinearQRModel fit_linear_qr(const Eigen::Ref<const mat>& X, const Eigen::Ref<const vec>& y, qcore::QuantileLevel tau,
                            real tol, int max_iter) {
  const auto n = X.rows(), m = X.cols();
  require(y.size() == n, "fit_linear_qr: X and y row counts differ");
  if (n < m + 1) throw PreconditionError("fit_linear_qr: need at least cols + 1 rows");
  require(X.allFinite() && y.allFinite(), "fit_linear_qr: non-finite input");
  require(tol > 0 && max_iter > 0, "fit_linear_qr: tol and max_iter must be positive");

  mat A(n, m + 1);
  A.col(0).setOnes();
  A.rightCols(m) = X;

  // Independent column subset, intercept first when possible.
  Eigen::ColPivHouseholderQR<mat> qr(A);
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  std::vector<index_t> keep;
  for (index_t k = 0; k < rank; ++k) keep.push_back(qr.colsPermutation().indices()[k]);
  std::sort(keep.begin(), keep.end());
  mat B(n, static_cast<index_t>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) B.col(static_cast<index_t>(k)) = A.col(keep[k]);

  const vec beta_irls = irls(B, y, tau, tol, max_iter);
  const real obj_irls = mean_loss(y - B * beta_irls, tau);
  auto basis = initial_basis(B, y - B * beta_irls);

  vec beta = beta_irls;
  real obj = obj_irls;
  if (static_cast<index_t>(basis.size()) == B.cols()) {
    const auto vertex = edge_walk(B, y, tau, std::move(basis), max_iter);
    if (!vertex.converged)
      throw ConvergenceError("fit_linear_qr: edge walk did not converge within max_iter pivots",
                             std::min(vertex.objective, obj_irls));
    if (vertex.objective <= obj) {
      beta = vertex.beta;
      obj = vertex.objective;
    }
  }

  vec theta(m + 1);
  if (rank == m + 1) {
    for (std::size_t k = 0; k < keep.size(); ++k) theta[keep[k]] = beta[static_cast<index_t>(k)];
  } else {
    const vec fitted = B * beta;
    theta = A.completeOrthogonalDecomposition().solve(fitted);
  }

  LinearQRModel model;
  model.tau = tau;
  model.intercept = theta[0];
  model.weights = theta.tail(m);
  model.training_objective = mean_loss(y - A * theta, tau);
  return model;
}

vec predict_linear_raw(const LinearQRModel& model, const Eigen::Ref<const mat>& X) {
  if (X.cols() != model.weights.size())
    throw PreconditionError("predict_linear: input has " + std::to_string(X.cols()) + " columns, model expects " +
                            std::to_string(model.weights.size()));
  return (X * model.weights).array() + model.intercept;
}

vec predict_linear(const LinearQRModel& model, const Eigen::Ref<const mat>& X) {
  return predict_linear_raw(model, X).cwiseMax(0.0).cwiseMin(1.0);
}

real objective(const LinearQRModel& model, const Eigen::Ref<const mat>& X, const Eigen::Ref<const vec>& y) {
  return mean_loss(y - predict_linear_raw(model, X), model.tau);
}

features::CvTrainer linear_cv_trainer(real tau) {
  return [tau](const mat& Xtr, const vec& ytr, const mat& Xva, const vec& yva, std::uint64_t) {
    const auto model = fit_linear_qr(Xtr, ytr, qcore::QuantileLevel(tau));
    return qcore::mean_pinball(predict_linear(model, Xva), yva, tau);
  };
}

features::Expansion design_matrix(const features::FeatureSpec& spec, const features::SampleSet& samples, int degree) {
  const mat Z = spec.inputs(samples.X);
  std::vector<index_t> cols(static_cast<std::size_t>(Z.cols()));
  std::iota(cols.begin(), cols.end(), index_t{0});
  return features::polynomial_expand(Z, cols, degree, spec.selected_names(samples));
}

PolyFamily fit_poly_family(const features::SampleSet& train, std::span<const features::FeatureSpec> specs,
                           const qcore::QuantileGrid& grid, int degree, std::size_t workers, real tol, int max_iter) {
  require(specs.size() == static_cast<std::size_t>(kHoursPerDay), "fit_poly_family: need one FeatureSpec per horizon");
  PolyFamily family;
  family.degree = degree;
  family.taus.assign(grid.levels().begin(), grid.levels().end());
  family.specs.assign(specs.begin(), specs.end());
  family.models.assign(kHoursPerDay, std::vector<LinearQRModel>(static_cast<std::size_t>(grid.size())));

  std::vector<features::Expansion> designs(kHoursPerDay);
  for (int h = 0; h < kHoursPerDay; ++h) {
    const auto& spec = specs[static_cast<std::size_t>(h)];
    family.zero_horizon[static_cast<std::size_t>(h)] = train.night.contains(h);
    if (family.zero_horizon[static_cast<std::size_t>(h)]) continue;
    require(!spec.selected_indices.empty(), "fit_poly_family: horizon " + std::to_string(h) + " has no features");
    features::validate(spec, train.X.cols());
    designs[static_cast<std::size_t>(h)] = design_matrix(spec, train, degree);
  }

  const auto nq = static_cast<std::size_t>(grid.size());
  parallel_for(kHoursPerDay * nq, workers, [&](std::size_t task) {
    const int h = static_cast<int>(task / nq);
    const auto q = static_cast<index_t>(task % nq);
    const auto& design = designs[static_cast<std::size_t>(h)];
    LinearQRModel model;
    if (family.zero_horizon[static_cast<std::size_t>(h)]) {
      model.tau = grid[q];
      model.weights = vec::Zero(design.X.cols());
    } else {
      try {
        model = fit_linear_qr(design.X, train.Y.col(h), qcore::QuantileLevel(grid[q]), tol, max_iter);
      } catch (const ConvergenceError& e) {
        throw ConvergenceError(std::string(e.what()) + " (horizon " + std::to_string(h) + ", tau " +
                                   std::to_string(grid[q]) + ")",
                               e.best_objective());
      }
    }
    model.horizon = h;
    model.degree = degree;
    model.feature_names = design.names;
    family.models[static_cast<std::size_t>(h)][static_cast<std::size_t>(q)] = std::move(model);
  });
  return family;
}

std::vector<qcore::QuantileForecast> predict_poly_family(const PolyFamily& family, const features::SampleSet& samples) {
  const auto nq = static_cast<index_t>(family.taus.size());
  std::vector<qcore::QuantileForecast> out(static_cast<std::size_t>(samples.rows()));
  for (std::size_t d = 0; d < out.size(); ++d) {
    out[d].day_index = samples.day_indices[d];
    out[d].estimates = mat::Zero(kHoursPerDay, nq);
  }
  for (int h = 0; h < kHoursPerDay; ++h) {
    if (family.zero_horizon[static_cast<std::size_t>(h)]) continue;
    const auto design = design_matrix(family.specs[static_cast<std::size_t>(h)], samples, family.degree);
    for (index_t q = 0; q < nq; ++q) {
      const vec pred = predict_linear_raw(family.model(h, q), design.X);
      for (std::size_t d = 0; d < out.size(); ++d) out[d].estimates(h, q) = pred[static_cast<index_t>(d)];
    }
  }
  return out;
}

nlohmann::json to_json(const LinearQRModel& model) {
  nlohmann::json j;
  j["tau"] = model.tau;
  j["horizon"] = model.horizon;
  j["degree"] = model.degree;
  j["intercept"] = model.intercept;
  j["weights"] = std::vector<real>(model.weights.data(), model.weights.data() + model.weights.size());
  j["feature_names"] = model.feature_names;
  return j;
}

LinearQRModel linear_model_from_json(const nlohmann::json& j) {
  LinearQRModel m;
  try {
    m.tau = j.at("tau").get<real>();
    m.horizon = j.at("horizon").get<int>();
    m.degree = j.at("degree").get<int>();
    m.intercept = j.at("intercept").get<real>();
    const auto w = j.at("weights").get<std::vector<real>>();
    m.weights = Eigen::Map<const vec>(w.data(), static_cast<index_t>(w.size()));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed linear model record: ") + e.what());
  }
  return m;
}

}  // namespace solarqr::linqr
