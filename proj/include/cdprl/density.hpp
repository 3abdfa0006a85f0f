#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cdprl/core.hpp"

namespace cdprl {

enum class CovarianceKind { kDiagonal, kFull };
enum class InitStrategy { kKmeansLike, kRandomResponsibility };

/// Fit settings for the variational Gaussian mixture. `convergence_tol` is
/// on the lower-bound improvement per sample; `dirichlet_concentration`
/// <= 0 means "use 1/K", which drives superfluous component weights toward
/// zero.
struct VGMMConfig {
  int max_components = 3;
  CovarianceKind covariance_kind = CovarianceKind::kDiagonal;
  double dirichlet_concentration = 0.0;  // <= 0 -> 1/K
  int max_iterations = 100;
  double convergence_tol = 1e-3;
  double covariance_floor = 1e-6;
  InitStrategy init_strategy = InitStrategy::kKmeansLike;
  std::uint64_t seed = 0;
  double density_floor = 1e-300;

  void validate() const;
};

/// Fitted mixture posterior. Density queries use the posterior-expected
/// parameters (weights, means, covariances); the hyperparameter blocks keep
/// the full variational posterior for inspection and serialization.
/// Immutable once fitted; safe to query from many threads.
struct MixtureModel {
  CovarianceKind kind = CovarianceKind::kDiagonal;
  int num_components = 0;  // K after any reduction
  int feature_dim = 0;

  Eigen::VectorXd weights;                      // K, sums to 1
  Eigen::MatrixXd means;                        // K x D
  Eigen::MatrixXd diag_covariances;             // K x D (diagonal kind)
  std::vector<Eigen::MatrixXd> full_covariances;  // K of D x D (full kind)

  // Variational posterior hyperparameters.
  Eigen::VectorXd dirichlet_counts;  // alpha_k
  Eigen::VectorXd mean_precision;    // beta_k
  Eigen::VectorXd dof;               // Gamma shape a_k (diagonal) / Wishart nu_k (full)
  Eigen::MatrixXd gamma_rates;       // K x D rate b_kd (diagonal kind)
  std::vector<Eigen::MatrixXd> scale_inverses;  // W_k^{-1} (full kind)

  int effective_components = 0;  // weights > kPruneThreshold
  double lower_bound = 0.0;
  std::vector<double> bound_history;
  int iterations = 0;
  bool converged = false;
  double density_floor = 1e-300;
  double covariance_floor = 1e-6;

  static constexpr double kPruneThreshold = 0.05;

  bool fitted() const { return num_components > 0; }
  int count_effective(double weight_threshold = kPruneThreshold) const;

  /// Rebuilds the cached per-component evaluation terms. Called by fit()
  /// and from_json(); must be called again if fields are edited by hand
  /// (fixture construction in tests).
  void finalize();

  std::string to_json() const;
  static MixtureModel from_json(const std::string& text);

  // Cached evaluation terms (not serialized).
  Eigen::VectorXd log_weights_;
  Eigen::MatrixXd diag_inv_var_;   // K x D
  Eigen::VectorXd comp_log_norm_;  // -0.5*(D log 2pi + log|Sigma_k|)
  std::vector<Eigen::LLT<Eigen::MatrixXd>> full_chol_;
};

/// Variational EM fit on N feature vectors (one per row). Requires N >= 1;
/// if N < max_components, K is reduced to N with a warning on stderr.
/// Deterministic given (features, config).
MixtureModel fit(const Eigen::MatrixXd& features, const VGMMConfig& config);

/// log sum_k c_k N(feature | mu_k, Sigma_k), evaluated via log-sum-exp.
double log_density(const MixtureModel& model, const Eigen::VectorXd& feature);

/// exp(log_density) of the trajectory's achieved-goal feature, clamped
/// below by the model's density floor. Throws on an unfitted model.
double predict_raw_density(const MixtureModel& model, const Trajectory& trajectory);

}  // namespace cdprl
