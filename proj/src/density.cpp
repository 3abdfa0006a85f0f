#include "cdprl/density.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cdprl/rng.hpp"

namespace cdprl {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kTinyCount = 1e-12;

double digamma(double x) {
  // Recurrence up to the asymptotic regime, then the standard series.
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
  return result;
}

Eigen::VectorXd digamma(const Eigen::VectorXd& v) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = digamma(v[i]);
  return out;
}

// KL(Dir(alpha) || Dir(alpha0 * 1)).
double dirichlet_kl(const Eigen::VectorXd& alpha, double alpha0) {
  const double total = alpha.sum();
  const double psi_total = digamma(total);
  const auto k = static_cast<double>(alpha.size());
  double kl = std::lgamma(total) - std::lgamma(k * alpha0) + k * std::lgamma(alpha0);
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    kl -= std::lgamma(alpha[i]);
    kl += (alpha[i] - alpha0) * (digamma(alpha[i]) - psi_total);
  }
  return kl;
}

// log normalizer of a Wishart(W, nu) parameterized by V = W^{-1}.
double wishart_log_normalizer(double log_det_v, double nu, int dim) {
  double value = 0.5 * nu * log_det_v - 0.5 * nu * dim * std::numbers::ln2;
  value -= 0.25 * dim * (dim - 1) * std::log(M_PI);
  for (int i = 0; i < dim; ++i) value -= std::lgamma(0.5 * (nu - i));
  return value;
}

struct InitResult {
  Eigen::MatrixXd responsibilities;  // N x K
};

InitResult init_responsibilities(const Eigen::MatrixXd& x, int k, const VGMMConfig& config) {
  const Eigen::Index n = x.rows();
  Rng rng(config.seed);
  InitResult init;
  init.responsibilities = Eigen::MatrixXd::Zero(n, k);

  if (config.init_strategy == InitStrategy::kRandomResponsibility) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double total = 0.0;
      for (int j = 0; j < k; ++j) {
        const double e = -std::log(std::max(rng.uniform(), 0x1.0p-53));
        init.responsibilities(i, j) = e;
        total += e;
      }
      init.responsibilities.row(i) /= total;
    }
    return init;
  }

  // Farthest-point seeding: first center at random, each further center at
  // the point with maximal distance to the chosen set; then hard-assign.
  std::vector<Eigen::Index> centers;
  centers.push_back(rng.uniform_int(0, static_cast<int>(n) - 1));
  Eigen::VectorXd min_dist2 =
      (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < k) {
    Eigen::Index far = 0;
    min_dist2.maxCoeff(&far);
    centers.push_back(far);
    min_dist2 = min_dist2.cwiseMin(
        (x.rowwise() - x.row(far)).rowwise().squaredNorm());
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      const double d = (x.row(i) - x.row(centers[j])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    init.responsibilities(i, best) = 1.0;
  }
  return init;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return {};
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  return m;
}

}  // namespace

void VGMMConfig::validate() const {
  if (max_components < 1) throw std::invalid_argument("VGMMConfig: max_components must be >= 1");
  if (covariance_floor <= 0.0) throw std::invalid_argument("VGMMConfig: covariance_floor must be > 0");
  if (convergence_tol <= 0.0) throw std::invalid_argument("VGMMConfig: convergence_tol must be > 0");
  if (max_iterations < 1) throw std::invalid_argument("VGMMConfig: max_iterations must be >= 1");
  if (density_floor <= 0.0) throw std::invalid_argument("VGMMConfig: density_floor must be > 0");
}

int MixtureModel::count_effective(double weight_threshold) const {
  int count = 0;
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (weights[i] > weight_threshold) ++count;
  return count;
}

void MixtureModel::finalize() {
  const int k = num_components;
  const int d = feature_dim;
  log_weights_ = weights.array().log().matrix();
  comp_log_norm_.resize(k);
  if (kind == CovarianceKind::kDiagonal) {
    diag_inv_var_ = diag_covariances.cwiseInverse();
    for (int i = 0; i < k; ++i) {
      comp_log_norm_[i] =
          -0.5 * (d * kLog2Pi + diag_covariances.row(i).array().log().sum());
    }
    full_chol_.clear();
  } else {
    full_chol_.clear();
    full_chol_.reserve(k);
    for (int i = 0; i < k; ++i) {
      full_chol_.emplace_back(full_covariances[i]);
      if (full_chol_.back().info() != Eigen::Success) {
        throw std::runtime_error("MixtureModel: covariance not positive definite");
      }
      const double log_det =
          2.0 * full_chol_.back().matrixL().toDenseMatrix().diagonal().array().log().sum();
      comp_log_norm_[i] = -0.5 * (d * kLog2Pi + log_det);
    }
  }
}

MixtureModel fit(const Eigen::MatrixXd& features, const VGMMConfig& config) {
  config.validate();
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (n < 1 || d < 1) throw std::invalid_argument("fit: empty feature matrix");

  int k = config.max_components;
  if (n < k) {
    std::cerr << "cdprl: reducing mixture components from " << k << " to " << n
              << " (fewer samples than components)\n";
    k = static_cast<int>(n);
  }
  const double alpha0 =
      config.dirichlet_concentration > 0.0 ? config.dirichlet_concentration : 1.0 / k;
  const double beta0 = 1.0;
  const bool diagonal = config.covariance_kind == CovarianceKind::kDiagonal;

  const Eigen::VectorXd m0 = features.colwise().mean();
  const Eigen::MatrixXd centered = features.rowwise() - m0.transpose();
  const Eigen::VectorXd var0 =
      centered.array().square().colwise().sum().transpose() / static_cast<double>(n);

  // Priors. Diagonal: per-dimension Normal-Gamma with unit shape and rate
  // matched to the (floored) data variance. Full: Normal-Wishart with
  // nu0 = D+2 so the prior expected covariance equals the data covariance.
  const double a0 = 1.0;
  const Eigen::VectorXd b0 = a0 * (var0.array() + config.covariance_floor).matrix();
  const double nu0 = static_cast<double>(d) + 2.0;
  Eigen::MatrixXd psi0;
  double log_det_w0 = 0.0;
  if (!diagonal) {
    psi0 = (centered.transpose() * centered) / static_cast<double>(n);
    psi0.diagonal().array() += config.covariance_floor;
    log_det_w0 = -Eigen::LLT<Eigen::MatrixXd>(psi0)
                      .matrixL()
                      .toDenseMatrix()
                      .diagonal()
                      .array()
                      .log()
                      .sum() *
                 2.0;
  }

  const Eigen::MatrixXd x2 = features.array().square();
  Eigen::MatrixXd resp = init_responsibilities(features, k, config).responsibilities;

  Eigen::VectorXd alpha(k), beta(k), a(k), nu(k);
  Eigen::MatrixXd m(k, d), b(k, d);
  std::vector<Eigen::MatrixXd> v_mats(static_cast<std::size_t>(k));
  std::vector<Eigen::LLT<Eigen::MatrixXd>> v_chol(static_cast<std::size_t>(k));
  Eigen::VectorXd log_det_v(k);

  MixtureModel model;
  model.kind = config.covariance_kind;
  model.num_components = k;
  model.feature_dim = static_cast<int>(d);
  model.density_floor = config.density_floor;
  model.covariance_floor = config.covariance_floor;

  double prev_bound = -std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    // ----- M step: update the variational posterior from responsibilities.
    const Eigen::VectorXd counts = resp.colwise().sum().transpose();
    alpha = counts.array() + alpha0;
    beta = counts.array() + beta0;
    a = counts.array() / 2.0 + a0;
    nu = counts.array() + nu0;

    Eigen::MatrixXd xbar(k, d);
    const Eigen::MatrixXd weighted_sum = resp.transpose() * features;  // K x D
    for (int j = 0; j < k; ++j) {
      if (counts[j] > kTinyCount) {
        xbar.row(j) = weighted_sum.row(j) / counts[j];
      } else {
        xbar.row(j) = m0.transpose();
      }
      m.row(j) = (beta0 * m0.transpose() + counts[j] * xbar.row(j)) / beta[j];
    }

    if (diagonal) {
      const Eigen::MatrixXd weighted_sq = resp.transpose() * x2;  // K x D
      for (int j = 0; j < k; ++j) {
        Eigen::ArrayXd s_j;
        if (counts[j] > kTinyCount) {
          s_j = (weighted_sq.row(j).array() / counts[j] - xbar.row(j).array().square())
                    .max(0.0);
        } else {
          s_j = Eigen::ArrayXd::Zero(d);
        }
        const double shrink = beta0 * counts[j] / (beta0 + counts[j]);
        b.row(j) = b0.transpose().array() + 0.5 * (counts[j] * s_j +
                   shrink * (xbar.row(j).array() - m0.transpose().array()).square());
      }
    } else {
      for (int j = 0; j < k; ++j) {
        Eigen::MatrixXd v = psi0;
        if (counts[j] > kTinyCount) {
          const Eigen::MatrixXd xc = features.rowwise() - xbar.row(j);
          v.noalias() += xc.transpose() * resp.col(j).asDiagonal() * xc;
          const Eigen::VectorXd dm = xbar.row(j).transpose() - m0;
          v.noalias() += (beta0 * counts[j] / (beta0 + counts[j])) * dm * dm.transpose();
        }
        v_mats[j] = v;
        v_chol[j] = Eigen::LLT<Eigen::MatrixXd>(v);
        if (v_chol[j].info() != Eigen::Success) {
          throw std::runtime_error("fit: scale matrix lost positive definiteness");
        }
        log_det_v[j] =
            2.0 * v_chol[j].matrixL().toDenseMatrix().diagonal().array().log().sum();
      }
    }

    // ----- E step: responsibilities under the updated posterior.
    const double psi_alpha_total = digamma(alpha.sum());
    const Eigen::VectorXd e_log_pi = digamma(alpha).array() - psi_alpha_total;

    Eigen::MatrixXd log_rho(n, k);
    if (diagonal) {
      const Eigen::MatrixXd e_lam =
          (a.replicate(1, d).array() / b.array()).matrix();  // K x D
      Eigen::VectorXd e_log_lam_sum(k);
      for (int j = 0; j < k; ++j) {
        e_log_lam_sum[j] = d * digamma(a[j]) - b.row(j).array().log().sum();
      }
      const Eigen::MatrixXd elm = e_lam.cwiseProduct(m);
      const Eigen::VectorXd const_k =
          (e_log_pi.array() + 0.5 * e_log_lam_sum.array() - 0.5 * d * kLog2Pi -
           0.5 * d / beta.array() -
           0.5 * elm.cwiseProduct(m).rowwise().sum().array())
              .matrix();
      log_rho = x2 * (-0.5 * e_lam).transpose() + features * elm.transpose();
      log_rho.rowwise() += const_k.transpose();
    } else {
      Eigen::VectorXd e_log_det(k);
      for (int j = 0; j < k; ++j) {
        double s = d * std::numbers::ln2 - log_det_v[j];
        for (int i = 0; i < d; ++i) s += digamma(0.5 * (nu[j] - i));
        e_log_det[j] = s;
      }
      for (int j = 0; j < k; ++j) {
        Eigen::MatrixXd xc = (features.rowwise() - m.row(j)).transpose();  // D x N
        v_chol[j].matrixL().solveInPlace(xc);
        const Eigen::VectorXd quad = nu[j] * xc.array().square().colwise().sum().transpose();
        log_rho.col(j) =
            (e_log_pi[j] + 0.5 * e_log_det[j] - 0.5 * d * kLog2Pi -
             0.5 * d / beta[j] - 0.5 * quad.array())
                .matrix();
      }
    }

    const Eigen::VectorXd row_max = log_rho.rowwise().maxCoeff();
    const Eigen::VectorXd lse =
        ((log_rho.colwise() - row_max).array().exp().rowwise().sum().log() +
         row_max.array())
            .matrix();
    resp = (log_rho.colwise() - lse).array().exp();

    // ----- Lower bound: per-sample log-evidence minus the KL penalties.
    double kl = dirichlet_kl(alpha, alpha0);
    if (diagonal) {
      for (int j = 0; j < k; ++j) {
        for (int dd = 0; dd < d; ++dd) {
          const double e_lam = a[j] / b(j, dd);
          const double dm = m(j, dd) - m0[dd];
          kl += 0.5 * std::log(beta[j] / beta0) - 0.5 +
                0.5 * beta0 * (e_lam * dm * dm + 1.0 / beta[j]);
          kl += (a[j] - a0) * digamma(a[j]) - std::lgamma(a[j]) + std::lgamma(a0) +
                a0 * (std::log(b(j, dd)) - std::log(b0[dd])) +
                a[j] * (b0[dd] - b(j, dd)) / b(j, dd);
        }
      }
    } else {
      for (int j = 0; j < k; ++j) {
        double e_log_det = d * std::numbers::ln2 - log_det_v[j];
        for (int i = 0; i < d; ++i) e_log_det += digamma(0.5 * (nu[j] - i));
        const Eigen::VectorXd dm = m.row(j).transpose() - m0;
        const double quad = nu[j] * dm.dot(v_chol[j].solve(dm));
        kl += 0.5 * (d * std::log(beta[j] / beta0) - d + beta0 * quad +
                     d * beta0 / beta[j]);
        const double log_b_q = wishart_log_normalizer(log_det_v[j], nu[j], static_cast<int>(d));
        const double log_b_p = wishart_log_normalizer(-log_det_w0, nu0, static_cast<int>(d));
        const double entropy =
            -log_b_q - 0.5 * (nu[j] - d - 1) * e_log_det + 0.5 * nu[j] * d;
        const double trace_term = nu[j] * v_chol[j].solve(psi0).trace();
        const double e_log_p =
            log_b_p + 0.5 * (nu0 - d - 1) * e_log_det - 0.5 * trace_term;
        kl += -entropy - e_log_p;
      }
    }
    const double bound = lse.sum() - kl;
    model.bound_history.push_back(bound);
    model.iterations = iter + 1;

    if (iter > 0 && (bound - prev_bound) / static_cast<double>(n) < config.convergence_tol) {
      model.converged = true;
      prev_bound = bound;
      break;
    }
    prev_bound = bound;
  }

  model.lower_bound = prev_bound;
  model.dirichlet_counts = alpha;
  model.mean_precision = beta;
  model.weights = alpha / alpha.sum();
  model.means = m;
  if (diagonal) {
    model.dof = a;
    model.gamma_rates = b;
    model.diag_covariances =
        (b.array().colwise() / a.array() + config.covariance_floor).matrix();
  } else {
    model.dof = nu;
    model.scale_inverses = v_mats;
    model.full_covariances.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      model.full_covariances[j] = v_mats[j] / nu[j];
      model.full_covariances[j].diagonal().array() += config.covariance_floor;
    }
  }
  model.effective_components = model.count_effective();
  model.finalize();
  return model;
}

double log_density(const MixtureModel& model, const Eigen::VectorXd& feature) {
  if (!model.fitted()) throw std::runtime_error("log_density: model not fitted");
  if (feature.size() != model.feature_dim) {
    throw std::invalid_argument("log_density: feature dimension mismatch");
  }
  const int k = model.num_components;
  double max_term = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd terms(k);
  for (int j = 0; j < k; ++j) {
    double quad;
    if (model.kind == CovarianceKind::kDiagonal) {
      quad = (model.diag_inv_var_.row(j).transpose().array() *
              (feature - model.means.row(j).transpose()).array().square())
                 .sum();
    } else {
      Eigen::VectorXd z = feature - model.means.row(j).transpose();
      model.full_chol_[j].matrixL().solveInPlace(z);
      quad = z.squaredNorm();
    }
    terms[j] = model.log_weights_[j] + model.comp_log_norm_[j] - 0.5 * quad;
    max_term = std::max(max_term, terms[j]);
  }
  return max_term + std::log((terms.array() - max_term).exp().sum());
}

double predict_raw_density(const MixtureModel& model, const Trajectory& trajectory) {
  const double ld = log_density(model, trajectory.achieved_goal_feature);
  return std::max(std::exp(ld), model.density_floor);
}

std::string MixtureModel::to_json() const {
  nlohmann::json j;
  j["format"] = "cdprl.mixture";
  j["version"] = 1;
  j["kind"] = kind == CovarianceKind::kDiagonal ? "diagonal" : "full";
  j["num_components"] = num_components;
  j["feature_dim"] = feature_dim;
  j["weights"] = vector_to_json(weights);
  j["means"] = matrix_to_json(means);
  j["dirichlet_counts"] = vector_to_json(dirichlet_counts);
  j["mean_precision"] = vector_to_json(mean_precision);
  j["dof"] = vector_to_json(dof);
  if (kind == CovarianceKind::kDiagonal) {
    j["diag_covariances"] = matrix_to_json(diag_covariances);
    j["gamma_rates"] = matrix_to_json(gamma_rates);
  } else {
    nlohmann::json covs = nlohmann::json::array();
    nlohmann::json scales = nlohmann::json::array();
    for (const auto& c : full_covariances) covs.push_back(matrix_to_json(c));
    for (const auto& s : scale_inverses) scales.push_back(matrix_to_json(s));
    j["full_covariances"] = std::move(covs);
    j["scale_inverses"] = std::move(scales);
  }
  j["effective_components"] = effective_components;
  j["lower_bound"] = lower_bound;
  j["bound_history"] = bound_history;
  j["iterations"] = iterations;
  j["converged"] = converged;
  j["density_floor"] = density_floor;
  j["covariance_floor"] = covariance_floor;
  return j.dump();
}

MixtureModel MixtureModel::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("format") != "cdprl.mixture" || j.at("version") != 1) {
    throw std::runtime_error("MixtureModel::from_json: unsupported document");
  }
  MixtureModel model;
  model.kind = j.at("kind") == "diagonal" ? CovarianceKind::kDiagonal : CovarianceKind::kFull;
  model.num_components = j.at("num_components").get<int>();
  model.feature_dim = j.at("feature_dim").get<int>();
  model.weights = vector_from_json(j.at("weights"));
  model.means = matrix_from_json(j.at("means"));
  model.dirichlet_counts = vector_from_json(j.at("dirichlet_counts"));
  model.mean_precision = vector_from_json(j.at("mean_precision"));
  model.dof = vector_from_json(j.at("dof"));
  if (model.kind == CovarianceKind::kDiagonal) {
    model.diag_covariances = matrix_from_json(j.at("diag_covariances"));
    model.gamma_rates = matrix_from_json(j.at("gamma_rates"));
  } else {
    for (const auto& c : j.at("full_covariances")) {
      model.full_covariances.push_back(matrix_from_json(c));
    }
    for (const auto& s : j.at("scale_inverses")) {
      model.scale_inverses.push_back(matrix_from_json(s));
    }
  }
  model.effective_components = j.at("effective_components").get<int>();
  model.lower_bound = j.at("lower_bound").get<double>();
  model.bound_history = j.at("bound_history").get<std::vector<double>>();
  model.iterations = j.at("iterations").get<int>();
  model.converged = j.at("converged").get<bool>();
  model.density_floor = j.at("density_floor").get<double>();
  model.covariance_floor = j.at("covariance_floor").get<double>();
  model.finalize();
  return model;
}

}  // namespace cdprl
