#pragma once

// Dense joint-Gaussian reference for the linear innovation state-space model.
// Every latent state and observation is written as an explicit linear map of
// the independent Gaussian inputs (l_0, nu_1..nu_T, eps_1..eps_T), so
// likelihoods and conditionals come from plain multivariate-normal algebra.

#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "probts/ssm.hpp"

namespace probts::testing {

struct DenseModel {
  Eigen::VectorXd input_mean;      // mean of x
  Eigen::VectorXd input_var;       // diagonal covariance of x
  Eigen::MatrixXd signal_map;      // row i: a_i' l_{i-1} as a function of x
  Eigen::VectorXd signal_offset;   // b_i
  Eigen::MatrixXd obs_map;         // row i: z_i as a function of x
};

inline DenseModel dense_model(const SsmParams& p, std::size_t T) {
  const Eigen::Index L = p.state_dim();
  const Eigen::Index n = L + 2 * static_cast<Eigen::Index>(T);
  DenseModel m;
  m.input_mean = Eigen::VectorXd::Zero(n);
  m.input_mean.head(L) = p.mu0;
  m.input_var = Eigen::VectorXd::Ones(n);
  m.input_var.head(L) = p.sigma0.array().square();
  m.signal_map = Eigen::MatrixXd::Zero(T, n);
  m.signal_offset = Eigen::VectorXd::Zero(T);
  m.obs_map = Eigen::MatrixXd::Zero(T, n);

  Eigen::MatrixXd state = Eigen::MatrixXd::Zero(L, n);  // l_i = state * x
  state.leftCols(L).setIdentity();
  for (std::size_t i = 0; i < T; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    m.signal_map.row(row) = p.a_at(i).transpose() * state;
    m.signal_offset(row) = p.b_at(i);
    m.obs_map.row(row) = m.signal_map.row(row);
    m.obs_map(row, L + static_cast<Eigen::Index>(T) + row) = p.sigma_at(i);
    Eigen::MatrixXd next = p.F_at(i) * state;
    next.col(L + row) += p.g_at(i);
    state = std::move(next);
  }
  return m;
}

inline std::vector<Eigen::Index> observed_indices(std::span<const Observation> z) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i]) idx.push_back(static_cast<Eigen::Index>(i));
  }
  return idx;
}

/// log N(z_obs; mean, cov) of the observed entries.
inline double dense_loglik(const SsmParams& p, std::span<const Observation> z) {
  const auto m = dense_model(p, z.size());
  const auto idx = observed_indices(z);
  if (idx.empty()) return 0.0;
  const auto k = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd A(k, m.obs_map.cols());
  Eigen::VectorXd mean(k), y(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    A.row(r) = m.obs_map.row(idx[r]);
    mean(r) = m.obs_map.row(idx[r]).dot(m.input_mean) + m.signal_offset(idx[r]);
    y(r) = *z[static_cast<std::size_t>(idx[r])];
  }
  const Eigen::MatrixXd cov = A * m.input_var.asDiagonal() * A.transpose();
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd r = y - mean;
  const Eigen::VectorXd w = llt.matrixL().solve(r);
  double logdet = 0;
  for (Eigen::Index i = 0; i < k; ++i) logdet += 2 * std::log(llt.matrixL()(i, i));
  return -0.5 * (static_cast<double>(k) * std::log(2 * std::numbers::pi) + logdet + w.squaredNorm());
}

struct DenseConditional {
  std::vector<double> signal_mean;
  std::vector<double> signal_var;
};

/// Distribution of a_t' l_{t-1} + b_t given all observed entries.
inline DenseConditional dense_smooth(const SsmParams& p, std::span<const Observation> z) {
  const auto m = dense_model(p, z.size());
  const auto idx = observed_indices(z);
  const auto k = static_cast<Eigen::Index>(idx.size());
  const Eigen::MatrixXd D = m.input_var.asDiagonal();
  Eigen::MatrixXd A(k, m.obs_map.cols());
  Eigen::VectorXd resid(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    A.row(r) = m.obs_map.row(idx[r]);
    resid(r) = *z[static_cast<std::size_t>(idx[r])] - m.obs_map.row(idx[r]).dot(m.input_mean) -
               m.signal_offset(idx[r]);
  }
  const Eigen::MatrixXd Szz = A * D * A.transpose();
  const Eigen::MatrixXd Ssz = m.signal_map * D * A.transpose();
  const Eigen::MatrixXd Sss = m.signal_map * D * m.signal_map.transpose();
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(Szz);
  const Eigen::VectorXd mean = m.signal_map * m.input_mean + m.signal_offset + Ssz * ldlt.solve(resid);
  const Eigen::MatrixXd cov = Sss - Ssz * ldlt.solve(Ssz.transpose());
  DenseConditional out;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    out.signal_mean.push_back(mean(i));
    out.signal_var.push_back(cov(i, i));
  }
  return out;
}

/// Random time-varying model with L in [1, 3]; roughly a third of the prior
/// scales are exactly zero.
inline SsmParams random_params(std::mt19937_64& rng, std::size_t T) {
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.1, 2.0), coin(0.0, 1.0);
  const int L = dim(rng);
  auto vec = [&](double scale) {
    Eigen::VectorXd v(L);
    for (int i = 0; i < L; ++i) v(i) = scale * u(rng);
    return v;
  };
  SsmParams p;
  p.mu0 = vec(3.0);
  p.sigma0 = Eigen::VectorXd(L);
  for (int i = 0; i < L; ++i) p.sigma0(i) = coin(rng) < 0.33 ? 0.0 : pos(rng);
  for (std::size_t t = 0; t < T; ++t) {
    Eigen::MatrixXd F(L, L);
    for (int i = 0; i < L; ++i) {
      for (int j = 0; j < L; ++j) F(i, j) = (i == j ? 0.9 : 0.0) + 0.3 * u(rng);
    }
    p.F.push_back(F);
    p.g.push_back(vec(1.0));
    p.a.push_back(vec(1.5));
    p.b.push_back(2.0 * u(rng));
    p.sigma.push_back(pos(rng));
  }
  return p;
}

inline std::vector<Observation> random_observations(std::mt19937_64& rng, std::size_t T, double missing_rate) {
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<Observation> z;
  for (std::size_t t = 0; t < T; ++t) {
    const double v = n(rng);
    z.push_back(coin(rng) < missing_rate ? kMissing : Observation(v));
  }
  return z;
}

}  // namespace probts::testing
