// Copyright 2026 The xglk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xglk/estimator_lab.h"

#include <cmath>

#include "xglk/error.h"
#include "xglk/rng.h"

namespace xglk {

namespace {

void CheckLambda(double lambda) {
  Require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::kContract,
          "lambda must lie in [0, 1]");
}

void CheckUnit(std::span<const double> e) {
  Require(std::abs(Norm2(e) - 1.0) <= 1e-9, ErrorKind::kContract,
          "prior must have unit norm");
}

Eigen::Map<const Eigen::VectorXd> AsVector(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

}  // namespace

void PriorShapedGaussian::Validate() const {
  CheckLambda(lambda);
  Require(epsilon > 0.0, ErrorKind::kContract, "epsilon must be positive");
  Require(!prior.empty(), ErrorKind::kContract, "prior is empty");
  if (kind == PriorKind::kMeanShift) {
    CheckUnit(prior);
  } else {
    for (double p : prior) {
      Require(p >= 0.0, ErrorKind::kContract,
              "covariance-scaled prior entries must be nonnegative");
    }
  }
}

SamplerSpec PriorShapedGaussian::ToSampler() const {
  Validate();
  return {kind == PriorKind::kMeanShift ? SamplerKind::kEgta : SamplerKind::kEgsa,
          lambda, epsilon, Tensor::Vector(prior)};
}

double BiasAnalytic(double lambda, std::span<const double> g,
                    std::span<const double> e) {
  CheckLambda(lambda);
  CheckUnit(e);
  Require(g.size() == e.size(), ErrorKind::kShape, "gradient/prior size mismatch");
  const double gg = SquaredNorm(g);
  if (gg == 0.0) return 0.0;
  const double ge = Dot(g, e);
  const double cos2 = ge * ge / gg;
  return (1 - lambda) * (1 - lambda) * gg * std::max(0.0, 1.0 - cos2);
}

double TotalVarianceAnalytic(double lambda, size_t n, size_t samples,
                             std::span<const double> g, std::span<const double> e) {
  CheckLambda(lambda);
  CheckUnit(e);
  Require(samples >= 1, ErrorKind::kContract, "B must be >= 1");
  const double gg = SquaredNorm(g), ge = Dot(g, e);
  return (lambda * lambda * (n + 1.0) * gg + 4.0 * (1 - lambda) * lambda * ge * ge) /
         static_cast<double>(samples);
}

double TotalVarianceExact(double lambda, size_t n, size_t samples,
                          std::span<const double> g, std::span<const double> e) {
  CheckLambda(lambda);
  CheckUnit(e);
  Require(samples >= 1, ErrorKind::kContract, "B must be >= 1");
  const double gg = SquaredNorm(g), ge = Dot(g, e);
  const double mix = lambda * (1 - lambda);
  return (lambda * lambda * (n + 1.0) * gg + mix * gg + (n + 2.0) * mix * ge * ge) /
         static_cast<double>(samples);
}

Eigen::MatrixXd FourthMomentAnalytic(const Eigen::MatrixXd& s,
                                     const Eigen::MatrixXd& g) {
  Require(s.rows() == s.cols() && g.rows() == s.rows() && g.cols() == s.cols(),
          ErrorKind::kShape, "moment matrices must be square and equal-sized");
  return s.trace() * s + 2.0 * s * s + 6.0 * g * s + g * g;
}

Eigen::MatrixXd FourthMomentExact(const Eigen::MatrixXd& s, const Eigen::MatrixXd& g) {
  Require(s.rows() == s.cols() && g.rows() == s.rows() && g.cols() == s.cols(),
          ErrorKind::kShape, "moment matrices must be square and equal-sized");
  return s.trace() * s + 2.0 * s * s + 2.0 * (g * s + s * g) + g * g +
         s.trace() * g + g.trace() * s;
}

Eigen::MatrixXd SigmaHat(double lambda, double epsilon, size_t n) {
  CheckLambda(lambda);
  return lambda * epsilon *
         Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n),
                                   static_cast<Eigen::Index>(n));
}

Eigen::MatrixXd GHat(double lambda, std::span<const double> e) {
  CheckLambda(lambda);
  const Eigen::VectorXd v = AsVector(e);
  return (1 - lambda) * v * v.transpose();
}

EstimatorStats EmpiricalEstimatorStats(const ScalarFunction& f, const Tensor& x,
                                       std::span<const double> grad,
                                       const PriorShapedGaussian& sampler,
                                       size_t samples, size_t n_trials, double delta,
                                       uint64_t seed) {
  Require(n_trials >= 1000, ErrorKind::kContract, "need at least 1000 trials");
  Require(grad.size() == x.size() && sampler.dim() == x.size(), ErrorKind::kShape,
          "gradient, prior and input sizes differ");
  const SamplerSpec spec = sampler.ToSampler();
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto trials = static_cast<Eigen::Index>(n_trials);
  Eigen::MatrixXd est(trials, n);
  const Rng root(seed, "estimator-stats");
  for (Eigen::Index t = 0; t < trials; ++t) {
    Rng rng = root.Split(static_cast<uint64_t>(t));
    const Tensor g = NesEstimate(f, x, spec, samples, delta, rng);
    Require(g.AllFinite(), ErrorKind::kNumeric, "estimate is not finite");
    est.row(t) = AsVector(g.data()).transpose();
  }
  EstimatorStats s;
  s.trials = n_trials;
  s.mean = est.colwise().mean().transpose();
  const Eigen::MatrixXd centered = est.rowwise() - s.mean.transpose();
  const double nt = static_cast<double>(n_trials);
  const Eigen::MatrixXd cov = centered.transpose() * centered / (nt - 1.0);
  s.total_variance = cov.trace();
  const Eigen::VectorXd d2 = centered.rowwise().squaredNorm();
  const double d2_mean = d2.mean();
  const double d2_var = (d2.array() - d2_mean).square().sum() / (nt - 1.0);
  s.total_variance_stderr = std::sqrt(d2_var / nt);
  const Eigen::VectorXd b = s.mean - AsVector(grad);
  s.bias = b.squaredNorm();
  s.bias_debiased = s.bias - s.total_variance / nt;
  const double quad = b.dot(cov * b);
  s.bias_stderr = std::sqrt(std::max(0.0, 4.0 * quad / nt) +
                            2.0 * (cov * cov).trace() / (nt * nt));
  s.mean_stderr = std::sqrt(s.total_variance / nt);
  return s;
}

Eigen::MatrixXd EmpiricalFourthMoment(const PriorShapedGaussian& sampler, size_t draws,
                                      uint64_t seed) {
  Require(draws >= 1, ErrorKind::kContract, "need at least one draw");
  const SamplerSpec spec = sampler.ToSampler();
  const auto n = static_cast<Eigen::Index>(sampler.dim());
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  Rng rng(seed, "fourth-moment");
  for (size_t d = 0; d < draws; ++d) {
    const Tensor u = DrawSearchVector(spec, {sampler.dim()}, rng);
    const Eigen::Map<const Eigen::VectorXd> v(u.data().data(), n);
    acc.noalias() += v.squaredNorm() * v * v.transpose();
  }
  return acc / static_cast<double>(draws);
}

double KlZeroMeanGaussian(const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2) {
  Require(s1.rows() == s1.cols() && s2.rows() == s1.rows() && s2.cols() == s1.cols(),
          ErrorKind::kShape, "covariances must be square and equal-sized");
  auto check = [](const Eigen::MatrixXd& s) {
    Require(s.allFinite() && (s - s.transpose()).cwiseAbs().maxCoeff() <=
                                 1e-12 * std::max(1.0, s.cwiseAbs().maxCoeff()),
            ErrorKind::kNumeric, "covariance is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    Require(llt.info() == Eigen::Success, ErrorKind::kNumeric,
            "covariance is not positive definite");
    return llt;
  };
  const auto l1 = check(s1);
  const auto l2 = check(s2);
  const double logdet1 = 2.0 * l1.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet2 = 2.0 * l2.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double tr = l2.solve(s1).trace();
  const double n = static_cast<double>(s1.rows());
  return std::max(0.0, 0.5 * (logdet2 - logdet1 - n + tr));
}

Eigen::MatrixXd OptimalDiagApprox(const Eigen::MatrixXd& s) {
  Require(s.rows() == s.cols(), ErrorKind::kShape, "covariance must be square");
  return s.diagonal().asDiagonal();
}

PriorCovariancePair PriorCovariances(double lambda, double epsilon,
                                     std::span<const double> e) {
  CheckLambda(lambda);
  CheckUnit(e);
  PriorCovariancePair p;
  const Eigen::MatrixXd base = SigmaHat(lambda, epsilon, e.size());
  p.sigma = base + GHat(lambda, e);
  const Eigen::VectorXd v = AsVector(e);
  p.sigma_star = base;
  p.sigma_star.diagonal() += (1 - lambda) * v.array().square().matrix();
  return p;
}

Eigen::MatrixXd CovarianceScaledCovariance(double lambda, double epsilon,
                                           std::span<const double> p) {
  CheckLambda(lambda);
  Require(epsilon > 0.0, ErrorKind::kContract, "epsilon must be positive");
  Eigen::VectorXd d(static_cast<Eigen::Index>(p.size()));
  for (size_t i = 0; i < p.size(); ++i) {
    Require(p[i] >= 0.0, ErrorKind::kContract, "prior entries must be nonnegative");
    const double s = std::sqrt(lambda) + std::sqrt(1 - lambda) * p[i];
    d[static_cast<Eigen::Index>(i)] = epsilon * s * s;
  }
  return d.asDiagonal();
}

}  // namespace xglk
