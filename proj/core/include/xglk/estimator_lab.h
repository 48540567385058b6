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

#ifndef XGLK_ESTIMATOR_LAB_H_
#define XGLK_ESTIMATOR_LAB_H_

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "xglk/evasion.h"
#include "xglk/tensor.h"

namespace xglk {

enum class PriorKind { kMeanShift, kCovarianceScaled };

// Search distribution of the prior-guided estimator. Mean-shift draws are
// sqrt(l) u + sqrt(1 - l) e with ||e|| = 1; covariance-scaled draws are
// sqrt(l) u + sqrt(1 - l) |e| * u. u ~ N(0, epsilon I) in both cases.
struct PriorShapedGaussian {
  double lambda = 1.0;
  double epsilon = 1.0;
  std::vector<double> prior;
  PriorKind kind = PriorKind::kMeanShift;

  // Raises a contract error when the invariants of `kind` do not hold.
  void Validate() const;
  SamplerSpec ToSampler() const;
  size_t dim() const { return prior.size(); }
};

// The estimator below is (1/B) sum_b g^T u_b u_b with unit epsilon, i.e. the
// antithetic estimate of a linear score. Sigma_hat = lambda I and
// G_hat = (1 - lambda) e e^T.

// ||E[estimate] - g||^2 = (1 - l)^2 ||g||^2 (1 - cos^2(g, e)). Zero g gives 0.
double BiasAnalytic(double lambda, std::span<const double> g,
                    std::span<const double> e);

// (1/B)(l^2 (n + 1) ||g||^2 + 4 (1 - l) l (g^T e)^2).
double TotalVarianceAnalytic(double lambda, size_t n, size_t samples,
                             std::span<const double> g, std::span<const double> e);

// Full Gaussian moment expansion of the same trace:
// (1/B)(l^2 (n + 1) ||g||^2 + l (1 - l) ||g||^2 + (n + 2) l (1 - l) (g^T e)^2).
// Equals TotalVarianceAnalytic at l in {0, 1}.
double TotalVarianceExact(double lambda, size_t n, size_t samples,
                          std::span<const double> g, std::span<const double> e);

// E[u u^T u u^T] as tr(S) S + 2 S^2 + 6 G S + G^2.
Eigen::MatrixXd FourthMomentAnalytic(const Eigen::MatrixXd& sigma_hat,
                                     const Eigen::MatrixXd& g_hat);

// E[u u^T u u^T] for u ~ N(0, S) + m with G = m m^T (the term-by-term Isserlis
// expansion): tr(S) S + 2 S^2 + 2 (G S + S G) + G^2 + tr(S) G + tr(G) S.
Eigen::MatrixXd FourthMomentExact(const Eigen::MatrixXd& sigma_hat,
                                  const Eigen::MatrixXd& g_hat);

// Sigma_hat and G_hat of a mean-shift distribution.
Eigen::MatrixXd SigmaHat(double lambda, double epsilon, size_t n);
Eigen::MatrixXd GHat(double lambda, std::span<const double> e);

struct EstimatorStats {
  Eigen::VectorXd mean;
  // ||mean - g||^2 as observed, and with the finite-sample term tr(C) / N
  // removed (C is the covariance of one estimate).
  double bias = 0.0;
  double bias_debiased = 0.0;
  double bias_stderr = 0.0;
  double total_variance = 0.0;  // trace of the sample covariance
  double total_variance_stderr = 0.0;
  double mean_stderr = 0.0;  // sqrt(tr(C) / N): scale of ||mean - E mean||
  size_t trials = 0;
};

// Runs the antithetic estimator of `f` at `x` n_trials times (each trial uses
// an independent child stream of `seed`) and summarizes it against the true
// gradient `grad`.
EstimatorStats EmpiricalEstimatorStats(const ScalarFunction& f, const Tensor& x,
                                       std::span<const double> grad,
                                       const PriorShapedGaussian& sampler,
                                       size_t samples, size_t n_trials, double delta,
                                       uint64_t seed);

// Monte-Carlo E[u u^T u u^T] over `draws` search vectors.
Eigen::MatrixXd EmpiricalFourthMoment(const PriorShapedGaussian& sampler,
                                      size_t draws, uint64_t seed);

// KL(N(0, s1) || N(0, s2)). Raises a numeric error unless both are symmetric
// positive definite.
double KlZeroMeanGaussian(const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2);

// The diagonal D minimizing KL(N(0, s) || N(0, D)), which is diag(s).
Eigen::MatrixXd OptimalDiagApprox(const Eigen::MatrixXd& s);

struct PriorCovariancePair {
  Eigen::MatrixXd sigma;       // l eps I + (1 - l) e e^T
  Eigen::MatrixXd sigma_star;  // l eps I + (1 - l) diag(e * e)
};
PriorCovariancePair PriorCovariances(double lambda, double epsilon,
                                     std::span<const double> e);

// Covariance actually induced by covariance-scaled draws with a nonnegative
// prior p: eps diag((sqrt(l) + sqrt(1 - l) p_i)^2).
Eigen::MatrixXd CovarianceScaledCovariance(double lambda, double epsilon,
                                           std::span<const double> p);

}  // namespace xglk

#endif  // XGLK_ESTIMATOR_LAB_H_
