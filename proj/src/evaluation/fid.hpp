#pragma once

#include <Eigen/Dense>
#include <vector>

#include "core/tensor.hpp"

namespace chromo::evaluation {

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // unbiased (n-1) sample covariance, unregularized
};

// Rows are samples. Fewer than 2 rows -> MetricError.
GaussianStats gaussian_stats(const Eigen::MatrixXd& rows);

// Frechet distance ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), matrix
// square roots by eigendecomposition of the symmetrized product, 1e-6 I
// regularization on both covariances. Eigenvalues below -1e-6 (relative to
// the spectral radius) -> MetricError; small negatives are clamped to 0.
double fid_from_stats(const GaussianStats& a, const GaussianStats& b);

double fid(const Eigen::MatrixXd& real_rows, const Eigen::MatrixXd& fake_rows);

// convenience: stack per-image feature tensors (each rank-1, equal length)
Eigen::MatrixXd feature_rows(const std::vector<Tensor<float>>& feats);

}  // namespace chromo::evaluation
