#include "evaluation/fid.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace chromo::evaluation {

namespace {

constexpr double kCovReg = 1e-6;

// eigendecomposition-based PSD square root; negative eigenvalues beyond
// numerical noise are a caller bug
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    if (eig.info() != Eigen::Success) throw MetricError(std::string(what) + ": eig failed");
    Eigen::VectorXd lam = eig.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    for (int i = 0; i < lam.size(); ++i) {
        if (lam[i] < -1e-6 * scale)
            throw MetricError(std::string(what) + ": eigenvalue " + std::to_string(lam[i]) +
                              " is negative beyond tolerance");
        lam[i] = std::sqrt(std::max(lam[i], 0.0));
    }
    return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

GaussianStats gaussian_stats(const Eigen::MatrixXd& rows) {
    const auto n = rows.rows();
    if (n < 2) throw MetricError("gaussian_stats: need at least 2 samples, got " +
                                 std::to_string(n));
    GaussianStats s;
    s.mean = rows.colwise().mean();
    const Eigen::MatrixXd centered = rows.rowwise() - s.mean.transpose();
    s.cov = centered.transpose() * centered / static_cast<double>(n - 1);
    return s;
}

double fid_from_stats(const GaussianStats& a, const GaussianStats& b) {
    if (a.mean.size() != b.mean.size())
        throw MetricError("fid: feature dimensions differ");
    const auto d = a.mean.size();
    const Eigen::MatrixXd reg = kCovReg * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd c1 = 0.5 * (a.cov + a.cov.transpose()) + reg;
    const Eigen::MatrixXd c2 = 0.5 * (b.cov + b.cov.transpose()) + reg;

    const Eigen::MatrixXd s1 = sqrtm_psd(c1, "fid cov1");
    const Eigen::MatrixXd prod = s1 * c2 * s1;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (prod + prod.transpose()));
    if (eig.info() != Eigen::Success) throw MetricError("fid: product eig failed");
    const Eigen::VectorXd lam = eig.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    double tr_sqrt = 0;
    for (int i = 0; i < lam.size(); ++i) {
        if (lam[i] < -1e-6 * scale)
            throw MetricError("fid: product eigenvalue " + std::to_string(lam[i]) +
                              " is negative beyond tolerance");
        tr_sqrt += std::sqrt(std::max(lam[i], 0.0));
    }
    const double mean_term = (a.mean - b.mean).squaredNorm();
    return mean_term + c1.trace() + c2.trace() - 2.0 * tr_sqrt;
}

double fid(const Eigen::MatrixXd& real_rows, const Eigen::MatrixXd& fake_rows) {
    return fid_from_stats(gaussian_stats(real_rows), gaussian_stats(fake_rows));
}

Eigen::MatrixXd feature_rows(const std::vector<Tensor<float>>& feats) {
    if (feats.empty()) throw MetricError("feature_rows: empty feature set");
    const auto d = static_cast<Eigen::Index>(feats[0].numel());
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(feats.size()), d);
    for (size_t i = 0; i < feats.size(); ++i) {
        if (static_cast<Eigen::Index>(feats[i].numel()) != d)
            throw MetricError("feature_rows: inconsistent feature dimension");
        for (Eigen::Index j = 0; j < d; ++j)
            rows(static_cast<Eigen::Index>(i), j) = feats[i].data[static_cast<size_t>(j)];
    }
    return rows;
}

}  // namespace chromo::evaluation
