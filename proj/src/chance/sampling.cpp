#include <algorithm>

#include "ccsoc/error.hpp"
#include "ccsoc/sampling.hpp"

namespace ccsoc {

std::mt19937_64 block_engine(std::uint64_t seed, std::uint64_t block) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)};
  return std::mt19937_64(seq);
}

GaussianSampler::GaussianSampler(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols()) throw ValidationError("covariance must be square");
  if (sigma.rows() == 0) return;
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, sigma.cwiseAbs().maxCoeff())) {
    throw ValidationError("covariance must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() == Eigen::Success) {
    factor_ = llt.matrixL();
    return;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  const double tol = 1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -tol) {
    throw ValidationError("covariance is not positive semidefinite");
  }
  factor_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

void GaussianSampler::fill_block(std::uint64_t seed, std::uint64_t block,
                                 Eigen::Ref<Eigen::MatrixXd> out) const {
  auto engine = block_engine(seed, block);
  std::normal_distribution<double> normal;
  const auto d = factor_.rows();
  Eigen::VectorXd z(d);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index k = 0; k < d; ++k) z(k) = normal(engine);
    out.row(r) = (factor_ * z).transpose();
  }
}

Eigen::MatrixXd GaussianSampler::sample(std::size_t n, std::uint64_t seed, Execution exec) const {
  const auto d = factor_.rows();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), d);
  const auto blocks = static_cast<std::int64_t>((n + kSampleBlock - 1) / kSampleBlock);
  auto run = [&](std::int64_t b) {
    const auto start = static_cast<Eigen::Index>(b * kSampleBlock);
    const auto count = std::min<Eigen::Index>(kSampleBlock, static_cast<Eigen::Index>(n) - start);
    fill_block(seed, static_cast<std::uint64_t>(b), out.middleRows(start, count));
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t b = 0; b < blocks; ++b) run(b);
  } else {
    for (std::int64_t b = 0; b < blocks; ++b) run(b);
  }
  return out;
}

}  // namespace ccsoc
