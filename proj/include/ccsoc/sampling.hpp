#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace ccsoc {

enum class Execution { Serial, Parallel };

/// Samples are drawn in fixed-size blocks, each from its own engine seeded with
/// (seed, block). Results do not depend on thread count or scheduling.
inline constexpr std::size_t kSampleBlock = 512;

/// N(0, Sigma) draws through a Cholesky factor, or a scaled eigenbasis when
/// Sigma is only semidefinite.
class GaussianSampler {
 public:
  explicit GaussianSampler(const Eigen::MatrixXd& sigma);

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(factor_.rows()); }
  const Eigen::MatrixXd& factor() const noexcept { return factor_; }

  /// Rows [block * kSampleBlock, ...) of the stream for `seed`, written into `out`
  /// (count x dimension).
  void fill_block(std::uint64_t seed, std::uint64_t block, Eigen::Ref<Eigen::MatrixXd> out) const;

  /// n x dimension matrix of deviations.
  Eigen::MatrixXd sample(std::size_t n, std::uint64_t seed, Execution exec = Execution::Parallel) const;

 private:
  Eigen::MatrixXd factor_;
};

std::mt19937_64 block_engine(std::uint64_t seed, std::uint64_t block);

}  // namespace ccsoc
