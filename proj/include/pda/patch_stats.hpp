#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pda/image.hpp"
#include "pda/rng.hpp"

namespace pda {

/// Joint Gaussian over flattened patch_edge x patch_edge x channels patches.
/// The covariance already includes the ridge `epsilon * I`.
struct PatchGaussian {
  int patch_edge = 0;
  int channels = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  double epsilon = 0.0;
  std::size_t sample_count = 0;

  int dimension() const noexcept { return patch_edge * patch_edge * channels; }
  /// Throws invalid_argument if shapes disagree or the covariance is not symmetric.
  void validate() const;
};

inline constexpr double kDefaultRidge = 1e-4;

/// Sample mean and (n-1)-normalized covariance of patches cut from `corpus`.
/// When the corpus has at most `max_patches` patch positions all of them are
/// used; otherwise `max_patches` positions are drawn uniformly (with
/// replacement) from the seeded stream.
PatchGaussian fit_patch_gaussian(std::span<const Image> corpus, int patch_edge, std::size_t max_patches,
                                 double epsilon = kDefaultRidge, std::uint64_t seed = 0);

/// `PGS1 patch_edge channels M sample_count epsilon`, mean, covariance.
std::string format_pgs(const PatchGaussian& pg);
PatchGaussian parse_pgs(const std::string& text);
void write_pgs(const PatchGaussian& pg, const std::filesystem::path& path);
PatchGaussian read_pgs(const std::filesystem::path& path);

/// Distribution of the inner coordinates given the border coordinates.
struct ConditionalGaussian {
  std::vector<int> inner;
  Eigen::VectorXd mean;
  Eigen::MatrixXd factor;  // lower triangular, factor * factor^T = conditional covariance
};

/// Conditioning for a fixed (inner, border) split of a joint Gaussian.
///
/// The gain Sigma_ab Sigma_bb^-1 and the conditional covariance factor depend
/// only on the index sets, so they are computed once here; condition() then
/// costs one matrix-vector product per border observation. Indices not in
/// either set are marginalized out.
class GaussianConditioner {
 public:
  GaussianConditioner(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance, std::vector<int> inner,
                      std::vector<int> border);

  const std::vector<int>& inner() const noexcept { return inner_; }
  const std::vector<int>& border() const noexcept { return border_; }
  const Eigen::MatrixXd& factor() const noexcept { return factor_; }
  const Eigen::MatrixXd& gain() const noexcept { return gain_; }

  /// `border_values[j]` is the observed value at `border()[j]`.
  ConditionalGaussian condition(std::span<const double> border_values) const;
  void conditional_mean(std::span<const double> border_values, Eigen::VectorXd& out) const;

 private:
  std::vector<int> inner_;
  std::vector<int> border_;
  Eigen::VectorXd mean_inner_;
  Eigen::VectorXd mean_border_;
  Eigen::MatrixXd gain_;
  Eigen::MatrixXd factor_;
};

/// Conditions `pg` on every coordinate not listed in `inner`.
/// `border_values` holds those coordinates in increasing index order.
/// Throws singular_covariance (with the smallest pivot) if the border block
/// cannot be factorized.
ConditionalGaussian condition_on_border(const PatchGaussian& pg, std::span<const int> inner,
                                        std::span<const double> border_values);

/// mean + factor * z with z ~ N(0, I), each coordinate clamped to [0,1].
Eigen::VectorXd sample_inner(const ConditionalGaussian& cond, Rng& rng);
void sample_inner(const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor, Rng& rng, Eigen::VectorXd& z_scratch,
                  std::span<double> out);

/// Finite-support replacement distribution applied independently to every
/// corrupted sample value.
class DiscreteDistribution {
 public:
  DiscreteDistribution(std::vector<double> support, std::vector<double> weights);

  const std::vector<double>& support() const noexcept { return support_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  double sample(Rng& rng) const;

  /// Number of assignments of `m` values, or 0 if it exceeds `limit`.
  std::uint64_t assignment_count(int m, std::uint64_t limit) const;

  /// Calls fn(values, weight) for every assignment in odometer order (the
  /// last coordinate varies fastest).
  void for_each_assignment(int m, const std::function<void(std::span<const double>, double)>& fn) const;

  struct Assignment {
    std::vector<double> values;
    double weight;
  };
  std::vector<Assignment> enumerate(int m) const;

 private:
  std::vector<double> support_;
  std::vector<double> weights_;
};

enum class SamplerKind { gaussian_conditional, discrete };

class SamplerHandle {
 public:
  static SamplerHandle gaussian(std::shared_ptr<const PatchGaussian> model);
  static SamplerHandle discrete(DiscreteDistribution dist);

  SamplerKind kind() const noexcept { return kind_; }
  bool supports_exhaustive() const noexcept { return kind_ == SamplerKind::discrete; }
  const PatchGaussian& gaussian_model() const;
  const DiscreteDistribution& discrete_distribution() const;
  std::string describe() const;

 private:
  SamplerKind kind_ = SamplerKind::discrete;
  std::shared_ptr<const PatchGaussian> gaussian_;
  std::shared_ptr<const DiscreteDistribution> discrete_;
};

/// Throws invalid_argument unless weights are positive and sum to 1 within 1e-12.
SamplerHandle make_discrete_sampler(std::vector<double> support, std::vector<double> weights);

}  // namespace pda
