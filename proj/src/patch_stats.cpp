#include "pda/patch_stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "pda/error.hpp"

namespace pda {

void PatchGaussian::validate() const {
  const Eigen::Index m = dimension();
  if (patch_edge < 1 || (channels != 1 && channels != 3)) {
    throw Error(ErrorCode::invalid_argument, "patch Gaussian needs patch_edge >= 1 and 1 or 3 channels");
  }
  if (mean.size() != m || covariance.rows() != m || covariance.cols() != m) {
    throw Error(ErrorCode::dimension_mismatch, "patch Gaussian mean/covariance size does not match patch_edge^2*channels");
  }
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw Error(ErrorCode::invalid_argument, "patch covariance is not symmetric");
  }
}

PatchGaussian fit_patch_gaussian(std::span<const Image> corpus, int patch_edge, std::size_t max_patches,
                                 double epsilon, std::uint64_t seed) {
  if (corpus.empty()) throw Error(ErrorCode::invalid_argument, "patch corpus is empty");
  if (patch_edge < 1) throw Error(ErrorCode::invalid_argument, "patch_edge must be >= 1");
  if (max_patches < 2) throw Error(ErrorCode::invalid_argument, "max_patches must be >= 2");
  if (epsilon < 0.0) throw Error(ErrorCode::invalid_argument, "ridge epsilon must be non-negative");

  const int channels = corpus.front().channels();
  std::vector<std::uint64_t> positions_before(corpus.size() + 1, 0);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& img = corpus[i];
    if (img.width() < patch_edge || img.height() < patch_edge) {
      throw Error(ErrorCode::invalid_argument, "corpus image " + std::to_string(i) + " is smaller than patch_edge " +
                                                   std::to_string(patch_edge));
    }
    if (img.channels() != channels) throw Error(ErrorCode::dimension_mismatch, "corpus mixes channel counts");
    positions_before[i + 1] = positions_before[i] + static_cast<std::uint64_t>(img.width() - patch_edge + 1) *
                                                        static_cast<std::uint64_t>(img.height() - patch_edge + 1);
  }
  const std::uint64_t total = positions_before.back();

  std::vector<std::uint64_t> picks;
  if (total <= max_patches) {
    picks.resize(total);
    std::iota(picks.begin(), picks.end(), 0);
  } else {
    Rng rng = make_substream(seed, streams::patch_fit);
    picks.resize(max_patches);
    for (auto& p : picks) p = uniform_index(rng, total);
  }
  if (picks.size() < 2) throw Error(ErrorCode::invalid_argument, "corpus offers fewer than two patch positions");

  const Eigen::Index m = static_cast<Eigen::Index>(patch_edge) * patch_edge * channels;
  const auto n = static_cast<Eigen::Index>(picks.size());
  Eigen::MatrixXd samples(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto global = picks[static_cast<std::size_t>(j)];
    const auto img_idx = static_cast<std::size_t>(
        std::upper_bound(positions_before.begin(), positions_before.end(), global) - positions_before.begin() - 1);
    const auto& img = corpus[img_idx];
    const auto local = global - positions_before[img_idx];
    const auto across = static_cast<std::uint64_t>(img.width() - patch_edge + 1);
    const Rect r{static_cast<int>(local % across), static_cast<int>(local / across), patch_edge, patch_edge};
    const Patch p = extract_patch(img, r);
    samples.col(j) = Eigen::Map<const Eigen::VectorXd>(p.values.data(), m);
  }

  PatchGaussian pg;
  pg.patch_edge = patch_edge;
  pg.channels = channels;
  pg.epsilon = epsilon;
  pg.sample_count = picks.size();
  pg.mean = samples.rowwise().sum() / static_cast<double>(n);
  samples.colwise() -= pg.mean;
  Eigen::MatrixXd cov = samples * samples.transpose() / static_cast<double>(n - 1);
  pg.covariance = 0.5 * (cov + cov.transpose());
  pg.covariance.diagonal().array() += epsilon;
  return pg;
}

std::string format_pgs(const PatchGaussian& pg) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "PGS1 " << pg.patch_edge << ' ' << pg.channels << ' ' << pg.dimension() << ' ' << pg.sample_count << ' '
      << pg.epsilon << '\n';
  for (Eigen::Index i = 0; i < pg.mean.size(); ++i) out << (i ? " " : "") << pg.mean(i);
  out << '\n';
  for (Eigen::Index r = 0; r < pg.covariance.rows(); ++r) {
    for (Eigen::Index c = 0; c < pg.covariance.cols(); ++c) out << (c ? " " : "") << pg.covariance(r, c);
    out << '\n';
  }
  return out.str();
}

PatchGaussian parse_pgs(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  PatchGaussian pg;
  long m = 0;
  if (!(in >> magic >> pg.patch_edge >> pg.channels >> m >> pg.sample_count >> pg.epsilon) || magic != "PGS1") {
    throw Error(ErrorCode::malformed_header, "expected 'PGS1 patch_edge channels M sample_count epsilon' header");
  }
  if (pg.patch_edge < 1 || (pg.channels != 1 && pg.channels != 3) || m != pg.dimension()) {
    throw Error(ErrorCode::malformed_header, "PGS1 header fields are inconsistent");
  }
  pg.mean.resize(m);
  pg.covariance.resize(m, m);
  for (long i = 0; i < m; ++i)
    if (!(in >> pg.mean(i))) throw Error(ErrorCode::truncated_payload, "PGS1 file ends inside the mean");
  for (long r = 0; r < m; ++r)
    for (long c = 0; c < m; ++c)
      if (!(in >> pg.covariance(r, c))) throw Error(ErrorCode::truncated_payload, "PGS1 file ends inside the covariance");
  pg.validate();
  return pg;
}

void write_pgs(const PatchGaussian& pg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << format_pgs(pg);
}

PatchGaussian read_pgs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_pgs(buf.str());
}

// ---------------------------------------------------------------------------
// Conditioning

namespace {

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& c) {
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  // Semidefinite (or slightly indefinite from rounding): P^T L sqrt(D).
  Eigen::LDLT<Eigen::MatrixXd> ldlt(c);
  const Eigen::VectorXd d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd l = ldlt.matrixL();
  Eigen::MatrixXd f = l * d.asDiagonal();
  return ldlt.transpositionsP().transpose() * f;
}

}  // namespace

GaussianConditioner::GaussianConditioner(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance,
                                         std::vector<int> inner, std::vector<int> border)
    : inner_(std::move(inner)), border_(std::move(border)) {
  const auto m = static_cast<Eigen::Index>(inner_.size());
  const auto b = static_cast<Eigen::Index>(border_.size());
  for (int i : inner_)
    if (i < 0 || i >= mean.size()) throw Error(ErrorCode::out_of_bounds, "inner index outside the Gaussian");
  for (int i : border_)
    if (i < 0 || i >= mean.size()) throw Error(ErrorCode::out_of_bounds, "border index outside the Gaussian");

  mean_inner_.resize(m);
  mean_border_.resize(b);
  Eigen::MatrixXd s_aa(m, m), s_ab(m, b), s_bb(b, b);
  for (Eigen::Index i = 0; i < m; ++i) {
    mean_inner_(i) = mean(inner_[i]);
    for (Eigen::Index j = 0; j < m; ++j) s_aa(i, j) = covariance(inner_[i], inner_[j]);
    for (Eigen::Index j = 0; j < b; ++j) s_ab(i, j) = covariance(inner_[i], border_[j]);
  }
  for (Eigen::Index i = 0; i < b; ++i) {
    mean_border_(i) = mean(border_[i]);
    for (Eigen::Index j = 0; j < b; ++j) s_bb(i, j) = covariance(border_[i], border_[j]);
  }

  Eigen::MatrixXd cond_cov = s_aa;
  if (b > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(s_bb);
    if (llt.info() != Eigen::Success) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(s_bb);
      std::ostringstream msg;
      msg << std::setprecision(6) << "border covariance block is singular (smallest pivot "
          << ldlt.vectorD().minCoeff() << ")";
      throw Error(ErrorCode::singular_covariance, msg.str());
    }
    gain_ = llt.solve(s_ab.transpose()).transpose();
    cond_cov.noalias() -= gain_ * s_ab.transpose();
  } else {
    gain_ = Eigen::MatrixXd::Zero(m, 0);
  }
  cond_cov = 0.5 * (cond_cov + cond_cov.transpose()).eval();
  factor_ = psd_factor(cond_cov);
}

void GaussianConditioner::conditional_mean(std::span<const double> border_values, Eigen::VectorXd& out) const {
  if (border_values.size() != border_.size()) {
    throw Error(ErrorCode::dimension_mismatch, "expected " + std::to_string(border_.size()) + " border values");
  }
  out = mean_inner_;
  if (!border_.empty()) {
    Eigen::Map<const Eigen::VectorXd> xb(border_values.data(), static_cast<Eigen::Index>(border_values.size()));
    out.noalias() += gain_ * (xb - mean_border_);
  }
}

ConditionalGaussian GaussianConditioner::condition(std::span<const double> border_values) const {
  ConditionalGaussian out;
  out.inner = inner_;
  conditional_mean(border_values, out.mean);
  out.factor = factor_;
  return out;
}

ConditionalGaussian condition_on_border(const PatchGaussian& pg, std::span<const int> inner,
                                        std::span<const double> border_values) {
  const int m = pg.dimension();
  std::vector<char> is_inner(static_cast<std::size_t>(m), 0);
  for (int i : inner) {
    if (i < 0 || i >= m) throw Error(ErrorCode::out_of_bounds, "inner index outside [0, M)");
    is_inner[static_cast<std::size_t>(i)] = 1;
  }
  std::vector<int> border;
  for (int i = 0; i < m; ++i)
    if (!is_inner[static_cast<std::size_t>(i)]) border.push_back(i);
  GaussianConditioner cond(pg.mean, pg.covariance, std::vector<int>(inner.begin(), inner.end()), std::move(border));
  return cond.condition(border_values);
}

void sample_inner(const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor, Rng& rng, Eigen::VectorXd& z_scratch,
                  std::span<double> out) {
  const auto m = mean.size();
  z_scratch.resize(m);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < m; ++i) z_scratch(i) = normal(rng);
  Eigen::Map<Eigen::VectorXd> dst(out.data(), m);
  dst = mean;
  dst.noalias() += factor * z_scratch;
  for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
}

Eigen::VectorXd sample_inner(const ConditionalGaussian& cond, Rng& rng) {
  Eigen::VectorXd out(cond.mean.size());
  Eigen::VectorXd z;
  sample_inner(cond.mean, cond.factor, rng, z, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

// ---------------------------------------------------------------------------
// Discrete sampler

DiscreteDistribution::DiscreteDistribution(std::vector<double> support, std::vector<double> weights)
    : support_(std::move(support)), weights_(std::move(weights)) {
  if (support_.empty()) throw Error(ErrorCode::invalid_argument, "discrete support is empty");
  if (support_.size() != weights_.size()) {
    throw Error(ErrorCode::invalid_argument, "discrete support and weights differ in length");
  }
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w > 0.0)) throw Error(ErrorCode::invalid_argument, "discrete weights must be positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw Error(ErrorCode::invalid_argument, "discrete weights sum to " + std::to_string(sum) + ", not 1");
  }
  for (double v : support_)
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::invalid_argument, "discrete support values must lie in [0,1]");
}

double DiscreteDistribution::sample(Rng& rng) const {
  if (support_.size() == 1) return support_.front();
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < support_.size(); ++i) {
    acc += weights_[i];
    if (u < acc) return support_[i];
  }
  return support_.back();
}

std::uint64_t DiscreteDistribution::assignment_count(int m, std::uint64_t limit) const {
  std::uint64_t count = 1;
  for (int i = 0; i < m; ++i) {
    if (count > limit / support_.size()) return 0;
    count *= support_.size();
  }
  return count <= limit ? count : 0;
}

void DiscreteDistribution::for_each_assignment(int m,
                                               const std::function<void(std::span<const double>, double)>& fn) const {
  const std::size_t s = support_.size();
  std::vector<std::size_t> digits(static_cast<std::size_t>(m), 0);
  std::vector<double> values(static_cast<std::size_t>(m), support_.front());
  while (true) {
    double w = 1.0;
    for (auto d : digits) w *= weights_[d];
    fn(values, w);
    int pos = m - 1;
    while (pos >= 0) {
      auto& d = digits[static_cast<std::size_t>(pos)];
      if (++d < s) {
        values[static_cast<std::size_t>(pos)] = support_[d];
        break;
      }
      d = 0;
      values[static_cast<std::size_t>(pos)] = support_.front();
      --pos;
    }
    if (pos < 0) return;
  }
}

std::vector<DiscreteDistribution::Assignment> DiscreteDistribution::enumerate(int m) const {
  std::vector<Assignment> out;
  for_each_assignment(m, [&](std::span<const double> v, double w) {
    out.push_back(Assignment{std::vector<double>(v.begin(), v.end()), w});
  });
  return out;
}

SamplerHandle SamplerHandle::gaussian(std::shared_ptr<const PatchGaussian> model) {
  if (!model) throw Error(ErrorCode::invalid_argument, "null patch Gaussian");
  model->validate();
  SamplerHandle h;
  h.kind_ = SamplerKind::gaussian_conditional;
  h.gaussian_ = std::move(model);
  return h;
}

SamplerHandle SamplerHandle::discrete(DiscreteDistribution dist) {
  SamplerHandle h;
  h.kind_ = SamplerKind::discrete;
  h.discrete_ = std::make_shared<const DiscreteDistribution>(std::move(dist));
  return h;
}

const PatchGaussian& SamplerHandle::gaussian_model() const {
  if (!gaussian_) throw Error(ErrorCode::invalid_argument, "sampler is not Gaussian");
  return *gaussian_;
}

const DiscreteDistribution& SamplerHandle::discrete_distribution() const {
  if (!discrete_) throw Error(ErrorCode::invalid_argument, "sampler is not discrete");
  return *discrete_;
}

std::string SamplerHandle::describe() const {
  std::ostringstream out;
  out << std::setprecision(17);
  if (kind_ == SamplerKind::gaussian_conditional) {
    out << "gaussian:edge=" << gaussian_->patch_edge << ",channels=" << gaussian_->channels;
  } else {
    out << "discrete:";
    for (std::size_t i = 0; i < discrete_->support().size(); ++i)
      out << (i ? "," : "") << discrete_->support()[i] << "@" << discrete_->weights()[i];
  }
  return out.str();
}

SamplerHandle make_discrete_sampler(std::vector<double> support, std::vector<double> weights) {
  return SamplerHandle::discrete(DiscreteDistribution(std::move(support), std::move(weights)));
}

}  // namespace pda
