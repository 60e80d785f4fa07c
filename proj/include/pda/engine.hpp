#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pda/classifier.hpp"
#include "pda/image.hpp"
#include "pda/patch_stats.hpp"
#include "pda/rng.hpp"

namespace pda {

enum class MarginalMode {
  monte_carlo,  // average over samples_per_roi draws
  exhaustive,   // exact weighted sum over every discrete assignment
};

/// Training-set size assumed for the Laplace correction when the classifier
/// does not say otherwise (70% of the 10015-image ISIC 2018 collection).
inline constexpr std::int64_t kDefaultLaplaceN = 7010;

struct WindowConfig {
  int win_size = 15;
  int pad_size = 2;
  int stride = 1;
  int samples_per_roi = 10;
  std::int64_t laplace_n = kDefaultLaplaceN;
  int laplace_k = 7;
  std::uint64_t seed = 0;
  MarginalMode mode = MarginalMode::monte_carlo;

  void validate() const;
};

/// How the work is executed; never affects results.
struct ExecutionOptions {
  int workers = 0;              // 0 = OpenMP default
  std::size_t batch_size = 64;  // images per classify_batch for serial classifiers
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// (pN + 1) / (N + K).
double laplace_correct(double p, double n, int k);

/// log2 odds of the Laplace-corrected probability.
double corrected_log2_odds(double p, double n, int k);

/// log2 odds(p_orig) - log2 odds(p_marg), both Laplace-corrected. Positive
/// values mark evidence for the class.
double weight_of_evidence(double p_orig, double p_marg, double n, int k);

/// Window origins in row-major order: multiples of `stride` that keep the
/// window inside the image, plus the last origin touching the far edge.
std::vector<Rect> window_positions(int width, int height, int win_size, int stride);

/// Number of window positions covering each pixel (row-major).
std::vector<int> visit_count_grid(int width, int height, const WindowConfig& config);

/// Classifier output marginalized over replacements of the `roi` pixels.
/// Monte-Carlo mode averages `samples` draws from `rng`; exhaustive mode
/// needs a discrete sampler and ignores `samples` and `rng`. For a Gaussian
/// sampler the model's patch edge fixes the padding: pad = (edge - roi.w)/2,
/// and padding pixels outside the image are dropped from the conditioning set.
ClassDistribution marginal_class_probability(const Classifier& classifier, const Image& image, const Rect& roi,
                                             const SamplerHandle& sampler, int samples, Rng& rng,
                                             MarginalMode mode = MarginalMode::monte_carlo,
                                             std::uint64_t* classifier_calls = nullptr);

struct SaliencyMap {
  int width = 0;
  int height = 0;
  int target_class = 0;
  std::vector<double> we_sum;    // row-major accumulated evidence
  std::vector<int> visit_count;  // row-major window coverage
  WindowConfig config;

  double we(int x, int y) const { return we_sum[static_cast<std::size_t>(y) * width + x]; }
  int visits(int x, int y) const { return visit_count[static_cast<std::size_t>(y) * width + x]; }
};

/// `WEM1 width height class_index win_size pad_size stride S N K seed`,
/// then the evidence grid and the visit counts.
std::string format_wem(const SaliencyMap& map);
SaliencyMap parse_wem(const std::string& text);
void write_wem(const SaliencyMap& map, const std::filesystem::path& path);
SaliencyMap read_wem(const std::filesystem::path& path);

struct RoiRecord {
  Rect rect;
  double marginal_probability = 0.0;
  double weight_of_evidence = 0.0;
};

struct AnalysisReport {
  SaliencyMap map;
  ClassDistribution original;
  std::vector<RoiRecord> rois;
  std::uint64_t classifier_calls = 0;
  double wall_seconds = 0.0;
  std::string sampler;

  std::string summary() const;
};

/// Sliding-window prediction difference analysis, parallel over windows.
///
/// Each window draws from its own substream derived from (seed, window
/// index), and evidence is accumulated in window-index order, so the output
/// is bitwise independent of the worker count.
AnalysisReport analyze(const Classifier& classifier, const Image& image, int target_class,
                       const WindowConfig& config, const SamplerHandle& sampler,
                       const ExecutionOptions& exec = {});

/// Single-threaded reference: one marginal_class_probability call per
/// window, accumulated in order. Kept for equivalence tests and benchmarks.
AnalysisReport analyze_reference(const Classifier& classifier, const Image& image, int target_class,
                                 const WindowConfig& config, const SamplerHandle& sampler);

/// Fraction of the positive evidence mass that falls inside `region`
/// (0 when the map has no positive evidence).
double positive_mass_fraction(const SaliencyMap& map, const Rect& region);

}  // namespace pda
