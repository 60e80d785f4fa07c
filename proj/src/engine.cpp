#include "pda/engine.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

#include "pda/error.hpp"

namespace pda {

void WindowConfig::validate() const {
  if (win_size < 1) throw Error(ErrorCode::invalid_argument, "win_size must be >= 1");
  if (pad_size < 0) throw Error(ErrorCode::invalid_argument, "pad_size must be >= 0");
  if (stride < 1) throw Error(ErrorCode::invalid_argument, "stride must be >= 1");
  if (samples_per_roi < 1) throw Error(ErrorCode::invalid_argument, "samples_per_roi must be >= 1");
  if (laplace_n < 1) throw Error(ErrorCode::invalid_argument, "laplace N must be >= 1");
  if (laplace_k < 2) throw Error(ErrorCode::invalid_argument, "laplace K must be >= 2");
}

double laplace_correct(double p, double n, int k) { return (p * n + 1.0) / (n + k); }

double corrected_log2_odds(double p, double n, int k) {
  // 1 - p' written as ((1-p)N + K - 1)/(N + K) to keep precision near p = 1.
  const double num = p * n + 1.0;
  const double den = (1.0 - p) * n + (k - 1.0);
  return std::log2(num) - std::log2(den);
}

double weight_of_evidence(double p_orig, double p_marg, double n, int k) {
  return corrected_log2_odds(p_orig, n, k) - corrected_log2_odds(p_marg, n, k);
}

namespace {

std::vector<int> axis_origins(int extent, int win, int stride) {
  std::vector<int> out;
  for (int o = 0; o + win <= extent; o += stride) out.push_back(o);
  if (!out.empty() && out.back() != extent - win) out.push_back(extent - win);
  return out;
}

}  // namespace

std::vector<Rect> window_positions(int width, int height, int win_size, int stride) {
  if (win_size < 1 || stride < 1) throw Error(ErrorCode::invalid_argument, "win_size and stride must be >= 1");
  if (win_size > width || win_size > height) {
    throw Error(ErrorCode::invalid_argument, "window " + std::to_string(win_size) + " does not fit a " +
                                                 std::to_string(width) + "x" + std::to_string(height) + " image");
  }
  const auto xs = axis_origins(width, win_size, stride);
  const auto ys = axis_origins(height, win_size, stride);
  std::vector<Rect> out;
  out.reserve(xs.size() * ys.size());
  for (int y : ys)
    for (int x : xs) out.push_back(Rect{x, y, win_size, win_size});
  return out;
}

std::vector<int> visit_count_grid(int width, int height, const WindowConfig& config) {
  std::vector<int> counts(static_cast<std::size_t>(width) * height, 0);
  for (const auto& r : window_positions(width, height, config.win_size, config.stride))
    for (int y = r.y; y < r.y + r.h; ++y)
      for (int x = r.x; x < r.x + r.w; ++x) ++counts[static_cast<std::size_t>(y) * width + x];
  return counts;
}

// ---------------------------------------------------------------------------
// Window corruption

namespace {

/// Which sides of the padded patch hang over the image edge, in pixels.
struct Clip {
  int left = 0, top = 0, right = 0, bottom = 0;
  auto operator<=>(const Clip&) const = default;
};

void write_roi(Image& dst, const Rect& roi, std::span<const double> values) {
  const std::size_t row = static_cast<std::size_t>(roi.w) * dst.channels();
  for (int y = 0; y < roi.h; ++y) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(row * y), row,
                dst.pixels().begin() + static_cast<std::ptrdiff_t>(dst.index(roi.x, roi.y + y)));
  }
}

void restore_roi(Image& dst, const Image& src, const Rect& roi) {
  const std::size_t row = static_cast<std::size_t>(roi.w) * dst.channels();
  for (int y = roi.y; y < roi.y + roi.h; ++y) {
    const auto off = static_cast<std::ptrdiff_t>(src.index(roi.x, y));
    std::copy_n(src.pixels().begin() + off, row, dst.pixels().begin() + off);
  }
}

/// Draws replacement values for windows of one image. Gaussian conditioners
/// are cached per clip pattern; prepare() must see every window before
/// draw() is called concurrently.
class Corruptor {
 public:
  Corruptor(const Image& image, const SamplerHandle& sampler, int win) : image_(image), sampler_(sampler), win_(win) {
    if (sampler.kind() == SamplerKind::gaussian_conditional) {
      const auto& pg = sampler.gaussian_model();
      if (pg.channels != image.channels()) {
        throw Error(ErrorCode::dimension_mismatch, "patch model has " + std::to_string(pg.channels) +
                                                       " channels, image has " + std::to_string(image.channels()));
      }
      if (pg.patch_edge < win || (pg.patch_edge - win) % 2 != 0) {
        throw Error(ErrorCode::invalid_argument, "patch model edge " + std::to_string(pg.patch_edge) +
                                                     " does not equal win_size + 2*pad for win_size " +
                                                     std::to_string(win));
      }
      pad_ = (pg.patch_edge - win) / 2;
    }
  }

  int values_per_window() const { return win_ * win_ * image_.channels(); }

  void prepare(std::span<const Rect> rois, int workers) {
    if (sampler_.kind() != SamplerKind::gaussian_conditional) return;
    std::vector<Clip> missing;
    for (const auto& r : rois) {
      const Clip c = clip_of(r);
      if (!cache_.count(c) && std::find(missing.begin(), missing.end(), c) == missing.end()) missing.push_back(c);
    }
    std::vector<std::unique_ptr<GaussianConditioner>> built(missing.size());
    std::vector<std::exception_ptr> errors(missing.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::size_t i = 0; i < missing.size(); ++i) {
      try {
        built[i] = build(missing[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (std::size_t i = 0; i < missing.size(); ++i) cache_.emplace(missing[i], std::move(built[i]));
  }

  /// Writes one independent replacement into the window of each target.
  void draw(const Rect& roi, Rng& rng, std::span<Image> targets) const {
    const int m = values_per_window();
    thread_local std::vector<double> values;
    values.resize(static_cast<std::size_t>(m));
    if (sampler_.kind() == SamplerKind::discrete) {
      const auto& dist = sampler_.discrete_distribution();
      for (auto& img : targets) {
        for (auto& v : values) v = dist.sample(rng);
        write_roi(img, roi, values);
      }
      return;
    }
    const auto& cond = *cache_.at(clip_of(roi));
    thread_local std::vector<double> border;
    thread_local Eigen::VectorXd mean, z;
    border.resize(cond.border().size());
    const int edge = win_ + 2 * pad_;
    const int ch = image_.channels();
    for (std::size_t j = 0; j < border.size(); ++j) {
      const int idx = cond.border()[j];
      const int c = idx % ch;
      const int px = (idx / ch) % edge;
      const int py = (idx / ch) / edge;
      border[j] = image_.at(roi.x - pad_ + px, roi.y - pad_ + py, c);
    }
    cond.conditional_mean(border, mean);
    for (auto& img : targets) {
      sample_inner(mean, cond.factor(), rng, z, values);
      write_roi(img, roi, values);
    }
  }

 private:
  Clip clip_of(const Rect& r) const {
    return Clip{std::max(0, pad_ - r.x), std::max(0, pad_ - r.y), std::max(0, r.x + r.w + pad_ - image_.width()),
                std::max(0, r.y + r.h + pad_ - image_.height())};
  }

  std::unique_ptr<GaussianConditioner> build(const Clip& clip) const {
    const auto& pg = sampler_.gaussian_model();
    const int edge = pg.patch_edge;
    const int ch = pg.channels;
    std::vector<int> inner, border;
    for (int py = 0; py < edge; ++py) {
      for (int px = 0; px < edge; ++px) {
        const bool in_window = px >= pad_ && px < pad_ + win_ && py >= pad_ && py < pad_ + win_;
        const bool in_image = px >= clip.left && px < edge - clip.right && py >= clip.top && py < edge - clip.bottom;
        for (int c = 0; c < ch; ++c) {
          const int idx = (py * edge + px) * ch + c;
          if (in_window) inner.push_back(idx);
          else if (in_image) border.push_back(idx);
        }
      }
    }
    return std::make_unique<GaussianConditioner>(pg.mean, pg.covariance, std::move(inner), std::move(border));
  }

  const Image& image_;
  const SamplerHandle& sampler_;
  int win_;
  int pad_ = 0;
  std::map<Clip, std::unique_ptr<GaussianConditioner>> cache_;
};

ClassDistribution average(std::span<const ClassDistribution> ds) {
  ClassDistribution out{std::vector<double>(ds.front().size(), 0.0)};
  for (const auto& d : ds)
    for (std::size_t k = 0; k < out.size(); ++k) out.probs[k] += d.probs[k];
  for (double& p : out.probs) p /= static_cast<double>(ds.size());
  return out;
}

constexpr std::uint64_t kMaxAssignments = 1'000'000;

/// One window's marginal using caller-owned scratch copies of the image.
/// Scratch images are returned to the original pixels before returning.
ClassDistribution roi_marginal(const Classifier& classifier, const Image& image, const Corruptor& corruptor,
                               const SamplerHandle& sampler, const Rect& roi, int samples, Rng& rng,
                               MarginalMode mode, std::size_t batch, std::vector<Image>& scratch,
                               std::uint64_t& calls) {
  if (mode == MarginalMode::monte_carlo) {
    if (scratch.size() < static_cast<std::size_t>(samples)) scratch.resize(static_cast<std::size_t>(samples), image);
    const std::span<Image> targets(scratch.data(), static_cast<std::size_t>(samples));
    corruptor.draw(roi, rng, targets);
    const auto outs = classifier.classify_batch(targets);
    for (auto& img : targets) restore_roi(img, image, roi);
    calls += static_cast<std::uint64_t>(samples);
    return average(outs);
  }

  if (!sampler.supports_exhaustive()) {
    throw Error(ErrorCode::invalid_argument, "exhaustive marginalization needs a discrete sampler");
  }
  const auto& dist = sampler.discrete_distribution();
  const int m = corruptor.values_per_window();
  if (dist.assignment_count(m, kMaxAssignments) == 0) {
    throw Error(ErrorCode::invalid_argument, "exhaustive enumeration over " + std::to_string(m) +
                                                 " values exceeds " + std::to_string(kMaxAssignments) + " assignments");
  }
  batch = std::max<std::size_t>(1, batch);
  if (scratch.size() < batch) scratch.resize(batch, image);
  ClassDistribution total{std::vector<double>(static_cast<std::size_t>(classifier.num_classes()), 0.0)};
  std::vector<double> weights;
  auto flush = [&] {
    if (weights.empty()) return;
    const std::span<Image> targets(scratch.data(), weights.size());
    const auto outs = classifier.classify_batch(targets);
    for (std::size_t i = 0; i < outs.size(); ++i)
      for (std::size_t k = 0; k < total.size(); ++k) total.probs[k] += weights[i] * outs[i].probs[k];
    calls += weights.size();
    weights.clear();
  };
  dist.for_each_assignment(m, [&](std::span<const double> values, double w) {
    write_roi(scratch[weights.size()], roi, values);
    weights.push_back(w);
    if (weights.size() == batch) flush();
  });
  flush();
  for (std::size_t i = 0; i < batch; ++i) restore_roi(scratch[i], image, roi);
  return total;
}

void check_inputs(const Classifier& classifier, const Image& image, int target_class, const WindowConfig& config) {
  config.validate();
  if (!classifier.input_dims().accepts(image)) {
    throw Error(ErrorCode::dimension_mismatch, "image does not match the classifier input " +
                                                   classifier.input_dims().to_string());
  }
  if (target_class < 0 || target_class >= classifier.num_classes()) {
    throw Error(ErrorCode::invalid_argument, "target class index " + std::to_string(target_class) + " out of range");
  }
  if (config.laplace_k != classifier.num_classes()) {
    throw Error(ErrorCode::invalid_argument, "laplace K (" + std::to_string(config.laplace_k) +
                                                 ") must equal the classifier's class count (" +
                                                 std::to_string(classifier.num_classes()) + ")");
  }
}

void check_sampler_geometry(const SamplerHandle& sampler, const WindowConfig& config) {
  if (sampler.kind() == SamplerKind::gaussian_conditional &&
      sampler.gaussian_model().patch_edge != config.win_size + 2 * config.pad_size) {
    throw Error(ErrorCode::invalid_argument,
                "patch model edge " + std::to_string(sampler.gaussian_model().patch_edge) +
                    " != win_size + 2*pad_size = " + std::to_string(config.win_size + 2 * config.pad_size));
  }
}

[[noreturn]] void rethrow_for_roi(std::exception_ptr e, std::size_t index, const Rect& roi) {
  const std::string where =
      "window #" + std::to_string(index) + " at (" + std::to_string(roi.x) + "," + std::to_string(roi.y) + "): ";
  try {
    std::rethrow_exception(e);
  } catch (const Error& err) {
    throw Error(err.code(), where + err.what());
  } catch (const std::exception& err) {
    throw Error(ErrorCode::external_failure, where + err.what());
  }
}

SaliencyMap empty_map(const Image& image, int target_class, const WindowConfig& config) {
  SaliencyMap map;
  map.width = image.width();
  map.height = image.height();
  map.target_class = target_class;
  map.config = config;
  map.we_sum.assign(static_cast<std::size_t>(image.width()) * image.height(), 0.0);
  map.visit_count.assign(map.we_sum.size(), 0);
  return map;
}

}  // namespace

ClassDistribution marginal_class_probability(const Classifier& classifier, const Image& image, const Rect& roi,
                                             const SamplerHandle& sampler, int samples, Rng& rng, MarginalMode mode,
                                             std::uint64_t* classifier_calls) {
  if (!roi.inside(image.width(), image.height()) || roi.w < 1 || roi.w != roi.h) {
    throw Error(ErrorCode::out_of_bounds, "window must be a non-empty square inside the image");
  }
  if (mode == MarginalMode::monte_carlo && samples < 1) {
    throw Error(ErrorCode::invalid_argument, "samples must be >= 1");
  }
  Corruptor corruptor(image, sampler, roi.w);
  corruptor.prepare(std::span<const Rect>(&roi, 1), 1);
  std::vector<Image> scratch;
  std::uint64_t calls = 0;
  auto out = roi_marginal(classifier, image, corruptor, sampler, roi, samples, rng, mode, 64, scratch, calls);
  if (classifier_calls) *classifier_calls += calls;
  return out;
}

AnalysisReport analyze(const Classifier& classifier, const Image& image, int target_class,
                       const WindowConfig& config, const SamplerHandle& sampler, const ExecutionOptions& exec) {
  const auto t0 = std::chrono::steady_clock::now();
  check_inputs(classifier, image, target_class, config);
  check_sampler_geometry(sampler, config);
  const int workers = exec.workers > 0 ? exec.workers : omp_get_max_threads();

  AnalysisReport report;
  report.sampler = sampler.describe();
  report.original = classifier.classify(image);
  const auto rois = window_positions(image.width(), image.height(), config.win_size, config.stride);
  const std::size_t n = rois.size();

  Corruptor corruptor(image, sampler, config.win_size);
  corruptor.prepare(rois, workers);

  std::vector<double> p_marg(n, 0.0);
  std::vector<std::uint64_t> calls(n, 0);
  std::vector<std::exception_ptr> errors(n);
  std::size_t done = 0;
  auto tick = [&](std::size_t k) {
    if (!exec.progress) return;
#pragma omp critical(pda_progress)
    {
      done += k;
      exec.progress(done, n);
    }
  };
  const int c = target_class;
  const int s = config.samples_per_roi;

  if (classifier.concurrent() || config.mode == MarginalMode::exhaustive || workers == 1) {
    // Whole windows per worker. Serial classifiers only reach this branch
    // with one worker or in exhaustive mode, which runs single-threaded.
    const int team = classifier.concurrent() ? workers : 1;
#pragma omp parallel num_threads(team)
    {
      std::vector<Image> scratch;
#pragma omp for schedule(dynamic)
      for (std::size_t i = 0; i < n; ++i) {
        try {
          Rng rng = make_substream(config.seed, streams::roi, i);
          p_marg[i] = roi_marginal(classifier, image, corruptor, sampler, rois[i], s, rng, config.mode,
                                   exec.batch_size, scratch, calls[i])
                          .probs[static_cast<std::size_t>(c)];
        } catch (...) {
          errors[i] = std::current_exception();
        }
        tick(1);
      }
    }
  } else {
    // Serial classifier: draw a chunk of windows in parallel, then one
    // dispatcher sends the chunk's images in window order.
    const std::size_t per_chunk = std::max<std::size_t>(1, exec.batch_size / static_cast<std::size_t>(s));
    std::vector<Image> buffer(std::min(per_chunk, n) * static_cast<std::size_t>(s), image);
    for (std::size_t start = 0; start < n; start += per_chunk) {
      const std::size_t len = std::min(per_chunk, n - start);
#pragma omp parallel for schedule(dynamic) num_threads(workers)
      for (std::size_t j = 0; j < len; ++j) {
        try {
          Rng rng = make_substream(config.seed, streams::roi, start + j);
          corruptor.draw(rois[start + j], rng,
                         std::span<Image>(buffer.data() + j * static_cast<std::size_t>(s), static_cast<std::size_t>(s)));
        } catch (...) {
          errors[start + j] = std::current_exception();
        }
      }
      for (std::size_t j = 0; j < len; ++j)
        if (errors[start + j]) rethrow_for_roi(errors[start + j], start + j, rois[start + j]);
      const std::span<const Image> batch(buffer.data(), len * static_cast<std::size_t>(s));
      std::vector<ClassDistribution> outs;
      try {
        outs = classifier.classify_batch(batch);
      } catch (...) {
        rethrow_for_roi(std::current_exception(), start, rois[start]);
      }
      for (std::size_t j = 0; j < len; ++j) {
        const std::span<const ClassDistribution> mine(outs.data() + j * static_cast<std::size_t>(s),
                                                      static_cast<std::size_t>(s));
        p_marg[start + j] = average(mine).probs[static_cast<std::size_t>(c)];
        calls[start + j] = static_cast<std::uint64_t>(s);
        for (std::size_t t = 0; t < static_cast<std::size_t>(s); ++t)
          restore_roi(buffer[j * static_cast<std::size_t>(s) + t], image, rois[start + j]);
      }
      tick(len);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (errors[i]) rethrow_for_roi(errors[i], i, rois[i]);

  const double p_orig = report.original.probs[static_cast<std::size_t>(c)];
  const auto big_n = static_cast<double>(config.laplace_n);
  report.rois.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    report.rois[i] = RoiRecord{rois[i], p_marg[i], weight_of_evidence(p_orig, p_marg[i], big_n, config.laplace_k)};
  }

  // Accumulate by image row: every pixel still receives its windows' evidence
  // in ascending window order, matching the serial reference bit for bit.
  report.map = empty_map(image, target_class, config);
  auto& map = report.map;
  const int width = image.width();
#pragma omp parallel for schedule(static) num_threads(workers)
  for (int y = 0; y < image.height(); ++y) {
    double* we_row = map.we_sum.data() + static_cast<std::size_t>(y) * width;
    int* count_row = map.visit_count.data() + static_cast<std::size_t>(y) * width;
    for (const auto& r : report.rois) {
      if (y < r.rect.y || y >= r.rect.y + r.rect.h) continue;
      for (int x = r.rect.x; x < r.rect.x + r.rect.w; ++x) {
        we_row[x] += r.weight_of_evidence;
        ++count_row[x];
      }
    }
  }

  report.classifier_calls = 1;
  for (auto k : calls) report.classifier_calls += k;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

AnalysisReport analyze_reference(const Classifier& classifier, const Image& image, int target_class,
                                 const WindowConfig& config, const SamplerHandle& sampler) {
  const auto t0 = std::chrono::steady_clock::now();
  check_inputs(classifier, image, target_class, config);
  check_sampler_geometry(sampler, config);

  AnalysisReport report;
  report.sampler = sampler.describe();
  report.original = classifier.classify(image);
  report.classifier_calls = 1;
  report.map = empty_map(image, target_class, config);
  const double p_orig = report.original.probs[static_cast<std::size_t>(target_class)];
  const auto rois = window_positions(image.width(), image.height(), config.win_size, config.stride);
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const Rect& r = rois[i];
    Rng rng = make_substream(config.seed, streams::roi, i);
    ClassDistribution marg;
    try {
      marg = marginal_class_probability(classifier, image, r, sampler, config.samples_per_roi, rng, config.mode,
                                        &report.classifier_calls);
    } catch (...) {
      rethrow_for_roi(std::current_exception(), i, r);
    }
    const double p = marg.probs[static_cast<std::size_t>(target_class)];
    const double we = weight_of_evidence(p_orig, p, static_cast<double>(config.laplace_n), config.laplace_k);
    report.rois.push_back(RoiRecord{r, p, we});
    for (int y = r.y; y < r.y + r.h; ++y) {
      for (int x = r.x; x < r.x + r.w; ++x) {
        const auto idx = static_cast<std::size_t>(y) * image.width() + x;
        report.map.we_sum[idx] += we;
        ++report.map.visit_count[idx];
      }
    }
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

double positive_mass_fraction(const SaliencyMap& map, const Rect& region) {
  double inside = 0.0, total = 0.0;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const double v = map.we(x, y);
      if (v <= 0.0) continue;
      total += v;
      if (region.contains(x, y)) inside += v;
    }
  }
  return total > 0.0 ? inside / total : 0.0;
}

// ---------------------------------------------------------------------------
// WEM1 files

std::string format_wem(const SaliencyMap& map) {
  const auto& c = map.config;
  std::string out;
  char buf[64];
  out += "WEM1 " + std::to_string(map.width) + ' ' + std::to_string(map.height) + ' ' +
         std::to_string(map.target_class) + ' ' + std::to_string(c.win_size) + ' ' + std::to_string(c.pad_size) + ' ' +
         std::to_string(c.stride) + ' ' + std::to_string(c.samples_per_roi) + ' ' + std::to_string(c.laplace_n) + ' ' +
         std::to_string(c.laplace_k) + ' ' + std::to_string(c.seed) + '\n';
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      std::snprintf(buf, sizeof buf, "%.17g", map.we(x, y));
      if (x) out += ' ';
      out += buf;
    }
    out += '\n';
  }
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      if (x) out += ' ';
      out += std::to_string(map.visits(x, y));
    }
    out += '\n';
  }
  return out;
}

SaliencyMap parse_wem(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  SaliencyMap map;
  auto& c = map.config;
  if (!(in >> magic >> map.width >> map.height >> map.target_class >> c.win_size >> c.pad_size >> c.stride >>
        c.samples_per_roi >> c.laplace_n >> c.laplace_k >> c.seed) ||
      magic != "WEM1") {
    throw Error(ErrorCode::malformed_header,
                "expected 'WEM1 width height class_index win_size pad_size stride S N K seed' header");
  }
  if (map.width < 1 || map.height < 1) throw Error(ErrorCode::malformed_header, "WEM1 dimensions must be positive");
  const auto count = static_cast<std::size_t>(map.width) * map.height;
  map.we_sum.resize(count);
  map.visit_count.resize(count);
  for (auto& v : map.we_sum)
    if (!(in >> v)) throw Error(ErrorCode::truncated_payload, "WEM1 file ends inside the evidence grid");
  for (auto& v : map.visit_count)
    if (!(in >> v)) throw Error(ErrorCode::truncated_payload, "WEM1 file ends inside the visit counts");
  return map;
}

void write_wem(const SaliencyMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << format_wem(map);
}

SaliencyMap read_wem(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_wem(buf.str());
}

std::string AnalysisReport::summary() const {
  std::ostringstream out;
  out << std::setprecision(17);
  const auto& c = map.config;
  out << "width: " << map.width << "\nheight: " << map.height << "\ntarget_class: " << map.target_class
      << "\nwin_size: " << c.win_size << "\npad_size: " << c.pad_size << "\nstride: " << c.stride
      << "\nsamples_per_roi: " << c.samples_per_roi << "\nmode: "
      << (c.mode == MarginalMode::exhaustive ? "exhaustive" : "monte_carlo") << "\nlaplace_n: " << c.laplace_n
      << "\nlaplace_k: " << c.laplace_k << "\nseed: " << c.seed << "\nsampler: " << sampler << "\noriginal:";
  for (double p : original.probs) out << ' ' << p;
  double lo = 0.0, hi = 0.0;
  for (const auto& r : rois) {
    lo = std::min(lo, r.weight_of_evidence);
    hi = std::max(hi, r.weight_of_evidence);
  }
  out << "\nwindows: " << rois.size() << "\nwindow_we_min: " << lo << "\nwindow_we_max: " << hi
      << "\nclassifier_calls: " << classifier_calls << "\nwall_seconds: " << std::setprecision(6) << wall_seconds
      << '\n';
  return out.str();
}

}  // namespace pda
