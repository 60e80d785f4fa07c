#include "pda/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "pda/error.hpp"

namespace pda {

void RenderSpec::validate() const {
  if (normalization == Normalization::percentile && !(percentile > 50.0 && percentile <= 100.0)) {
    throw Error(ErrorCode::invalid_argument, "percentile must lie in (50, 100]");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must lie in [0, 1]");
}

NormalizedSaliency normalize_saliency(const SaliencyMap& map, const RenderSpec& spec) {
  spec.validate();
  if (map.we_sum.empty()) throw Error(ErrorCode::invalid_argument, "saliency map is empty");
  std::vector<double> mags(map.we_sum.size());
  std::transform(map.we_sum.begin(), map.we_sum.end(), mags.begin(), [](double v) { return std::abs(v); });

  double scale = 0.0;
  if (spec.normalization == Normalization::symmetric_max) {
    scale = *std::max_element(mags.begin(), mags.end());
  } else {
    std::sort(mags.begin(), mags.end());
    const double rank = spec.percentile / 100.0 * static_cast<double>(mags.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, mags.size() - 1);
    scale = mags[lo] + (mags[hi] - mags[lo]) * (rank - static_cast<double>(lo));
  }

  NormalizedSaliency out;
  out.width = map.width;
  out.height = map.height;
  out.scale = scale;
  out.values.assign(map.we_sum.size(), 0.0);
  if (scale > 0.0) {
    for (std::size_t i = 0; i < map.we_sum.size(); ++i) out.values[i] = std::clamp(map.we_sum[i] / scale, -1.0, 1.0);
  }
  return out;
}

Image render_heatmap(const NormalizedSaliency& values) {
  Image out(values.width, values.height, 3);
  for (int y = 0; y < values.height; ++y) {
    for (int x = 0; x < values.width; ++x) {
      const double v = std::clamp(values.values[static_cast<std::size_t>(y) * values.width + x], -1.0, 1.0);
      if (v > 0.0) {
        out.at(x, y, 0) = 1.0;
        out.at(x, y, 1) = 1.0 - v;
        out.at(x, y, 2) = 1.0 - v;
      } else {
        out.at(x, y, 0) = 1.0 + v;
        out.at(x, y, 1) = 1.0 + v;
        out.at(x, y, 2) = 1.0;
      }
    }
  }
  return out;
}

Image overlay(const Image& original, const Image& heat, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must lie in [0, 1]");
  if (original.width() != heat.width() || original.height() != heat.height() || heat.channels() != 3) {
    throw Error(ErrorCode::dimension_mismatch, "overlay needs an RGB heatmap the size of the original");
  }
  Image out(heat.width(), heat.height(), 3);
  for (int y = 0; y < heat.height(); ++y) {
    for (int x = 0; x < heat.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const double base = original.at(x, y, original.channels() == 1 ? 0 : c);
        const double h = heat.at(x, y, c);
        double v;
        if (alpha == 0.0) v = base;
        else if (alpha == 1.0) v = h;
        else v = alpha * h + (1.0 - alpha) * base;
        out.at(x, y, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

std::string normalization_sidecar(const NormalizedSaliency& n, const RenderSpec& spec) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "normalization="
      << (spec.normalization == Normalization::symmetric_max ? "symmetric_max" : "percentile") << '\n';
  if (spec.normalization == Normalization::percentile) out << "percentile=" << spec.percentile << '\n';
  out << "scale=" << n.scale << '\n';
  return out.str();
}

}  // namespace pda
