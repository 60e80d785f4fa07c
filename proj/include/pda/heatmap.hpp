#pragma once

#include <string>
#include <vector>

#include "pda/engine.hpp"
#include "pda/image.hpp"

namespace pda {

enum class Normalization { symmetric_max, percentile };
enum class Background { white, original };

struct RenderSpec {
  Normalization normalization = Normalization::symmetric_max;
  double percentile = 99.0;  // q in (50, 100], used by Normalization::percentile
  double alpha = 0.6;
  Background background = Background::white;

  void validate() const;
};

struct NormalizedSaliency {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // in [-1, 1]
  double scale = 0.0;          // divisor applied to we_sum; 0 for an all-zero map
};

/// Divides the evidence by max |we_sum| or by the q-th percentile of
/// |we_sum| (linear interpolation between order statistics), then clamps to
/// [-1, 1]. A zero scale yields all zeros.
NormalizedSaliency normalize_saliency(const SaliencyMap& map, const RenderSpec& spec);

/// Diverging white-centred palette: +v -> (1, 1-v, 1-v), -v -> (1-v, 1-v, 1).
Image render_heatmap(const NormalizedSaliency& values);

/// alpha * heat + (1 - alpha) * original; gray originals are promoted to RGB.
Image overlay(const Image& original, const Image& heat, double alpha);

/// Text record of the normalization constants, written next to rendered images.
std::string normalization_sidecar(const NormalizedSaliency& n, const RenderSpec& spec);

}  // namespace pda
