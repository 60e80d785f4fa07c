// Serial reference vs. OpenMP engine on a 32x32 RGB image with a linear
// softmax classifier and a fitted Gaussian sampler.
#include <benchmark/benchmark.h>

#include <memory>

#include "pda/classifier.hpp"
#include "pda/engine.hpp"
#include "pda/patch_stats.hpp"
#include "pda/rng.hpp"

using namespace pda;

namespace {

constexpr int kEdge = 32;

struct Fixture {
  Image image{kEdge, kEdge, 3};
  std::unique_ptr<LinearSoftmaxClassifier> classifier;
  SamplerHandle sampler;
  WindowConfig config;

  Fixture() {
    Rng rng(7);
    std::vector<Image> corpus;
    for (int i = 0; i < 8; ++i) {
      Image img(kEdge, kEdge, 3);
      for (auto& v : img.pixels()) v = uniform01(rng);
      corpus.push_back(std::move(img));
    }
    image = corpus.front();
    LinearSoftmaxWeights w;
    w.weights = Eigen::MatrixXd::Zero(2, kEdge * kEdge * 3);
    w.bias = Eigen::VectorXd::Zero(2);
    for (Eigen::Index i = 0; i < w.weights.size(); ++i) w.weights.data()[i] = 0.02 * (uniform01(rng) - 0.5);
    classifier = std::make_unique<LinearSoftmaxClassifier>(ClassCatalog::planted(), std::move(w),
                                                           InputDims{kEdge, kEdge, 3});
    config.win_size = 5;
    config.pad_size = 2;
    config.samples_per_roi = 10;
    config.laplace_k = 2;
    config.seed = 1;
    sampler = SamplerHandle::gaussian(std::make_shared<const PatchGaussian>(
        fit_patch_gaussian(corpus, config.win_size + 2 * config.pad_size, 2000, kDefaultRidge, 3)));
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_reference(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    auto r = analyze_reference(*f.classifier, f.image, 1, f.config, f.sampler);
    benchmark::DoNotOptimize(r.map.we_sum.data());
  }
}
BENCHMARK(BM_reference)->Unit(benchmark::kMillisecond);

void BM_parallel(benchmark::State& state) {
  const auto& f = fixture();
  ExecutionOptions exec;
  exec.workers = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto r = analyze(*f.classifier, f.image, 1, f.config, f.sampler, exec);
    benchmark::DoNotOptimize(r.map.we_sum.data());
  }
}
BENCHMARK(BM_parallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
