// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <sys/wait.h>

#include <Eigen/Cholesky>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "pda/classifier.hpp"
#include "pda/codec.hpp"
#include "pda/dataset.hpp"
#include "pda/engine.hpp"
#include "pda/error.hpp"
#include "pda/patch_stats.hpp"
#include "pda/run_config.hpp"

using namespace pda;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 3) {
  std::ostringstream o;
  o << std::setprecision(prec) << v;
  return o.str();
}

int shell(const std::string& cmd) {
  const int st = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Image random_image(int w, int h, int c, Rng& rng) {
  Image img(w, h, c);
  for (auto& v : img.pixels()) v = uniform01(rng);
  return img;
}

LinearSoftmaxWeights random_weights(int k, int d, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  LinearSoftmaxWeights w;
  w.weights.resize(k, d);
  w.bias.resize(k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < d; ++j) w.weights(i, j) = n(rng);
    w.bias(i) = n(rng);
  }
  return w;
}

// --- 1 -------------------------------------------------------------------

double softmax2(const LinearSoftmaxWeights& w, const std::vector<double>& x, int cls) {
  double z0 = w.bias(0), z1 = w.bias(1);
  for (std::size_t j = 0; j < x.size(); ++j) {
    z0 += w.weights(0, static_cast<int>(j)) * x[j];
    z1 += w.weights(1, static_cast<int>(j)) * x[j];
  }
  const double m = std::max(z0, z1);
  const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
  return (cls == 0 ? e0 : e1) / (e0 + e1);
}

double log2_odds_corrected(double p, double n, double k) {
  const double q = (p * n + 1) / (n + k);
  return std::log2(q / (1 - q));
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  Rng rng(101);
  const int edge = 6, win = 2;
  const auto img = random_image(edge, edge, 1, rng);
  const auto w = random_weights(2, edge * edge, rng);
  const LinearSoftmaxClassifier clf(ClassCatalog::planted(), w, {edge, edge, 1});
  const std::vector<double> support{0.0, 0.45, 1.0};
  const std::vector<double> weights{0.25, 0.5, 0.25};
  WindowConfig cfg;
  cfg.win_size = win;
  cfg.pad_size = 0;
  cfg.laplace_k = 2;
  cfg.laplace_n = 1000;
  cfg.mode = MarginalMode::exhaustive;
  const auto report = analyze(clf, img, 1, cfg, make_discrete_sampler(support, weights));

  const std::vector<double> x0(img.pixels().begin(), img.pixels().end());
  const double lo = log2_odds_corrected(softmax2(w, x0, 1), 1000, 2);
  std::vector<double> oracle(edge * edge, 0.0);
  for (int oy = 0; oy + win <= edge; ++oy) {
    for (int ox = 0; ox + win <= edge; ++ox) {
      double pm = 0.0;
      for (int a = 0; a < 81; ++a) {
        auto x = x0;
        double wt = 1.0;
        int code = a;
        for (int dy = 0; dy < win; ++dy)
          for (int dx = 0; dx < win; ++dx) {
            const int s = code % 3;
            code /= 3;
            x[(oy + dy) * edge + ox + dx] = support[s];
            wt *= weights[s];
          }
        pm += wt * softmax2(w, x, 1);
      }
      const double we = lo - log2_odds_corrected(pm, 1000, 2);
      for (int y = oy; y < oy + win; ++y)
        for (int x = ox; x < ox + win; ++x) oracle[y * edge + x] += we;
    }
  }
  double max_err = 0.0;
  for (int i = 0; i < edge * edge; ++i) max_err = std::max(max_err, std::abs(report.map.we_sum[i] - oracle[i]));
  const double secs = seconds_since(t0);
  return {max_err <= 1e-12 && secs < 5.0, "max |diff| " + fmt(max_err) + ", " + fmt(secs) + " s"};
}

// --- 2 -------------------------------------------------------------------

Outcome criterion2() {
  bool ok = true;
  for (double n : {1.0, 10.0, 1e6})
    for (int k : {2, 7}) ok &= std::abs(laplace_correct(1.0 / k, n, k) - 1.0 / k) < 1e-15;
  Rng rng(7);
  int antisym_fail = 0;
  for (int i = 0; i < 1000; ++i) {
    const double p = uniform01(rng), q = uniform01(rng);
    antisym_fail += weight_of_evidence(p, q, 7010, 7) != -weight_of_evidence(q, p, 7010, 7);
    antisym_fail += weight_of_evidence(p, p, 7010, 7) != 0.0;
  }
  int mono_fail = 0;
  for (double po : {0.0, 0.3, 1.0}) {
    double prev = INFINITY;
    for (int i = 0; i < 100; ++i) {
      const double we = weight_of_evidence(po, i / 99.0, 7010, 7);
      mono_fail += !(we < prev);
      prev = we;
    }
  }
  ok &= antisym_fail == 0 && mono_fail == 0;
  return {ok, "antisymmetry/zero violations " + std::to_string(antisym_fail) + ", monotonicity violations " +
                  std::to_string(mono_fail)};
}

// --- 3 -------------------------------------------------------------------

Outcome criterion3() {
  double worst = 0.0;
  for (double rho : {-0.9, 0.0, 0.5}) {
    Eigen::Vector2d mu(0.2, 0.6);
    Eigen::Matrix2d cov;
    cov << 1.0, rho, rho, 1.0;
    for (double xb : {-1.0, 0.6, 2.5}) {
      const auto c = condition_on_border(PatchGaussian{1, 2, mu, cov, 0.0, 0}, std::vector<int>{0},
                                         std::vector<double>{xb});
      worst = std::max(worst, std::abs(c.mean(0) - (mu(0) + rho * (xb - mu(1)))));
      worst = std::max(worst, std::abs(c.factor(0, 0) * c.factor(0, 0) - (1 - rho * rho)));
    }
  }

  // law of total expectation over borders drawn from the joint model
  Rng rng(33);
  Eigen::MatrixXd a(4, 4);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) a(i, j) = n01(rng);
  const Eigen::MatrixXd cov = 0.01 * (a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(4, 4));
  const Eigen::Vector4d mu(0.5, 0.4, 0.3, 0.6);
  const GaussianConditioner g(mu, cov, {0, 1}, {2, 3});
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
  const int draws = 100000;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sum_sq = Eigen::Vector2d::Zero();
  Eigen::VectorXd cm;
  for (int i = 0; i < draws; ++i) {
    Eigen::Vector4d z(n01(rng), n01(rng), n01(rng), n01(rng));
    const Eigen::Vector4d x = mu + l * z;
    g.conditional_mean(std::vector<double>{x(2), x(3)}, cm);
    sum += cm;
    sum_sq += cm.cwiseProduct(cm);
  }
  bool lote = true;
  double worst_sigma = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double m = sum(i) / draws;
    const double se = std::sqrt((sum_sq(i) / draws - m * m) / draws);
    worst_sigma = std::max(worst_sigma, std::abs(m - mu(i)) / se);
    lote &= std::abs(m - mu(i)) < 4 * se;
  }

  std::vector<Image> corpus;
  for (int i = 0; i < 5; ++i) {
    Image img(20, 20, 3, 0.37);
    for (auto& v : img.pixels()) v += 1e-12 * uniform01(rng);
    corpus.push_back(img);
  }
  const auto pg = fit_patch_gaussian(corpus, 9, 2000, 1e-4, 1);
  const bool chol = Eigen::LLT<Eigen::MatrixXd>(pg.covariance).info() == Eigen::Success;

  return {worst < 1e-10 && lote && chol, "bivariate max err " + fmt(worst) + ", total-expectation " +
                                             fmt(worst_sigma) + " sigma, near-constant Cholesky " +
                                             (chol ? "ok" : "failed")};
}

// --- 4 -------------------------------------------------------------------

struct Baseline {
  LabeledDataset data;
  DatasetSplits splits;
  LinearSoftmaxWeights weights;
  InputDims dims;
};

Baseline train_planted_baseline(double* seconds) {
  const auto t0 = Clock::now();
  Baseline b;
  PlantedSpec spec;
  spec.n_per_class = 200;
  spec.image_edge = 32;
  spec.patch_edge = 8;
  spec.noise_level = 0.05;
  spec.seed = 2018;
  b.data = synth_planted_dataset(spec);
  b.splits = stratified_split(b.data, SplitSpec{0.7, 0.1, 0.2, 2018});
  TrainOptions opt;
  opt.seed = 2018;
  b.weights = train_linear_softmax(b.splits.train, opt).weights;
  b.dims = InputDims{32, 32, 1};
  *seconds = seconds_since(t0);
  return b;
}

Outcome criterion4(const Baseline& b, double train_seconds) {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng(400 + s);
    const int k = 3, d = 64, n = 12;
    const auto w = random_weights(k, d, rng, 0.2);
    Eigen::MatrixXd x(d, n);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < n; ++j) x(i, j) = uniform01(rng);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(uniform_index(rng, k));
    const auto g = softmax_cross_entropy(w, x, labels, 1e-3);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j <= d; ++j) {
        auto p = w, m = w;
        (j < d ? p.weights(i, j) : p.bias(i)) += 1e-5;
        (j < d ? m.weights(i, j) : m.bias(i)) -= 1e-5;
        const double fd =
            (softmax_cross_entropy(p, x, labels, 1e-3).loss - softmax_cross_entropy(m, x, labels, 1e-3).loss) / 2e-5;
        worst = std::max(worst, std::abs(fd - (j < d ? g.grad_weights(i, j) : g.grad_bias(i))));
      }
    }
  }
  const LinearSoftmaxClassifier clf(b.data.catalog(), b.weights, b.dims);
  const double acc = accuracy(clf, b.splits.test);
  return {worst < 1e-6 && acc >= 0.95 && train_seconds < 60.0,
          "gradient max err " + fmt(worst) + ", held-out accuracy " + fmt(acc) + " on " +
              std::to_string(b.splits.test.size()) + " images, trained in " + fmt(train_seconds) + " s"};
}

// --- 5 -------------------------------------------------------------------

struct Localization {
  std::vector<std::size_t> test_images;  // indices into splits.test
  std::shared_ptr<const PatchGaussian> gaussian;
};

Outcome criterion5(const Baseline& b, Localization& loc) {
  const auto t0 = Clock::now();
  std::vector<Image> background;
  double mean = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < b.splits.train.size(); ++i) {
    if (b.splits.train[i].label != 0) continue;
    background.push_back(b.splits.train.load(i));
    for (double v : background.back().pixels()) mean += v;
    count += background.back().size();
  }
  mean /= static_cast<double>(count);
  loc.gaussian = std::make_shared<const PatchGaussian>(fit_patch_gaussian(background, 9, 5000, 1e-4, 5));

  for (std::size_t i = 0; i < b.splits.test.size() && loc.test_images.size() < 20; ++i)
    if (b.splits.test[i].label == 1) loc.test_images.push_back(i);

  const LinearSoftmaxClassifier clf(b.data.catalog(), b.weights, b.dims);
  WindowConfig cfg;
  cfg.win_size = 5;
  cfg.pad_size = 2;
  cfg.stride = 1;
  cfg.samples_per_roi = 10;
  cfg.laplace_k = 2;
  cfg.laplace_n = static_cast<std::int64_t>(b.splits.train.size());
  cfg.seed = 55;
  const auto gaussian = SamplerHandle::gaussian(loc.gaussian);
  const auto occlusion = make_discrete_sampler({mean}, {1.0});
  const Rect quad = quadrant_rect(Quadrant::top_left, 32);

  int hits = 0, baseline_hits = 0;
  double min_fraction = 1.0;
  for (std::size_t idx : loc.test_images) {
    const auto img = b.splits.test.load(idx);
    const auto r = analyze(clf, img, 1, cfg, gaussian);
    const double f = positive_mass_fraction(r.map, quad);
    min_fraction = std::min(min_fraction, f);
    hits += f > 0.5;
    baseline_hits += positive_mass_fraction(analyze(clf, img, 1, cfg, occlusion).map, quad) > 0.5;
  }
  const double secs = seconds_since(t0);
  return {loc.test_images.size() == 20 && hits >= 18 && secs < 600.0,
          std::to_string(hits) + "/" + std::to_string(loc.test_images.size()) +
              " images above 0.5 (min fraction " + fmt(min_fraction) + "); mean-occlusion baseline " +
              std::to_string(baseline_hits) + "/20; " + fmt(secs) + " s"};
}

// --- 6 -------------------------------------------------------------------

Outcome criterion6(const Baseline& b, const Localization& loc, const fs::path& dir) {
  write_image(b.splits.test.load(loc.test_images.at(0)), dir / "first.pgm");
  write_lsw(b.weights, dir / "base.lsw");
  RunConfig meta;
  meta.set("classes", b.data.catalog().join());
  meta.set("train_size", std::to_string(b.splits.train.size()));
  meta.write(dir / "base.lsw.meta");
  write_pgs(*loc.gaussian, dir / "bg9.pgs");
  std::string first;
  bool same = true;
  for (int workers : {1, 4, 8}) {
    const auto out = dir / ("det_w" + std::to_string(workers) + ".wem");
    const std::string cmd = std::string(PDA_CLI) + " analyze --image " + (dir / "first.pgm").string() +
                            " --classifier lsw:" + (dir / "base.lsw").string() +
                            " --class planted --win 5 --pad 2 --stride 1 --samples 10 --seed 66 --stats " +
                            (dir / "bg9.pgs").string() + " --workers " + std::to_string(workers) +
                            " --out " + out.string();
    if (shell(cmd) != 0) return {false, "analyze failed for " + std::to_string(workers) + " workers"};
    const auto bytes = slurp(out);
    if (first.empty()) first = bytes;
    same &= bytes == first && !bytes.empty();
  }
  return {same, same ? "WEM1 bytes identical for workers 1, 4, 8" : "WEM1 bytes differ across worker counts"};
}

// --- 7 -------------------------------------------------------------------

Outcome criterion7(const fs::path& dir) {
  const auto data = dir / "sweep_data";
  if (shell(std::string(PDA_CLI) + " synth --out " + data.string() + " --n 6 --edge 64 --patch 16 --seed 7") != 0)
    return {false, "synth failed"};
  if (shell(std::string(PDA_CLI) + " train-baseline --data " + data.string() + " --epochs 100 --out " +
            (dir / "w64.lsw").string()) != 0)
    return {false, "train-baseline failed"};
  const auto maps = dir / "sweep_maps";
  const std::string cmd = std::string(PDA_CLI) + " sweep --image " + (data / "synth_00001.pgm").string() +
                          " --classifier lsw:" + (dir / "w64.lsw").string() +
                          " --class planted --wins 5,10,15,20 --fit-images " + data.string() +
                          " --max-patches 2000 --samples 4 --out-dir " + maps.string();
  if (shell(cmd) != 0) return {false, "sweep failed"};
  int found = 0;
  for (const auto& e : fs::directory_iterator(maps)) found += e.path().extension() == ".wem";
  bool ok = found == 4;
  std::string detail = std::to_string(found) + " maps";
  for (int win : {5, 10, 15, 20}) {
    const auto path = maps / ("synth_00001_win" + std::to_string(win) + ".wem");
    if (!fs::exists(path)) return {false, "missing " + path.filename().string()};
    const auto m = read_wem(path);
    const int e = m.width - 1;
    ok &= m.visits(0, 0) == 1 && m.visits(e, 0) == 1 && m.visits(0, e) == 1 && m.visits(e, e) == 1;
    for (int y = win - 1; y <= e - (win - 1); ++y)
      for (int x = win - 1; x <= e - (win - 1); ++x) ok &= m.visits(x, y) == win * win;
  }
  return {ok, detail + (ok ? ", corners 1 and interior win^2 for every map" : ", visit-count check failed")};
}

// --- 8 -------------------------------------------------------------------

Outcome criterion8() {
  Rng rng(808);
  int mismatches = 0;
  for (int t = 0; t < 20; ++t) {
    const int w = 1 + static_cast<int>(uniform_index(rng, 40));
    const int h = 1 + static_cast<int>(uniform_index(rng, 40));
    WindowConfig cfg;
    cfg.win_size = 1 + static_cast<int>(uniform_index(rng, std::min(w, h)));
    cfg.stride = 1 + static_cast<int>(uniform_index(rng, 5));
    const auto grid = visit_count_grid(w, h, cfg);
    std::vector<int> count(w * h, 0);
    auto origins = [&](int extent) {
      std::vector<int> o;
      for (int v = 0; v + cfg.win_size <= extent; ++v)
        if (v % cfg.stride == 0 || v + cfg.win_size == extent) o.push_back(v);
      return o;
    };
    for (int oy : origins(h))
      for (int ox : origins(w))
        for (int y = oy; y < oy + cfg.win_size; ++y)
          for (int x = ox; x < ox + cfg.win_size; ++x) ++count[y * w + x];
    mismatches += grid != count;
  }
  return {mismatches == 0, std::to_string(20 - mismatches) + "/20 random geometries match exactly"};
}

// --- 9 -------------------------------------------------------------------

Outcome criterion9() {
  const auto catalog = ClassCatalog::isic2018();
  const std::vector<std::size_t> counts{327, 514, 115, 1113, 6705, 1099, 142};
  std::string csv = "image_id,label\n";
  std::size_t id = 0;
  for (std::size_t k = 0; k < counts.size(); ++k)
    for (std::size_t i = 0; i < counts[k]; ++i) csv += "ISIC_" + std::to_string(id++) + "," + catalog.name(k) + "\n";
  const auto ds = load_metadata(csv, fs::temp_directory_path(), catalog);
  if (ds.size() != 10015) return {false, "manifest has " + std::to_string(ds.size()) + " records"};

  const auto s = stratified_split(ds, SplitSpec{0.7, 0.1, 0.2, 9});
  const auto tc = s.train.class_counts(), vc = s.validation.class_counts(), ec = s.test.class_counts();
  double worst = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double n = static_cast<double>(counts[k]);
    worst = std::max({worst, std::abs(tc[k] - 0.7 * n), std::abs(vc[k] - 0.1 * n), std::abs(ec[k] - 0.2 * n)});
  }
  const auto balanced = balance_with_augmentation(ds, 6705, 9);
  bool exact = true;
  for (auto c : balanced.class_counts()) exact &= c == 6705;
  bool originals = true;
  for (std::size_t i = 0; i < ds.size(); ++i) originals &= balanced[i].source_id == ds[i].source_id;
  return {worst <= 1.0 && exact && originals, "max per-class deviation " + fmt(worst) +
                                                  " records; balanced counts " +
                                                  (exact ? "all 6705" : "off target") +
                                                  (originals ? "" : "; originals changed")};
}

}  // namespace

int main() {
  const fs::path dir = fs::temp_directory_path() / "pda_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  int failures = 0;
  auto report = [&](int n, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << std::endl;
  };

  report(1, criterion1);
  report(2, criterion2);
  report(3, criterion3);
  double train_seconds = 0.0;
  std::optional<Baseline> baseline;
  try {
    baseline = train_planted_baseline(&train_seconds);
  } catch (const std::exception& e) {
    std::cout << "baseline training failed: " << e.what() << std::endl;
  }
  Localization loc;
  report(4, [&] { return baseline ? criterion4(*baseline, train_seconds) : Outcome{false, "no baseline"}; });
  report(5, [&] { return baseline ? criterion5(*baseline, loc) : Outcome{false, "no baseline"}; });
  report(6, [&] { return loc.gaussian ? criterion6(*baseline, loc, dir) : Outcome{false, "criterion 5 did not run"}; });
  report(7, [&] { return criterion7(dir); });
  report(8, criterion8);
  report(9, criterion9);

  fs::remove_all(dir);
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
