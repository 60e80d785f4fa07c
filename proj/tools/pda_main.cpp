// pda: command-line front end for prediction difference analysis.

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "pda/classifier.hpp"
#include "pda/codec.hpp"
#include "pda/dataset.hpp"
#include "pda/engine.hpp"
#include "pda/error.hpp"
#include "pda/external.hpp"
#include "pda/heatmap.hpp"
#include "pda/patch_stats.hpp"
#include "pda/run_config.hpp"

namespace fs = std::filesystem;
using namespace pda;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + p.string());
  out << text;
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::invalid_argument, what + " is not a number: '" + s + "'");
  }
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::missing_file, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// `key=value` lines written next to a trained weight file.
std::map<std::string, std::string> read_meta(const fs::path& p) {
  if (!fs::exists(p)) return {};
  return RunConfig::read(p).values();
}

int default_workers() {
  if (const char* env = std::getenv("PDA_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return omp_get_max_threads();
}

// ---------------------------------------------------------------------------
// Config-file support shared by every subcommand

struct Subcommand {
  CLI::App* app = nullptr;
  std::string config_path;
};

Subcommand add_subcommand(CLI::App& root, const std::string& name, const std::string& help) {
  Subcommand sc;
  sc.app = root.add_subcommand(name, help);
  sc.app->add_option("--config", sc.config_path, "Flat key=value file of option values; flags override it");
  return sc;
}

std::string option_key(const CLI::Option* opt) { return opt->get_single_name(); }

bool is_flag(const CLI::Option* opt) { return opt->get_expected_max() == 0; }

bool is_meta_option(const CLI::Option* opt) {
  const auto key = option_key(opt);
  return key == "help" || key == "config";
}

/// Fills options not given on the command line from --config.
void apply_config(const Subcommand& sc) {
  if (sc.config_path.empty()) return;
  const auto cfg = RunConfig::read(sc.config_path);
  std::set<std::string> allowed;
  for (const auto* opt : sc.app->get_options())
    if (!is_meta_option(opt)) allowed.insert(option_key(opt));
  cfg.check_keys(allowed);
  for (auto* opt : sc.app->get_options()) {
    if (is_meta_option(opt) || opt->count() > 0) continue;
    const auto value = cfg.get(option_key(opt));
    if (!value) continue;
    if (is_flag(opt)) {
      if (*value != "true" && *value != "1") continue;  // callback with no results would index past the end
      opt->add_result("true");
    } else {
      for (const auto& v : opt->get_expected_max() > 1 ? split_list(*value, ' ') : std::vector<std::string>{*value})
        opt->add_result(v);
    }
    opt->run_callback();
  }
}

/// Every option's effective value as a RunConfig.
RunConfig resolved_config(const Subcommand& sc) {
  RunConfig cfg;
  for (const auto* opt : sc.app->get_options()) {
    if (is_meta_option(opt)) continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? " " : "") + res[i];
      if (is_flag(opt)) value = "true";
    } else {
      value = is_flag(opt) ? "false" : opt->get_default_str();
    }
    cfg.set(option_key(opt), value);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Classifier and sampler specs

struct ClassifierChoice {
  ClassifierHandle handle;
  std::optional<std::int64_t> train_size;
};

ClassCatalog catalog_for(const std::string& classes_flag, int k, const std::map<std::string, std::string>& meta) {
  if (!classes_flag.empty()) return ClassCatalog::parse(classes_flag);
  if (auto it = meta.find("classes"); it != meta.end()) return ClassCatalog::parse(it->second);
  if (k == 7 || k == 0) return ClassCatalog::isic2018();
  if (k == 2) return ClassCatalog::planted();
  std::vector<std::string> names;
  for (int i = 0; i < k; ++i) names.push_back("class" + std::to_string(i));
  return ClassCatalog(names);
}

ClassifierChoice open_classifier(const std::string& spec, const std::string& classes_flag, const Image& image,
                                 std::size_t external_batch) {
  const InputDims dims{image.width(), image.height(), image.channels()};
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  ClassifierChoice out;
  if (kind == "uniform") {
    const auto catalog = catalog_for(classes_flag, 0, {});
    out.handle = std::make_shared<ConstantClassifier>(catalog, uniform_distribution(catalog.size()), dims);
  } else if (kind == "constant") {
    ClassDistribution d;
    for (const auto& v : split_list(arg)) d.probs.push_back(to_double(v, "constant probability"));
    const auto catalog = catalog_for(classes_flag, static_cast<int>(d.size()), {});
    out.handle = std::make_shared<ConstantClassifier>(catalog, d, dims);
  } else if (kind == "lsw") {
    auto weights = read_lsw(arg);
    const auto meta = read_meta(arg + ".meta");
    const auto catalog = catalog_for(classes_flag, weights.num_classes(), meta);
    if (auto it = meta.find("train_size"); it != meta.end()) out.train_size = std::stoll(it->second);
    out.handle = std::make_shared<LinearSoftmaxClassifier>(catalog, std::move(weights), dims);
  } else if (kind == "external") {
    if (arg.empty()) throw Error(ErrorCode::invalid_argument, "external classifier needs a command: external:CMD");
    const auto catalog = catalog_for(classes_flag, 0, {});
    ExternalOptions opts;
    opts.max_batch = external_batch;
    out.handle = ExternalClassifier::open(arg, catalog, dims, opts);
  } else {
    throw Error(ErrorCode::invalid_argument, "unknown classifier spec '" + spec +
                                                 "' (use uniform, constant:P,..., lsw:FILE or external:CMD)");
  }
  return out;
}

int resolve_class(const std::string& name, const ClassCatalog& catalog) {
  if (auto idx = catalog.find(name)) return *idx;
  if (!name.empty() && std::all_of(name.begin(), name.end(), ::isdigit)) {
    const int idx = std::stoi(name);
    if (idx < catalog.size()) return idx;
  }
  throw Error(ErrorCode::unknown_label, "class '" + name + "' is not in the catalog (" + catalog.join() + ")");
}

SamplerHandle parse_sampler(const std::string& spec, const std::string& stats_path) {
  if (spec == "gaussian") {
    if (stats_path.empty()) throw Error(ErrorCode::invalid_argument, "the gaussian sampler needs --stats FILE");
    return SamplerHandle::gaussian(std::make_shared<const PatchGaussian>(read_pgs(stats_path)));
  }
  if (spec.rfind("mean:", 0) == 0) return make_discrete_sampler({to_double(spec.substr(5), "mean value")}, {1.0});
  if (spec.rfind("discrete:", 0) == 0) {
    const auto body = spec.substr(9);
    const auto at = body.find('@');
    std::vector<double> support, weights;
    for (const auto& v : split_list(body.substr(0, at))) support.push_back(to_double(v, "support value"));
    if (at != std::string::npos) {
      for (const auto& v : split_list(body.substr(at + 1))) weights.push_back(to_double(v, "weight"));
    } else {
      weights.assign(support.size(), support.empty() ? 0.0 : 1.0 / static_cast<double>(support.size()));
    }
    return make_discrete_sampler(std::move(support), std::move(weights));
  }
  throw Error(ErrorCode::invalid_argument, "unknown sampler '" + spec + "' (use gaussian, mean:V or discrete:V,...[@W,...])");
}

MarginalMode parse_mode(const std::string& s) {
  if (s == "mc" || s == "monte_carlo") return MarginalMode::monte_carlo;
  if (s == "exhaustive") return MarginalMode::exhaustive;
  throw Error(ErrorCode::invalid_argument, "mode must be mc or exhaustive");
}

// ---------------------------------------------------------------------------
// Analysis options shared by analyze and sweep

struct AnalysisFlags {
  std::string image;
  std::string classifier = "uniform";
  std::string target;
  std::string classes;
  std::string sampler = "gaussian";
  std::string mode = "mc";
  int pad = 2;
  int stride = 1;
  int samples = 10;
  std::uint64_t seed = 0;
  std::int64_t laplace_n = 0;
  int workers = 0;
  std::size_t batch = 64;
  bool progress = false;
};

void add_analysis_flags(CLI::App* app, AnalysisFlags& f) {
  app->add_option("--image", f.image, "Image to explain (.png/.ppm/.pgm)")->required();
  app->add_option("--classifier", f.classifier, "uniform | constant:P1,P2,... | lsw:WEIGHTS | external:CMD");
  app->add_option("--class", f.target, "Target class name or index")->required();
  app->add_option("--classes", f.classes, "Comma-separated class catalog (default: from weights meta, else ISIC 7-class)");
  app->add_option("--sampler", f.sampler, "gaussian | mean:V | discrete:V1,V2,...[@W1,W2,...]");
  app->add_option("--mode", f.mode, "mc (Monte Carlo) or exhaustive (discrete samplers only)");
  app->add_option("--pad", f.pad, "Padding ring width around the window");
  app->add_option("--stride", f.stride, "Window stride in pixels");
  app->add_option("--samples", f.samples, "Monte-Carlo samples per window");
  app->add_option("--seed", f.seed, "Seed for all sampling");
  app->add_option("--laplace-n", f.laplace_n,
                  "Training-set size N for the Laplace correction (0 = weights meta, else 7010)");
  app->add_option("--workers", f.workers, "Worker threads (0 = PDA_WORKERS or all cores)");
  app->add_option("--batch", f.batch, "Images per classifier batch");
  app->add_flag("--progress", f.progress, "Print a window counter on stderr");
}

struct PreparedAnalysis {
  Image image;
  ClassifierChoice classifier;
  int target = 0;
  WindowConfig config;
  ExecutionOptions exec;
};

PreparedAnalysis prepare_analysis(const AnalysisFlags& f, int win) {
  PreparedAnalysis p;
  p.image = read_image(f.image);
  p.classifier = open_classifier(f.classifier, f.classes, p.image, f.batch);
  p.target = resolve_class(f.target, p.classifier.handle->catalog());
  p.config.win_size = win;
  p.config.pad_size = f.pad;
  p.config.stride = f.stride;
  p.config.samples_per_roi = f.samples;
  p.config.seed = f.seed;
  p.config.mode = parse_mode(f.mode);
  p.config.laplace_k = p.classifier.handle->num_classes();
  p.config.laplace_n = f.laplace_n > 0 ? f.laplace_n : p.classifier.train_size.value_or(kDefaultLaplaceN);
  p.exec.workers = f.workers > 0 ? f.workers : default_workers();
  p.exec.batch_size = f.batch;
  if (f.progress) {
    p.exec.progress = [](std::size_t done, std::size_t total) {
      if (done == total || done % 256 == 0) std::cerr << "\rwindows " << done << "/" << total << std::flush;
      if (done == total) std::cerr << '\n';
    };
  }
  return p;
}

void write_analysis_outputs(const AnalysisReport& report, const fs::path& out, const RunConfig& cfg) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_wem(report.map, out);
  spit(out.string() + ".report.txt", report.summary());
  cfg.write(out.string() + ".config");
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_fit_stats(const std::string& images_dir, int edge, const std::string& out, std::size_t max_patches,
                  double epsilon, std::uint64_t seed, const std::string& metadata, const std::string& only_class,
                  const RunConfig& cfg) {
  std::vector<Image> corpus;
  if (!metadata.empty()) {
    const auto catalog_path = fs::path(images_dir) / "classes.txt";
    const auto catalog = fs::exists(catalog_path) ? ClassCatalog::parse(slurp(catalog_path)) : ClassCatalog::isic2018();
    const auto ds = load_metadata(slurp(metadata), images_dir, catalog);
    const std::optional<int> keep = only_class.empty() ? std::nullopt : std::optional<int>(resolve_class(only_class, catalog));
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (!keep || ds[i].label == *keep) corpus.push_back(ds.load(i));
  } else {
    for (const auto& p : list_images(images_dir)) corpus.push_back(read_image(p));
  }
  const auto pg = fit_patch_gaussian(corpus, edge, max_patches, epsilon, seed);
  write_pgs(pg, out);
  cfg.write(out + ".config");
  std::cout << "patch_edge " << pg.patch_edge << " channels " << pg.channels << " M " << pg.dimension()
            << " samples " << pg.sample_count << " -> " << out << '\n';
  return 0;
}

int cmd_analyze(const AnalysisFlags& f, int win, const std::string& stats, std::string out, const RunConfig& cfg) {
  auto p = prepare_analysis(f, win);
  const auto sampler = parse_sampler(f.sampler, stats);
  if (out.empty()) out = fs::path(f.image).stem().string() + ".wem";
  const auto report = analyze(*p.classifier.handle, p.image, p.target, p.config, sampler, p.exec);
  write_analysis_outputs(report, out, cfg);
  std::cout << report.summary();
  return 0;
}

int cmd_sweep(const AnalysisFlags& f, const std::string& wins, const std::string& fit_images,
              const std::string& stats_pattern, std::size_t max_patches, double epsilon, const std::string& out_dir,
              const RunConfig& cfg) {
  fs::create_directories(out_dir);
  const auto stem = fs::path(f.image).stem().string();
  std::vector<Image> corpus;
  if (!fit_images.empty())
    for (const auto& p : list_images(fit_images)) corpus.push_back(read_image(p));
  for (const auto& w : split_list(wins)) {
    const int win = std::stoi(w);
    auto p = prepare_analysis(f, win);
    const int edge = win + 2 * f.pad;
    SamplerHandle sampler = [&] {
      if (f.sampler != "gaussian") return parse_sampler(f.sampler, "");
      if (!corpus.empty()) {
        return SamplerHandle::gaussian(
            std::make_shared<const PatchGaussian>(fit_patch_gaussian(corpus, edge, max_patches, epsilon, f.seed)));
      }
      if (stats_pattern.empty()) {
        throw Error(ErrorCode::invalid_argument, "gaussian sweep needs --fit-images DIR or --stats-pattern");
      }
      std::string path = stats_pattern;
      if (const auto pos = path.find("{edge}"); pos != std::string::npos) path.replace(pos, 6, std::to_string(edge));
      return parse_sampler("gaussian", path);
    }();
    const auto report = analyze(*p.classifier.handle, p.image, p.target, p.config, sampler, p.exec);
    const fs::path out = fs::path(out_dir) / (stem + "_win" + std::to_string(win) + ".wem");
    RunConfig this_cfg = cfg;
    this_cfg.set("wins", std::to_string(win));
    write_analysis_outputs(report, out, this_cfg);
    std::cout << out.string() << " windows=" << report.rois.size() << " calls=" << report.classifier_calls << '\n';
  }
  return 0;
}

int cmd_render(const std::string& map_path, const std::string& normalize, const std::string& overlay_path,
               double alpha, const std::string& out) {
  const auto map = read_wem(map_path);
  RenderSpec spec;
  spec.alpha = alpha;
  if (normalize == "symmetric_max") {
    spec.normalization = Normalization::symmetric_max;
  } else if (normalize.size() > 1 && normalize[0] == 'p') {
    spec.normalization = Normalization::percentile;
    spec.percentile = to_double(normalize.substr(1), "percentile");
  } else {
    throw Error(ErrorCode::invalid_argument, "normalize must be symmetric_max or pQ (e.g. p99)");
  }
  const auto norm = normalize_saliency(map, spec);
  Image img = render_heatmap(norm);
  if (!overlay_path.empty()) {
    spec.background = Background::original;
    img = overlay(read_image(overlay_path), img, alpha);
  }
  write_image(img, out);
  spit(out + ".norm.txt", normalization_sidecar(norm, spec));
  return 0;
}

int cmd_synth(const std::string& out_dir, const PlantedSpec& spec, const RunConfig& cfg) {
  fs::create_directories(out_dir);
  const auto ds = synth_planted_dataset(spec);
  std::ostringstream meta, planted;
  meta << "image_id,label\n";
  planted << "image_id,label,x,y,w,h,quadrant\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds[i];
    write_image(ds.load(i), fs::path(out_dir) / (r.source_id + ".pgm"));
    meta << r.source_id << ',' << ds.catalog().name(r.label) << '\n';
    const Rect rect = r.planted.value_or(Rect{});
    planted << r.source_id << ',' << ds.catalog().name(r.label) << ',' << rect.x << ',' << rect.y << ',' << rect.w
            << ',' << rect.h << ',' << quadrant_name(spec.quadrant) << '\n';
  }
  spit(fs::path(out_dir) / "metadata.csv", meta.str());
  spit(fs::path(out_dir) / "planted.csv", planted.str());
  spit(fs::path(out_dir) / "classes.txt", ds.catalog().join() + "\n");
  cfg.write(fs::path(out_dir) / "synth.config");
  std::cout << ds.size() << " images -> " << out_dir << '\n';
  return 0;
}

int cmd_train(const std::string& data_dir, const TrainOptions& opts, const std::string& split,
              const std::string& out, const RunConfig& cfg) {
  const auto catalog_path = fs::path(data_dir) / "classes.txt";
  const auto catalog = fs::exists(catalog_path) ? ClassCatalog::parse(slurp(catalog_path)) : ClassCatalog::isic2018();
  const auto ds = load_metadata(slurp(fs::path(data_dir) / "metadata.csv"), data_dir, catalog);
  const auto fr = split_list(split);
  if (fr.size() != 3) throw Error(ErrorCode::invalid_argument, "--split needs three fractions");
  SplitSpec ss{to_double(fr[0], "split"), to_double(fr[1], "split"), to_double(fr[2], "split"), opts.seed};
  const auto parts = stratified_split(ds, ss);
  const auto result = train_linear_softmax(parts.train, opts);

  InputDims dims;
  feature_matrix(parts.train.subset({0}), &dims);
  const LinearSoftmaxClassifier model(catalog, result.weights, dims);
  write_lsw(result.weights, out);
  std::ostringstream loss;
  loss << "epoch,loss\n" << std::setprecision(17);
  for (std::size_t e = 0; e < result.loss_history.size(); ++e) loss << e << ',' << result.loss_history[e] << '\n';
  spit(out + ".loss.csv", loss.str());
  RunConfig meta;
  meta.set("train_size", std::to_string(parts.train.size()));
  meta.set("classes", catalog.join());
  meta.set("width", std::to_string(dims.width));
  meta.set("height", std::to_string(dims.height));
  meta.set("channels", std::to_string(dims.channels));
  meta.write(out + ".meta");
  spit(out + ".split.csv", split_manifest_csv(parts));
  cfg.write(out + ".config");

  std::cout << std::setprecision(6) << "train " << parts.train.size() << " val " << parts.validation.size() << " test "
            << parts.test.size() << "\nfinal_loss " << result.loss_history.back() << "\ntrain_accuracy "
            << accuracy(model, parts.train) << '\n';
  if (!parts.validation.empty()) std::cout << "validation_accuracy " << accuracy(model, parts.validation) << '\n';
  if (!parts.test.empty()) std::cout << "test_accuracy " << accuracy(model, parts.test) << '\n';
  return 0;
}

int cmd_eval_localization(const std::string& maps_dir, const std::string& manifest, double factor) {
  struct Truth {
    Rect rect;
    std::string quadrant;
  };
  std::map<std::string, Truth> truth;
  std::istringstream in(slurp(manifest));
  std::string line;
  std::getline(in, line);
  if (line.rfind("image_id,label,x,y,w,h", 0) != 0) {
    throw Error(ErrorCode::malformed_header, "manifest must start with image_id,label,x,y,w,h,quadrant");
  }
  while (std::getline(in, line)) {
    const auto f = split_list(line);
    if (f.size() < 7) continue;
    const Rect r{std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4]), std::stoi(f[5])};
    if (r.w > 0) truth[f[0]] = Truth{r, f[6]};
  }
  std::vector<fs::path> maps;
  for (const auto& e : fs::directory_iterator(maps_dir))
    if (e.path().extension() == ".wem") maps.push_back(e.path());
  std::sort(maps.begin(), maps.end());

  std::cout << "image_id quadrant_fraction patch_fraction pass\n" << std::fixed << std::setprecision(4);
  int evaluated = 0, passed = 0;
  for (const auto& p : maps) {
    const auto it = truth.find(p.stem().string());
    if (it == truth.end()) continue;
    const auto map = read_wem(p);
    if (map.width != map.height) throw Error(ErrorCode::dimension_mismatch, "planted maps must be square");
    const Rect quad = quadrant_rect(parse_quadrant(it->second.quadrant), map.width);
    const double area = static_cast<double>(quad.w) * quad.h / (static_cast<double>(map.width) * map.height);
    const double qf = positive_mass_fraction(map, quad);
    const double pf = positive_mass_fraction(map, it->second.rect);
    const bool ok = qf > factor * area;
    ++evaluated;
    passed += ok ? 1 : 0;
    std::cout << it->first << ' ' << qf << ' ' << pf << ' ' << (ok ? "yes" : "no") << '\n';
  }
  std::cout << "passed " << passed << "/" << evaluated << " (quadrant fraction > " << factor << " x area fraction)\n";
  return 0;
}

int cmd_serve_check(const std::string& command, int round_trips, std::uint64_t seed, int timeout_ms) {
  ExternalOptions opts;
  opts.timeout = std::chrono::milliseconds(timeout_ms);
  const auto report = run_conformance(command, seed, round_trips, opts);
  for (const auto& c : report.checks) std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prediction difference analysis: per-pixel weight-of-evidence saliency for image classifiers"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // fit-stats
  auto fit = add_subcommand(app, "fit-stats", "Fit the Gaussian patch model and write a PGS1 file");
  std::string fit_images, fit_out, fit_metadata, fit_only;
  int fit_edge = 19;
  std::size_t fit_max = 5000;
  double fit_eps = kDefaultRidge;
  std::uint64_t fit_seed = 0;
  fit.app->add_option("--images", fit_images, "Directory of corpus images")->required();
  fit.app->add_option("--patch-edge", fit_edge, "Patch edge = win + 2*pad");
  fit.app->add_option("--out", fit_out, "Output PGS1 file")->required();
  fit.app->add_option("--max-patches", fit_max, "Maximum number of patches sampled");
  fit.app->add_option("--epsilon", fit_eps, "Ridge added to the covariance diagonal");
  fit.app->add_option("--seed", fit_seed, "Seed for patch positions");
  fit.app->add_option("--metadata", fit_metadata, "Optional image_id,label CSV restricting the corpus");
  fit.app->add_option("--only-class", fit_only, "With --metadata: use only images of this class");

  // analyze
  auto an = add_subcommand(app, "analyze", "Compute a weight-of-evidence map (WEM1) for one image");
  AnalysisFlags an_flags;
  int an_win = 15;
  std::string an_stats, an_out;
  add_analysis_flags(an.app, an_flags);
  an.app->add_option("--win", an_win, "Window size in pixels");
  an.app->add_option("--stats", an_stats, "PGS1 patch model (gaussian sampler)");
  an.app->add_option("--out", an_out, "Output WEM1 file (default <image stem>.wem)");

  // render
  auto rn = add_subcommand(app, "render", "Render a WEM1 map as a red/blue heatmap");
  std::string rn_map, rn_norm = "symmetric_max", rn_overlay, rn_out;
  double rn_alpha = 0.6;
  rn.app->add_option("--map", rn_map, "WEM1 map")->required();
  rn.app->add_option("--normalize", rn_norm, "symmetric_max or pQ (e.g. p99)");
  rn.app->add_option("--overlay", rn_overlay, "Blend over this image");
  rn.app->add_option("--alpha", rn_alpha, "Overlay weight of the heatmap");
  rn.app->add_option("--out", rn_out, "Output image (.png/.ppm)")->required();

  // synth
  auto sy = add_subcommand(app, "synth", "Generate the planted-feature dataset");
  std::string sy_out, sy_quadrant = "tl";
  PlantedSpec sy_spec;
  sy.app->add_option("--out", sy_out, "Output directory")->required();
  sy.app->add_option("--n", sy_spec.n_per_class, "Images per class");
  sy.app->add_option("--edge", sy_spec.image_edge, "Image edge in pixels");
  sy.app->add_option("--patch", sy_spec.patch_edge, "Planted patch edge in pixels");
  sy.app->add_option("--quadrant", sy_quadrant, "tl, tr, bl or br");
  sy.app->add_option("--noise", sy_spec.noise_level, "Uniform noise amplitude");
  sy.app->add_option("--seed", sy_spec.seed, "Generator seed");

  // train-baseline
  auto tr = add_subcommand(app, "train-baseline", "Train the linear-softmax baseline and write LSW1 weights");
  std::string tr_data, tr_out, tr_split = "0.7,0.1,0.2";
  TrainOptions tr_opts;
  tr.app->add_option("--data", tr_data, "Dataset directory with metadata.csv (and classes.txt)")->required();
  tr.app->add_option("--epochs", tr_opts.epochs, "Gradient-descent epochs");
  tr.app->add_option("--lr", tr_opts.learning_rate, "Learning rate");
  tr.app->add_option("--l2", tr_opts.l2, "L2 penalty on the weights");
  tr.app->add_option("--batch-size", tr_opts.batch_size, "Mini-batch size (0 = full batch)");
  tr.app->add_option("--seed", tr_opts.seed, "Seed for the split and mini-batch order");
  tr.app->add_option("--split", tr_split, "train,validation,test fractions");
  tr.app->add_option("--out", tr_out, "Output LSW1 weights")->required();

  // eval-localization
  auto ev = add_subcommand(app, "eval-localization", "Score WEM1 maps against planted ground truth");
  std::string ev_maps, ev_manifest;
  double ev_factor = 2.0;
  ev.app->add_option("--maps", ev_maps, "Directory of <image_id>.wem maps")->required();
  ev.app->add_option("--manifest", ev_manifest, "planted.csv from synth")->required();
  ev.app->add_option("--factor", ev_factor, "Pass when quadrant fraction > factor x quadrant area fraction");

  // sweep
  auto sw = add_subcommand(app, "sweep", "Analyze one image at several window sizes");
  AnalysisFlags sw_flags;
  std::string sw_wins = "5,10,15,20", sw_fit, sw_pattern, sw_out = ".";
  std::size_t sw_max = 5000;
  double sw_eps = kDefaultRidge;
  add_analysis_flags(sw.app, sw_flags);
  sw.app->add_option("--wins", sw_wins, "Comma-separated window sizes");
  sw.app->add_option("--fit-images", sw_fit, "Fit a Gaussian per window size from this image directory");
  sw.app->add_option("--stats-pattern", sw_pattern, "PGS1 path with {edge} placeholder");
  sw.app->add_option("--max-patches", sw_max, "Patches per fit with --fit-images");
  sw.app->add_option("--epsilon", sw_eps, "Ridge for fits with --fit-images");
  sw.app->add_option("--out-dir", sw_out, "Directory for <stem>_win<W>.wem maps");

  // serve-check
  auto sc = add_subcommand(app, "serve-check", "Check an external classifier adapter against the wire protocol");
  std::string sc_cmd;
  int sc_trips = 100, sc_timeout = 30000;
  std::uint64_t sc_seed = 0;
  sc.app->add_option("--command", sc_cmd, "Shell command that starts the adapter")->required();
  sc.app->add_option("--round-trips", sc_trips, "Random classify requests");
  sc.app->add_option("--seed", sc_seed, "Seed for the random requests");
  sc.app->add_option("--timeout-ms", sc_timeout, "Per-reply timeout");

  // Options named in --config satisfy "required" only after apply_config.
  std::vector<std::pair<CLI::Option*, bool>> required;
  const std::set<std::string> config_flags = {"--config"};
  bool has_config = false;
  for (int i = 1; i < argc; ++i)
    if (config_flags.count(argv[i]) || std::string(argv[i]).rfind("--config=", 0) == 0) has_config = true;
  if (has_config) {
    for (auto* sub : app.get_subcommands({}))
      for (auto* opt : sub->get_options())
        if (opt->get_required()) {
          opt->required(false);
          required.emplace_back(opt, true);
        }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (auto* s : {&fit, &an, &rn, &sy, &tr, &ev, &sw, &sc}) {
      if (!s->app->parsed()) continue;
      apply_config(*s);
      for (const auto& [opt, _] : required) {
        if (opt->count() == 0 && s->app->get_option_no_throw(opt->get_name()) == opt) {
          throw Error(ErrorCode::invalid_argument, opt->get_name() + " is required");
        }
      }
      const auto cfg = resolved_config(*s);
      if (s == &fit)
        return cmd_fit_stats(fit_images, fit_edge, fit_out, fit_max, fit_eps, fit_seed, fit_metadata, fit_only, cfg);
      if (s == &an) return cmd_analyze(an_flags, an_win, an_stats, an_out, cfg);
      if (s == &rn) return cmd_render(rn_map, rn_norm, rn_overlay, rn_alpha, rn_out);
      if (s == &sy) {
        sy_spec.quadrant = parse_quadrant(sy_quadrant);
        return cmd_synth(sy_out, sy_spec, cfg);
      }
      if (s == &tr) return cmd_train(tr_data, tr_opts, tr_split, tr_out, cfg);
      if (s == &ev) return cmd_eval_localization(ev_maps, ev_manifest, ev_factor);
      if (s == &sw) return cmd_sweep(sw_flags, sw_wins, sw_fit, sw_pattern, sw_max, sw_eps, sw_out, cfg);
      if (s == &sc) return cmd_serve_check(sc_cmd, sc_trips, sc_seed, sc_timeout);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
