#include "pda/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "pda/codec.hpp"
#include "pda/error.hpp"
#include "pda/rng.hpp"

namespace pda {

namespace {

std::vector<std::string> split_fields(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r' || field.back() == '\n')) field.remove_suffix(1);
    out.emplace_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

Image load_record(const Record& record) {
  return std::visit(
      [&](const auto& src) -> Image {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, Image>) {
          return src;
        } else if constexpr (std::is_same_v<T, FileSource>) {
          if (!std::filesystem::exists(src.path)) {
            throw Error(ErrorCode::missing_file, "image file for '" + record.source_id + "' not found: " + src.path.string());
          }
          return read_image(src.path);
        } else {
          return apply_augmentation(load_record(*src.parent), src.transform);
        }
      },
      record.source);
}

std::filesystem::path resolve_image_path(const std::filesystem::path& dir, const std::string& id) {
  for (const char* ext : {".png", ".ppm", ".pgm"}) {
    auto candidate = dir / (id + ext);
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return dir / (id + ".png");
}

}  // namespace

ClassCatalog::ClassCatalog(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) throw Error(ErrorCode::invalid_argument, "class catalog needs at least two classes");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw Error(ErrorCode::invalid_argument, "class names must be non-empty");
    if (!seen.insert(n).second) throw Error(ErrorCode::invalid_argument, "duplicate class name: " + n);
  }
}

ClassCatalog ClassCatalog::isic2018() { return ClassCatalog({"AKIEC", "BCC", "DF", "MEL", "NV", "BKL", "VASC"}); }

ClassCatalog ClassCatalog::planted() { return ClassCatalog({"background", "planted"}); }

ClassCatalog ClassCatalog::parse(std::string_view list) { return ClassCatalog(split_fields(list, ',')); }

std::optional<int> ClassCatalog::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return std::nullopt;
}

std::string ClassCatalog::join() const {
  std::string out;
  for (std::size_t i = 0; i < names_.size(); ++i) out += (i ? "," : "") + names_[i];
  return out;
}

LabeledDataset::LabeledDataset(ClassCatalog catalog, std::vector<Record> records)
    : catalog_(std::move(catalog)), records_(std::move(records)) {
  std::unordered_set<std::string> ids;
  for (const auto& r : records_) {
    if (r.label < 0 || r.label >= catalog_.size()) {
      throw Error(ErrorCode::unknown_label, "record '" + r.source_id + "' has label index out of range");
    }
    if (!ids.insert(r.source_id).second) throw Error(ErrorCode::duplicate_id, "duplicate source id: " + r.source_id);
  }
}

Image LabeledDataset::load(std::size_t i) const { return load_record(records_.at(i)); }

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(catalog_.size(), 0);
  for (const auto& r : records_) ++counts[r.label];
  return counts;
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Record> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(records_.at(i));
  return LabeledDataset(catalog_, std::move(out));
}

LabeledDataset load_metadata(std::string_view csv, const std::filesystem::path& image_dir, const ClassCatalog& catalog) {
  std::vector<Record> records;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t start = 0;
  bool header_seen = false;
  while (start <= csv.size()) {
    auto end = csv.find('\n', start);
    if (end == std::string_view::npos) end = csv.size();
    const auto line = csv.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == csv.size()) break;
      continue;
    }
    const auto fields = split_fields(line, ',');
    if (!header_seen) {
      if (fields.size() < 2 || fields[0] != "image_id" || fields[1] != "label") {
        throw Error(ErrorCode::malformed_header, "metadata CSV must start with header 'image_id,label'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() < 2 || fields[0].empty()) {
      throw Error(ErrorCode::parse_error, "metadata row " + std::to_string(line_no) + " is missing fields");
    }
    const auto label = catalog.find(fields[1]);
    if (!label) {
      throw Error(ErrorCode::unknown_label,
                  "row " + std::to_string(line_no) + " ('" + fields[0] + "') has unknown label '" + fields[1] + "'");
    }
    if (!ids.insert(fields[0]).second) {
      throw Error(ErrorCode::duplicate_id, "row " + std::to_string(line_no) + " repeats image_id '" + fields[0] + "'");
    }
    records.push_back(Record{fields[0], *label, FileSource{resolve_image_path(image_dir, fields[0])}, std::nullopt});
    if (end == csv.size()) break;
  }
  if (!header_seen) throw Error(ErrorCode::malformed_header, "metadata CSV is empty (no header)");
  return LabeledDataset(catalog, std::move(records));
}

std::array<std::size_t, 3> largest_remainder_sizes(std::size_t n, const SplitSpec& spec) {
  const std::array<double, 3> fractions{spec.train, spec.validation, spec.test};
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw Error(ErrorCode::invalid_argument, "split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw Error(ErrorCode::invalid_argument, "split fractions must sum to 1");

  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double quota = fractions[k] * static_cast<double>(n);
    sizes[k] = static_cast<std::size_t>(std::floor(quota));
    remainders[k] = quota - std::floor(quota);
    assigned += sizes[k];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[order[i % 3]];
  return sizes;
}

DatasetSplits stratified_split(const LabeledDataset& ds, const SplitSpec& spec) {
  const int k = ds.catalog().size();
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < ds.size(); ++i) members[ds[i].label].push_back(i);

  std::array<std::vector<std::size_t>, 3> parts;
  for (int c = 0; c < k; ++c) {
    auto& idx = members[c];
    Rng rng = make_substream(spec.seed, streams::split, static_cast<std::uint64_t>(c));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto sizes = largest_remainder_sizes(idx.size(), spec);
    std::size_t offset = 0;
    for (int p = 0; p < 3; ++p) {
      parts[p].insert(parts[p].end(), idx.begin() + offset, idx.begin() + offset + sizes[p]);
      offset += sizes[p];
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return DatasetSplits{ds.subset(parts[0]), ds.subset(parts[1]), ds.subset(parts[2])};
}

std::string split_manifest_csv(const DatasetSplits& splits) {
  std::ostringstream out;
  out << "image_id,label,split\n";
  auto emit = [&](const LabeledDataset& part, const char* name) {
    for (const auto& r : part.records()) out << r.source_id << ',' << part.catalog().name(r.label) << ',' << name << '\n';
  };
  emit(splits.train, "train");
  emit(splits.validation, "validation");
  emit(splits.test, "test");
  return out.str();
}

AugmentationSpec default_training_augmentation() {
  AugmentationSpec spec;
  spec.rotate = Toggle::random;
  spec.max_rotate_degrees = 25.0;
  spec.hflip = Toggle::random;
  spec.vflip = Toggle::random;
  spec.zoom = Toggle::random;
  spec.zoom_ratio = 0.8;
  return spec;
}

LabeledDataset balance_with_augmentation(const LabeledDataset& ds, std::size_t target_per_class, std::uint64_t seed,
                                         BalancePolicy policy) {
  const auto counts = ds.class_counts();
  const int k = ds.catalog().size();
  for (int c = 0; c < k; ++c) {
    if (counts[c] == 0 && target_per_class > 0) {
      throw Error(ErrorCode::empty_class, "class '" + ds.catalog().name(c) + "' has no records to augment");
    }
    if (policy == BalancePolicy::strict && counts[c] > target_per_class) {
      throw Error(ErrorCode::invalid_argument, "target_per_class " + std::to_string(target_per_class) +
                                                   " is below the size of class '" + ds.catalog().name(c) + "'");
    }
  }

  std::vector<Record> records = ds.records();
  const auto spec = default_training_augmentation();
  std::uint64_t counter = 0;
  for (int c = 0; c < k; ++c) {
    if (counts[c] >= target_per_class) continue;
    std::vector<std::shared_ptr<const Record>> parents;
    for (const auto& r : ds.records())
      if (r.label == c) parents.push_back(std::make_shared<const Record>(r));
    const std::size_t needed = target_per_class - counts[c];
    for (std::size_t j = 0; j < needed; ++j, ++counter) {
      const auto& parent = parents[j % parents.size()];
      Record aug;
      aug.source_id = parent->source_id + "#aug" + std::to_string(j);
      aug.label = c;
      aug.source = AugmentedSource{parent, resolve_augmentation(spec, derive_seed(seed, streams::augment, counter))};
      records.push_back(std::move(aug));
    }
  }
  return LabeledDataset(ds.catalog(), std::move(records));
}

Quadrant parse_quadrant(std::string_view text) {
  if (text == "tl") return Quadrant::top_left;
  if (text == "tr") return Quadrant::top_right;
  if (text == "bl") return Quadrant::bottom_left;
  if (text == "br") return Quadrant::bottom_right;
  throw Error(ErrorCode::invalid_argument, "quadrant must be one of tl, tr, bl, br");
}

std::string_view quadrant_name(Quadrant q) {
  switch (q) {
    case Quadrant::top_left: return "tl";
    case Quadrant::top_right: return "tr";
    case Quadrant::bottom_left: return "bl";
    case Quadrant::bottom_right: return "br";
  }
  return "tl";
}

Rect quadrant_rect(Quadrant q, int image_edge) {
  const int half = image_edge / 2;
  const bool right = q == Quadrant::top_right || q == Quadrant::bottom_right;
  const bool bottom = q == Quadrant::bottom_left || q == Quadrant::bottom_right;
  return Rect{right ? image_edge - half : 0, bottom ? image_edge - half : 0, half, half};
}

LabeledDataset synth_planted_dataset(const PlantedSpec& spec) {
  if (spec.image_edge < 2 || spec.patch_edge < 1 || spec.patch_edge > spec.image_edge / 2) {
    throw Error(ErrorCode::invalid_argument, "planted patch must fit in a quadrant (patch_edge <= image_edge/2)");
  }
  if (spec.noise_level < 0.0) throw Error(ErrorCode::invalid_argument, "noise_level must be non-negative");

  const Rect quad = quadrant_rect(spec.quadrant, spec.image_edge);
  Rng rng = make_substream(spec.seed, streams::synth);
  auto noisy = [&](double level) {
    const double u = uniform01(rng);
    return std::clamp(level + spec.noise_level * (2.0 * u - 1.0), 0.0, 1.0);
  };

  std::vector<Record> records;
  records.reserve(2 * spec.n_per_class);
  for (std::size_t i = 0; i < 2 * spec.n_per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    Image img(spec.image_edge, spec.image_edge, 1);
    for (double& v : img.pixels()) v = noisy(kPlantedBackground);
    Record r;
    r.label = label;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%05zu", i);
    r.source_id = id;
    if (label == 1) {
      const int slack = quad.w - spec.patch_edge;
      const int px = quad.x + static_cast<int>(uniform_index(rng, slack + 1));
      const int py = quad.y + static_cast<int>(uniform_index(rng, slack + 1));
      const Rect patch{px, py, spec.patch_edge, spec.patch_edge};
      for (int y = patch.y; y < patch.y + patch.h; ++y)
        for (int x = patch.x; x < patch.x + patch.w; ++x) img.at(x, y) = noisy(kPlantedForeground);
      r.planted = patch;
    }
    r.source = std::move(img);
    records.push_back(std::move(r));
  }
  return LabeledDataset(ClassCatalog::planted(), std::move(records));
}

}  // namespace pda
