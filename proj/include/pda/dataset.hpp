#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pda/image.hpp"

namespace pda {

class ClassCatalog {
 public:
  ClassCatalog() = default;
  explicit ClassCatalog(std::vector<std::string> names);

  /// AKIEC, BCC, DF, MEL, NV, BKL, VASC.
  static ClassCatalog isic2018();
  /// background, planted: the two classes of the synthetic planted dataset.
  static ClassCatalog planted();
  /// Comma-separated names.
  static ClassCatalog parse(std::string_view list);

  int size() const noexcept { return static_cast<int>(names_.size()); }
  const std::string& name(int index) const { return names_.at(index); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::optional<int> find(std::string_view name) const;
  std::string join() const;

  friend bool operator==(const ClassCatalog&, const ClassCatalog&) = default;

 private:
  std::vector<std::string> names_;
};

struct FileSource {
  std::filesystem::path path;
};

struct Record;

struct AugmentedSource {
  std::shared_ptr<const Record> parent;
  ResolvedAugmentation transform;
};

struct Record {
  std::string source_id;
  int label = 0;
  std::variant<FileSource, Image, AugmentedSource> source;
  std::optional<Rect> planted;  // ground-truth region for synthetic data
};

/// Labeled image collection. File-backed and augmented records are
/// materialized on demand by load().
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(ClassCatalog catalog, std::vector<Record> records);

  const ClassCatalog& catalog() const noexcept { return catalog_; }
  const std::vector<Record>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const Record& operator[](std::size_t i) const { return records_.at(i); }

  Image load(std::size_t i) const;
  std::vector<std::size_t> class_counts() const;

  LabeledDataset subset(const std::vector<std::size_t>& indices) const;

 private:
  ClassCatalog catalog_;
  std::vector<Record> records_;
};

/// Parses `image_id,label[,...]` CSV. Extra trailing columns are ignored.
/// Image files are resolved under `image_dir` as <image_id>.<ext> for the
/// first of .png/.ppm/.pgm that exists at load time (default .png).
LabeledDataset load_metadata(std::string_view csv, const std::filesystem::path& image_dir,
                             const ClassCatalog& catalog = ClassCatalog::isic2018());

struct SplitSpec {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
  std::uint64_t seed = 0;
};

struct DatasetSplits {
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
};

/// Per-class shuffle and largest-remainder partition.
DatasetSplits stratified_split(const LabeledDataset& ds, const SplitSpec& spec);

/// Split sizes for one class of n members; exposed for the proportion tests.
std::array<std::size_t, 3> largest_remainder_sizes(std::size_t n, const SplitSpec& spec);

std::string split_manifest_csv(const DatasetSplits& splits);

enum class BalancePolicy {
  strict,  // target below an existing class count is an error
  cap,     // classes already above target are left as they are
};

LabeledDataset balance_with_augmentation(const LabeledDataset& ds, std::size_t target_per_class,
                                         std::uint64_t seed, BalancePolicy policy = BalancePolicy::strict);

/// The transform family used when padding minority classes.
AugmentationSpec default_training_augmentation();

enum class Quadrant { top_left, top_right, bottom_left, bottom_right };

Quadrant parse_quadrant(std::string_view text);  // tl, tr, bl, br
std::string_view quadrant_name(Quadrant q);
Rect quadrant_rect(Quadrant q, int image_edge);

struct PlantedSpec {
  std::size_t n_per_class = 50;
  int image_edge = 32;
  int patch_edge = 8;
  Quadrant quadrant = Quadrant::top_left;
  double noise_level = 0.05;
  std::uint64_t seed = 0;
};

inline constexpr double kPlantedForeground = 0.9;
inline constexpr double kPlantedBackground = 0.2;

/// Two-class gray dataset: class 1 carries a bright square inside the chosen
/// quadrant over a dark noisy background, class 0 is background only.
/// Records alternate class 0 / class 1.
LabeledDataset synth_planted_dataset(const PlantedSpec& spec);

}  // namespace pda
