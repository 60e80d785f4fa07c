#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include "pda/codec.hpp"
#include "pda/dataset.hpp"
#include "pda/error.hpp"

using namespace pda;
namespace fs = std::filesystem;

namespace {

LabeledDataset inline_dataset(const std::vector<int>& labels, const ClassCatalog& catalog) {
  std::vector<Record> records;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Record r;
    r.source_id = "r" + std::to_string(i);
    r.label = labels[i];
    r.source = Image(2, 2, 1, static_cast<double>(i % 10) / 10.0);
    records.push_back(std::move(r));
  }
  return LabeledDataset(catalog, std::move(records));
}

std::vector<int> repeated_labels(const std::vector<std::size_t>& counts) {
  std::vector<int> out;
  for (std::size_t k = 0; k < counts.size(); ++k) out.insert(out.end(), counts[k], static_cast<int>(k));
  return out;
}

std::set<std::string> ids(const LabeledDataset& ds) {
  std::set<std::string> out;
  for (const auto& r : ds.records()) out.insert(r.source_id);
  return out;
}

ErrorCode error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

}  // namespace

TEST_CASE("class catalogs") {
  const auto isic = ClassCatalog::isic2018();
  CHECK(isic.size() == 7);
  CHECK(isic.find("MEL").value() == 3);
  CHECK_FALSE(isic.find("XYZ"));
  CHECK(ClassCatalog::parse("a, b,c\n") == ClassCatalog({"a", "b", "c"}));
  CHECK_THROWS_AS(ClassCatalog({"a", "a"}), Error);
  CHECK_THROWS_AS(ClassCatalog({"a"}), Error);
}

TEST_CASE("load_metadata") {
  const auto dir = fs::temp_directory_path() / "pda_dataset_test";
  fs::create_directories(dir);
  for (const char* id : {"img1", "img2", "img3"}) write_image(Image(3, 2, 3, 0.5), dir / (std::string(id) + ".png"));

  SUBCASE("three rows") {
    const auto ds = load_metadata("image_id,label\nimg1,MEL\nimg2,NV\nimg3,NV\n", dir);
    CHECK(ds.size() == 3);
    const auto counts = ds.class_counts();
    CHECK(counts[3] == 1);
    CHECK(counts[4] == 2);
    CHECK(ds.load(1).width() == 3);
  }
  SUBCASE("header only") { CHECK(load_metadata("image_id,label\n", dir).empty()); }
  SUBCASE("extra columns are ignored") {
    CHECK(load_metadata("image_id,label,age\r\nimg1,BCC,40\r\n", dir).size() == 1);
  }
  SUBCASE("unknown label names the row") {
    try {
      load_metadata("image_id,label\nimg1,MEL\nimg2,XYZ\n", dir);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::unknown_label);
      CHECK(std::string(e.what()).find("img2") != std::string::npos);
    }
  }
  SUBCASE("other failures") {
    CHECK(error_of([&] { load_metadata("image_id,label\nimg1,MEL\nimg1,NV\n", dir); }) == ErrorCode::duplicate_id);
    CHECK(error_of([&] { load_metadata("id,dx\nimg1,MEL\n", dir); }) == ErrorCode::malformed_header);
    const auto ds = load_metadata("image_id,label\nghost,MEL\n", dir);
    CHECK(error_of([&] { ds.load(0); }) == ErrorCode::missing_file);
  }
  fs::remove_all(dir);
}

TEST_CASE("stratified_split") {
  const auto cat = ClassCatalog({"a", "b", "c"});

  SUBCASE("ten items of one class") {
    const auto s = stratified_split(inline_dataset(repeated_labels({10}), ClassCatalog({"a", "b"})), SplitSpec{});
    CHECK(s.train.size() == 7);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 2);
  }
  SUBCASE("degenerate fractions") {
    const auto ds = inline_dataset(repeated_labels({4, 3, 5}), cat);
    const auto s = stratified_split(ds, SplitSpec{1.0, 0.0, 0.0, 3});
    CHECK(ids(s.train) == ids(ds));
    CHECK(s.validation.empty());
    CHECK(s.test.empty());
    CHECK_THROWS_AS(stratified_split(ds, SplitSpec{0.5, 0.2, 0.2, 0}), Error);
  }
  SUBCASE("proportions, disjointness and determinism") {
    const std::vector<std::size_t> counts{37, 11, 52};
    const auto ds = inline_dataset(repeated_labels(counts), cat);
    const SplitSpec spec{0.7, 0.1, 0.2, 99};
    const auto s = stratified_split(ds, spec);
    const auto again = stratified_split(ds, spec);
    CHECK(ids(s.train) == ids(again.train));
    CHECK(ids(s.test) == ids(again.test));
    CHECK(s.train.size() + s.validation.size() + s.test.size() == ds.size());
    std::set<std::string> all = ids(s.train);
    for (const auto& part : {s.validation, s.test})
      for (const auto& id : ids(part)) CHECK(all.insert(id).second);
    const auto tc = s.train.class_counts(), vc = s.validation.class_counts(), ec = s.test.class_counts();
    for (std::size_t k = 0; k < counts.size(); ++k) {
      CHECK(std::abs(static_cast<double>(tc[k]) - 0.7 * counts[k]) < 1.0);
      CHECK(std::abs(static_cast<double>(vc[k]) - 0.1 * counts[k]) < 1.0);
      CHECK(std::abs(static_cast<double>(ec[k]) - 0.2 * counts[k]) < 1.0);
    }
    const auto other = stratified_split(ds, SplitSpec{0.7, 0.1, 0.2, 100});
    CHECK(ids(other.train) != ids(s.train));
  }
  SUBCASE("largest remainder sizes") {
    CHECK(largest_remainder_sizes(10, SplitSpec{}) == std::array<std::size_t, 3>{7, 1, 2});
    CHECK(largest_remainder_sizes(3, SplitSpec{}) == std::array<std::size_t, 3>{2, 0, 1});
    for (std::size_t n = 0; n < 50; ++n) {
      const auto s = largest_remainder_sizes(n, SplitSpec{});
      CHECK(s[0] + s[1] + s[2] == n);
    }
  }
}

TEST_CASE("balance_with_augmentation") {
  const auto cat = ClassCatalog({"A", "B"});
  SUBCASE("minority class is filled up") {
    const auto ds = inline_dataset(repeated_labels({2, 5}), cat);
    const auto out = balance_with_augmentation(ds, 5, 1);
    const auto counts = out.class_counts();
    CHECK(counts[0] == 5);
    CHECK(counts[1] == 5);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(out[i].source_id == ds[i].source_id);
      CHECK(out.load(i) == ds.load(i));
    }
    for (std::size_t i = ds.size(); i < out.size(); ++i) {
      CHECK(out[i].label == 0);
      CHECK(std::holds_alternative<AugmentedSource>(out[i].source));
      CHECK(out.load(i).same_shape(ds.load(0)));
    }
  }
  SUBCASE("no-op when already balanced") {
    const auto ds = inline_dataset(repeated_labels({3, 3}), cat);
    CHECK(ids(balance_with_augmentation(ds, 3, 0)) == ids(ds));
  }
  SUBCASE("policies") {
    const auto ds = inline_dataset(repeated_labels({2, 5}), cat);
    CHECK_THROWS_AS(balance_with_augmentation(ds, 4, 0), Error);
    const auto capped = balance_with_augmentation(ds, 4, 0, BalancePolicy::cap);
    CHECK(capped.class_counts() == std::vector<std::size_t>{4, 5});
    const auto empty = inline_dataset(repeated_labels({0, 5}), cat);
    CHECK(error_of([&] { balance_with_augmentation(empty, 5, 0); }) == ErrorCode::empty_class);
  }
}

TEST_CASE("synth_planted_dataset") {
  PlantedSpec spec;
  spec.seed = 4;
  SUBCASE("counts") {
    const auto ds = synth_planted_dataset(spec);
    CHECK(ds.size() == 100);
    CHECK(ds.class_counts() == std::vector<std::size_t>{50, 50});
  }
  SUBCASE("zero noise plants exact values") {
    spec.noise_level = 0.0;
    spec.n_per_class = 10;
    const auto ds = synth_planted_dataset(spec);
    const Rect quad = quadrant_rect(spec.quadrant, spec.image_edge);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto img = ds.load(i);
      if (ds[i].label == 0) {
        for (double v : img.pixels()) CHECK(v == kPlantedBackground);
        continue;
      }
      const Rect r = ds[i].planted.value();
      CHECK(r.w == spec.patch_edge);
      CHECK(r.x >= quad.x);
      CHECK(r.x + r.w <= quad.x + quad.w);
      CHECK(r.y + r.h <= quad.y + quad.h);
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) CHECK((img.at(x, y) == kPlantedForeground) == r.contains(x, y));
    }
  }
  SUBCASE("class-1 images are brighter on average") {
    const auto ds = synth_planted_dataset(spec);
    double mean[2] = {0, 0};
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto img = ds.load(i);
      double s = 0;
      for (double v : img.pixels()) s += v;
      mean[ds[i].label] += s / img.size();
    }
    CHECK(mean[1] > mean[0]);
  }
  SUBCASE("quadrants") {
    CHECK(quadrant_rect(Quadrant::bottom_right, 32) == Rect{16, 16, 16, 16});
    CHECK(parse_quadrant("tr") == Quadrant::top_right);
    CHECK_THROWS_AS(parse_quadrant("middle"), Error);
  }
}
