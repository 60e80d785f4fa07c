#include <doctest.h>

#include <cstring>
#include <functional>

#include "pda/engine.hpp"
#include "pda/error.hpp"
#include "pda/external.hpp"
#include "pda/rng.hpp"

using namespace pda;
using namespace std::chrono_literals;

namespace {

std::string adapter(const std::string& args) { return std::string(PDA_FAKE_ADAPTER) + " " + args; }

const ClassCatalog kTwo({"c0", "c1"});

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

TEST_CASE("base64") {
  const std::string text = "any carnal pleas";
  for (std::size_t n = 0; n <= text.size(); ++n) {
    const std::vector<std::uint8_t> bytes(text.begin(), text.begin() + n);
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  const std::vector<std::uint8_t> man{'M', 'a', 'n'};
  CHECK(base64_encode(man) == "TWFu");
  CHECK(base64_encode(std::vector<std::uint8_t>{'M'}) == "TQ==");
  CHECK_THROWS_AS(base64_decode("%%not-base64%%"), Error);
  CHECK_THROWS_AS(base64_decode("abc"), Error);
}

TEST_CASE("pixel payload is little-endian float32") {
  const Image img(2, 1, 1, std::vector<double>{1.0, 0.5});
  const auto bytes = base64_decode(encode_pixel_payload(img));
  REQUIRE(bytes.size() == 8);
  // 1.0f = 0x3f800000, 0.5f = 0x3f000000
  CHECK(bytes == std::vector<std::uint8_t>{0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0x3f});
  const auto back = decode_pixel_payload(encode_pixel_payload(img), {2, 1, 1});
  CHECK(back == img);
  CHECK_THROWS_AS(decode_pixel_payload(encode_pixel_payload(img), {3, 1, 1}), Error);
}

TEST_CASE("external classifier over the wire protocol") {
  const Image img(4, 4, 1, 0.3);

  SUBCASE("constant adapter") {
    auto c = ExternalClassifier::open(adapter("constant 2"), kTwo, {4, 4, 1});
    CHECK_FALSE(c->concurrent());
    for (int i = 0; i < 5; ++i) CHECK(c->classify(img).probs == std::vector<double>{0.2, 0.8});
    std::vector<Image> batch(130, img);
    const auto out = c->classify_batch(batch);
    CHECK(out.size() == 130);
    CHECK(c->shutdown().value() == 0);
  }
  SUBCASE("pixel-dependent adapter sees the payload") {
    auto c = ExternalClassifier::open(adapter("mean 2 4 4 1 concurrent"), kTwo, {0, 0, 0});
    CHECK(c->concurrent());
    CHECK(c->input_dims() == InputDims{4, 4, 1});
    const auto d = c->classify(Image(4, 4, 1, 0.25));
    CHECK(d[1] == doctest::Approx(0.25).epsilon(1e-7));
  }
  SUBCASE("handshake mismatches") {
    const auto seven = ClassCatalog::isic2018();
    const ClassCatalog five({"a", "b", "c", "d", "e"});
    CHECK(error_of([&] { ExternalClassifier::open(adapter("constant 7"), five, {}); }) ==
          ErrorCode::handshake_mismatch);
    CHECK(error_of([&] { ExternalClassifier::open(adapter("constant 7"), seven, {5, 5, 1}); }) ==
          ErrorCode::handshake_mismatch);
    CHECK(error_of([&] { ExternalClassifier::open(adapter("bad_version 2"), kTwo, {}); }) ==
          ErrorCode::handshake_mismatch);
  }
  SUBCASE("invalid replies") {
    auto bad = ExternalClassifier::open(adapter("bad_sum 2"), kTwo, {});
    CHECK(error_of([&] { bad->classify(img); }) == ErrorCode::invalid_distribution);
    auto wrong = ExternalClassifier::open(adapter("wrong_id 2"), kTwo, {});
    CHECK(error_of([&] { wrong->classify(img); }) == ErrorCode::malformed_response);
    ExternalOptions quick;
    quick.timeout = 300ms;
    auto silent = ExternalClassifier::open(adapter("silent 2"), kTwo, {}, quick);
    CHECK(error_of([&] { silent->classify(img); }) == ErrorCode::protocol_timeout);
  }
  SUBCASE("missing executable") {
    ExternalOptions quick;
    quick.timeout = 2000ms;
    CHECK_THROWS_AS(ExternalClassifier::open("/nonexistent/adapter", kTwo, {}, quick), Error);
  }
}

TEST_CASE("serial external classifier drives the engine deterministically") {
  auto ext = ExternalClassifier::open(adapter("mean 2 5 5 1"), kTwo, {});
  const FunctionClassifier local(kTwo, {5, 5, 1}, [](const Image& im) {
    double s = 0;
    for (double v : im.pixels()) s += static_cast<float>(v);
    const double m = s / im.size();
    return ClassDistribution{{1.0 - m, m}};
  });
  Rng rng(4);
  Image img(5, 5, 1);
  for (auto& v : img.pixels()) v = uniform01(rng);
  WindowConfig cfg;
  cfg.win_size = 2;
  cfg.samples_per_roi = 3;
  cfg.laplace_k = 2;
  cfg.seed = 17;
  const auto sampler = make_discrete_sampler({0.0, 0.25, 1.0}, {0.5, 0.25, 0.25});
  ExecutionOptions exec;
  exec.workers = 4;
  exec.batch_size = 5;
  const auto a = analyze(*ext, img, 1, cfg, sampler, exec);
  const auto b = analyze(local, img, 1, cfg, sampler, exec);
  REQUIRE(a.map.we_sum.size() == b.map.we_sum.size());
  for (std::size_t i = 0; i < a.map.we_sum.size(); ++i) CHECK(a.map.we_sum[i] == doctest::Approx(b.map.we_sum[i]).epsilon(1e-9));
  CHECK(a.map.visit_count == b.map.visit_count);
}

TEST_CASE("conformance runner") {
  const auto good = run_conformance(adapter("constant 2"), 1, 100);
  for (const auto& c : good.checks) CHECK_MESSAGE(c.passed, c.name << ": " << c.detail);
  CHECK(good.checks.size() == 5);
  CHECK(good.passed());

  const auto no_err = run_conformance(adapter("no_error 2"), 1, 5);
  CHECK_FALSE(no_err.passed());
  const auto bad_exit = run_conformance(adapter("exit3 2"), 1, 5);
  CHECK_FALSE(bad_exit.passed());
  CHECK_FALSE(bad_exit.checks.back().passed);
  const auto bad_sum = run_conformance(adapter("bad_sum 2"), 1, 5);
  CHECK_FALSE(bad_sum.passed());
}
