#include "pda/external.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <json.hpp>
#include <thread>

#include "pda/error.hpp"
#include "pda/rng.hpp"

namespace pda {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// Subprocess

Subprocess::Subprocess(const std::string& shell_command) {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw Error(ErrorCode::external_failure, std::string("socketpair failed: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw Error(ErrorCode::external_failure, std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", shell_command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(sv[1]);
  fd_ = sv[0];
  pid_ = pid;
}

Subprocess::~Subprocess() {
  if (fd_ >= 0) ::close(fd_);
  if (pid_ > 0 && !reaped_) {
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status_, 0);
  }
}

void Subprocess::write_line(const std::string& line) {
  if (fd_ < 0) throw Error(ErrorCode::external_failure, "adapter connection is closed");
  std::string data = line;
  data.push_back('\n');
  std::size_t sent = 0;
  while (sent < data.size()) {
    const auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::external_failure, std::string("write to adapter failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::string Subprocess::read_line(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  std::array<char, 65536> chunk;
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) throw Error(ErrorCode::protocol_timeout, "adapter did not reply within the timeout");
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::external_failure, std::string("poll failed: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    const auto n = ::read(fd_, chunk.data(), chunk.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::external_failure, std::string("read from adapter failed: ") + std::strerror(errno));
    }
    if (n == 0) throw Error(ErrorCode::external_failure, "adapter closed its output");
    buffer_.append(chunk.data(), static_cast<std::size_t>(n));
  }
}

std::optional<int> Subprocess::wait(std::chrono::milliseconds timeout) {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  if (reaped_) return WIFEXITED(status_) ? std::optional<int>(WEXITSTATUS(status_)) : std::nullopt;
  const auto deadline = Clock::now() + timeout;
  while (true) {
    const pid_t r = ::waitpid(pid_, &status_, WNOHANG);
    if (r == pid_) {
      reaped_ = true;
      return WIFEXITED(status_) ? std::optional<int>(WEXITSTATUS(status_)) : std::nullopt;
    }
    if (Clock::now() >= deadline) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status_, 0);
      reaped_ = true;
      return std::nullopt;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

// ---------------------------------------------------------------------------
// Payload encoding

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::parse_error, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        v[j] = 0;
        ++pad;
      } else if (pad > 0 || (v[j] = b64_value(c)) < 0) {
        throw Error(ErrorCode::parse_error, "invalid base64 character");
      }
    }
    const std::uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(w >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(w >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(w));
  }
  return out;
}

std::string encode_pixel_payload(const Image& image) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(image.size() * 4);
  for (double v : image.pixels()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int s = 0; s < 32; s += 8) bytes.push_back(static_cast<std::uint8_t>(bits >> s));
  }
  return base64_encode(bytes);
}

Image decode_pixel_payload(std::string_view payload, const InputDims& dims) {
  const auto bytes = base64_decode(payload);
  const std::size_t count = static_cast<std::size_t>(dims.width) * dims.height * dims.channels;
  if (bytes.size() != count * 4) {
    throw Error(ErrorCode::dimension_mismatch, "pixel payload has " + std::to_string(bytes.size()) +
                                                   " bytes, expected " + std::to_string(count * 4));
  }
  std::vector<double> pixels(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    pixels[i] = std::bit_cast<float>(bits);
  }
  return Image(dims.width, dims.height, dims.channels, std::move(pixels));
}

// ---------------------------------------------------------------------------
// Protocol helpers

namespace {

json parse_reply(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw Error(ErrorCode::malformed_response, "adapter reply is not a JSON object with a type: " + line.substr(0, 200));
  }
  return j;
}

struct Hello {
  std::vector<std::string> classes;
  InputDims dims;
  bool concurrent = false;
};

Hello handshake(Subprocess& proc, std::chrono::milliseconds timeout) {
  proc.write_line(json{{"type", "hello"}, {"version", kProtocolVersion}}.dump());
  const json j = parse_reply(proc.read_line(timeout));
  if (j["type"] != "hello") throw Error(ErrorCode::handshake_mismatch, "expected a hello reply");
  if (!j.contains("version") || j["version"] != kProtocolVersion) {
    throw Error(ErrorCode::handshake_mismatch, "adapter speaks an unsupported protocol version");
  }
  Hello h;
  try {
    h.classes = j.at("classes").get<std::vector<std::string>>();
    h.dims = InputDims{j.at("width").get<int>(), j.at("height").get<int>(), j.at("channels").get<int>()};
    h.concurrent = j.value("concurrent", false);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("hello reply is missing fields: ") + e.what());
  }
  if (h.dims.width < 1 || h.dims.height < 1 || (h.dims.channels != 1 && h.dims.channels != 3)) {
    throw Error(ErrorCode::handshake_mismatch, "adapter advertised invalid input dimensions " + h.dims.to_string());
  }
  return h;
}

/// Validates one reply row and renormalizes it when within 1e-6 of summing to 1.
ClassDistribution checked_distribution(const json& row, int k) {
  if (!row.is_array() || static_cast<int>(row.size()) != k) {
    throw Error(ErrorCode::invalid_distribution, "reply distribution does not have " + std::to_string(k) + " entries");
  }
  ClassDistribution d;
  double sum = 0.0;
  for (const auto& v : row) {
    if (!v.is_number()) throw Error(ErrorCode::malformed_response, "probability is not a number");
    const double p = v.get<double>();
    if (!std::isfinite(p) || p < 0.0) {
      throw Error(ErrorCode::invalid_distribution, "negative or non-finite probability " + std::to_string(p));
    }
    d.probs.push_back(p);
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw Error(ErrorCode::invalid_distribution, "reply probabilities sum to " + std::to_string(sum));
  }
  for (double& p : d.probs) p /= sum;
  return d;
}

std::vector<ClassDistribution> read_result(Subprocess& proc, std::uint64_t id, std::size_t count, int k,
                                           std::chrono::milliseconds timeout) {
  const json j = parse_reply(proc.read_line(timeout));
  if (j["type"] == "error") {
    throw Error(ErrorCode::external_failure, "adapter error for request " + std::to_string(id) + ": " +
                                                 j.value("message", std::string("(no message)")));
  }
  if (j["type"] != "result") throw Error(ErrorCode::malformed_response, "expected a result reply");
  if (!j.contains("id") || !j["id"].is_number_integer() || j["id"].get<std::uint64_t>() != id) {
    throw Error(ErrorCode::malformed_response, "result id does not match request " + std::to_string(id));
  }
  if (!j.contains("probs") || !j["probs"].is_array() || j["probs"].size() != count) {
    throw Error(ErrorCode::malformed_response, "result does not carry one distribution per image");
  }
  std::vector<ClassDistribution> out;
  out.reserve(count);
  for (const auto& row : j["probs"]) out.push_back(checked_distribution(row, k));
  return out;
}

std::string classify_request(std::uint64_t id, std::span<const Image> images) {
  json req{{"type", "classify"}, {"id", id}};
  json arr = json::array();
  for (const auto& img : images) arr.push_back(encode_pixel_payload(img));
  req["images"] = std::move(arr);
  return req.dump();
}

}  // namespace

// ---------------------------------------------------------------------------
// ExternalClassifier

ExternalClassifier::ExternalClassifier(ClassCatalog catalog, InputDims dims, ExternalOptions options,
                                       std::unique_ptr<Subprocess> proc)
    : Classifier(std::move(catalog), dims), options_(options), proc_(std::move(proc)) {}

std::shared_ptr<ExternalClassifier> ExternalClassifier::open(const std::string& command, const ClassCatalog& catalog,
                                                             InputDims dims, ExternalOptions options) {
  auto proc = std::make_unique<Subprocess>(command);
  const Hello hello = handshake(*proc, options.timeout);
  if (static_cast<int>(hello.classes.size()) != catalog.size()) {
    throw Error(ErrorCode::handshake_mismatch, "adapter advertises K=" + std::to_string(hello.classes.size()) +
                                                   " but the catalog has K=" + std::to_string(catalog.size()));
  }
  auto field_ok = [](int want, int got) { return want == 0 || want == got; };
  if (!field_ok(dims.width, hello.dims.width) || !field_ok(dims.height, hello.dims.height) ||
      !field_ok(dims.channels, hello.dims.channels)) {
    throw Error(ErrorCode::handshake_mismatch,
                "adapter expects " + hello.dims.to_string() + " input, caller requested " + dims.to_string());
  }
  std::shared_ptr<ExternalClassifier> handle(
      new ExternalClassifier(catalog, hello.dims, options, std::move(proc)));
  handle->concurrent_ = hello.concurrent;
  handle->advertised_classes_ = hello.classes;
  return handle;
}

ExternalClassifier::~ExternalClassifier() {
  try {
    shutdown();
  } catch (...) {
  }
}

std::optional<int> ExternalClassifier::shutdown() {
  std::lock_guard lock(mutex_);
  if (!proc_) return std::nullopt;
  try {
    proc_->write_line(json{{"type", "shutdown"}}.dump());
  } catch (const Error&) {
  }
  auto status = proc_->wait(options_.timeout);
  proc_.reset();
  return status;
}

std::vector<ClassDistribution> ExternalClassifier::evaluate(std::span<const Image> images) const {
  std::lock_guard lock(mutex_);
  if (!proc_) throw Error(ErrorCode::external_failure, "external classifier has been shut down");
  std::vector<ClassDistribution> out;
  out.reserve(images.size());
  const std::size_t step = std::max<std::size_t>(1, options_.max_batch);
  for (std::size_t start = 0; start < images.size(); start += step) {
    const auto chunk = images.subspan(start, std::min(step, images.size() - start));
    const std::uint64_t id = next_id_++;
    proc_->write_line(classify_request(id, chunk));
    auto part = read_result(*proc_, id, chunk.size(), num_classes(), options_.timeout);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conformance

bool ConformanceReport::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

ConformanceReport run_conformance(const std::string& command, std::uint64_t seed, int round_trips,
                                  ExternalOptions options) {
  ConformanceReport report;
  auto fail_rest = [&](std::initializer_list<const char*> names) {
    for (const char* n : names) report.checks.push_back({n, false, "skipped after an earlier failure"});
  };

  std::unique_ptr<Subprocess> proc;
  Hello hello;
  try {
    proc = std::make_unique<Subprocess>(command);
    hello = handshake(*proc, options.timeout);
    report.checks.push_back({"handshake", true,
                             "K=" + std::to_string(hello.classes.size()) + " dims=" + hello.dims.to_string() +
                                 (hello.concurrent ? " concurrent" : " serial")});
  } catch (const Error& e) {
    report.checks.push_back({"handshake", false, e.what()});
    fail_rest({"classify_round_trips", "error_reply", "recovers_after_error", "shutdown"});
    return report;
  }
  const int k = static_cast<int>(hello.classes.size());
  Rng rng = make_substream(seed, 0xC0FFEE);
  std::uint64_t id = 1;

  auto random_batch = [&](std::size_t n) {
    std::vector<Image> batch;
    for (std::size_t i = 0; i < n; ++i) {
      Image img(hello.dims.width, hello.dims.height, hello.dims.channels);
      for (double& v : img.pixels()) v = uniform01(rng);
      batch.push_back(std::move(img));
    }
    return batch;
  };

  try {
    for (int t = 0; t < round_trips; ++t) {
      const auto batch = random_batch(1 + uniform_index(rng, 3));
      proc->write_line(classify_request(id, batch));
      read_result(*proc, id, batch.size(), k, options.timeout);
      ++id;
    }
    report.checks.push_back({"classify_round_trips", true, std::to_string(round_trips) + " requests validated"});
  } catch (const Error& e) {
    report.checks.push_back({"classify_round_trips", false, "request " + std::to_string(id) + ": " + e.what()});
    fail_rest({"error_reply", "recovers_after_error", "shutdown"});
    return report;
  }

  try {
    const std::uint64_t bad_id = id++;
    proc->write_line(json{{"type", "classify"}, {"id", bad_id}, {"images", json::array({"%%not-base64%%"})}}.dump());
    const json j = parse_reply(proc->read_line(options.timeout));
    const bool ok = j["type"] == "error" && j.contains("id") && j["id"].is_number_integer() &&
                    j["id"].get<std::uint64_t>() == bad_id;
    report.checks.push_back({"error_reply", ok, ok ? "malformed request answered with an error reply"
                                                   : "expected {type: error, id: " + std::to_string(bad_id) + "}"});
  } catch (const Error& e) {
    report.checks.push_back({"error_reply", false, e.what()});
  }

  try {
    const auto batch = random_batch(1);
    proc->write_line(classify_request(id, batch));
    read_result(*proc, id, 1, k, options.timeout);
    ++id;
    report.checks.push_back({"recovers_after_error", true, "adapter kept serving"});
  } catch (const Error& e) {
    report.checks.push_back({"recovers_after_error", false, e.what()});
  }

  try {
    proc->write_line(json{{"type", "shutdown"}}.dump());
  } catch (const Error&) {
  }
  const auto status = proc->wait(options.timeout);
  const bool clean = status && *status == 0;
  report.checks.push_back({"shutdown", clean,
                           status ? "exit status " + std::to_string(*status) : "adapter did not exit in time"});
  return report;
}

}  // namespace pda
