#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pda/classifier.hpp"

namespace pda {

/// Child process whose stdin/stdout are one end of a socket pair.
/// Closing or destroying it kills the child if it is still running.
class Subprocess {
 public:
  explicit Subprocess(const std::string& shell_command);
  ~Subprocess();
  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  void write_line(const std::string& line);
  /// Next newline-terminated line, without the newline. Throws
  /// protocol_timeout or external_failure (EOF).
  std::string read_line(std::chrono::milliseconds timeout);
  /// Closes our end and waits for exit; returns the exit status, or nullopt
  /// if the child had to be killed after `timeout`.
  std::optional<int> wait(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  int pid_ = -1;
  bool reaped_ = false;
  int status_ = 0;
  std::string buffer_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Little-endian float32 pixel buffer, row-major, channel-interleaved, base64.
std::string encode_pixel_payload(const Image& image);
Image decode_pixel_payload(std::string_view payload, const InputDims& dims);

inline constexpr int kProtocolVersion = 1;

struct ExternalOptions {
  std::chrono::milliseconds timeout{30000};
  std::size_t max_batch = 64;  // images per classify message
};

/// Classifier living in a child process that speaks the line-delimited JSON
/// protocol. Calls are serialized internally; concurrent() reflects what the
/// adapter advertised.
class ExternalClassifier final : public Classifier {
 public:
  /// Launches `command`, performs the handshake and checks K against
  /// `catalog` and the advertised shape against `dims` (zero fields adopt
  /// the adapter's values).
  static std::shared_ptr<ExternalClassifier> open(const std::string& command, const ClassCatalog& catalog,
                                                  InputDims dims, ExternalOptions options = {});
  ~ExternalClassifier() override;

  ClassifierKind kind() const noexcept override { return ClassifierKind::external; }
  bool concurrent() const noexcept override { return concurrent_; }
  const std::vector<std::string>& advertised_classes() const noexcept { return advertised_classes_; }

  /// Sends shutdown and waits; returns the child's exit status.
  std::optional<int> shutdown();

 protected:
  std::vector<ClassDistribution> evaluate(std::span<const Image> images) const override;

 private:
  ExternalClassifier(ClassCatalog catalog, InputDims dims, ExternalOptions options, std::unique_ptr<Subprocess> proc);

  ExternalOptions options_;
  mutable std::mutex mutex_;
  mutable std::unique_ptr<Subprocess> proc_;
  mutable std::uint64_t next_id_ = 1;
  bool concurrent_ = false;
  std::vector<std::string> advertised_classes_;
};

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ConformanceReport {
  std::vector<ConformanceCheck> checks;
  bool passed() const;
};

/// Drives an adapter through handshake, `round_trips` random classify
/// requests, a malformed request that must yield an error reply, and a
/// shutdown that must exit 0.
ConformanceReport run_conformance(const std::string& command, std::uint64_t seed = 0, int round_trips = 100,
                                  ExternalOptions options = {});

}  // namespace pda
