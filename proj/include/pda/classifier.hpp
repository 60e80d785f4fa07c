#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pda/dataset.hpp"
#include "pda/image.hpp"

namespace pda {

/// Length-K probability vector p(.|X).
struct ClassDistribution {
  std::vector<double> probs;

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  std::size_t argmax() const;
  friend bool operator==(const ClassDistribution&, const ClassDistribution&) = default;
};

/// Throws invalid_distribution unless every entry is finite, in [0,1], and
/// the entries sum to 1 within `tolerance`.
void validate_distribution(const ClassDistribution& d, double tolerance);

ClassDistribution uniform_distribution(int k);

/// Softmax with max-subtraction; finite logits never produce NaN or Inf.
ClassDistribution softmax(std::span<const double> logits);

/// Expected input shape; a zero field accepts any value.
struct InputDims {
  int width = 0;
  int height = 0;
  int channels = 0;

  bool accepts(const Image& image) const noexcept;
  std::string to_string() const;
  friend bool operator==(const InputDims&, const InputDims&) = default;
};

enum class ClassifierKind { constant, linear_softmax, external, function };

/// Black-box classifier f(X) = p(.|X).
///
/// classify and classify_batch validate input shapes and output
/// distributions here; subclasses only implement evaluate(). A classifier
/// that reports concurrent() == false must not be called from more than one
/// thread at a time; the engine honors this.
class Classifier {
 public:
  Classifier(ClassCatalog catalog, InputDims dims) : catalog_(std::move(catalog)), dims_(dims) {}
  virtual ~Classifier() = default;
  Classifier(const Classifier&) = delete;
  Classifier& operator=(const Classifier&) = delete;

  virtual ClassifierKind kind() const noexcept = 0;
  virtual bool concurrent() const noexcept { return true; }

  const ClassCatalog& catalog() const noexcept { return catalog_; }
  int num_classes() const noexcept { return catalog_.size(); }
  const InputDims& input_dims() const noexcept { return dims_; }

  ClassDistribution classify(const Image& image) const;
  std::vector<ClassDistribution> classify_batch(std::span<const Image> images) const;

 protected:
  virtual std::vector<ClassDistribution> evaluate(std::span<const Image> images) const = 0;
  void set_input_dims(InputDims dims) { dims_ = dims; }

 private:
  ClassCatalog catalog_;
  InputDims dims_;
};

class ConstantClassifier final : public Classifier {
 public:
  ConstantClassifier(ClassCatalog catalog, ClassDistribution output, InputDims dims = {});
  ClassifierKind kind() const noexcept override { return ClassifierKind::constant; }

 protected:
  std::vector<ClassDistribution> evaluate(std::span<const Image> images) const override;

 private:
  ClassDistribution output_;
};

/// K x D weights plus K biases over the flattened pixel vector.
struct LinearSoftmaxWeights {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;

  int num_classes() const noexcept { return static_cast<int>(weights.rows()); }
  int input_size() const noexcept { return static_cast<int>(weights.cols()); }
};

/// `LSW1 K D` then K rows of D weights followed by the bias.
void write_lsw(const LinearSoftmaxWeights& w, const std::filesystem::path& path);
LinearSoftmaxWeights read_lsw(const std::filesystem::path& path);
std::string format_lsw(const LinearSoftmaxWeights& w);
LinearSoftmaxWeights parse_lsw(const std::string& text);

class LinearSoftmaxClassifier final : public Classifier {
 public:
  LinearSoftmaxClassifier(ClassCatalog catalog, LinearSoftmaxWeights weights, InputDims dims);
  ClassifierKind kind() const noexcept override { return ClassifierKind::linear_softmax; }
  const LinearSoftmaxWeights& weights() const noexcept { return weights_; }

 protected:
  std::vector<ClassDistribution> evaluate(std::span<const Image> images) const override;

 private:
  LinearSoftmaxWeights weights_;
};

/// Wraps a callable; handy for tests and for embedding models in-process.
class FunctionClassifier final : public Classifier {
 public:
  using Fn = std::function<ClassDistribution(const Image&)>;
  FunctionClassifier(ClassCatalog catalog, InputDims dims, Fn fn, bool concurrent = true);
  ClassifierKind kind() const noexcept override { return ClassifierKind::function; }
  bool concurrent() const noexcept override { return concurrent_; }

 protected:
  std::vector<ClassDistribution> evaluate(std::span<const Image> images) const override;

 private:
  Fn fn_;
  bool concurrent_;
};

using ClassifierHandle = std::shared_ptr<const Classifier>;

// ---------------------------------------------------------------------------
// Baseline trainer

struct TrainOptions {
  int epochs = 300;
  double learning_rate = 0.05;
  double l2 = 1e-3;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;  // 0 = full batch
};

struct TrainResult {
  LinearSoftmaxWeights weights;
  std::vector<double> loss_history;  // loss before each epoch's update, then the final loss
};

struct LossAndGradient {
  double loss = 0.0;
  Eigen::MatrixXd grad_weights;
  Eigen::VectorXd grad_bias;
};

/// Mean cross-entropy over the columns of `features` (D x n) plus
/// l2 * ||W||^2 / 2, with its analytic gradient.
LossAndGradient softmax_cross_entropy(const LinearSoftmaxWeights& w, const Eigen::MatrixXd& features,
                                      std::span<const int> labels, double l2);

/// Flattens every image of `ds` into a D x n matrix; all images must share one shape.
Eigen::MatrixXd feature_matrix(const LabeledDataset& ds, InputDims* dims_out = nullptr);

/// Gradient descent on cross-entropy from zero weights. Throws
/// non_finite_loss naming the epoch if the loss diverges.
TrainResult train_linear_softmax(const LabeledDataset& train, const TrainOptions& options);

/// Fraction of records whose argmax prediction equals the label.
double accuracy(const Classifier& classifier, const LabeledDataset& ds);

}  // namespace pda
