#include "pda/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "pda/error.hpp"
#include "pda/rng.hpp"

namespace pda {

std::size_t ClassDistribution::argmax() const {
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

void validate_distribution(const ClassDistribution& d, double tolerance) {
  double sum = 0.0;
  for (double p : d.probs) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw Error(ErrorCode::invalid_distribution, "probability entry outside [0,1]: " + std::to_string(p));
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > tolerance) {
    std::ostringstream msg;
    msg << "probabilities sum to " << std::setprecision(17) << sum << ", not 1";
    throw Error(ErrorCode::invalid_distribution, msg.str());
  }
}

ClassDistribution uniform_distribution(int k) {
  return ClassDistribution{std::vector<double>(static_cast<std::size_t>(k), 1.0 / k)};
}

ClassDistribution softmax(std::span<const double> logits) {
  ClassDistribution out{std::vector<double>(logits.size())};
  if (logits.empty()) return out;
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.probs[i] = std::exp(logits[i] - top);
    sum += out.probs[i];
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

bool InputDims::accepts(const Image& image) const noexcept {
  return (width == 0 || width == image.width()) && (height == 0 || height == image.height()) &&
         (channels == 0 || channels == image.channels());
}

std::string InputDims::to_string() const {
  return std::to_string(width) + "x" + std::to_string(height) + "x" + std::to_string(channels);
}

ClassDistribution Classifier::classify(const Image& image) const {
  return classify_batch(std::span<const Image>(&image, 1)).front();
}

std::vector<ClassDistribution> Classifier::classify_batch(std::span<const Image> images) const {
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!dims_.accepts(images[i])) {
      throw Error(ErrorCode::dimension_mismatch, "image " + std::to_string(i) + " is " +
                                                     std::to_string(images[i].width()) + "x" +
                                                     std::to_string(images[i].height()) + "x" +
                                                     std::to_string(images[i].channels()) +
                                                     ", classifier expects " + dims_.to_string());
    }
  }
  if (images.empty()) return {};
  auto out = evaluate(images);
  if (out.size() != images.size()) {
    throw Error(ErrorCode::malformed_response, "classifier returned " + std::to_string(out.size()) +
                                                   " distributions for " + std::to_string(images.size()) + " images");
  }
  for (const auto& d : out) {
    if (static_cast<int>(d.size()) != num_classes()) {
      throw Error(ErrorCode::invalid_distribution, "distribution length does not match the class catalog");
    }
  }
  return out;
}

ConstantClassifier::ConstantClassifier(ClassCatalog catalog, ClassDistribution output, InputDims dims)
    : Classifier(std::move(catalog), dims), output_(std::move(output)) {
  if (static_cast<int>(output_.size()) != num_classes()) {
    throw Error(ErrorCode::invalid_distribution, "constant output length does not match the class catalog");
  }
  validate_distribution(output_, 1e-9);
}

std::vector<ClassDistribution> ConstantClassifier::evaluate(std::span<const Image> images) const {
  return std::vector<ClassDistribution>(images.size(), output_);
}

LinearSoftmaxClassifier::LinearSoftmaxClassifier(ClassCatalog catalog, LinearSoftmaxWeights weights, InputDims dims)
    : Classifier(std::move(catalog), dims), weights_(std::move(weights)) {
  if (weights_.num_classes() != num_classes() || weights_.bias.size() != weights_.weights.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "weight matrix rows do not match the class catalog");
  }
  if (dims.width * dims.height * dims.channels != weights_.input_size()) {
    throw Error(ErrorCode::dimension_mismatch, "weight matrix has " + std::to_string(weights_.input_size()) +
                                                   " columns but input dims " + dims.to_string() + " give " +
                                                   std::to_string(dims.width * dims.height * dims.channels));
  }
  if (!weights_.weights.allFinite() || !weights_.bias.allFinite()) {
    throw Error(ErrorCode::invalid_argument, "linear softmax weights must be finite");
  }
}

std::vector<ClassDistribution> LinearSoftmaxClassifier::evaluate(std::span<const Image> images) const {
  std::vector<ClassDistribution> out;
  out.reserve(images.size());
  Eigen::VectorXd logits(weights_.num_classes());
  for (const auto& img : images) {
    Eigen::Map<const Eigen::VectorXd> x(img.pixels().data(), static_cast<Eigen::Index>(img.size()));
    logits.noalias() = weights_.weights * x;
    logits += weights_.bias;
    out.push_back(softmax(std::span<const double>(logits.data(), static_cast<std::size_t>(logits.size()))));
  }
  return out;
}

FunctionClassifier::FunctionClassifier(ClassCatalog catalog, InputDims dims, Fn fn, bool concurrent)
    : Classifier(std::move(catalog), dims), fn_(std::move(fn)), concurrent_(concurrent) {}

std::vector<ClassDistribution> FunctionClassifier::evaluate(std::span<const Image> images) const {
  std::vector<ClassDistribution> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    out.push_back(fn_(img));
    validate_distribution(out.back(), 1e-9);
  }
  return out;
}

// ---------------------------------------------------------------------------
// LSW1 weight files

std::string format_lsw(const LinearSoftmaxWeights& w) {
  std::ostringstream out;
  out << "LSW1 " << w.num_classes() << ' ' << w.input_size() << '\n' << std::setprecision(17);
  for (int k = 0; k < w.num_classes(); ++k) {
    for (int d = 0; d < w.input_size(); ++d) out << w.weights(k, d) << ' ';
    out << w.bias(k) << '\n';
  }
  return out.str();
}

LinearSoftmaxWeights parse_lsw(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  long k = 0, d = 0;
  if (!(in >> magic >> k >> d) || magic != "LSW1" || k < 2 || d < 1) {
    throw Error(ErrorCode::malformed_header, "expected 'LSW1 K D' header");
  }
  LinearSoftmaxWeights w{Eigen::MatrixXd(k, d), Eigen::VectorXd(k)};
  for (long r = 0; r < k; ++r) {
    for (long c = 0; c < d; ++c)
      if (!(in >> w.weights(r, c))) throw Error(ErrorCode::truncated_payload, "LSW1 file ends inside the weights");
    if (!(in >> w.bias(r))) throw Error(ErrorCode::truncated_payload, "LSW1 file ends inside the weights");
  }
  return w;
}

void write_lsw(const LinearSoftmaxWeights& w, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << format_lsw(w);
}

LinearSoftmaxWeights read_lsw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_lsw(buf.str());
}

// ---------------------------------------------------------------------------
// Trainer

LossAndGradient softmax_cross_entropy(const LinearSoftmaxWeights& w, const Eigen::MatrixXd& features,
                                      std::span<const int> labels, double l2) {
  const auto n = features.cols();
  if (n == 0 || static_cast<std::size_t>(n) != labels.size()) {
    throw Error(ErrorCode::invalid_argument, "feature columns and labels disagree");
  }
  Eigen::MatrixXd logits = w.weights * features;
  logits.colwise() += w.bias;

  double loss = 0.0;
  Eigen::MatrixXd residual(logits.rows(), n);  // softmax - onehot
  for (Eigen::Index i = 0; i < n; ++i) {
    const double top = logits.col(i).maxCoeff();
    const Eigen::VectorXd shifted = logits.col(i).array() - top;
    const double log_norm = std::log(shifted.array().exp().sum());
    residual.col(i) = (shifted.array() - log_norm).exp();
    loss -= shifted(labels[i]) - log_norm;
    residual(labels[i], i) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  LossAndGradient out;
  out.loss = loss * inv_n + 0.5 * l2 * w.weights.squaredNorm();
  out.grad_weights = residual * features.transpose() * inv_n + l2 * w.weights;
  out.grad_bias = residual.rowwise().sum() * inv_n;
  return out;
}

Eigen::MatrixXd feature_matrix(const LabeledDataset& ds, InputDims* dims_out) {
  if (ds.empty()) throw Error(ErrorCode::invalid_argument, "dataset is empty");
  Eigen::MatrixXd x;
  InputDims dims;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Image img = ds.load(i);
    if (i == 0) {
      dims = InputDims{img.width(), img.height(), img.channels()};
      x.resize(static_cast<Eigen::Index>(img.size()), static_cast<Eigen::Index>(ds.size()));
    } else if (!(InputDims{img.width(), img.height(), img.channels()} == dims)) {
      throw Error(ErrorCode::dimension_mismatch, "record '" + ds[i].source_id + "' differs in shape from the first image");
    }
    x.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(img.pixels().data(), x.rows());
  }
  if (dims_out) *dims_out = dims;
  return x;
}

TrainResult train_linear_softmax(const LabeledDataset& train, const TrainOptions& options) {
  if (options.epochs < 0 || !(options.learning_rate > 0.0) || options.l2 < 0.0) {
    throw Error(ErrorCode::invalid_argument, "epochs >= 0, learning_rate > 0 and l2 >= 0 are required");
  }
  const Eigen::MatrixXd x = feature_matrix(train);
  std::vector<int> labels;
  labels.reserve(train.size());
  for (const auto& r : train.records()) labels.push_back(r.label);

  const int k = train.catalog().size();
  TrainResult result;
  result.weights = LinearSoftmaxWeights{Eigen::MatrixXd::Zero(k, x.rows()), Eigen::VectorXd::Zero(k)};
  auto& w = result.weights;

  const std::size_t n = train.size();
  const bool minibatch = options.batch_size > 0 && options.batch_size < n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Eigen::MatrixXd batch_x;
  std::vector<int> batch_labels;

  auto check = [](double loss, int epoch) {
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::non_finite_loss,
                  "loss became non-finite at epoch " + std::to_string(epoch) + " (learning rate too high?)");
    }
  };

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (!minibatch) {
      const auto lg = softmax_cross_entropy(w, x, labels, options.l2);
      check(lg.loss, epoch);
      result.loss_history.push_back(lg.loss);
      w.weights -= options.learning_rate * lg.grad_weights;
      w.bias -= options.learning_rate * lg.grad_bias;
      continue;
    }
    Rng rng = make_substream(options.seed, streams::train, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t len = std::min(options.batch_size, n - start);
      batch_x.resize(x.rows(), static_cast<Eigen::Index>(len));
      batch_labels.resize(len);
      for (std::size_t j = 0; j < len; ++j) {
        batch_x.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(order[start + j]));
        batch_labels[j] = labels[order[start + j]];
      }
      const auto lg = softmax_cross_entropy(w, batch_x, batch_labels, options.l2);
      check(lg.loss, epoch);
      epoch_loss += lg.loss * static_cast<double>(len) / static_cast<double>(n);
      w.weights -= options.learning_rate * lg.grad_weights;
      w.bias -= options.learning_rate * lg.grad_bias;
    }
    result.loss_history.push_back(epoch_loss);
  }
  const double final_loss = softmax_cross_entropy(w, x, labels, options.l2).loss;
  check(final_loss, options.epochs);
  result.loss_history.push_back(final_loss);
  return result;
}

double accuracy(const Classifier& classifier, const LabeledDataset& ds) {
  if (ds.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (static_cast<int>(classifier.classify(ds.load(i)).argmax()) == ds[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace pda
