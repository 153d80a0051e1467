#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hcl/annotation.hpp"
#include "hcl/domain.hpp"
#include "hcl/estimator.hpp"

namespace hcl {

struct GeneratorConfig {
  int classes = 10;
  int dim = 32;
  std::size_t n_train = 5000;
  std::size_t n_test = 1000;
  // Minimum pairwise distance between class means; means sit on a sphere of
  // this radius.
  double separation = 4.0;
  double sigma = 0.5;  // isotropic within-class noise
  std::uint64_t seed = 42;
  // Replace the class-mean prototypes with unrelated random directions.
  bool random_prototypes = false;
  int max_retries = 10000;

  void validate() const;
};

struct SimulatedWorld {
  Dataset train;
  Dataset test;
  PrototypeBank prototypes;
  Eigen::MatrixXd class_means;  // k x d
};

// Balanced classes, Gaussian features rounded to float32 so that they survive
// the binary feature format unchanged.
SimulatedWorld generate_dataset(const GeneratorConfig& config);

// When it fires (probability rate[y] for true class y) every annotator sharing
// the channel emits the same wrong label, drawn from wrong_label.row(y).
struct SharedErrorChannel {
  std::uint64_t seed = 0;
  std::vector<double> rate;
  Eigen::MatrixXd wrong_label;  // k x k, row-stochastic, zero diagonal
};

struct AnnotatorModel {
  std::string id;
  Eigen::MatrixXd confusion;  // C[y][y'] = P(predict y' | true y), own channel
  std::uint64_t seed = 0;
  std::optional<SharedErrorChannel> shared;

  int classes() const noexcept { return static_cast<int>(confusion.rows()); }
  void validate() const;
  // Overall confusion including the shared channel.
  Eigen::MatrixXd marginal_confusion() const;

  static AnnotatorModel identity(std::string id, int k, std::uint64_t seed);
  // accuracy on the diagonal, the rest spread uniformly.
  static AnnotatorModel uniform_noise(std::string id, int k, double accuracy,
                                      std::uint64_t seed);
  static AnnotatorModel per_class_accuracy(std::string id, std::span<const double> accuracy,
                                           std::uint64_t seed);
};

// One prediction per sample, keyed by (annotator seed, sample id).
std::vector<LabelId> annotate(std::span<const Sample> samples, const AnnotatorModel& annotator);
AnnotationSet annotate_all(std::span<const Sample> samples,
                           std::span<const AnnotatorModel> annotators);

struct CorrectorModel {
  double error_rate = 0.0;  // 0 is a perfect oracle
  std::uint64_t seed = 0;

  void validate() const;
};

// Ground truth with probability 1 - error_rate, else a uniform wrong label.
LabelId correct(const Sample& sample, const CorrectorModel& corrector, int classes);

struct CalibrationOptions {
  int classes = 10;
  std::uint64_t seed = 7;
  // Per-class accuracies follow scale * ramp, ramp running linearly from
  // ramp_low (class 0) to ramp_high (class k-1), clamped to [0, 1].
  double ramp_low = 0.5;
  double ramp_high = 1.5;
  std::vector<std::string> ids = {"vlm-a", "vlm-b"};
};

struct Calibration {
  std::pair<AnnotatorModel, AnnotatorModel> annotators;
  double accuracy_scale = 0.0;
  double shared_error_rate = 0.0;
  // Closed-form expectations for balanced classes.
  double expected_consistency = 0.0;
  double expected_ccp = 0.0;
};

// Finds a correlated annotator pair (shared wrong-label flips plus
// independent per-class noise) whose expected consistency rate and
// consistent-label accuracy equal the targets. Throws Error(Infeasible) when
// the family cannot reach them.
Calibration calibrate_pair(double consistency, double ccp,
                                const CalibrationOptions& options = {});

}  // namespace hcl
