#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hcl/annotation.hpp"
#include "hcl/domain.hpp"
#include "hcl/estimator.hpp"

namespace hcl {

enum class TargetRefresh { PerBatch, PerEpoch };
enum class InitScheme { Zero, ScaledUniform };

const char* to_string(TargetRefresh r) noexcept;
const char* to_string(InitScheme s) noexcept;
TargetRefresh target_refresh_from_string(std::string_view s);
InitScheme init_scheme_from_string(std::string_view s);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 5e-4;
  double weight_decay = 1e-4;
  double lr_decay_factor = 0.1;
  int lr_decay_every = 5;
  std::uint64_t seed = 42;
  double lambda = 1.0;
  double tau = 100.0;
  RiskWeighting risk_weighting = RiskWeighting::PartitionMean;
  TargetRefresh target_refresh = TargetRefresh::PerBatch;
  InitScheme init = InitScheme::Zero;
  double init_scale = 0.01;  // ScaledUniform: U(-s, s) / sqrt(d)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  // learning_rate * lr_decay_factor ^ floor(epoch / lr_decay_every), 0-indexed.
  double learning_rate_at(int epoch) const;
  BlendConfig blend() const { return {lambda, tau}; }
};

struct Gradient {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

// Decoupled weight decay Adam: theta <- theta (1 - lr wd), then the Adam step.
class AdamW {
 public:
  AdamW(int classes, Eigen::Index dim, const TrainConfig& config);

  void step(LinearModel& model, const Gradient& grad, double learning_rate);
  long steps() const noexcept { return t_; }

 private:
  double beta1_, beta2_, epsilon_, weight_decay_;
  long t_ = 0;
  Eigen::MatrixXd m_w_, v_w_;
  Eigen::VectorXd m_b_, v_b_;
};

// Mini-batch HCL objective. Rows flagged inconsistent carry a hard label;
// consistent rows use the conditional estimate p-hat, held constant for the
// gradient. Baselines use it with every row flagged inconsistent.
class HclObjective {
 public:
  // prototypes may be null when lambda is 0 or no row is consistent.
  HclObjective(const HclExamples& examples, const PrototypeBank* prototypes, BlendConfig blend,
               RiskWeighting weighting);

  const HclExamples& examples() const noexcept { return examples_; }

  // Fix p-hat for every consistent row at the given model.
  void freeze_targets(const LinearModel& model);
  void unfreeze_targets() { frozen_.reset(); }

  // Objective restricted to rows, each partition averaged over its own rows
  // in the batch (or over the whole batch for PriorWeighted).
  double evaluate(const LinearModel& model, std::span<const std::size_t> rows,
                  Gradient* grad = nullptr) const;

 private:
  const HclExamples& examples_;
  BlendConfig blend_;
  RiskWeighting weighting_;
  Eigen::MatrixXd similarity_;  // N x k, p_sim rows (consistent rows only)
  std::optional<Eigen::MatrixXd> frozen_;
};

struct EpochMetrics {
  int epoch = 0;
  double learning_rate = 0.0;
  double mean_objective = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
  double wall_seconds = 0.0;
};

struct TrainReport {
  std::string method;
  std::size_t train_size = 0;
  std::vector<EpochMetrics> epochs;
  double final_train_accuracy = 0.0;
  std::optional<double> final_test_accuracy;
  TrainConfig config;
  std::vector<std::string> warnings;

  // Equality of everything except wall-clock timings.
  bool same_metrics(const TrainReport& other) const;
};

struct TrainResult {
  LinearModel model;
  TrainReport report;
};

// Fraction of samples whose argmax logit (ties to the lowest index) equals
// the ground truth. Throws Error(MissingGroundTruth) if any sample lacks it.
double evaluate(const LinearModel& model, std::span<const Sample> samples);

// prototypes may be null only when lambda is 0.
TrainResult train_hcl(const Dataset& train, const AnnotationRun& run,
                      const PrototypeBank* prototypes, const TrainConfig& config,
                      const Dataset* test = nullptr);

TrainResult train_baseline(const Dataset& train, const TrainingView& view,
                           const TrainConfig& config, const Dataset* test = nullptr);

struct SweepRow {
  double lambda = 0.0;
  double final_train_accuracy = 0.0;
  std::optional<double> final_test_accuracy;
  TrainReport report;
};

std::vector<SweepRow> lambda_sweep(const Dataset& train, const AnnotationRun& run,
                                   const PrototypeBank* prototypes, const TrainConfig& config,
                                   std::span<const double> grid, const Dataset* test = nullptr);

}  // namespace hcl
