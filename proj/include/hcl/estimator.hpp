#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hcl/annotation.hpp"
#include "hcl/domain.hpp"

namespace hcl {

// The +/-1 target of class i: t_j = 2 delta_ij - 1.
Eigen::VectorXd loss_target(int k, LabelId i);

// (1/k) sum_j [1 - f_j (2 delta_ij - 1)]^2
double loss(const Eigen::Ref<const Eigen::VectorXd>& f, LabelId i);

// d loss / d f = (2/k) (f - t), using t_j^2 = 1.
Eigen::VectorXd loss_grad(const Eigen::Ref<const Eigen::VectorXd>& f, LabelId i);

// Softmax with max subtraction. Throws Error(NonFinite) on non-finite logits.
ProbVector p_model(const Eigen::Ref<const Eigen::VectorXd>& f);

// One prototype row per class (class text embeddings, or class means in
// simulation). Rows must be nonzero.
class PrototypeBank {
 public:
  explicit PrototypeBank(Eigen::MatrixXd rows);

  int classes() const noexcept { return static_cast<int>(rows_.rows()); }
  Eigen::Index dim() const noexcept { return rows_.cols(); }
  const Eigen::MatrixXd& rows() const noexcept { return rows_; }
  const Eigen::MatrixXd& unit_rows() const noexcept { return unit_; }

 private:
  Eigen::MatrixXd rows_;
  Eigen::MatrixXd unit_;
};

// softmax_i(tau * cos(x, q_i)). Zero feature vectors are rejected.
ProbVector p_similarity(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const PrototypeBank& prototypes, double tau);

struct BlendConfig {
  double lambda = 1.0;
  double tau = 100.0;

  void validate() const;
};

// lambda * p_sim + (1 - lambda) * p_mod
ProbVector blend(const ProbVector& p_sim, const ProbVector& p_mod, double lambda);

// Estimated P(y | Y, s=0, x) for one consistent sample.
ProbVector estimate_conditional(const LinearModel& model,
                                const Eigen::Ref<const Eigen::VectorXd>& x,
                                const PrototypeBank& prototypes, const BlendConfig& config);

enum class RiskWeighting {
  // 1/|D_H| and 1/|D_V| partition means added with equal weight.
  PartitionMean,
  // Both sums divided by |D_H| + |D_V|, i.e. partition means weighted by the
  // empirical P(s=1) and P(s=0).
  PriorWeighted,
};

const char* to_string(RiskWeighting w) noexcept;
RiskWeighting risk_weighting_from_string(std::string_view s);

// Dense view of an annotation run over a dataset, rows in dataset order.
struct HclExamples {
  Eigen::MatrixXd features;  // N x d
  std::vector<LabelId> labels;
  std::vector<std::uint8_t> inconsistent;
  int num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
};

// Requires a complete run covering the dataset.
HclExamples make_hcl_examples(const Dataset& dataset, const AnnotationRun& run);

struct RiskValue {
  double value = 0.0;
  double human_term = 0.0;      // mean of the D_H losses
  double consensus_term = 0.0;  // mean of the D_V expected losses
  std::size_t human_count = 0;
  std::size_t consensus_count = 0;
  std::vector<std::string> warnings;
};

// Empirical HCL risk with explicit conditional targets: targets[j] is used for
// every consistent row j and ignored for inconsistent rows. An empty
// partition drops its term and records a warning.
RiskValue hcl_risk_with_targets(const LinearModel& model, const HclExamples& examples,
                                std::span<const ProbVector> targets,
                                RiskWeighting weighting = RiskWeighting::PartitionMean);

// Same, with targets from blend(p_similarity, p_model) evaluated at the given
// model and held constant.
RiskValue empirical_hcl_risk(const LinearModel& model, const HclExamples& examples,
                             const BlendConfig& config, const PrototypeBank& prototypes,
                             RiskWeighting weighting = RiskWeighting::PartitionMean);

}  // namespace hcl
