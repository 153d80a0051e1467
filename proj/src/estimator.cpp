#include "hcl/estimator.hpp"

#include <cmath>

#include "hcl/error.hpp"

namespace hcl {

namespace {

void check_target(Eigen::Index k, LabelId i) {
  if (i < 0 || i >= k) {
    throw Error(ErrorCode::OutOfRange,
                "target class " + std::to_string(i) + " outside [0," + std::to_string(k) + ")");
  }
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& z) {
  Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

Eigen::VectorXd loss_target(int k, LabelId i) {
  check_target(k, i);
  Eigen::VectorXd t = Eigen::VectorXd::Constant(k, -1.0);
  t[i] = 1.0;
  return t;
}

double loss(const Eigen::Ref<const Eigen::VectorXd>& f, LabelId i) {
  const auto k = f.size();
  check_target(k, i);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double sign = (j == i) ? 1.0 : -1.0;
    const double r = 1.0 - f[j] * sign;
    sum += r * r;
  }
  return sum / static_cast<double>(k);
}

Eigen::VectorXd loss_grad(const Eigen::Ref<const Eigen::VectorXd>& f, LabelId i) {
  const auto k = f.size();
  check_target(k, i);
  Eigen::VectorXd g = f;
  g.array() += 1.0;
  g[i] -= 2.0;
  return g * (2.0 / static_cast<double>(k));
}

ProbVector p_model(const Eigen::Ref<const Eigen::VectorXd>& f) {
  if (f.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty logits");
  if (!f.allFinite()) throw Error(ErrorCode::NonFinite, "logits not finite");
  return ProbVector(softmax(f));
}

PrototypeBank::PrototypeBank(Eigen::MatrixXd rows) : rows_(std::move(rows)) {
  if (rows_.rows() == 0 || rows_.cols() == 0) {
    throw Error(ErrorCode::InvalidArgument, "empty prototype bank");
  }
  if (!rows_.allFinite()) throw Error(ErrorCode::NonFinite, "prototype not finite");
  unit_.resize(rows_.rows(), rows_.cols());
  for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
    const double n = rows_.row(i).norm();
    if (n == 0.0) {
      throw Error(ErrorCode::InvalidArgument, "prototype row " + std::to_string(i) + " is zero");
    }
    unit_.row(i) = rows_.row(i) / n;
  }
}

ProbVector p_similarity(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const PrototypeBank& prototypes, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  }
  if (x.size() != prototypes.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature dimension " + std::to_string(x.size()) + " != prototype dimension " +
                    std::to_string(prototypes.dim()));
  }
  if (!x.allFinite()) throw Error(ErrorCode::NonFinite, "feature not finite");
  const double norm = x.norm();
  if (norm == 0.0) throw Error(ErrorCode::InvalidArgument, "cosine undefined for zero feature");
  Eigen::VectorXd cos = prototypes.unit_rows() * x / norm;
  return ProbVector(softmax(tau * cos));
}

void BlendConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "lambda must lie in [0,1]");
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::InvalidArgument, "tau must be positive");
  }
}

ProbVector blend(const ProbVector& p_sim, const ProbVector& p_mod, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "lambda must lie in [0,1]");
  }
  if (p_sim.size() != p_mod.size()) {
    throw Error(ErrorCode::DimensionMismatch, "blend of vectors with different lengths");
  }
  if (lambda == 1.0) return p_sim;
  if (lambda == 0.0) return p_mod;
  return ProbVector(lambda * p_sim.values() + (1.0 - lambda) * p_mod.values());
}

ProbVector estimate_conditional(const LinearModel& model,
                                const Eigen::Ref<const Eigen::VectorXd>& x,
                                const PrototypeBank& prototypes, const BlendConfig& config) {
  config.validate();
  if (config.lambda == 1.0) return p_similarity(x, prototypes, config.tau);
  auto mod = p_model(logits(model, x));
  if (config.lambda == 0.0) return mod;
  return blend(p_similarity(x, prototypes, config.tau), mod, config.lambda);
}

const char* to_string(RiskWeighting w) noexcept {
  return w == RiskWeighting::PartitionMean ? "partition-mean" : "prior-weighted";
}

RiskWeighting risk_weighting_from_string(std::string_view s) {
  if (s == "partition-mean") return RiskWeighting::PartitionMean;
  if (s == "prior-weighted") return RiskWeighting::PriorWeighted;
  throw Error(ErrorCode::Config, "unknown risk weighting '" + std::string(s) + "'");
}

HclExamples make_hcl_examples(const Dataset& dataset, const AnnotationRun& run) {
  if (!run.complete()) {
    throw Error(ErrorCode::IncompleteRun, "HCL training needs a complete annotation run");
  }
  if (run.sample_order.size() != dataset.size()) {
    throw Error(ErrorCode::InvalidArgument, "annotation run does not cover the dataset");
  }
  HclExamples ex;
  ex.num_classes = dataset.classes().size();
  ex.features.resize(static_cast<Eigen::Index>(dataset.size()), dataset.dim());
  ex.labels.reserve(dataset.size());
  ex.inconsistent.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    auto it = run.records.find(s.id);
    if (it == run.records.end()) {
      throw Error(ErrorCode::UnknownSample, "no HCL record for sample '" + s.id + "'");
    }
    if (s.features.size() != dataset.dim()) {
      throw Error(ErrorCode::DimensionMismatch, "sample '" + s.id + "' has wrong dimension");
    }
    ex.features.row(static_cast<Eigen::Index>(i)) = s.features.transpose();
    ex.labels.push_back(it->second.label);
    ex.inconsistent.push_back(it->second.inconsistent ? 1 : 0);
  }
  return ex;
}

RiskValue hcl_risk_with_targets(const LinearModel& model, const HclExamples& examples,
                                std::span<const ProbVector> targets, RiskWeighting weighting) {
  if (targets.size() != examples.size()) {
    throw Error(ErrorCode::InvalidArgument, "one target per example required");
  }
  RiskValue r;
  double human_sum = 0.0, consensus_sum = 0.0;
  for (std::size_t j = 0; j < examples.size(); ++j) {
    Eigen::VectorXd f = logits(model, examples.features.row(static_cast<Eigen::Index>(j)).transpose());
    if (examples.inconsistent[j]) {
      human_sum += loss(f, examples.labels[j]);
      ++r.human_count;
    } else {
      const auto& p = targets[j];
      if (p.size() != f.size()) {
        throw Error(ErrorCode::DimensionMismatch, "target length != number of classes");
      }
      double expected = 0.0;
      for (int i = 0; i < p.size(); ++i) {
        if (p[i] != 0.0) expected += p[i] * loss(f, i);
      }
      consensus_sum += expected;
      ++r.consensus_count;
    }
  }
  if (r.human_count) r.human_term = human_sum / static_cast<double>(r.human_count);
  if (r.consensus_count) r.consensus_term = consensus_sum / static_cast<double>(r.consensus_count);
  if (!r.human_count) r.warnings.emplace_back("D_H is empty; human term dropped");
  if (!r.consensus_count) r.warnings.emplace_back("D_V is empty; consensus term dropped");

  if (weighting == RiskWeighting::PartitionMean) {
    r.value = r.human_term + r.consensus_term;
  } else {
    const auto n = r.human_count + r.consensus_count;
    r.value = n ? (human_sum + consensus_sum) / static_cast<double>(n) : 0.0;
  }
  return r;
}

RiskValue empirical_hcl_risk(const LinearModel& model, const HclExamples& examples,
                             const BlendConfig& config, const PrototypeBank& prototypes,
                             RiskWeighting weighting) {
  config.validate();
  std::vector<ProbVector> targets;
  targets.reserve(examples.size());
  for (std::size_t j = 0; j < examples.size(); ++j) {
    if (examples.inconsistent[j]) {
      targets.push_back(ProbVector::one_hot(model.classes(), examples.labels[j]));
    } else {
      targets.push_back(estimate_conditional(
          model, examples.features.row(static_cast<Eigen::Index>(j)).transpose(), prototypes,
          config));
    }
  }
  return hcl_risk_with_targets(model, examples, targets, weighting);
}

}  // namespace hcl
