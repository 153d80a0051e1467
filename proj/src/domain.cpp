#include "hcl/domain.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "hcl/error.hpp"

namespace hcl {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::OutOfRange: return "out-of-range";
    case ErrorCode::NonFinite: return "non-finite";
    case ErrorCode::MissingGroundTruth: return "missing-ground-truth";
    case ErrorCode::MissingPredictions: return "missing-predictions";
    case ErrorCode::UnknownSample: return "unknown-sample";
    case ErrorCode::Conflict: return "conflict";
    case ErrorCode::IncompleteRun: return "incomplete-run";
    case ErrorCode::Infeasible: return "infeasible";
    case ErrorCode::Precondition: return "precondition";
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
    case ErrorCode::Config: return "config";
  }
  return "unknown";
}

ClassSpace::ClassSpace(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() <= 2) {
    throw Error(ErrorCode::InvalidArgument,
                "class space needs more than 2 classes, got " +
                    std::to_string(names_.size()));
  }
  std::set<std::string_view> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw Error(ErrorCode::InvalidArgument, "empty class name");
    if (!seen.insert(n).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate class name '" + n + "'");
    }
  }
}

const std::string& ClassSpace::name(LabelId label) const {
  if (!contains(label)) {
    throw Error(ErrorCode::OutOfRange, "label " + std::to_string(label) +
                                           " outside [0," + std::to_string(size()) + ")");
  }
  return names_[static_cast<std::size_t>(label)];
}

std::optional<LabelId> ClassSpace::find(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<LabelId>(it - names_.begin());
}

const char* to_string(ViolationKind kind) noexcept {
  switch (kind) {
    case ViolationKind::DimensionMismatch: return "dimension-mismatch";
    case ViolationKind::NonFiniteFeature: return "non-finite-feature";
    case ViolationKind::LabelOutOfRange: return "label-out-of-range";
    case ViolationKind::DuplicateId: return "duplicate-id";
    case ViolationKind::EmptyId: return "empty-id";
  }
  return "unknown";
}

std::vector<Violation> validate_dataset(std::span<const Sample> samples,
                                        const ClassSpace& classes) {
  std::vector<Violation> out;
  if (samples.empty()) return out;

  // Most common dimension wins; ties resolve to the one seen first.
  std::vector<std::pair<Eigen::Index, std::size_t>> counts;
  for (const auto& s : samples) {
    auto it = std::find_if(counts.begin(), counts.end(),
                           [&](const auto& c) { return c.first == s.features.size(); });
    if (it == counts.end()) {
      counts.emplace_back(s.features.size(), 1);
    } else {
      ++it->second;
    }
  }
  Eigen::Index ref_dim = counts.front().first;
  std::size_t best = counts.front().second;
  for (const auto& [d, c] : counts) {
    if (c > best) {
      best = c;
      ref_dim = d;
    }
  }

  std::set<std::string_view> ids;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.id.empty()) {
      out.push_back({ViolationKind::EmptyId, i, s.id, "sample id is empty"});
    } else if (!ids.insert(s.id).second) {
      out.push_back({ViolationKind::DuplicateId, i, s.id, "duplicate sample id"});
    }
    if (s.features.size() != ref_dim) {
      std::ostringstream msg;
      msg << "dimension " << s.features.size() << " != " << ref_dim;
      out.push_back({ViolationKind::DimensionMismatch, i, s.id, msg.str()});
    }
    if (!s.features.allFinite()) {
      out.push_back({ViolationKind::NonFiniteFeature, i, s.id, "feature not finite"});
    }
    if (s.ground_truth && !classes.contains(*s.ground_truth)) {
      out.push_back({ViolationKind::LabelOutOfRange, i, s.id,
                     "label " + std::to_string(*s.ground_truth) + " outside [0," +
                         std::to_string(classes.size()) + ")"});
    }
  }
  return out;
}

Dataset::Dataset(ClassSpace classes, std::vector<Sample> samples)
    : classes_(std::move(classes)), samples_(std::move(samples)) {
  index_.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) index_.emplace(samples_[i].id, i);
}

Dataset Dataset::checked(ClassSpace classes, std::vector<Sample> samples) {
  auto violations = validate_dataset(samples, classes);
  if (!violations.empty()) {
    std::ostringstream msg;
    msg << violations.size() << " dataset violation(s); first: sample '"
        << violations.front().sample_id << "': " << violations.front().message;
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  return Dataset(std::move(classes), std::move(samples));
}

Eigen::Index Dataset::dim() const noexcept {
  return samples_.empty() ? 0 : samples_.front().features.size();
}

std::optional<std::size_t> Dataset::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Sample& Dataset::by_id(std::string_view id) const {
  auto idx = index_of(id);
  if (!idx) throw Error(ErrorCode::UnknownSample, "unknown sample '" + std::string(id) + "'");
  return samples_[*idx];
}

double Dataset::ground_truth_coverage() const noexcept {
  if (samples_.empty()) return 0.0;
  auto n = std::count_if(samples_.begin(), samples_.end(),
                         [](const Sample& s) { return s.ground_truth.has_value(); });
  return static_cast<double>(n) / static_cast<double>(samples_.size());
}

const char* to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::Consensus: return "consensus";
    case Provenance::Human: return "human";
    case Provenance::Oracle: return "oracle";
  }
  return "unknown";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "consensus") return Provenance::Consensus;
  if (s == "human") return Provenance::Human;
  if (s == "oracle") return Provenance::Oracle;
  throw Error(ErrorCode::Format, "unknown provenance '" + std::string(s) + "'");
}

ProbVector::ProbVector(Eigen::VectorXd p) : p_(std::move(p)) {
  if (p_.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty probability vector");
  if (!p_.allFinite()) throw Error(ErrorCode::NonFinite, "probability vector not finite");
  if ((p_.array() < 0.0).any()) {
    throw Error(ErrorCode::InvalidArgument, "negative probability");
  }
  if (std::abs(p_.sum() - 1.0) > kSumTolerance) {
    throw Error(ErrorCode::InvalidArgument, "probabilities do not sum to 1");
  }
}

ProbVector ProbVector::uniform(int k) {
  return ProbVector(Eigen::VectorXd::Constant(k, 1.0 / k));
}

ProbVector ProbVector::one_hot(int k, LabelId label) {
  if (label < 0 || label >= k) throw Error(ErrorCode::OutOfRange, "one-hot label out of range");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(k);
  p[label] = 1.0;
  return ProbVector(std::move(p));
}

LabelId ProbVector::argmax() const { return hcl::argmax(p_); }

LinearModel LinearModel::zeros(int k, Eigen::Index d) {
  return {Eigen::MatrixXd::Zero(k, d), Eigen::VectorXd::Zero(k)};
}

bool LinearModel::finite() const { return weights.allFinite() && bias.allFinite(); }

Eigen::VectorXd logits(const LinearModel& model,
                       const Eigen::Ref<const Eigen::VectorXd>& features) {
  if (features.size() != model.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature dimension " + std::to_string(features.size()) +
                    " != model dimension " + std::to_string(model.dim()));
  }
  if (model.bias.size() != model.weights.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "bias length != number of weight rows");
  }
  return model.weights * features + model.bias;
}

LabelId argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() == 0) throw Error(ErrorCode::InvalidArgument, "argmax of empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<LabelId>(best);
}

}  // namespace hcl
