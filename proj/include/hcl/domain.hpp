#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace hcl {

// Dense class index in [0, k).
using LabelId = int;

// Names of the k > 2 classes, indexed by LabelId.
class ClassSpace {
 public:
  explicit ClassSpace(std::vector<std::string> names);

  int size() const noexcept { return static_cast<int>(names_.size()); }
  bool contains(LabelId label) const noexcept { return label >= 0 && label < size(); }
  const std::string& name(LabelId label) const;
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::optional<LabelId> find(std::string_view name) const;

  bool operator==(const ClassSpace& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
};

struct Sample {
  std::string id;
  Eigen::VectorXd features;
  std::optional<LabelId> ground_truth;
  // Display hints only (image URL, caption); never interpreted by the core.
  std::map<std::string, std::string> meta;

  bool operator==(const Sample& other) const {
    return id == other.id && features.size() == other.features.size() &&
           features == other.features && ground_truth == other.ground_truth &&
           meta == other.meta;
  }
};

enum class ViolationKind {
  DimensionMismatch,
  NonFiniteFeature,
  LabelOutOfRange,
  DuplicateId,
  EmptyId,
};

const char* to_string(ViolationKind kind) noexcept;

struct Violation {
  ViolationKind kind;
  std::size_t index;
  std::string sample_id;
  std::string message;
};

// Report-style check: an empty result means every downstream precondition on
// dimensions, finiteness and label range holds. The reference dimension is
// the most common one among the samples.
std::vector<Violation> validate_dataset(std::span<const Sample> samples,
                                        const ClassSpace& classes);

// Immutable collection of samples sharing one class space.
class Dataset {
 public:
  Dataset(ClassSpace classes, std::vector<Sample> samples);

  // Throws Error(InvalidArgument) listing violations when validation fails.
  static Dataset checked(ClassSpace classes, std::vector<Sample> samples);

  const ClassSpace& classes() const noexcept { return classes_; }
  std::span<const Sample> samples() const noexcept { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  // Feature dimension of the first sample (0 for an empty dataset).
  Eigen::Index dim() const noexcept;

  std::optional<std::size_t> index_of(std::string_view id) const;
  const Sample& by_id(std::string_view id) const;

  // Fraction of samples that carry a ground-truth label.
  double ground_truth_coverage() const noexcept;

  bool operator==(const Dataset& other) const {
    return classes_ == other.classes_ && samples_ == other.samples_;
  }

 private:
  ClassSpace classes_;
  std::vector<Sample> samples_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Provenance { Consensus, Human, Oracle };

const char* to_string(Provenance p) noexcept;
Provenance provenance_from_string(std::string_view s);

// Resolved supervision for one sample: s = 0 exactly when provenance is
// Consensus.
struct HclRecord {
  std::string sample_id;
  LabelId label = 0;
  bool inconsistent = false;
  Provenance provenance = Provenance::Consensus;

  bool operator==(const HclRecord&) const = default;
};

// Nonnegative length-k vector summing to one within 1e-9.
class ProbVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  // Throws Error(InvalidArgument) when the invariant does not hold.
  explicit ProbVector(Eigen::VectorXd p);
  static ProbVector uniform(int k);
  static ProbVector one_hot(int k, LabelId label);

  const Eigen::VectorXd& values() const noexcept { return p_; }
  double operator[](Eigen::Index i) const { return p_[i]; }
  int size() const noexcept { return static_cast<int>(p_.size()); }
  LabelId argmax() const;

 private:
  Eigen::VectorXd p_;
};

// Linear classifier over frozen features: logits = W x + b.
struct LinearModel {
  Eigen::MatrixXd weights;  // k x d
  Eigen::VectorXd bias;     // k

  static LinearModel zeros(int k, Eigen::Index d);

  int classes() const noexcept { return static_cast<int>(weights.rows()); }
  Eigen::Index dim() const noexcept { return weights.cols(); }
  bool finite() const;

  bool operator==(const LinearModel& other) const {
    return weights.rows() == other.weights.rows() &&
           weights.cols() == other.weights.cols() && weights == other.weights &&
           bias == other.bias;
  }
};

Eigen::VectorXd logits(const LinearModel& model,
                       const Eigen::Ref<const Eigen::VectorXd>& features);

// Index of the largest entry; ties go to the lowest index.
LabelId argmax(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace hcl
