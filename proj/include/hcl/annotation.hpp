#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hcl/domain.hpp"

namespace hcl {

enum class ConsensusPolicy {
  UnanimousPair,    // two annotators; agree or go to a human
  MajorityOfThree,  // three annotators; any two agreeing is accepted
};

const char* to_string(ConsensusPolicy policy) noexcept;
ConsensusPolicy policy_from_string(std::string_view s);
std::size_t required_annotators(ConsensusPolicy policy) noexcept;

struct Consensus {
  bool inconsistent = false;  // the s flag
  std::optional<LabelId> label;

  bool operator==(const Consensus&) const = default;
};

// Pure; throws Error(InvalidArgument) when the prediction count does not fit
// the policy.
Consensus detect_consensus(std::span<const LabelId> predictions, ConsensusPolicy policy);

// Raw annotator predictions, one map per annotator in annotator_ids order.
class AnnotationSet {
 public:
  explicit AnnotationSet(std::vector<std::string> annotator_ids);

  const std::vector<std::string>& annotator_ids() const noexcept { return ids_; }
  std::size_t annotator_count() const noexcept { return ids_.size(); }
  std::optional<std::size_t> annotator_index(std::string_view id) const;

  void add(std::size_t annotator, std::string sample_id, LabelId label);
  void add(std::string_view annotator_id, std::string sample_id, LabelId label);

  std::optional<LabelId> find(std::size_t annotator, std::string_view sample_id) const;
  // Throws Error(MissingPredictions) naming the first annotator without a
  // prediction for the sample.
  std::vector<LabelId> predictions_for(std::string_view sample_id) const;
  const std::unordered_map<std::string, LabelId>& of(std::size_t annotator) const {
    return by_annotator_.at(annotator);
  }

 private:
  std::vector<std::string> ids_;
  std::vector<std::unordered_map<std::string, LabelId>> by_annotator_;
};

// Records for every resolved sample. Complete once each sample in
// sample_order has a record.
struct AnnotationRun {
  int num_classes = 0;
  ConsensusPolicy policy = ConsensusPolicy::UnanimousPair;
  std::vector<std::string> sample_order;
  std::map<std::string, HclRecord> records;

  bool complete() const noexcept { return records.size() == sample_order.size(); }
  std::size_t consistent_count() const;
  std::size_t inconsistent_count() const;

  bool operator==(const AnnotationRun&) const = default;
};

// Discrepancy samples in dataset order, split into pending and resolved.
class CorrectionQueue {
 public:
  void enqueue(std::string sample_id);

  bool contains(std::string_view sample_id) const;
  bool is_pending(std::string_view sample_id) const;
  std::optional<LabelId> resolution(std::string_view sample_id) const;

  std::size_t total() const noexcept { return order_.size(); }
  std::size_t pending_count() const noexcept { return order_.size() - resolved_.size(); }
  std::size_t resolved_count() const noexcept { return resolved_.size(); }
  bool drained() const noexcept { return pending_count() == 0; }

  std::vector<std::string> pending() const;
  std::vector<std::string> pending_page(std::size_t offset, std::size_t limit) const;
  const std::vector<std::string>& order() const noexcept { return order_; }
  const std::map<std::string, LabelId>& resolved() const noexcept { return resolved_; }

  void mark_resolved(const std::string& sample_id, LabelId label);

  bool operator==(const CorrectionQueue& other) const {
    return order_ == other.order_ && resolved_ == other.resolved_;
  }

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, std::size_t> position_;
  std::map<std::string, LabelId> resolved_;
};

struct QueueBuild {
  AnnotationRun run;
  CorrectionQueue queue;
};

// Consistent samples get consensus records right away; the rest are queued.
QueueBuild build_queue(const Dataset& dataset, const AnnotationSet& annotations,
                       ConsensusPolicy policy);

enum class CorrectionResult { Applied, Unchanged };

// Resolves a pending sample. Resubmitting the same label is a no-op; a
// different label for a resolved sample, or any label for a consensus sample,
// throws Error(Conflict). Unknown ids throw Error(UnknownSample).
CorrectionResult apply_correction(AnnotationRun& run, CorrectionQueue& queue,
                                  std::string_view sample_id, LabelId label,
                                  Provenance provenance);

struct AnnotationStats {
  std::size_t total = 0;
  std::size_t consistent = 0;
  std::size_t inconsistent = 0;
  double consistency_rate = 0.0;  // over all samples
  // Over samples with ground truth. Without consistent samples ccp is 0; it
  // then carries no weight in final_accuracy.
  double ccp = 0.0;
  double final_accuracy = 0.0;
  double ground_truth_coverage = 0.0;
  std::vector<std::pair<std::string, double>> annotator_accuracy;
};

// Consistency, consensus accuracy and final label accuracy. Requires a complete run and at least one sample
// with ground truth. Annotator accuracies are filled when annotations are given.
AnnotationStats annotation_stats(const AnnotationRun& run, const Dataset& dataset,
                                 const AnnotationSet* annotations = nullptr);

enum class BaselineKind { FullySupervised, HumanOnly, ConsensusOnly, SingleAnnotator };

struct BaselineSpec {
  BaselineKind kind = BaselineKind::FullySupervised;
  std::string annotator;  // SingleAnnotator only

  std::string name() const;
  static BaselineSpec parse(std::string_view text);  // "FSL", "HL", "VL", "ONLY:<id>"
};

// (sample index, label) pairs a baseline trains on.
struct TrainingView {
  std::string name;
  std::vector<std::size_t> indices;
  std::vector<LabelId> labels;

  std::size_t size() const noexcept { return indices.size(); }
};

TrainingView baseline_view(const AnnotationRun& run, const Dataset& dataset,
                           const AnnotationSet& annotations, const BaselineSpec& spec);

}  // namespace hcl
