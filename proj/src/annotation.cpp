#include "hcl/annotation.hpp"

#include <algorithm>

#include "hcl/error.hpp"

namespace hcl {

const char* to_string(ConsensusPolicy policy) noexcept {
  switch (policy) {
    case ConsensusPolicy::UnanimousPair: return "unanimous-pair";
    case ConsensusPolicy::MajorityOfThree: return "majority-of-three";
  }
  return "unknown";
}

ConsensusPolicy policy_from_string(std::string_view s) {
  if (s == "unanimous-pair") return ConsensusPolicy::UnanimousPair;
  if (s == "majority-of-three") return ConsensusPolicy::MajorityOfThree;
  throw Error(ErrorCode::Config, "unknown consensus policy '" + std::string(s) + "'");
}

std::size_t required_annotators(ConsensusPolicy policy) noexcept {
  return policy == ConsensusPolicy::UnanimousPair ? 2 : 3;
}

Consensus detect_consensus(std::span<const LabelId> p, ConsensusPolicy policy) {
  if (p.size() != required_annotators(policy)) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(to_string(policy)) + " needs " +
                    std::to_string(required_annotators(policy)) + " predictions, got " +
                    std::to_string(p.size()));
  }
  if (policy == ConsensusPolicy::UnanimousPair) {
    if (p[0] == p[1]) return {false, p[0]};
    return {true, std::nullopt};
  }
  if (p[0] == p[1] || p[0] == p[2]) return {false, p[0]};
  if (p[1] == p[2]) return {false, p[1]};
  return {true, std::nullopt};
}

AnnotationSet::AnnotationSet(std::vector<std::string> annotator_ids)
    : ids_(std::move(annotator_ids)), by_annotator_(ids_.size()) {
  if (ids_.empty()) throw Error(ErrorCode::Config, "annotator list is empty");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i].empty()) throw Error(ErrorCode::Config, "empty annotator id");
    for (std::size_t j = 0; j < i; ++j) {
      if (ids_[i] == ids_[j]) {
        throw Error(ErrorCode::Config, "duplicate annotator id '" + ids_[i] + "'");
      }
    }
  }
}

std::optional<std::size_t> AnnotationSet::annotator_index(std::string_view id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

void AnnotationSet::add(std::size_t annotator, std::string sample_id, LabelId label) {
  by_annotator_.at(annotator)[std::move(sample_id)] = label;
}

void AnnotationSet::add(std::string_view annotator_id, std::string sample_id, LabelId label) {
  auto idx = annotator_index(annotator_id);
  if (!idx) {
    throw Error(ErrorCode::InvalidArgument,
                "unknown annotator '" + std::string(annotator_id) + "'");
  }
  add(*idx, std::move(sample_id), label);
}

std::optional<LabelId> AnnotationSet::find(std::size_t annotator,
                                           std::string_view sample_id) const {
  const auto& m = by_annotator_.at(annotator);
  auto it = m.find(std::string(sample_id));
  if (it == m.end()) return std::nullopt;
  return it->second;
}

std::vector<LabelId> AnnotationSet::predictions_for(std::string_view sample_id) const {
  std::vector<LabelId> out;
  out.reserve(ids_.size());
  for (std::size_t a = 0; a < ids_.size(); ++a) {
    auto label = find(a, sample_id);
    if (!label) {
      throw Error(ErrorCode::MissingPredictions, "annotator '" + ids_[a] +
                                                     "' has no prediction for sample '" +
                                                     std::string(sample_id) + "'");
    }
    out.push_back(*label);
  }
  return out;
}

std::size_t AnnotationRun::consistent_count() const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [](const auto& kv) { return !kv.second.inconsistent; }));
}

std::size_t AnnotationRun::inconsistent_count() const {
  return records.size() - consistent_count();
}

void CorrectionQueue::enqueue(std::string sample_id) {
  if (position_.count(sample_id)) {
    throw Error(ErrorCode::InvalidArgument, "sample '" + sample_id + "' already queued");
  }
  position_.emplace(sample_id, order_.size());
  order_.push_back(std::move(sample_id));
}

bool CorrectionQueue::contains(std::string_view sample_id) const {
  return position_.count(std::string(sample_id)) > 0;
}

bool CorrectionQueue::is_pending(std::string_view sample_id) const {
  return contains(sample_id) && !resolved_.count(std::string(sample_id));
}

std::optional<LabelId> CorrectionQueue::resolution(std::string_view sample_id) const {
  auto it = resolved_.find(std::string(sample_id));
  if (it == resolved_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> CorrectionQueue::pending() const {
  return pending_page(0, order_.size());
}

std::vector<std::string> CorrectionQueue::pending_page(std::size_t offset,
                                                       std::size_t limit) const {
  std::vector<std::string> out;
  std::size_t seen = 0;
  for (const auto& id : order_) {
    if (out.size() >= limit) break;
    if (resolved_.count(id)) continue;
    if (seen++ < offset) continue;
    out.push_back(id);
  }
  return out;
}

void CorrectionQueue::mark_resolved(const std::string& sample_id, LabelId label) {
  if (!contains(sample_id)) {
    throw Error(ErrorCode::UnknownSample, "sample '" + sample_id + "' is not queued");
  }
  resolved_[sample_id] = label;
}

QueueBuild build_queue(const Dataset& dataset, const AnnotationSet& annotations,
                       ConsensusPolicy policy) {
  if (annotations.annotator_count() != required_annotators(policy)) {
    throw Error(ErrorCode::Config, std::string(to_string(policy)) + " needs " +
                                       std::to_string(required_annotators(policy)) +
                                       " annotators, got " +
                                       std::to_string(annotations.annotator_count()));
  }
  QueueBuild out;
  out.run.num_classes = dataset.classes().size();
  out.run.policy = policy;
  out.run.sample_order.reserve(dataset.size());
  for (const auto& sample : dataset.samples()) {
    auto preds = annotations.predictions_for(sample.id);
    for (std::size_t a = 0; a < preds.size(); ++a) {
      if (!dataset.classes().contains(preds[a])) {
        throw Error(ErrorCode::OutOfRange, "annotator '" + annotations.annotator_ids()[a] +
                                               "' label " + std::to_string(preds[a]) +
                                               " for sample '" + sample.id +
                                               "' is out of range");
      }
    }
    out.run.sample_order.push_back(sample.id);
    auto consensus = detect_consensus(preds, policy);
    if (consensus.inconsistent) {
      out.queue.enqueue(sample.id);
    } else {
      out.run.records.emplace(sample.id,
                              HclRecord{sample.id, *consensus.label, false, Provenance::Consensus});
    }
  }
  return out;
}

CorrectionResult apply_correction(AnnotationRun& run, CorrectionQueue& queue,
                                  std::string_view sample_id, LabelId label,
                                  Provenance provenance) {
  const std::string id(sample_id);
  if (provenance == Provenance::Consensus) {
    throw Error(ErrorCode::InvalidArgument, "corrections cannot carry consensus provenance");
  }
  if (label < 0 || label >= run.num_classes) {
    throw Error(ErrorCode::OutOfRange, "label " + std::to_string(label) + " outside [0," +
                                           std::to_string(run.num_classes) + ")");
  }
  if (!queue.contains(id)) {
    if (run.records.count(id)) {
      throw Error(ErrorCode::Conflict,
                  "sample '" + id + "' has a consensus label and is not awaiting correction");
    }
    throw Error(ErrorCode::UnknownSample, "unknown sample '" + id + "'");
  }
  if (auto existing = queue.resolution(id)) {
    if (*existing == label) return CorrectionResult::Unchanged;
    throw Error(ErrorCode::Conflict, "sample '" + id + "' already corrected to " +
                                         std::to_string(*existing));
  }
  queue.mark_resolved(id, label);
  run.records[id] = HclRecord{id, label, true, provenance};
  return CorrectionResult::Applied;
}

AnnotationStats annotation_stats(const AnnotationRun& run, const Dataset& dataset,
                                 const AnnotationSet* annotations) {
  if (!run.complete()) {
    throw Error(ErrorCode::IncompleteRun,
                std::to_string(run.sample_order.size() - run.records.size()) +
                    " sample(s) still await correction");
  }
  AnnotationStats st;
  st.total = run.sample_order.size();
  std::size_t covered = 0, covered_consistent = 0, consistent_correct = 0, correct = 0;
  for (const auto& id : run.sample_order) {
    const auto& rec = run.records.at(id);
    if (rec.inconsistent) {
      ++st.inconsistent;
    } else {
      ++st.consistent;
    }
    const auto& gt = dataset.by_id(id).ground_truth;
    if (!gt) continue;
    ++covered;
    bool ok = rec.label == *gt;
    correct += ok;
    if (!rec.inconsistent) {
      ++covered_consistent;
      consistent_correct += ok;
    }
  }
  if (covered == 0) {
    throw Error(ErrorCode::MissingGroundTruth, "no sample carries ground truth");
  }
  st.consistency_rate = st.total ? static_cast<double>(st.consistent) / st.total : 0.0;
  st.ccp = covered_consistent
               ? static_cast<double>(consistent_correct) / static_cast<double>(covered_consistent)
               : 0.0;
  st.final_accuracy = static_cast<double>(correct) / static_cast<double>(covered);
  st.ground_truth_coverage = static_cast<double>(covered) / static_cast<double>(st.total);

  if (annotations) {
    for (std::size_t a = 0; a < annotations->annotator_count(); ++a) {
      std::size_t n = 0, hit = 0;
      for (const auto& id : run.sample_order) {
        const auto& gt = dataset.by_id(id).ground_truth;
        auto pred = annotations->find(a, id);
        if (!gt || !pred) continue;
        ++n;
        hit += (*pred == *gt);
      }
      st.annotator_accuracy.emplace_back(annotations->annotator_ids()[a],
                                         n ? static_cast<double>(hit) / n : 0.0);
    }
  }
  return st;
}

std::string BaselineSpec::name() const {
  switch (kind) {
    case BaselineKind::FullySupervised: return "FSL";
    case BaselineKind::HumanOnly: return "HL";
    case BaselineKind::ConsensusOnly: return "VL";
    case BaselineKind::SingleAnnotator: return "ONLY:" + annotator;
  }
  return "?";
}

BaselineSpec BaselineSpec::parse(std::string_view text) {
  if (text == "FSL") return {BaselineKind::FullySupervised, {}};
  if (text == "HL") return {BaselineKind::HumanOnly, {}};
  if (text == "VL") return {BaselineKind::ConsensusOnly, {}};
  if (text.substr(0, 5) == "ONLY:" && text.size() > 5) {
    return {BaselineKind::SingleAnnotator, std::string(text.substr(5))};
  }
  throw Error(ErrorCode::Config, "unknown baseline '" + std::string(text) + "'");
}

TrainingView baseline_view(const AnnotationRun& run, const Dataset& dataset,
                           const AnnotationSet& annotations, const BaselineSpec& spec) {
  TrainingView view;
  view.name = spec.name();
  auto push = [&](std::size_t i, LabelId label) {
    view.indices.push_back(i);
    view.labels.push_back(label);
  };

  switch (spec.kind) {
    case BaselineKind::FullySupervised: {
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (dataset[i].ground_truth) push(i, *dataset[i].ground_truth);
      }
      if (view.indices.empty()) {
        throw Error(ErrorCode::MissingGroundTruth, "FSL view needs ground-truth labels");
      }
      break;
    }
    case BaselineKind::HumanOnly:
    case BaselineKind::ConsensusOnly: {
      if (!run.complete()) {
        throw Error(ErrorCode::IncompleteRun, "baseline view needs a complete run");
      }
      const bool want_inconsistent = spec.kind == BaselineKind::HumanOnly;
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& rec = run.records.at(dataset[i].id);
        if (rec.inconsistent == want_inconsistent) push(i, rec.label);
      }
      break;
    }
    case BaselineKind::SingleAnnotator: {
      auto a = annotations.annotator_index(spec.annotator);
      if (!a) throw Error(ErrorCode::Config, "unknown annotator '" + spec.annotator + "'");
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        auto label = annotations.find(*a, dataset[i].id);
        if (!label) {
          throw Error(ErrorCode::MissingPredictions, "annotator '" + spec.annotator +
                                                         "' has no prediction for '" +
                                                         dataset[i].id + "'");
        }
        push(i, *label);
      }
      break;
    }
  }
  return view;
}

}  // namespace hcl
