#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcl/annotation.hpp"
#include "hcl/domain.hpp"
#include "hcl/estimator.hpp"
#include "hcl/journal.hpp"
#include "hcl/simulator.hpp"
#include "hcl/trainer.hpp"

namespace hcl::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct IngestPaths {
  fs::path classes;
  fs::path train_features;
  std::optional<fs::path> train_ground_truth;
  std::optional<fs::path> train_meta;
  std::optional<fs::path> test_features;
  std::optional<fs::path> test_ground_truth;
  // Rows in class order, or with ids equal to the class names.
  std::optional<fs::path> prototypes;
};

struct AnnotatorFile {
  std::string id;
  fs::path path;
};

struct CalibratedPair {
  double consistency = 0.0;
  double ccp = 0.0;
  CalibrationOptions options;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  // Exactly one of simulate / ingest.
  std::optional<GeneratorConfig> simulate;
  std::optional<IngestPaths> ingest;
  // Exactly one annotator source.
  std::optional<CalibratedPair> calibrate;
  std::vector<AnnotatorFile> annotator_files;
  std::vector<AnnotatorModel> annotator_models;
  ConsensusPolicy policy = ConsensusPolicy::UnanimousPair;
  // Oracle corrections from ground truth, or a correction-service session.
  enum class Corrector { Oracle, Service } corrector = Corrector::Oracle;
  CorrectorModel oracle;
  fs::path sessions_dir = "sessions";
  std::optional<std::string> session_id;
  TrainConfig train;
  std::vector<double> sweep_grid = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  fs::path out = "out";

  std::vector<std::string> annotator_ids() const;
  // Throws Error(Config) on any structural problem.
  void validate() const;
  // Component seeds not pinned in the file follow the top-level seed.
  static ExperimentConfig from_json(const json& j, const fs::path& base_dir = {});
  json to_json() const;
  // Sets the top-level seed and every component seed to value.
  void override_seed(std::uint64_t value);
};

ExperimentConfig load_config(const fs::path& path);

struct World {
  Dataset train;
  std::optional<Dataset> test;
  std::optional<PrototypeBank> prototypes;
};

// Simulates or ingests; the simulated world is also written under
// out/dataset in the ingest formats.
World load_world(const ExperimentConfig& config, bool write_dataset);

AnnotationSet load_annotations(const ExperimentConfig& config, const World& world);

enum class Status { Completed, AwaitingCorrections };

struct Annotated {
  AnnotationSet annotations;
  QueueBuild build;
  std::optional<std::string> session_id;
  std::optional<AnnotationStats> stats;  // when complete and ground truth exists
};

// Annotate, then correct every discrepancy via the configured corrector.
// Writes predictions/, journal.jsonl and stats.{json,txt} when complete.
Annotated annotate_and_correct(const ExperimentConfig& config, const World& world);

struct ExperimentResult {
  Status status = Status::Completed;
  std::optional<std::string> session_id;
  std::optional<AnnotationStats> stats;
  std::optional<TrainReport> report;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

struct BaselineRow {
  std::string method;
  std::size_t train_size = 0;
  std::optional<double> label_accuracy;  // training labels vs ground truth
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

struct BaselineSuite {
  Status status = Status::Completed;
  std::vector<BaselineRow> rows;  // FSL, HL, VL, ONLY(each), HCL
};

BaselineSuite run_baseline_suite(const ExperimentConfig& config);

struct SweepResult {
  Status status = Status::Completed;
  std::vector<SweepRow> rows;
};

SweepResult run_lambda_sweep(const ExperimentConfig& config);

// Samples + predictions as journal events, for sessions and the run journal.
std::vector<journal::SampleEvent> sample_events(const Dataset& dataset,
                                                const AnnotationSet& annotations);

// Exit status used by the CLI: 0 done, 3 awaiting corrections.
int exit_code(Status status) noexcept;

}  // namespace hcl::pipeline
