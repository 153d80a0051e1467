#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hcl/annotation.hpp"
#include "hcl/domain.hpp"
#include "hcl/estimator.hpp"
#include "hcl/simulator.hpp"
#include "hcl/trainer.hpp"

namespace hcl::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

// Write to a sibling temp file, flush, fsync, rename over path.
void atomic_write(const fs::path& path, std::string_view contents);
std::string read_file(const fs::path& path);

// Feature table: ids plus an n x d matrix.
struct FeatureTable {
  std::vector<std::string> ids;
  Eigen::MatrixXd features;

  bool operator==(const FeatureTable& other) const {
    return ids == other.ids && features.rows() == other.features.rows() &&
           features.cols() == other.features.cols() && features == other.features;
  }
};

// Binary "HCLF" layout, little-endian: magic, u32 version, u32 n, u32 d,
// n*d float32 row-major, then n NUL-terminated ids. Values are narrowed to
// float32; callers wanting exact round-trips keep features float-representable.
std::string encode_features(const FeatureTable& table);
FeatureTable decode_features(std::string_view bytes, const std::string& source = "<memory>");
// CSV rows "id,f0,...,f{d-1}"; an optional header line starting with "id," is skipped.
FeatureTable parse_feature_csv(std::string_view text, const std::string& source = "<memory>");
// Dispatches on the magic: binary when it starts with "HCLF", CSV otherwise.
FeatureTable load_features(const fs::path& path);
void save_features(const fs::path& path, const FeatureTable& table);

ClassSpace load_classes(const fs::path& path);
void save_classes(const fs::path& path, const ClassSpace& classes);

struct PredictionLine {
  std::string id;
  std::string annotator;
  LabelId label = 0;
};

std::vector<PredictionLine> parse_predictions(std::string_view text, const std::string& source);
std::string format_predictions(const AnnotationSet& set, std::size_t annotator,
                               std::span<const std::string> order);
// Adds every line from path into set; lines naming another annotator are a
// Format error unless expected_annotator is empty.
void load_predictions(const fs::path& path, AnnotationSet& set,
                      std::string_view expected_annotator = {});

std::vector<std::pair<std::string, LabelId>> parse_ground_truth(std::string_view text,
                                                                const std::string& source);
std::string format_ground_truth(const Dataset& dataset);

// Features, optional ground truth and optional per-sample meta (JSON Lines
// {"id", "meta": {...}}) assembled into a validated Dataset.
Dataset load_dataset(const ClassSpace& classes, const fs::path& features,
                     const std::optional<fs::path>& ground_truth,
                     const std::optional<fs::path>& meta = std::nullopt);

// Writes <stem>.hclf, <stem>_gt.jsonl and, when any sample has meta, <stem>_meta.jsonl.
void save_dataset(const fs::path& dir, const std::string& stem, const Dataset& dataset);

// JSON conversions. from_json ignores unknown fields and keeps defaults for
// missing ones; values are validated afterwards.
json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j, TrainConfig base = {});
json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const json& j, GeneratorConfig base = {});
json to_json(const LinearModel& m);
LinearModel model_from_json(const json& j);
json to_json(const AnnotationStats& s);
// Wall-clock fields are left out unless include_timing, so that same-seed
// runs produce byte-identical reports.
json to_json(const TrainReport& r, bool include_timing = false);
TrainReport train_report_from_json(const json& j);
json to_json(const AnnotationRun& run);
AnnotationRun annotation_run_from_json(const json& j);
json to_json(const AnnotatorModel& m);
AnnotatorModel annotator_model_from_json(const json& j);

// Per-epoch curve: epoch,learning_rate,mean_objective,train_accuracy,test_accuracy
std::string format_curve_csv(const TrainReport& report);

// Column-aligned plain text; every row must have the header's width.
std::string format_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows);
std::string format_double(double v, int precision = 4);

// Dumps JSON with a trailing newline.
std::string dump(const json& j);
// Parses a document and reports the path on failure.
json parse_json(std::string_view text, const std::string& source);
json load_json(const fs::path& path);

}  // namespace hcl::io
