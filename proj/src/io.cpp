#include "hcl/io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "hcl/error.hpp"

namespace hcl::io {

static_assert(std::endian::native == std::endian::little,
              "feature files are read and written as native little-endian");

namespace {

[[noreturn]] void format_error(const std::string& source, const std::string& what) {
  throw Error(ErrorCode::Format, source + ": " + what);
}

void write_all(int fd, const char* data, std::size_t size, const fs::path& path) {
  while (size > 0) {
    const ssize_t n = ::write(fd, data, size);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::Io, "write failed for " + path.string() + ": " + std::strerror(errno));
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

// Splits on '\n', dropping a trailing '\r' and blank lines; yields 1-based line numbers.
template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    f(line, line_no);
  }
}

std::uint32_t read_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + at, sizeof v);
  return v;
}

void append_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::Format, std::string(what) + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw Error(ErrorCode::Format, std::string(what) + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json opt_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from_json(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

void atomic_write(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0)
    throw Error(ErrorCode::Io, "cannot create " + tmp.string() + ": " + std::strerror(errno));
  try {
    write_all(fd, contents.data(), contents.size(), tmp);
    if (::fsync(fd) != 0)
      throw Error(ErrorCode::Io, "fsync failed for " + tmp.string() + ": " + std::strerror(errno));
  } catch (...) {
    ::close(fd);
    ::unlink(tmp.c_str());
    throw;
  }
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    ::unlink(tmp.c_str());
    throw Error(ErrorCode::Io, "cannot rename onto " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string encode_features(const FeatureTable& t) {
  if (static_cast<std::size_t>(t.features.rows()) != t.ids.size())
    throw Error(ErrorCode::DimensionMismatch, "feature rows do not match the id count");
  std::string out = "HCLF";
  append_u32(out, kFeatureFormatVersion);
  append_u32(out, static_cast<std::uint32_t>(t.ids.size()));
  append_u32(out, static_cast<std::uint32_t>(t.features.cols()));
  out.reserve(out.size() + t.features.size() * 4 + t.ids.size() * 16);
  for (Eigen::Index r = 0; r < t.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.features.cols(); ++c) {
      const auto f = static_cast<float>(t.features(r, c));
      char buf[4];
      std::memcpy(buf, &f, 4);
      out.append(buf, 4);
    }
  }
  for (const auto& id : t.ids) {
    if (id.find('\0') != std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "sample id contains NUL");
    out += id;
    out.push_back('\0');
  }
  return out;
}

FeatureTable decode_features(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 16 || bytes.substr(0, 4) != "HCLF") format_error(source, "missing HCLF header");
  const auto version = read_u32(bytes, 4);
  if (version != kFeatureFormatVersion)
    format_error(source, "unsupported feature format version " + std::to_string(version));
  const std::size_t n = read_u32(bytes, 8);
  const std::size_t d = read_u32(bytes, 12);
  const std::size_t body = n * d * 4;
  if (bytes.size() < 16 + body) format_error(source, "truncated feature block");
  FeatureTable t;
  t.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const char* p = bytes.data() + 16;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c, p += 4) {
      float f;
      std::memcpy(&f, p, 4);
      t.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f;
    }
  }
  std::string_view rest = bytes.substr(16 + body);
  t.ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto nul = rest.find('\0');
    if (nul == std::string_view::npos) format_error(source, "truncated id block");
    t.ids.emplace_back(rest.substr(0, nul));
    rest.remove_prefix(nul + 1);
  }
  if (!rest.empty()) format_error(source, "trailing bytes after id block");
  return t;
}

FeatureTable parse_feature_csv(std::string_view text, const std::string& source) {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (rows.empty() && line.starts_with("id,")) return;
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cells.size() < 2) format_error(source, "line " + std::to_string(no) + ": no feature columns");
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      auto cell = cells[c];
      while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size())
        format_error(source, "line " + std::to_string(no) + ": bad number '" + std::string(cell) + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(ErrorCode::DimensionMismatch,
                  source + ": line " + std::to_string(no) + " has " + std::to_string(row.size()) +
                      " features, expected " + std::to_string(rows.front().size()));
    ids.emplace_back(cells[0]);
    rows.push_back(std::move(row));
  });
  FeatureTable t;
  t.ids = std::move(ids);
  const auto d = rows.empty() ? 0 : rows.front().size();
  t.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < d; ++c)
      t.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return t;
}

FeatureTable load_features(const fs::path& path) {
  const auto bytes = read_file(path);
  if (bytes.starts_with("HCLF")) return decode_features(bytes, path.string());
  return parse_feature_csv(bytes, path.string());
}

void save_features(const fs::path& path, const FeatureTable& table) {
  atomic_write(path, encode_features(table));
}

ClassSpace load_classes(const fs::path& path) {
  const auto j = load_json(path);
  if (!j.is_array()) format_error(path.string(), "class space must be a JSON array of names");
  try {
    return ClassSpace(j.get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    format_error(path.string(), e.what());
  }
}

void save_classes(const fs::path& path, const ClassSpace& classes) {
  atomic_write(path, dump(json(classes.names())));
}

std::vector<PredictionLine> parse_predictions(std::string_view text, const std::string& source) {
  std::vector<PredictionLine> out;
  for_each_line(text, [&](std::string_view line, std::size_t no) {
    try {
      const auto j = json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.value("annotator", std::string{}),
                     j.at("label").get<LabelId>()});
    } catch (const json::exception& e) {
      format_error(source, "line " + std::to_string(no) + ": " + e.what());
    }
  });
  return out;
}

std::string format_predictions(const AnnotationSet& set, std::size_t annotator,
                               std::span<const std::string> order) {
  std::string out;
  const auto& id = set.annotator_ids().at(annotator);
  for (const auto& sample : order) {
    const auto label = set.find(annotator, sample);
    if (!label) continue;
    out += json{{"id", sample}, {"annotator", id}, {"label", *label}}.dump();
    out.push_back('\n');
  }
  return out;
}

void load_predictions(const fs::path& path, AnnotationSet& set, std::string_view expected) {
  if (!fs::exists(path))
    throw Error(ErrorCode::Io, "prediction file not found: " + path.string());
  for (const auto& line : parse_predictions(read_file(path), path.string())) {
    const std::string_view who = expected.empty() ? std::string_view(line.annotator) : expected;
    if (!expected.empty() && !line.annotator.empty() && line.annotator != expected)
      format_error(path.string(), "prediction for annotator '" + line.annotator +
                                      "' in the file of '" + std::string(expected) + "'");
    set.add(who, line.id, line.label);
  }
}

std::vector<std::pair<std::string, LabelId>> parse_ground_truth(std::string_view text,
                                                                const std::string& source) {
  std::vector<std::pair<std::string, LabelId>> out;
  for_each_line(text, [&](std::string_view line, std::size_t no) {
    try {
      const auto j = json::parse(line);
      out.emplace_back(j.at("id").get<std::string>(), j.at("label").get<LabelId>());
    } catch (const json::exception& e) {
      format_error(source, "line " + std::to_string(no) + ": " + e.what());
    }
  });
  return out;
}

std::string format_ground_truth(const Dataset& dataset) {
  std::string out;
  for (const auto& s : dataset.samples()) {
    if (!s.ground_truth) continue;
    out += json{{"id", s.id}, {"label", *s.ground_truth}}.dump();
    out.push_back('\n');
  }
  return out;
}

Dataset load_dataset(const ClassSpace& classes, const fs::path& features,
                     const std::optional<fs::path>& ground_truth,
                     const std::optional<fs::path>& meta) {
  if (!fs::exists(features)) throw Error(ErrorCode::Io, "feature file not found: " + features.string());
  auto table = load_features(features);
  std::vector<Sample> samples(table.ids.size());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].id = table.ids[i];
    samples[i].features = table.features.row(static_cast<Eigen::Index>(i)).transpose();
    index.emplace(table.ids[i], i);
  }
  auto lookup = [&](const std::string& id, const fs::path& file) -> Sample& {
    auto it = index.find(id);
    if (it == index.end())
      throw Error(ErrorCode::UnknownSample, file.string() + ": unknown sample '" + id + "'");
    return samples[it->second];
  };
  if (ground_truth) {
    if (!fs::exists(*ground_truth))
      throw Error(ErrorCode::Io, "ground truth file not found: " + ground_truth->string());
    for (auto& [id, label] : parse_ground_truth(read_file(*ground_truth), ground_truth->string()))
      lookup(id, *ground_truth).ground_truth = label;
  }
  if (meta && fs::exists(*meta)) {
    for_each_line(read_file(*meta), [&](std::string_view line, std::size_t no) {
      try {
        const auto j = json::parse(line);
        auto& s = lookup(j.at("id").get<std::string>(), *meta);
        for (auto& [k, v] : j.at("meta").items())
          s.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
      } catch (const json::exception& e) {
        format_error(meta->string(), "line " + std::to_string(no) + ": " + e.what());
      }
    });
  }
  return Dataset::checked(classes, std::move(samples));
}

void save_dataset(const fs::path& dir, const std::string& stem, const Dataset& dataset) {
  FeatureTable t;
  t.features.resize(static_cast<Eigen::Index>(dataset.size()), dataset.dim());
  bool any_meta = false;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    t.ids.push_back(dataset[i].id);
    t.features.row(static_cast<Eigen::Index>(i)) = dataset[i].features.transpose();
    any_meta = any_meta || !dataset[i].meta.empty();
  }
  save_features(dir / (stem + ".hclf"), t);
  atomic_write(dir / (stem + "_gt.jsonl"), format_ground_truth(dataset));
  if (any_meta) {
    std::string out;
    for (const auto& s : dataset.samples()) {
      if (s.meta.empty()) continue;
      out += json{{"id", s.id}, {"meta", s.meta}}.dump();
      out.push_back('\n');
    }
    atomic_write(dir / (stem + "_meta.jsonl"), out);
  }
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"lr_decay_factor", c.lr_decay_factor},
          {"lr_decay_every", c.lr_decay_every},
          {"seed", c.seed},
          {"lambda", c.lambda},
          {"tau", c.tau},
          {"risk_weighting", to_string(c.risk_weighting)},
          {"target_refresh", to_string(c.target_refresh)},
          {"init", to_string(c.init)},
          {"init_scale", c.init_scale},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "train config must be an object");
  try {
    get_if(j, "epochs", c.epochs);
    get_if(j, "batch_size", c.batch_size);
    get_if(j, "learning_rate", c.learning_rate);
    get_if(j, "weight_decay", c.weight_decay);
    get_if(j, "lr_decay_factor", c.lr_decay_factor);
    get_if(j, "lr_decay_every", c.lr_decay_every);
    get_if(j, "seed", c.seed);
    get_if(j, "lambda", c.lambda);
    get_if(j, "tau", c.tau);
    get_if(j, "init_scale", c.init_scale);
    get_if(j, "beta1", c.beta1);
    get_if(j, "beta2", c.beta2);
    get_if(j, "epsilon", c.epsilon);
    if (j.contains("risk_weighting"))
      c.risk_weighting = risk_weighting_from_string(j["risk_weighting"].get<std::string>());
    if (j.contains("target_refresh"))
      c.target_refresh = target_refresh_from_string(j["target_refresh"].get<std::string>());
    if (j.contains("init")) c.init = init_scheme_from_string(j["init"].get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const GeneratorConfig& c) {
  return {{"classes", c.classes},       {"dim", c.dim},
          {"n_train", c.n_train},       {"n_test", c.n_test},
          {"separation", c.separation}, {"sigma", c.sigma},
          {"seed", c.seed},             {"random_prototypes", c.random_prototypes},
          {"max_retries", c.max_retries}};
}

GeneratorConfig generator_config_from_json(const json& j, GeneratorConfig c) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "generator config must be an object");
  try {
    get_if(j, "classes", c.classes);
    get_if(j, "dim", c.dim);
    get_if(j, "n_train", c.n_train);
    get_if(j, "n_test", c.n_test);
    get_if(j, "separation", c.separation);
    get_if(j, "sigma", c.sigma);
    get_if(j, "seed", c.seed);
    get_if(j, "random_prototypes", c.random_prototypes);
    get_if(j, "max_retries", c.max_retries);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("generator config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const LinearModel& m) {
  return {{"classes", m.classes()},
          {"dim", m.dim()},
          {"weights", matrix_to_json(m.weights)},
          {"bias", vector_to_json(m.bias)}};
}

LinearModel model_from_json(const json& j) {
  try {
    LinearModel m;
    m.weights = matrix_from_json(j.at("weights"), "model weights");
    m.bias = vector_from_json(j.at("bias"));
    if (m.bias.size() != m.weights.rows())
      throw Error(ErrorCode::DimensionMismatch, "model bias length does not match weight rows");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("model: ") + e.what());
  }
}

json to_json(const AnnotationStats& s) {
  json acc = json::object();
  for (const auto& [id, a] : s.annotator_accuracy) acc[id] = a;
  return {{"total", s.total},
          {"consistent", s.consistent},
          {"inconsistent", s.inconsistent},
          {"consistency_rate", s.consistency_rate},
          {"ccp", s.ccp},
          {"final_accuracy", s.final_accuracy},
          {"ground_truth_coverage", s.ground_truth_coverage},
          {"annotator_accuracy", acc}};
}

json to_json(const TrainReport& r, bool include_timing) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json row = {{"epoch", e.epoch},
                {"learning_rate", e.learning_rate},
                {"mean_objective", e.mean_objective},
                {"train_accuracy", e.train_accuracy},
                {"test_accuracy", opt_to_json(e.test_accuracy)}};
    if (include_timing) row["wall_seconds"] = e.wall_seconds;
    epochs.push_back(std::move(row));
  }
  return {{"method", r.method},
          {"train_size", r.train_size},
          {"final_train_accuracy", r.final_train_accuracy},
          {"final_test_accuracy", opt_to_json(r.final_test_accuracy)},
          {"config", to_json(r.config)},
          {"warnings", r.warnings},
          {"epochs", epochs}};
}

TrainReport train_report_from_json(const json& j) {
  try {
    TrainReport r;
    r.method = j.at("method").get<std::string>();
    r.train_size = j.at("train_size").get<std::size_t>();
    r.final_train_accuracy = j.at("final_train_accuracy").get<double>();
    r.final_test_accuracy = opt_from_json(j, "final_test_accuracy");
    r.config = train_config_from_json(j.at("config"));
    get_if(j, "warnings", r.warnings);
    for (const auto& e : j.at("epochs")) {
      EpochMetrics m;
      m.epoch = e.at("epoch").get<int>();
      m.learning_rate = e.at("learning_rate").get<double>();
      m.mean_objective = e.at("mean_objective").get<double>();
      m.train_accuracy = e.at("train_accuracy").get<double>();
      m.test_accuracy = opt_from_json(e, "test_accuracy");
      m.wall_seconds = e.value("wall_seconds", 0.0);
      r.epochs.push_back(m);
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("train report: ") + e.what());
  }
}

json to_json(const AnnotationRun& run) {
  json records = json::array();
  for (const auto& id : run.sample_order) {
    auto it = run.records.find(id);
    if (it == run.records.end()) continue;
    const auto& r = it->second;
    records.push_back({{"id", r.sample_id},
                       {"label", r.label},
                       {"inconsistent", r.inconsistent},
                       {"provenance", to_string(r.provenance)}});
  }
  return {{"num_classes", run.num_classes},
          {"policy", to_string(run.policy)},
          {"sample_order", run.sample_order},
          {"records", records}};
}

AnnotationRun annotation_run_from_json(const json& j) {
  try {
    AnnotationRun run;
    run.num_classes = j.at("num_classes").get<int>();
    run.policy = policy_from_string(j.at("policy").get<std::string>());
    run.sample_order = j.at("sample_order").get<std::vector<std::string>>();
    for (const auto& r : j.at("records")) {
      HclRecord rec{r.at("id").get<std::string>(), r.at("label").get<LabelId>(),
                    r.at("inconsistent").get<bool>(),
                    provenance_from_string(r.at("provenance").get<std::string>())};
      run.records.emplace(rec.sample_id, rec);
    }
    return run;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("annotation run: ") + e.what());
  }
}

json to_json(const AnnotatorModel& m) {
  json j = {{"id", m.id}, {"seed", m.seed}, {"confusion", matrix_to_json(m.confusion)}};
  if (m.shared) {
    j["shared"] = {{"seed", m.shared->seed},
                   {"rate", m.shared->rate},
                   {"wrong_label", matrix_to_json(m.shared->wrong_label)}};
  }
  return j;
}

AnnotatorModel annotator_model_from_json(const json& j) {
  try {
    AnnotatorModel m;
    m.id = j.at("id").get<std::string>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.confusion = matrix_from_json(j.at("confusion"), "annotator confusion");
    if (auto it = j.find("shared"); it != j.end() && !it->is_null()) {
      SharedErrorChannel ch;
      ch.seed = it->value("seed", std::uint64_t{0});
      ch.rate = it->at("rate").get<std::vector<double>>();
      ch.wrong_label = matrix_from_json(it->at("wrong_label"), "shared wrong_label");
      m.shared = std::move(ch);
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("annotator model: ") + e.what());
  }
}

std::string format_curve_csv(const TrainReport& report) {
  std::ostringstream out;
  out << "epoch,learning_rate,mean_objective,train_accuracy,test_accuracy\n";
  out << std::setprecision(17);
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << e.learning_rate << ',' << e.mean_objective << ','
        << e.train_accuracy << ',';
    if (e.test_accuracy) out << *e.test_accuracy;
    out << '\n';
  }
  return out.str();
}

std::string format_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw Error(ErrorCode::InvalidArgument, "table row width differs from the header");
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      // first column left-aligned, numbers right-aligned
      const auto pad = std::string(width[c] - row[c].size(), ' ');
      if (c) out += "  ";
      out += c == 0 ? row[c] + pad : pad + row[c];
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out.push_back('\n');
  };
  emit(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') + '\n';
  for (const auto& row : rows) emit(row);
  return out;
}

std::string format_double(double v, int precision) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json parse_json(std::string_view text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    format_error(source, e.what());
  }
}

json load_json(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "file not found: " + path.string());
  return parse_json(read_file(path), path.string());
}

}  // namespace hcl::io
