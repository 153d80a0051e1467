#include "hcl/pipeline.hpp"

#include <algorithm>
#include <set>

#include "hcl/error.hpp"
#include "hcl/io.hpp"
#include "hcl/service.hpp"

namespace hcl::pipeline {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::Config, what); }

fs::path resolve(const fs::path& base, const json& j, const char* key) {
  fs::path p = j.at(key).get<std::string>();
  return p.is_absolute() || base.empty() ? p : base / p;
}

std::optional<fs::path> resolve_opt(const fs::path& base, const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return resolve(base, j, key);
}

json path_or_null(const std::optional<fs::path>& p) {
  return p ? json(p->string()) : json(nullptr);
}

AnnotatorModel model_from_spec(const json& j, int classes, std::uint64_t seed) {
  const auto id = j.at("id").get<std::string>();
  const auto s = j.value("seed", seed);
  const auto kind = j.value("kind", std::string{j.contains("confusion") ? "confusion" : ""});
  if (kind == "identity") return AnnotatorModel::identity(id, classes, s);
  if (kind == "uniform") return AnnotatorModel::uniform_noise(id, classes, j.at("accuracy").get<double>(), s);
  if (kind == "per-class") {
    const auto acc = j.at("accuracy").get<std::vector<double>>();
    return AnnotatorModel::per_class_accuracy(id, acc, s);
  }
  if (kind == "confusion") {
    json full = j;
    full["seed"] = s;
    return io::annotator_model_from_json(full);
  }
  config_error("annotator '" + id + "': unknown kind '" + kind + "'");
}

// Echoed into every artifact: the resolved config minus the output location,
// which does not influence results.
json echo(const ExperimentConfig& c) {
  json j = c.to_json();
  j.erase("out");
  return j;
}

json with_config(json body, const ExperimentConfig& c) {
  body["seed"] = c.seed;
  body["config"] = echo(c);
  return body;
}

void write_json(const ExperimentConfig& c, const std::string& name, json body) {
  io::atomic_write(c.out / name, io::dump(with_config(std::move(body), c)));
}

std::string text_banner(const ExperimentConfig& c) {
  return "# seed " + std::to_string(c.seed) + "\n# config " + echo(c).dump() + "\n";
}

std::string opt_pct(const std::optional<double>& v) {
  return v ? io::format_double(100.0 * *v, 2) : std::string("-");
}

const PrototypeBank* bank_of(const World& w) { return w.prototypes ? &*w.prototypes : nullptr; }

journal::Header run_header(const ExperimentConfig& c, const World& w,
                           const AnnotationSet& annotations) {
  journal::Header h;
  h.classes = w.train.classes().names();
  h.annotators = annotations.annotator_ids();
  h.policy = c.policy;
  h.config = echo(c);
  return h;
}

void write_stats(const ExperimentConfig& c, const AnnotationStats& st) {
  json body = io::to_json(st);
  body["identity_final_accuracy"] = st.consistency_rate * st.ccp + (1.0 - st.consistency_rate);
  write_json(c, "stats.json", body);
  std::vector<std::string> header = {"samples", "consistency_rate", "ccp", "final_accuracy"};
  std::vector<std::string> row = {std::to_string(st.total), io::format_double(st.consistency_rate),
                                  io::format_double(st.ccp), io::format_double(st.final_accuracy)};
  for (const auto& [id, acc] : st.annotator_accuracy) {
    header.push_back("acc:" + id);
    row.push_back(io::format_double(acc));
  }
  io::atomic_write(c.out / "stats.txt", text_banner(c) + io::format_table(header, {row}));
}

void write_session_pointer(const ExperimentConfig& c, const std::string& id,
                           const CorrectionQueue& queue) {
  write_json(c, "session.json",
             {{"status", "awaiting corrections"},
              {"session_id", id},
              {"sessions_dir", c.sessions_dir.string()},
              {"pending", queue.pending_count()},
              {"total", queue.total()}});
}

}  // namespace

std::vector<std::string> ExperimentConfig::annotator_ids() const {
  std::vector<std::string> ids;
  if (calibrate) ids = calibrate->options.ids;
  for (const auto& f : annotator_files) ids.push_back(f.id);
  for (const auto& m : annotator_models) ids.push_back(m.id);
  return ids;
}

void ExperimentConfig::validate() const {
  if (simulate.has_value() == ingest.has_value())
    config_error("dataset needs exactly one of 'simulate' or 'ingest'");
  if (simulate) simulate->validate();
  const int sources = int(calibrate.has_value()) + int(!annotator_files.empty()) +
                      int(!annotator_models.empty());
  if (sources == 0) config_error("annotator list is empty");
  if (sources > 1) config_error("annotators need exactly one of 'calibrate', 'files' or 'models'");
  const auto ids = annotator_ids();
  if (ids.size() != required_annotators(policy))
    config_error("policy " + std::string(to_string(policy)) + " needs " +
                 std::to_string(required_annotators(policy)) + " annotators, got " +
                 std::to_string(ids.size()));
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size())
    config_error("annotator ids must be unique");
  oracle.validate();
  train.validate();
  if (sweep_grid.empty()) config_error("sweep grid is empty");
  for (double l : sweep_grid)
    if (!(l >= 0.0 && l <= 1.0)) config_error("sweep grid values must lie in [0, 1]");
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base) {
  if (!j.is_object()) config_error("config must be a JSON object");
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    const auto& ds = j.at("dataset");
    if (ds.contains("simulate")) {
      GeneratorConfig g;
      g.seed = c.seed;
      c.simulate = io::generator_config_from_json(ds["simulate"], g);
    }
    if (ds.contains("ingest")) {
      const auto& in = ds["ingest"];
      IngestPaths p;
      p.classes = resolve(base, in, "classes");
      p.train_features = resolve(base, in, "train_features");
      p.train_ground_truth = resolve_opt(base, in, "train_ground_truth");
      p.train_meta = resolve_opt(base, in, "train_meta");
      p.test_features = resolve_opt(base, in, "test_features");
      p.test_ground_truth = resolve_opt(base, in, "test_ground_truth");
      p.prototypes = resolve_opt(base, in, "prototypes");
      c.ingest = std::move(p);
    }

    const auto& ann = j.at("annotators");
    if (auto it = ann.find("calibrate"); it != ann.end()) {
      CalibratedPair cal;
      cal.consistency = it->at("consistency").get<double>();
      cal.ccp = it->at("ccp").get<double>();
      cal.options.seed = it->value("seed", c.seed);
      cal.options.ramp_low = it->value("ramp_low", cal.options.ramp_low);
      cal.options.ramp_high = it->value("ramp_high", cal.options.ramp_high);
      cal.options.ids = it->value("ids", cal.options.ids);
      c.calibrate = std::move(cal);
    }
    if (auto it = ann.find("files"); it != ann.end()) {
      for (const auto& f : *it) c.annotator_files.push_back({f.at("id").get<std::string>(), resolve(base, f, "path")});
    }
    if (auto it = ann.find("models"); it != ann.end()) {
      const int k = c.simulate ? c.simulate->classes : it->value("classes", 0);
      std::uint64_t n = 0;
      for (const auto& m : *it) {
        const int classes = m.contains("confusion") ? static_cast<int>(m["confusion"].size()) : k;
        if (classes <= 0) config_error("annotator models need the class count");
        c.annotator_models.push_back(model_from_spec(m, classes, c.seed + 1 + n++));
      }
    }

    c.policy = policy_from_string(j.value("policy", std::string(to_string(c.policy))));

    if (auto it = j.find("corrector"); it != j.end()) {
      const auto kind = it->value("kind", std::string("oracle"));
      if (kind == "oracle") {
        c.corrector = Corrector::Oracle;
      } else if (kind == "service") {
        c.corrector = Corrector::Service;
      } else {
        config_error("corrector kind must be 'oracle' or 'service'");
      }
      c.oracle.error_rate = it->value("error_rate", 0.0);
      c.oracle.seed = it->value("seed", c.seed);
      c.sessions_dir = it->value("sessions_dir", c.sessions_dir.string());
      if (auto s = it->find("session"); s != it->end() && !s->is_null())
        c.session_id = s->get<std::string>();
    } else {
      c.oracle.seed = c.seed;
    }

    TrainConfig t;
    t.seed = c.seed;
    c.train = io::train_config_from_json(j.value("train", json::object()), t);
    if (auto it = j.find("sweep"); it != j.end())
      c.sweep_grid = it->value("grid", c.sweep_grid);
    c.out = j.value("out", c.out.string());
  } catch (const json::exception& e) {
    config_error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  if (simulate) j["dataset"]["simulate"] = io::to_json(*simulate);
  if (ingest) {
    j["dataset"]["ingest"] = {{"classes", ingest->classes.string()},
                              {"train_features", ingest->train_features.string()},
                              {"train_ground_truth", path_or_null(ingest->train_ground_truth)},
                              {"train_meta", path_or_null(ingest->train_meta)},
                              {"test_features", path_or_null(ingest->test_features)},
                              {"test_ground_truth", path_or_null(ingest->test_ground_truth)},
                              {"prototypes", path_or_null(ingest->prototypes)}};
  }
  if (calibrate) {
    j["annotators"]["calibrate"] = {{"consistency", calibrate->consistency},
                                    {"ccp", calibrate->ccp},
                                    {"seed", calibrate->options.seed},
                                    {"ramp_low", calibrate->options.ramp_low},
                                    {"ramp_high", calibrate->options.ramp_high},
                                    {"ids", calibrate->options.ids}};
  }
  for (const auto& f : annotator_files)
    j["annotators"]["files"].push_back({{"id", f.id}, {"path", f.path.string()}});
  for (const auto& m : annotator_models) j["annotators"]["models"].push_back(io::to_json(m));
  j["policy"] = to_string(policy);
  j["corrector"] = {{"kind", corrector == Corrector::Oracle ? "oracle" : "service"},
                    {"error_rate", oracle.error_rate},
                    {"seed", oracle.seed},
                    {"sessions_dir", sessions_dir.string()},
                    {"session", session_id ? json(*session_id) : json(nullptr)}};
  j["train"] = io::to_json(train);
  j["sweep"] = {{"grid", sweep_grid}};
  j["out"] = out.string();
  return j;
}

void ExperimentConfig::override_seed(std::uint64_t value) {
  seed = value;
  if (simulate) simulate->seed = value;
  if (calibrate) calibrate->options.seed = value;
  std::uint64_t n = 0;
  for (auto& m : annotator_models) {
    m.seed = value + 1 + n++;
    if (m.shared) m.shared->seed = value;
  }
  oracle.seed = value;
  train.seed = value;
}

ExperimentConfig load_config(const fs::path& path) {
  return ExperimentConfig::from_json(io::load_json(path), path.parent_path());
}

World load_world(const ExperimentConfig& c, bool write_dataset) {
  if (c.simulate) {
    auto sim = generate_dataset(*c.simulate);
    if (write_dataset) {
      const auto dir = c.out / "dataset";
      io::save_classes(dir / "classes.json", sim.train.classes());
      io::save_dataset(dir, "train", sim.train);
      io::save_dataset(dir, "test", sim.test);
      io::FeatureTable protos{sim.train.classes().names(), sim.prototypes.rows()};
      io::save_features(dir / "prototypes.hclf", protos);
    }
    return World{std::move(sim.train), std::move(sim.test), std::move(sim.prototypes)};
  }
  const auto& in = *c.ingest;
  auto classes = io::load_classes(in.classes);
  auto train = io::load_dataset(classes, in.train_features, in.train_ground_truth, in.train_meta);
  std::optional<Dataset> test;
  if (in.test_features) {
    test = io::load_dataset(classes, *in.test_features, in.test_ground_truth);
    if (!test->empty() && !train.empty() && test->dim() != train.dim())
      throw Error(ErrorCode::DimensionMismatch, in.test_features->string() + ": dimension " +
                                                    std::to_string(test->dim()) + " != train " +
                                                    std::to_string(train.dim()));
  }
  std::optional<PrototypeBank> bank;
  if (in.prototypes) {
    if (!fs::exists(*in.prototypes))
      throw Error(ErrorCode::Io, "prototype file not found: " + in.prototypes->string());
    auto t = io::load_features(*in.prototypes);
    if (t.features.rows() != classes.size())
      throw Error(ErrorCode::DimensionMismatch, in.prototypes->string() + ": " +
                                                    std::to_string(t.features.rows()) +
                                                    " prototypes for " +
                                                    std::to_string(classes.size()) + " classes");
    Eigen::MatrixXd rows = t.features;
    if (t.ids == classes.names() || std::is_permutation(t.ids.begin(), t.ids.end(),
                                                        classes.names().begin(),
                                                        classes.names().end())) {
      for (std::size_t r = 0; r < t.ids.size(); ++r)
        rows.row(*classes.find(t.ids[r])) = t.features.row(static_cast<Eigen::Index>(r));
    }
    if (rows.cols() != train.dim())
      throw Error(ErrorCode::DimensionMismatch, in.prototypes->string() + ": prototype dimension " +
                                                    std::to_string(rows.cols()) + " != features " +
                                                    std::to_string(train.dim()));
    bank.emplace(std::move(rows));
  }
  return World{std::move(train), std::move(test), std::move(bank)};
}

AnnotationSet load_annotations(const ExperimentConfig& c, const World& w) {
  const int k = w.train.classes().size();
  if (c.calibrate) {
    auto opts = c.calibrate->options;
    opts.classes = k;
    auto cal = calibrate_pair(c.calibrate->consistency, c.calibrate->ccp, opts);
    std::vector<AnnotatorModel> models{cal.annotators.first, cal.annotators.second};
    return annotate_all(w.train.samples(), models);
  }
  if (!c.annotator_models.empty()) {
    for (const auto& m : c.annotator_models)
      if (m.classes() != k)
        config_error("annotator '" + m.id + "' has " + std::to_string(m.classes()) +
                     " classes, dataset has " + std::to_string(k));
    return annotate_all(w.train.samples(), c.annotator_models);
  }
  AnnotationSet set(c.annotator_ids());
  for (const auto& f : c.annotator_files) io::load_predictions(f.path, set, f.id);
  return set;
}

std::vector<journal::SampleEvent> sample_events(const Dataset& dataset,
                                                const AnnotationSet& annotations) {
  std::vector<journal::SampleEvent> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset.samples())
    out.push_back({s.id, annotations.predictions_for(s.id), s.meta});
  return out;
}

Annotated annotate_and_correct(const ExperimentConfig& c, const World& w) {
  Annotated a{load_annotations(c, w), {}, std::nullopt, std::nullopt};
  a.build = build_queue(w.train, a.annotations, c.policy);
  auto& run = a.build.run;
  auto& queue = a.build.queue;
  const int k = w.train.classes().size();

  std::vector<std::string> order;
  for (const auto& s : w.train.samples()) order.push_back(s.id);
  for (std::size_t i = 0; i < a.annotations.annotator_count(); ++i) {
    io::atomic_write(c.out / "predictions" / (a.annotations.annotator_ids()[i] + ".jsonl"),
                     io::format_predictions(a.annotations, i, order));
  }

  std::vector<journal::CorrectionEvent> corrections;
  if (c.corrector == ExperimentConfig::Corrector::Oracle) {
    for (const auto& id : queue.pending()) {
      const auto label = correct(w.train.by_id(id), c.oracle, k);
      apply_correction(run, queue, id, label, Provenance::Oracle);
      corrections.push_back({id, label, Provenance::Oracle, ""});
    }
  } else {
    auto events = sample_events(w.train, a.annotations);
    if (c.session_id) {
      const auto path = c.sessions_dir / (*c.session_id + ".jsonl");
      auto session = journal::replay_file(path);
      if (session.samples.size() != events.size())
        throw Error(ErrorCode::Conflict, path.string() + ": session samples differ from the dataset");
      for (std::size_t i = 0; i < events.size(); ++i) {
        if (session.samples[i].id != events[i].id ||
            session.samples[i].predictions != events[i].predictions)
          throw Error(ErrorCode::Conflict, path.string() + ": session sample '" +
                                               session.samples[i].id + "' differs from the run");
      }
      for (const auto& e : session.corrections) {
        apply_correction(run, queue, e.sample_id, e.label, e.provenance);
        corrections.push_back(e);
      }
      a.session_id = c.session_id;
    } else {
      auto header = run_header(c, w, a.annotations);
      header.session_id = service::new_session_id();
      service::Session::create(c.sessions_dir / (header.session_id + ".jsonl"), header, events);
      a.session_id = header.session_id;
    }
    if (!queue.drained()) {
      write_session_pointer(c, *a.session_id, queue);
      return a;
    }
  }

  auto header = run_header(c, w, a.annotations);
  header.session_id = a.session_id.value_or("");
  std::string text = journal::header_line(header);
  for (const auto& e : sample_events(w.train, a.annotations)) text += journal::sample_line(e);
  for (const auto& e : corrections) text += journal::correction_line(e);
  io::atomic_write(c.out / "journal.jsonl", text);

  if (run.complete() && w.train.ground_truth_coverage() > 0.0) {
    a.stats = annotation_stats(run, w.train, &a.annotations);
    write_stats(c, *a.stats);
  }
  return a;
}

ExperimentResult run_experiment(const ExperimentConfig& c) {
  c.validate();
  auto world = load_world(c, c.simulate.has_value());
  write_json(c, "config.json", json::object());
  auto a = annotate_and_correct(c, world);
  ExperimentResult result;
  result.session_id = a.session_id;
  result.stats = a.stats;
  if (!a.build.run.complete()) {
    result.status = Status::AwaitingCorrections;
    return result;
  }
  const Dataset* test = world.test ? &*world.test : nullptr;
  auto trained = train_hcl(world.train, a.build.run, bank_of(world), c.train, test);

  write_json(c, "report.json", io::to_json(trained.report));
  io::atomic_write(c.out / "curve.csv", io::format_curve_csv(trained.report));
  write_json(c, "model.json", io::to_json(trained.model));
  json timing = json::array();
  for (const auto& e : trained.report.epochs) timing.push_back(e.wall_seconds);
  io::atomic_write(c.out / "timing.json", io::dump({{"epoch_wall_seconds", timing}}));

  json metrics = {{"method", trained.report.method},
                  {"train_size", trained.report.train_size},
                  {"final_train_accuracy", trained.report.final_train_accuracy},
                  {"final_test_accuracy", trained.report.final_test_accuracy
                                              ? json(*trained.report.final_test_accuracy)
                                              : json(nullptr)}};
  if (a.stats) metrics["label_accuracy"] = a.stats->final_accuracy;
  write_json(c, "metrics.json", metrics);
  io::atomic_write(c.out / "metrics.txt",
                   text_banner(c) +
                       io::format_table({"method", "train_size", "train_acc", "test_acc"},
                                        {{trained.report.method,
                                          std::to_string(trained.report.train_size),
                                          opt_pct(trained.report.final_train_accuracy),
                                          opt_pct(trained.report.final_test_accuracy)}}));
  result.report = std::move(trained.report);
  return result;
}

BaselineSuite run_baseline_suite(const ExperimentConfig& c) {
  c.validate();
  auto world = load_world(c, c.simulate.has_value());
  auto a = annotate_and_correct(c, world);
  BaselineSuite suite;
  if (!a.build.run.complete()) {
    suite.status = Status::AwaitingCorrections;
    return suite;
  }
  const Dataset* test = world.test ? &*world.test : nullptr;
  std::vector<BaselineSpec> specs = {BaselineSpec::parse("FSL"), BaselineSpec::parse("HL"),
                                     BaselineSpec::parse("VL")};
  for (const auto& id : a.annotations.annotator_ids())
    specs.push_back({BaselineKind::SingleAnnotator, id});

  auto label_accuracy = [&](const std::vector<std::size_t>& idx,
                            const std::vector<LabelId>& labels) -> std::optional<double> {
    std::size_t covered = 0, right = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& gt = world.train[idx[i]].ground_truth;
      if (!gt) continue;
      ++covered;
      right += *gt == labels[i];
    }
    if (covered == 0) return std::nullopt;
    return static_cast<double>(right) / static_cast<double>(covered);
  };

  json rows = json::array();
  for (const auto& spec : specs) {
    const auto view = baseline_view(a.build.run, world.train, a.annotations, spec);
    BaselineRow row{view.name, view.size(), label_accuracy(view.indices, view.labels), 0.0, {}};
    if (view.size() == 0) {
      row.train_accuracy = 0.0;
    } else {
      auto r = train_baseline(world.train, view, c.train, test);
      row.train_accuracy = r.report.final_train_accuracy;
      row.test_accuracy = r.report.final_test_accuracy;
    }
    suite.rows.push_back(std::move(row));
  }
  {
    auto r = train_hcl(world.train, a.build.run, bank_of(world), c.train, test);
    std::vector<std::size_t> idx;
    std::vector<LabelId> labels;
    for (std::size_t i = 0; i < world.train.size(); ++i) {
      idx.push_back(i);
      labels.push_back(a.build.run.records.at(world.train[i].id).label);
    }
    suite.rows.push_back({"HCL", world.train.size(), label_accuracy(idx, labels),
                          r.report.final_train_accuracy, r.report.final_test_accuracy});
  }

  std::vector<std::vector<std::string>> table;
  for (const auto& row : suite.rows) {
    rows.push_back({{"method", row.method},
                    {"train_size", row.train_size},
                    {"label_accuracy", row.label_accuracy ? json(*row.label_accuracy) : json(nullptr)},
                    {"train_accuracy", row.train_accuracy},
                    {"test_accuracy", row.test_accuracy ? json(*row.test_accuracy) : json(nullptr)}});
    table.push_back({row.method, std::to_string(row.train_size), opt_pct(row.label_accuracy),
                     opt_pct(row.train_accuracy), opt_pct(row.test_accuracy)});
  }
  write_json(c, "baselines.json", {{"rows", rows}});
  io::atomic_write(c.out / "baselines.txt",
                   text_banner(c) + io::format_table({"method", "train_size", "label_acc",
                                                      "train_acc", "test_acc"},
                                                     table));
  return suite;
}

SweepResult run_lambda_sweep(const ExperimentConfig& c) {
  c.validate();
  auto world = load_world(c, c.simulate.has_value());
  auto a = annotate_and_correct(c, world);
  SweepResult result;
  if (!a.build.run.complete()) {
    result.status = Status::AwaitingCorrections;
    return result;
  }
  const Dataset* test = world.test ? &*world.test : nullptr;
  result.rows =
      lambda_sweep(world.train, a.build.run, bank_of(world), c.train, c.sweep_grid, test);

  json rows = json::array();
  std::vector<std::vector<std::string>> table;
  std::string csv = "lambda,train_accuracy,test_accuracy\n";
  for (const auto& r : result.rows) {
    rows.push_back({{"lambda", r.lambda},
                    {"train_accuracy", r.final_train_accuracy},
                    {"test_accuracy", r.final_test_accuracy ? json(*r.final_test_accuracy) : json(nullptr)},
                    {"report", io::to_json(r.report)}});
    table.push_back({io::format_double(r.lambda, 2), opt_pct(r.final_train_accuracy),
                     opt_pct(r.final_test_accuracy)});
    csv += json(r.lambda).dump() + "," + json(r.final_train_accuracy).dump() + "," +
           (r.final_test_accuracy ? json(*r.final_test_accuracy).dump() : std::string()) + "\n";
  }
  write_json(c, "sweep.json", {{"rows", rows}});
  io::atomic_write(c.out / "sweep.csv", csv);
  io::atomic_write(c.out / "sweep.txt",
                   text_banner(c) + io::format_table({"lambda", "train_acc", "test_acc"}, table));
  return result;
}

int exit_code(Status status) noexcept { return status == Status::Completed ? 0 : 3; }

}  // namespace hcl::pipeline
