#include "hcl/service.hpp"

#include <httplib.h>

#include <charconv>
#include <random>

#include "hcl/error.hpp"

namespace hcl::service {

namespace {

Response error_response(int status, std::string message) {
  return {status, json{{"error", std::move(message)}}};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSample: return 404;
    case ErrorCode::Conflict: return 409;
    case ErrorCode::OutOfRange: return 422;
    case ErrorCode::InvalidArgument:
    case ErrorCode::Format: return 400;
    default: return 500;
  }
}

std::size_t parse_size(const std::string& s, std::size_t fallback) {
  if (s.empty()) return fallback;
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw Error(ErrorCode::InvalidArgument, "not a nonnegative integer: '" + s + "'");
  return v;
}

}  // namespace

Session::Session(std::string id, journal::Writer writer, journal::State state)
    : id_(std::move(id)), writer_(std::move(writer)), state_(std::move(state)) {
  auto base = std::make_shared<journal::State>();
  base->header = state_.header;
  base->samples = state_.samples;
  base->sample_index = state_.sample_index;
  base_ = std::move(base);
  state_.lines.clear();  // the journal on disk is the record
  publish();
}

std::unique_ptr<Session> Session::open(const fs::path& path) {
  auto state = journal::replay_file(path);
  auto writer = journal::Writer::open(path, state.valid_bytes);
  auto id = state.header.session_id.empty() ? path.stem().string() : state.header.session_id;
  return std::unique_ptr<Session>(new Session(std::move(id), std::move(writer), std::move(state)));
}

std::unique_ptr<Session> Session::create(const fs::path& path, journal::Header header,
                                         const std::vector<journal::SampleEvent>& samples) {
  if (header.created.empty()) header.created = journal::utc_now();
  auto writer = journal::Writer::create(path, header, samples);
  auto state = journal::replay_file(path);
  return std::unique_ptr<Session>(
      new Session(header.session_id, std::move(writer), std::move(state)));
}

void Session::publish() {
  auto snap = std::make_shared<Snapshot>();
  snap->base = base_;
  snap->run = state_.run;
  snap->queue = state_.queue;
  snap->corrections = state_.corrections;
  std::lock_guard lock(snapshot_mutex_);
  snapshot_ = std::move(snap);
}

std::shared_ptr<const Snapshot> Session::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

Response Session::submit(std::string_view sample_id, LabelId label, std::string ts) {
  std::lock_guard lock(write_mutex_);
  const std::string id(sample_id);
  if (label < 0 || label >= state_.run.num_classes) {
    return error_response(422, "label " + std::to_string(label) + " outside [0, " +
                                   std::to_string(state_.run.num_classes) + ")");
  }
  if (!state_.sample_index.count(id)) return error_response(404, "unknown sample '" + id + "'");
  if (!state_.queue.contains(id))
    return error_response(409, "sample '" + id + "' has a consensus label");
  if (auto existing = state_.queue.resolution(id)) {
    if (*existing == label)
      return {200, json{{"sample_id", id}, {"label", label}, {"status", "unchanged"}}};
    return error_response(409, "sample '" + id + "' already corrected to " +
                                   std::to_string(*existing));
  }
  journal::CorrectionEvent event{id, label, Provenance::Human,
                                 ts.empty() ? journal::utc_now() : std::move(ts)};
  writer_.append(event);  // durable before the state changes or the caller hears back
  apply_correction(state_.run, state_.queue, id, label, Provenance::Human);
  state_.corrections.push_back(std::move(event));
  publish();
  return {200, json{{"sample_id", id}, {"label", label}, {"status", "applied"}}};
}

Response Session::queue(std::size_t offset, std::size_t limit) const {
  const auto snap = snapshot();
  const auto& header = snap->base->header;
  json items = json::array();
  std::size_t position = offset;
  for (const auto& id : snap->queue.pending_page(offset, limit)) {
    const auto& sample = snap->base->sample(id);
    json preds = json::array();
    for (std::size_t a = 0; a < sample.predictions.size(); ++a) {
      const auto label = sample.predictions[a];
      preds.push_back({{"annotator", header.annotators[a]},
                       {"label", label},
                       {"class_name", header.classes.at(static_cast<std::size_t>(label))}});
    }
    json meta = json::object();
    for (const auto& [k, v] : sample.meta) meta[k] = v;
    items.push_back({{"sample_id", id}, {"position", position++}, {"predictions", preds},
                     {"meta", meta}});
  }
  return {200, json{{"offset", offset}, {"pending", snap->queue.pending_count()}, {"items", items}}};
}

Response Session::progress() const {
  const auto snap = snapshot();
  const auto total_samples = snap->run.sample_order.size();
  const double rate =
      total_samples == 0 ? 0.0
                         : static_cast<double>(total_samples - snap->queue.total()) /
                               static_cast<double>(total_samples);
  return {200, json{{"pending", snap->queue.pending_count()},
                    {"resolved", snap->queue.resolved_count()},
                    {"total", snap->queue.total()},
                    {"consistency_rate", rate}}};
}

Response Session::classes() const { return {200, json(snapshot()->base->header.classes)}; }

std::string Session::export_corrections() const {
  return journal::format_corrections(snapshot()->corrections);
}

std::string new_session_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng(std::random_device{}());
  std::lock_guard lock(mutex);
  static constexpr char hex[] = "0123456789abcdef";
  std::string id = "s-";
  auto bits = rng();
  for (int i = 0; i < 12; ++i, bits >>= 4) id.push_back(hex[bits & 0xf]);
  return id;
}

SessionStore::SessionStore(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() != ".jsonl") continue;
    auto session = Session::open(entry.path());
    auto id = session->id();
    sessions_.emplace(std::move(id), std::move(session));
  }
}

std::string SessionStore::create(journal::Header header,
                                 const std::vector<journal::SampleEvent>& samples) {
  std::lock_guard lock(mutex_);
  std::string id;
  do {
    id = new_session_id();
  } while (sessions_.count(id) || fs::exists(dir_ / (id + ".jsonl")));
  header.session_id = id;
  sessions_.emplace(id, Session::create(dir_ / (id + ".jsonl"), std::move(header), samples));
  return id;
}

Session* SessionStore::find(std::string_view id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second.get();
}

std::vector<std::string> SessionStore::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

void mount(httplib::Server& server, SessionStore& store, const ServerOptions& options) {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  // Runs handler with the session named in the first capture, or answers 404.
  auto with_session = [&store, send](auto handler) {
    return [&store, send, handler](const httplib::Request& req, httplib::Response& res) {
      Session* s = store.find(req.matches[1].str());
      if (!s) return send(res, error_response(404, "unknown session '" + req.matches[1].str() + "'"));
      try {
        handler(*s, req, res);
      } catch (const Error& e) {
        send(res, error_response(status_for(e.code()), e.what()));
      } catch (const json::exception& e) {
        send(res, error_response(400, e.what()));
      }
    };
  };

  server.Get("/api/sessions", [&store, send](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const auto& id : store.ids()) {
      if (Session* s = store.find(id)) {
        list.push_back({{"session_id", id},
                        {"created", s->snapshot()->base->header.created},
                        {"progress", s->progress().body}});
      }
    }
    send(res, {200, list});
  });

  server.Get(R"(/api/sessions/([^/]+)/queue)",
             with_session([send](Session& s, const httplib::Request& req, httplib::Response& res) {
               const auto offset = parse_size(req.get_param_value("offset"), 0);
               const auto limit = parse_size(req.get_param_value("limit"), 50);
               send(res, s.queue(offset, limit));
             }));

  server.Post(R"(/api/sessions/([^/]+)/corrections)",
              with_session([send](Session& s, const httplib::Request& req, httplib::Response& res) {
                const auto body = json::parse(req.body);
                if (!body.is_object() || !body.contains("sample_id") || !body.contains("label"))
                  return send(res, error_response(400, "body needs sample_id and label"));
                if (!body["label"].is_number_integer())
                  return send(res, error_response(422, "label must be an integer"));
                send(res, s.submit(body["sample_id"].get<std::string>(), body["label"].get<LabelId>()));
              }));

  server.Get(R"(/api/sessions/([^/]+)/progress)",
             with_session([send](Session& s, const httplib::Request&, httplib::Response& res) {
               send(res, s.progress());
             }));

  server.Get(R"(/api/sessions/([^/]+)/classes)",
             with_session([send](Session& s, const httplib::Request&, httplib::Response& res) {
               send(res, s.classes());
             }));

  server.Get(R"(/api/sessions/([^/]+)/export)",
             with_session([](Session& s, const httplib::Request&, httplib::Response& res) {
               res.set_content(s.export_corrections(), "application/x-ndjson");
             }));

  if (options.ui_dir) server.set_mount_point("/", options.ui_dir->string());

  if (options.dev_cors) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });
  }
}

}  // namespace hcl::service
