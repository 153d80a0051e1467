#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcl/journal.hpp"

namespace httplib {
class Server;
}

namespace hcl::service {

namespace fs = std::filesystem;
using nlohmann::json;

struct Response {
  int status = 200;
  json body;
};

// Read-only view published after every accepted write.
struct Snapshot {
  std::shared_ptr<const journal::State> base;  // header and samples as replayed at open
  AnnotationRun run;
  CorrectionQueue queue;
  std::vector<journal::CorrectionEvent> corrections;
};

class Session {
 public:
  // Replays the journal at path, repairing a torn tail.
  static std::unique_ptr<Session> open(const fs::path& path);
  static std::unique_ptr<Session> create(const fs::path& path, journal::Header header,
                                         const std::vector<journal::SampleEvent>& samples);

  const std::string& id() const noexcept { return id_; }
  const fs::path& path() const noexcept { return writer_.path(); }
  std::shared_ptr<const Snapshot> snapshot() const;

  // 200 applied or identical resubmission, 404 unknown sample, 409 conflict
  // (consensus sample or a different earlier label), 422 label out of range.
  // An accepted correction is durable in the journal before this returns.
  Response submit(std::string_view sample_id, LabelId label, std::string ts = {});

  Response queue(std::size_t offset, std::size_t limit) const;
  Response progress() const;
  Response classes() const;
  std::string export_corrections() const;

 private:
  Session(std::string id, journal::Writer writer, journal::State state);
  void publish();

  std::string id_;
  journal::Writer writer_;
  std::mutex write_mutex_;
  journal::State state_;  // guarded by write_mutex_
  std::shared_ptr<const journal::State> base_;
  mutable std::mutex snapshot_mutex_;  // held only to copy or swap the pointer
  std::shared_ptr<const Snapshot> snapshot_;
};

// One journal per session under a directory, "<session_id>.jsonl".
class SessionStore {
 public:
  // Opens every journal already in dir.
  explicit SessionStore(fs::path dir);

  const fs::path& dir() const noexcept { return dir_; }
  // Always mints a fresh id, even for identical inputs.
  std::string create(journal::Header header, const std::vector<journal::SampleEvent>& samples);
  Session* find(std::string_view id) const;
  std::vector<std::string> ids() const;

 private:
  fs::path dir_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Session>, std::less<>> sessions_;
};

std::string new_session_id();

struct ServerOptions {
  std::optional<fs::path> ui_dir;
  bool dev_cors = false;
};

// Registers the JSON API under /api and, when given, static UI files.
void mount(httplib::Server& server, SessionStore& store, const ServerOptions& options = {});

}  // namespace hcl::service
