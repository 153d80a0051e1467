#include "hcl/journal.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <ctime>

#include "hcl/error.hpp"
#include "hcl/io.hpp"

namespace hcl::journal {

namespace {

json meta_to_json(const std::map<std::string, std::string>& meta) {
  json j = json::object();
  for (const auto& [k, v] : meta) j[k] = v;
  return j;
}

std::map<std::string, std::string> meta_from_json(const json& j) {
  std::map<std::string, std::string> meta;
  if (!j.is_object()) return meta;
  for (auto& [k, v] : j.items()) meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
  return meta;
}

Header parse_header(const json& j) {
  Header h;
  const int version = j.at("version").get<int>();
  if (version > kVersion)
    throw Error(ErrorCode::Format, "journal version " + std::to_string(version) + " is newer than " +
                                       std::to_string(kVersion));
  h.session_id = j.value("session_id", std::string{});
  h.created = j.value("created", std::string{});
  h.classes = j.at("classes").get<std::vector<std::string>>();
  h.annotators = j.at("annotators").get<std::vector<std::string>>();
  h.policy = policy_from_string(j.at("policy").get<std::string>());
  if (auto it = j.find("config"); it != j.end()) h.config = *it;
  return h;
}

CorrectionEvent parse_correction(const json& j) {
  const auto& id = j.contains("sample_id") ? j.at("sample_id") : j.at("id");
  return {id.get<std::string>(), j.at("label").get<LabelId>(),
          provenance_from_string(j.value("provenance", std::string{"human"})),
          j.value("ts", std::string{})};
}

// Records a correction against state, mirroring apply_correction.
bool accept(State& state, const CorrectionEvent& e) {
  try {
    const auto r =
        apply_correction(state.run, state.queue, e.sample_id, e.label, e.provenance);
    if (r == CorrectionResult::Applied) {
      state.corrections.push_back(e);
      return true;
    }
  } catch (const Error& err) {
    state.warnings.push_back("dropped correction for '" + e.sample_id + "': " + err.what());
  }
  return false;
}

void add_sample(State& state, SampleEvent e) {
  if (state.sample_index.count(e.id)) {
    state.warnings.push_back("duplicate sample line for '" + e.id + "' ignored");
    return;
  }
  const auto c = detect_consensus(e.predictions, state.run.policy);
  for (auto p : e.predictions) {
    if (p < 0 || p >= state.run.num_classes)
      throw Error(ErrorCode::OutOfRange, "prediction " + std::to_string(p) + " for '" + e.id +
                                             "' is outside the class range");
  }
  state.run.sample_order.push_back(e.id);
  if (c.inconsistent) {
    state.queue.enqueue(e.id);
  } else {
    state.run.records[e.id] = HclRecord{e.id, *c.label, false, Provenance::Consensus};
  }
  state.sample_index.emplace(e.id, state.samples.size());
  state.samples.push_back(std::move(e));
}

int open_or_throw(const fs::path& path, int flags) {
  const int fd = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
  if (fd < 0)
    throw Error(ErrorCode::Io, "cannot open " + path.string() + ": " + std::strerror(errno));
  return fd;
}

}  // namespace

std::string header_line(const Header& h) {
  json j = {{"type", "header"},
            {"version", kVersion},
            {"session_id", h.session_id},
            {"created", h.created},
            {"classes", h.classes},
            {"annotators", h.annotators},
            {"policy", to_string(h.policy)},
            {"config", h.config}};
  return j.dump() + "\n";
}

std::string sample_line(const SampleEvent& e) {
  json j = {{"type", "sample"}, {"id", e.id}, {"predictions", e.predictions}};
  if (!e.meta.empty()) j["meta"] = meta_to_json(e.meta);
  return j.dump() + "\n";
}

std::string correction_line(const CorrectionEvent& e) {
  return json{{"type", "correction"},
              {"id", e.sample_id},
              {"label", e.label},
              {"provenance", to_string(e.provenance)},
              {"ts", e.ts}}
             .dump() +
         "\n";
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  ::gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const SampleEvent& State::sample(std::string_view id) const {
  auto it = sample_index.find(std::string(id));
  if (it == sample_index.end()) throw Error(ErrorCode::UnknownSample, "unknown sample '" + std::string(id) + "'");
  return samples[it->second];
}

State replay(std::string_view text, const std::string& source) {
  State state;
  std::size_t offset = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  while (offset < text.size()) {
    const auto nl = text.find('\n', offset);
    const bool last = nl == std::string_view::npos || nl + 1 >= text.size();
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    const auto line = text.substr(offset, end - offset);
    ++line_no;
    if (nl == std::string_view::npos) {
      // no newline: the append was interrupted
      state.truncated_tail = true;
      break;
    }
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      offset = nl + 1;
      state.valid_bytes = offset;
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      if (last) {
        state.truncated_tail = true;
        break;
      }
      throw Error(ErrorCode::Format, source + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      const auto type = j.value("type", std::string{});
      if (!have_header) {
        if (type != "header")
          throw Error(ErrorCode::Format, source + ": first line is not a journal header");
        state.header = parse_header(j);
        state.run.num_classes = ClassSpace(state.header.classes).size();
        state.run.policy = state.header.policy;
        if (state.header.annotators.size() != required_annotators(state.header.policy))
          throw Error(ErrorCode::Format, source + ": annotator count does not fit the policy");
        have_header = true;
      } else if (type == "sample") {
        SampleEvent e{j.at("id").get<std::string>(), j.at("predictions").get<std::vector<LabelId>>(),
                      meta_from_json(j.value("meta", json::object()))};
        add_sample(state, std::move(e));
      } else if (type == "correction") {
        accept(state, parse_correction(j));
      }
      // other types come from newer writers; kept in lines, otherwise ignored
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Format, source + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    state.lines.push_back(std::move(j));
    offset = nl + 1;
    state.valid_bytes = offset;
  }
  if (!have_header) throw Error(ErrorCode::Format, source + ": journal has no header");
  return state;
}

State replay_file(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "journal not found: " + path.string());
  return replay(io::read_file(path), path.string());
}

std::string render(const State& state) {
  std::string out;
  for (const auto& j : state.lines) {
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::string format_corrections(const std::vector<CorrectionEvent>& events) {
  std::string out;
  for (const auto& e : events) {
    out += json{{"sample_id", e.sample_id},
                {"label", e.label},
                {"provenance", to_string(e.provenance)},
                {"ts", e.ts}}
               .dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<CorrectionEvent> parse_corrections(std::string_view text, const std::string& source) {
  std::vector<CorrectionEvent> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(parse_correction(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Format, source + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::size_t apply_corrections(State& state, const std::vector<CorrectionEvent>& events) {
  std::size_t n = 0;
  for (const auto& e : events) n += accept(state, e);
  return n;
}

Writer Writer::create(const fs::path& path, const Header& header,
                      const std::vector<SampleEvent>& samples) {
  if (fs::exists(path)) throw Error(ErrorCode::Conflict, "journal already exists: " + path.string());
  std::string text = header_line(header);
  for (const auto& s : samples) text += sample_line(s);
  io::atomic_write(path, text);
  return Writer(path, open_or_throw(path, O_WRONLY | O_APPEND));
}

Writer Writer::open(const fs::path& path, std::size_t valid_bytes) {
  const int fd = open_or_throw(path, O_WRONLY | O_APPEND);
  if (static_cast<std::uintmax_t>(valid_bytes) < fs::file_size(path) &&
      ::ftruncate(fd, static_cast<off_t>(valid_bytes)) != 0) {
    ::close(fd);
    throw Error(ErrorCode::Io, "cannot truncate " + path.string() + ": " + std::strerror(errno));
  }
  return Writer(path, fd);
}

Writer::Writer(Writer&& other) noexcept : path_(std::move(other.path_)), fd_(other.fd_) {
  other.fd_ = -1;
}

Writer& Writer::operator=(Writer&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    path_ = std::move(other.path_);
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

Writer::~Writer() {
  if (fd_ >= 0) ::close(fd_);
}

void Writer::append(const CorrectionEvent& event) {
  const auto line = correction_line(event);
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    const ssize_t n = ::write(fd_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::Io, "journal append failed: " + std::string(std::strerror(errno)));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  if (::fdatasync(fd_) != 0)
    throw Error(ErrorCode::Io, "journal sync failed: " + std::string(std::strerror(errno)));
}

}  // namespace hcl::journal
