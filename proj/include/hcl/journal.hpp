#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcl/annotation.hpp"
#include "hcl/domain.hpp"

// Append-only JSON Lines record of an annotation session: one header line,
// one line per sample with its annotator predictions, then one line per
// correction in the order it was accepted.
namespace hcl::journal {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kVersion = 1;

struct Header {
  std::string session_id;
  std::string created;
  std::vector<std::string> classes;
  std::vector<std::string> annotators;
  ConsensusPolicy policy = ConsensusPolicy::UnanimousPair;
  json config = json::object();
};

struct SampleEvent {
  std::string id;
  std::vector<LabelId> predictions;  // annotators order
  std::map<std::string, std::string> meta;
};

struct CorrectionEvent {
  std::string sample_id;
  LabelId label = 0;
  Provenance provenance = Provenance::Human;
  std::string ts;
};

std::string header_line(const Header& h);
std::string sample_line(const SampleEvent& e);
std::string correction_line(const CorrectionEvent& e);

// UTC, second resolution, "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_now();

struct State {
  Header header;
  std::vector<SampleEvent> samples;
  std::unordered_map<std::string, std::size_t> sample_index;
  AnnotationRun run;
  CorrectionQueue queue;
  std::vector<CorrectionEvent> corrections;  // accepted, in journal order
  // Every parsed line as read, unknown fields included.
  std::vector<json> lines;
  // Length of the well-formed prefix; a torn final line is excluded.
  std::size_t valid_bytes = 0;
  bool truncated_tail = false;
  std::vector<std::string> warnings;

  ClassSpace classes() const { return ClassSpace(header.classes); }
  const SampleEvent& sample(std::string_view id) const;
};

// Rebuilds the session. A final line without its newline, or one that does
// not parse, is treated as an interrupted append and dropped. Damage anywhere
// else is a Format error. Replayed corrections follow apply_correction; an
// identical repeat is skipped, a conflicting one is dropped with a warning.
State replay(std::string_view text, const std::string& source = "<journal>");
State replay_file(const fs::path& path);

// Re-emits the parsed lines verbatim (unknown fields survive).
std::string render(const State& state);

// Corrections exchange file: {"sample_id", "label", "provenance", "ts"} per line.
std::string format_corrections(const std::vector<CorrectionEvent>& events);
std::vector<CorrectionEvent> parse_corrections(std::string_view text, const std::string& source);

// Applies corrections in order to a state, journaling nothing. Returns the
// number newly applied.
std::size_t apply_corrections(State& state, const std::vector<CorrectionEvent>& events);

class Writer {
 public:
  // Writes header and samples to a fresh file (atomically) and opens it for
  // appending. Throws Error(Conflict) when the file already exists.
  static Writer create(const fs::path& path, const Header& header,
                       const std::vector<SampleEvent>& samples);
  // Opens an existing journal for appending, cutting off anything past
  // valid_bytes first.
  static Writer open(const fs::path& path, std::size_t valid_bytes);

  Writer(Writer&& other) noexcept;
  Writer& operator=(Writer&& other) noexcept;
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;
  ~Writer();

  // One write() of the full line followed by fdatasync; returns after the
  // line is durable.
  void append(const CorrectionEvent& event);
  const fs::path& path() const noexcept { return path_; }

 private:
  Writer(fs::path path, int fd) : path_(std::move(path)), fd_(fd) {}
  fs::path path_;
  int fd_ = -1;
};

}  // namespace hcl::journal
