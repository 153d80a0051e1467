// Command-line front end: simulate, annotate, stats, train, baselines, sweep,
// serve, replay.
#include <csignal>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "hcl/error.hpp"
#include "hcl/io.hpp"
#include "hcl/journal.hpp"
#include "hcl/pipeline.hpp"
#include "hcl/service.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines _res as a macro.
#include <CLI11.hpp>
#include <httplib.h>

namespace {

using namespace hcl;
namespace fs = std::filesystem;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

pipeline::ExperimentConfig resolve_config(const Globals& g) {
  if (g.config.empty()) throw Error(ErrorCode::Config, "--config is required for this command");
  auto c = pipeline::load_config(g.config);
  if (g.seed) c.override_seed(*g.seed);
  if (!g.out.empty()) c.out = g.out;
  c.validate();
  return c;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      grid.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, "bad --grid value '" + cell + "'");
    }
  }
  return grid;
}

void print_awaiting(const std::optional<std::string>& session) {
  std::cout << "awaiting corrections";
  if (session) std::cout << " (session " << *session << ")";
  std::cout << "\n";
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak supervision from annotator consensus plus human corrections"};
  app.require_subcommand(1);
  Globals g;
  auto add_globals = [&](CLI::App* cmd) {
    cmd->add_option("--config", g.config, "experiment config (JSON)");
    cmd->add_option("--seed", g.seed, "override every seed");
    cmd->add_option("--out", g.out, "output directory");
  };

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  auto* annotate = app.add_subcommand("annotate", "annotate, build the queue, apply corrections");
  auto* stats = app.add_subcommand("stats", "consistency and label accuracy of a journal");
  auto* train = app.add_subcommand("train", "full experiment: annotate, correct, train, report");
  auto* baselines = app.add_subcommand("baselines", "train every baseline view and HCL");
  auto* sweep = app.add_subcommand("sweep", "train HCL over a lambda grid");
  auto* serve = app.add_subcommand("serve", "run the correction service");
  auto* replay = app.add_subcommand("replay", "rebuild a run from a journal and corrections");
  for (auto* cmd : {simulate, annotate, stats, train, baselines, sweep, serve, replay}) add_globals(cmd);

  std::string journal_path;
  stats->add_option("--journal", journal_path, "journal to analyse (default: <out>/journal.jsonl)");

  std::string grid_text;
  sweep->add_option("--grid", grid_text, "comma-separated lambda values");

  std::string sessions_dir = "sessions", host = "127.0.0.1", ui_dir;
  int port = 8080;
  bool dev_cors = false;
  serve->add_option("--sessions", sessions_dir, "session journal directory");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--ui-dir", ui_dir, "static UI bundle to serve at /")->check(CLI::ExistingDirectory);
  serve->add_flag("--dev-cors", dev_cors, "permissive CORS headers (development only)");

  std::string corrections_path;
  replay->add_option("--journal", journal_path, "session or run journal")->required();
  replay->add_option("--corrections", corrections_path, "exported corrections to apply");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      auto c = resolve_config(g);
      if (!c.simulate) throw Error(ErrorCode::Config, "simulate needs dataset.simulate");
      auto w = pipeline::load_world(c, true);
      std::cout << "wrote " << w.train.size() << " train / " << (w.test ? w.test->size() : 0)
                << " test samples to " << (c.out / "dataset").string() << "\n";
      return 0;
    }
    if (annotate->parsed()) {
      auto c = resolve_config(g);
      auto w = pipeline::load_world(c, c.simulate.has_value());
      auto a = pipeline::annotate_and_correct(c, w);
      if (!a.build.run.complete()) {
        print_awaiting(a.session_id);
        return pipeline::exit_code(pipeline::Status::AwaitingCorrections);
      }
      std::cout << "consistent " << a.build.run.consistent_count() << ", corrected "
                << a.build.run.inconsistent_count() << "\n";
      if (a.stats) std::cout << io::read_file(c.out / "stats.txt");
      return 0;
    }
    if (stats->parsed()) {
      auto c = resolve_config(g);
      const fs::path path = journal_path.empty() ? c.out / "journal.jsonl" : fs::path(journal_path);
      auto state = journal::replay_file(path);
      auto w = pipeline::load_world(c, false);
      AnnotationSet set(state.header.annotators);
      for (const auto& s : state.samples)
        for (std::size_t i = 0; i < s.predictions.size(); ++i) set.add(i, s.id, s.predictions[i]);
      auto st = annotation_stats(state.run, w.train, &set);
      std::cout << io::dump(io::to_json(st));
      return 0;
    }
    if (train->parsed()) {
      auto c = resolve_config(g);
      auto r = pipeline::run_experiment(c);
      if (r.status == pipeline::Status::AwaitingCorrections) {
        print_awaiting(r.session_id);
        return pipeline::exit_code(r.status);
      }
      std::cout << io::read_file(c.out / "metrics.txt");
      return 0;
    }
    if (baselines->parsed()) {
      auto c = resolve_config(g);
      auto r = pipeline::run_baseline_suite(c);
      if (r.status == pipeline::Status::AwaitingCorrections) {
        print_awaiting(std::nullopt);
        return pipeline::exit_code(r.status);
      }
      std::cout << io::read_file(c.out / "baselines.txt");
      return 0;
    }
    if (sweep->parsed()) {
      auto c = resolve_config(g);
      if (!grid_text.empty()) c.sweep_grid = parse_grid(grid_text);
      c.validate();
      auto r = pipeline::run_lambda_sweep(c);
      if (r.status == pipeline::Status::AwaitingCorrections) {
        print_awaiting(std::nullopt);
        return pipeline::exit_code(r.status);
      }
      std::cout << io::read_file(c.out / "sweep.txt");
      return 0;
    }
    if (serve->parsed()) {
      if (!g.config.empty() && sessions_dir == "sessions") sessions_dir = resolve_config(g).sessions_dir;
      service::SessionStore store(sessions_dir);
      httplib::Server server;
      service::ServerOptions opts;
      if (!ui_dir.empty()) opts.ui_dir = ui_dir;
      opts.dev_cors = dev_cors;
      service::mount(server, store, opts);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cout << "serving " << store.ids().size() << " session(s) from " << sessions_dir
                << " on http://" << host << ":" << port << std::endl;
      if (!server.listen(host, port)) throw Error(ErrorCode::Io, "cannot listen on " + host + ":" + std::to_string(port));
      return 0;
    }
    if (replay->parsed()) {
      auto state = journal::replay_file(journal_path);
      std::size_t applied = 0;
      if (!corrections_path.empty()) {
        applied = journal::apply_corrections(
            state, journal::parse_corrections(io::read_file(corrections_path), corrections_path));
      }
      for (const auto& w : state.warnings) std::cerr << "warning: " << w << "\n";
      nlohmann::json summary = {{"session_id", state.header.session_id},
                                {"samples", state.run.sample_order.size()},
                                {"consistent", state.run.consistent_count()},
                                {"corrected", state.queue.resolved_count()},
                                {"pending", state.queue.pending_count()},
                                {"complete", state.run.complete()},
                                {"applied_from_file", applied},
                                {"truncated_tail", state.truncated_tail}};
      if (!g.out.empty()) {
        io::atomic_write(fs::path(g.out) / "run.json", io::dump(io::to_json(state.run)));
        std::string text = journal::render(state);
        for (std::size_t i = state.corrections.size() - applied; i < state.corrections.size(); ++i)
          text += journal::correction_line(state.corrections[i]);
        io::atomic_write(fs::path(g.out) / "journal.jsonl", text);
      }
      std::cout << summary.dump(2) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::Config:
      case ErrorCode::Format:
      case ErrorCode::Io: return 2;
      default: return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
