// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

// simulseq command-line front end.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 runtime error,
// 3 protocol or connection error.

#include <unistd.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "simulseq/simulseq.hpp"

namespace fs = std::filesystem;
using namespace simulseq;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::size_t parse_count(const std::string& s, const char* what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty() || s.front() == '-')
    throw UsageError(std::string("bad ") + what + " '" + s + "'");
  return static_cast<std::size_t>(v);
}

/// Sidecar files written next to a corpus.
std::string vocab_path(const std::string& corpus) { return corpus + ".vocab"; }
std::string task_path(const std::string& corpus) { return corpus + ".task.json"; }

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

struct TaskOptions {
  std::string task = "copy";
  std::size_t vocab_size = 50;
  std::size_t min_len = 8;
  std::size_t max_len = 20;
  std::size_t window = 3;
  std::size_t ratio = 2;
  double marker_fraction = -1.0;
  std::size_t hidden_dim = 16;

  void add_to(CLI::App* app) {
    app->add_option("--task", task, "copy | reorder | expand")->check(CLI::IsMember({"copy", "reorder", "expand"}));
    app->add_option("--vocab-size", vocab_size, "number of source token types");
    app->add_option("--min-len", min_len, "shortest source sentence");
    app->add_option("--max-len", max_len, "longest source sentence");
    app->add_option("--window", window, "reorder window length");
    app->add_option("--ratio", ratio, "expand ratio");
    app->add_option("--marker-fraction", marker_fraction,
                    "fraction of source types acting as markers (default 0.2 for reorder, else 0)");
    app->add_option("--hidden-dim", hidden_dim, "toy model hidden size");
  }

  SyntheticTaskSpec spec(std::uint64_t seed) const {
    SyntheticTaskSpec s;
    s.kind = parse_task_kind(task);
    s.vocab_size = vocab_size;
    s.min_length = min_len;
    s.max_length = max_len;
    s.window = window;
    s.ratio = ratio;
    if (marker_fraction >= 0.0) s.marker_fraction = marker_fraction;
    s.seed = seed;
    s.hidden_dim = hidden_dim;
    s.validate();
    return s;
  }
};

struct CorpusBundle {
  std::unique_ptr<ToyModel> model;
  Vocab vocab;
  std::vector<SentencePair> corpus;
};

CorpusBundle load_bundle(const std::string& corpus_path, std::size_t cap) {
  CorpusBundle b;
  b.model = std::make_unique<ToyModel>(task_spec_from_json(read_json_file(task_path(corpus_path))), cap);
  b.vocab = fs::exists(vocab_path(corpus_path)) ? Vocab::load(vocab_path(corpus_path)) : b.model->vocab();
  if (b.vocab.tokens() != b.model->vocab().tokens())
    throw ConfigError(vocab_path(corpus_path) + " does not match the task description");
  b.corpus = load_corpus(corpus_path, b.vocab);
  return b;
}

std::vector<Sentence> references(std::span<const SentencePair> corpus) {
  std::vector<Sentence> refs;
  refs.reserve(corpus.size());
  for (const auto& p : corpus) refs.push_back(p.reference);
  return refs;
}

BridgeConfig bridge_config(const std::string& server_cmd, const std::string& tcp, int timeout_ms) {
  BridgeConfig cfg;
  cfg.timeout_ms = timeout_ms;
  if (!server_cmd.empty() && !tcp.empty()) throw UsageError("--server-cmd and --tcp are exclusive");
  if (!server_cmd.empty()) {
    cfg.transport = ChildProcessTransport{{"/bin/sh", "-c", "exec " + server_cmd}};
  } else {
    const auto colon = tcp.rfind(':');
    if (colon == std::string::npos) throw UsageError("--tcp expects host:port");
    cfg.transport = TcpTransport{tcp.substr(0, colon), static_cast<int>(parse_count(tcp.substr(colon + 1), "port"))};
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

struct GenData {
  TaskOptions task;
  std::size_t n = 0;
  std::uint64_t seed = 1;
  std::string out;
  bool force = false;

  int run() const {
    if (n == 0) throw UsageError("--n must be positive");
    const auto spec = task.spec(seed);
    for (const auto& p : {out, vocab_path(out), task_path(out)})
      if (fs::exists(p) && !force) throw Error(p + " exists; pass --force to overwrite");
    ToyModel model(spec);
    const auto corpus = generate_corpus(model, n);
    save_corpus(out, corpus, model.vocab());
    model.vocab().save(vocab_path(out));
    std::ofstream(task_path(out)) << to_json(spec).dump(1) << '\n';
    std::printf("wrote %zu sentence pairs to %s\n", corpus.size(), out.c_str());
    return 0;
  }
};

struct TrainTn {
  std::string corpus;
  double alpha = 0.04;
  double target_delay = 2.0;
  std::size_t updates = 30000;
  std::size_t batch = 8;
  std::size_t trajectories = 5;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::string out;
  std::string log;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 64;
  bool floor_delay = false;
  std::string bleu_scale = "unit";
  std::size_t jobs = 1;
  std::size_t log_every = 100;
  std::size_t cap = kDefaultLengthCap;

  int run() const {
    const auto b = load_bundle(corpus, cap);
    TrainConfig tc;
    tc.batch_size = batch;
    tc.trajectories_per_sentence = trajectories;
    tc.updates = updates;
    tc.lr = lr;
    tc.seed = seed;
    tc.hidden1 = hidden1;
    tc.hidden2 = hidden2;
    tc.log_every = log_every;
    tc.cap = cap;
    tc.jobs = jobs;
    RewardConfig rc;
    rc.alpha = alpha;
    rc.target_delay = target_delay;
    rc.floor_delay = floor_delay;
    rc.bleu_scale = bleu_scale == "percent" ? BleuScale::kPercent : BleuScale::kUnit;
    const auto result = train_tn(*b.model, b.corpus, tc, rc);
    save_checkpoint(out, result.checkpoint);
    save_training_log(log.empty() ? out + ".log.csv" : log, result.log);
    if (!result.log.empty()) {
      const auto& last = result.log.back();
      std::printf("update %zu: mean_return %.4f mean_bleu %.2f mean_al %.3f\n", last.update, last.mean_return,
                  last.mean_bleu, last.mean_al);
    }
    std::printf("checkpoint written to %s\n", out.c_str());
    return 0;
  }
};

struct Simulate {
  std::string corpus;
  std::string le;
  std::string waitk;
  std::string tn;
  std::string tn_mode = "greedy";
  std::string schedules = "1";
  std::string strategy = "rebuild-all";
  std::size_t cap = kDefaultLengthCap;
  std::string out;
  std::string dump_traces;
  std::size_t jobs = 1;
  std::uint64_t seed = 1;
  std::string server_cmd;
  std::string tcp;
  int timeout_ms = 10000;

  std::vector<ControllerConfig> grid() const {
    std::vector<ControllerConfig> g;
    for (const auto& d : split_list(le)) g.push_back(LEConfig{parse_count(d, "LE lag")});
    for (const auto& k : split_list(waitk)) {
      const auto v = parse_count(k, "wait-k value");
      if (v == 0) throw UsageError("wait-k needs k >= 1");
      g.push_back(WaitkConfig{v});
    }
    for (const auto& path : split_list(tn)) {
      auto ck = load_checkpoint(path);
      const auto mode = tn_mode == "sample" ? PolicyMode::kSample : PolicyMode::kGreedy;
      g.push_back(TnConfig{std::make_shared<const PolicyParams>(std::move(ck.params)), mode,
                           fs::path(path).stem().string()});
    }
    if (g.empty()) throw UsageError("empty controller grid: give --le, --waitk or --tn");
    return g;
  }

  std::vector<ArrivalSchedule> schedule_list() const {
    std::vector<ArrivalSchedule> out_list;
    for (const auto& s : split_list(schedules)) {
      if (s == "full") {
        out_list.push_back(ArrivalSchedule::full_sentence());
      } else {
        const auto c = parse_count(s, "schedule");
        if (c == 0) throw UsageError("schedule values must be >= 1");
        out_list.push_back(ArrivalSchedule::constant(c));
      }
    }
    if (out_list.empty()) throw UsageError("empty schedule list");
    return out_list;
  }

  int run() const {
    const auto b = load_bundle(corpus, cap);
    const auto controllers = grid();
    const auto sched = schedule_list();
    const auto refs = references(b.corpus);
    std::shared_ptr<Session> session;
    std::unique_ptr<RemoteModel> remote;
    if (!server_cmd.empty() || !tcp.empty()) {
      session = Session::open(bridge_config(server_cmd, tcp, timeout_ms));
      remote = std::make_unique<RemoteModel>(session, b.vocab, cap);
    }
    if (!dump_traces.empty()) fs::create_directories(dump_traces);
    std::ofstream csv(out);
    if (!csv) throw ConfigError("cannot write " + out);
    csv << kResultsCsvHeader << '\n';
    for (const auto& controller : controllers)
      for (const auto& schedule : sched) {
        RunConfig cfg;
        cfg.controller = controller;
        cfg.schedule = schedule;
        cfg.strategy = parse_strategy(strategy);
        cfg.cap = cap;
        cfg.seed = seed;
        // One session is one ordered stream, so remote runs are sequential.
        const auto traces = remote ? simulate_corpus(*remote, b.corpus, cfg, 1)
                                   : simulate_corpus(*b.model, b.corpus, cfg, jobs);
        const auto report = compute_report(traces, refs);
        const auto name = controller_name(controller), param = controller_param(controller);
        csv << csv_row(name, param, schedule.label(), report) << '\n';
        if (!dump_traces.empty()) {
          const auto path = fs::path(dump_traces) / (name + "-" + param + "-" + schedule.label() + ".jsonl");
          std::ofstream tf(path);
          for (const auto& t : traces) tf << to_json(t).dump() << '\n';
        }
        std::printf("%s %s %s: bleu %.2f al %.3f cw %.3f\n", name.c_str(), param.c_str(), schedule.label().c_str(),
                    report.corpus_bleu, report.mean_al, report.mean_cw);
      }
    return 0;
  }
};

struct Eval {
  std::string traces;
  std::string corpus;
  std::string out;
  std::string controller = "eval";
  std::string param = "-";
  std::string schedule = "-";

  int run() const {
    const auto b = load_bundle(corpus, kDefaultLengthCap);
    std::ifstream in(traces);
    if (!in) throw ConfigError("cannot read " + traces);
    std::vector<StreamTrace> list;
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      try {
        list.push_back(trace_from_json(json::parse(line)));
      } catch (const json::exception& e) {
        throw ConfigError(traces + ": " + e.what());
      }
      check_invariants(list.back());
    }
    const auto report = compute_report(list, references(b.corpus));
    json j = to_json(report);
    j["csv_header"] = kResultsCsvHeader;
    j["csv_row"] = csv_row(controller, param, schedule, report);
    if (out.empty()) {
      std::cout << j.dump(1) << '\n';
    } else {
      std::ofstream f(out);
      if (!f) throw ConfigError("cannot write " + out);
      f << j.dump(1) << '\n';
    }
    return 0;
  }
};

struct ServeConformance {
  TaskOptions task;
  std::uint64_t seed = 1;
  std::string server_cmd;
  std::string tcp;
  int timeout_ms = 10000;
  std::size_t decode_calls = 1000;
  std::size_t simulations = 100;

  int run() const {
    if (server_cmd.empty() && tcp.empty()) throw UsageError("give --server-cmd or --tcp");
    const auto cfg = bridge_config(server_cmd, tcp, timeout_ms);
    ToyModel model(task.spec(seed));
    ConformanceOptions opt{decode_calls, simulations, seed};
    const auto checks = run_conformance([&] { return Session::open(cfg); }, model, opt);
    bool ok = true;
    for (const auto& c : checks) {
      std::printf("%s %s%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.empty() ? "" : ": ",
                  c.detail.c_str());
      ok = ok && c.passed;
    }
    return ok ? 0 : 3;
  }
};

struct ServeStub {
  TaskOptions task;
  std::uint64_t seed = 1;
  bool stdio = false;
  int port = -1;

  int run() const {
    if (stdio == (port >= 0)) throw UsageError("give exactly one of --stdio or --port");
    ToyModel model(task.spec(seed));
    if (stdio) {
      serve_stream(model, STDIN_FILENO, STDOUT_FILENO);
    } else {
      serve_tcp(model, port, [](int p) {
        std::fprintf(stderr, "listening on 127.0.0.1:%d\n", p);
      });
    }
    return 0;
  }
};

/// Inserts `--key value` pairs from a JSON config file right after the
/// subcommand name, so explicit flags (parsed later) take precedence.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.size() < 2) return args;
  const json cfg = read_json_file(path);
  if (!cfg.is_object()) throw UsageError("config file must hold a JSON object");
  std::vector<std::string> extra;
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
    } else if (value.is_string()) {
      extra.push_back(flag);
      extra.push_back(value.get<std::string>());
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
      extra.push_back(flag);
      extra.push_back(joined);
    } else {
      extra.push_back(flag);
      extra.push_back(value.dump());
    }
  }
  args.insert(args.begin() + 2, extra.begin(), extra.end());
  return args;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const ProtocolError*>(&e) || dynamic_cast<const ConnectionError*>(&e)) return 3;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simultaneous translation with a frozen consecutive model"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;

  GenData gen;
  auto* g = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen.task.add_to(g);
  g->add_option("--n", gen.n, "number of sentence pairs")->required();
  g->add_option("--seed", gen.seed)->envname("SIMULSEQ_SEED");
  g->add_option("--out", gen.out, "corpus JSONL path")->required();
  g->add_flag("--force", gen.force, "overwrite existing files");

  TrainTn train;
  auto* t = app.add_subcommand("train-tn", "train the TN stopping controller");
  t->add_option("--corpus", train.corpus)->required();
  t->add_option("--alpha", train.alpha, "delay reward weight");
  t->add_option("--target-delay", train.target_delay, "target AL d*");
  t->add_option("--updates", train.updates);
  t->add_option("--batch", train.batch, "sentences per update");
  t->add_option("--trajectories", train.trajectories, "trajectories per sentence");
  t->add_option("--lr", train.lr);
  t->add_option("--seed", train.seed)->envname("SIMULSEQ_SEED");
  t->add_option("--out", train.out, "checkpoint path")->required();
  t->add_option("--log", train.log, "training log CSV (default <out>.log.csv)");
  t->add_option("--hidden1", train.hidden1);
  t->add_option("--hidden2", train.hidden2);
  t->add_flag("--floor-delay", train.floor_delay, "floor AL - d* to an integer before the hinge");
  t->add_option("--bleu-scale", train.bleu_scale)->check(CLI::IsMember({"unit", "percent"}));
  t->add_option("--jobs", train.jobs);
  t->add_option("--log-every", train.log_every);
  t->add_option("--cap", train.cap, "output length cap");

  Simulate sim;
  auto* s = app.add_subcommand("simulate", "run a controller/schedule sweep");
  s->add_option("--corpus", sim.corpus)->required();
  s->add_option("--le", sim.le, "comma-separated LE lags d");
  s->add_option("--waitk", sim.waitk, "comma-separated wait-k values");
  s->add_option("--tn", sim.tn, "comma-separated TN checkpoints");
  s->add_option("--tn-mode", sim.tn_mode)->check(CLI::IsMember({"greedy", "sample"}));
  s->add_option("--schedules", sim.schedules, "comma-separated arrival sizes, 'full' for full sentence");
  s->add_option("--strategy", sim.strategy)->check(CLI::IsMember({"rebuild-all", "reuse-decoder", "reuse-encoder"}));
  s->add_option("--cap", sim.cap);
  s->add_option("--out", sim.out, "results CSV")->required();
  s->add_option("--dump-traces", sim.dump_traces, "directory for per-sentence traces");
  s->add_option("--jobs", sim.jobs);
  s->add_option("--seed", sim.seed)->envname("SIMULSEQ_SEED");
  s->add_option("--server-cmd", sim.server_cmd, "run the model behind a bridge server started with this command");
  s->add_option("--tcp", sim.tcp, "use a bridge server at host:port");
  s->add_option("--timeout-ms", sim.timeout_ms);

  Eval ev;
  auto* e = app.add_subcommand("eval", "metrics report from dumped traces");
  e->add_option("--traces", ev.traces)->required();
  e->add_option("--corpus", ev.corpus)->required();
  e->add_option("--out", ev.out, "report JSON path (stdout if omitted)");
  e->add_option("--controller", ev.controller, "label for the CSV row");
  e->add_option("--param", ev.param, "label for the CSV row");
  e->add_option("--schedule", ev.schedule, "label for the CSV row");

  ServeConformance conf;
  auto* c = app.add_subcommand("serve-conformance", "check a bridge server against the wire contract");
  conf.task.add_to(c);
  c->add_option("--seed", conf.seed)->envname("SIMULSEQ_SEED");
  c->add_option("--server-cmd", conf.server_cmd);
  c->add_option("--tcp", conf.tcp);
  c->add_option("--timeout-ms", conf.timeout_ms);
  c->add_option("--decode-calls", conf.decode_calls);
  c->add_option("--simulations", conf.simulations);

  ServeStub stub;
  auto* st = app.add_subcommand("serve-stub", "serve the toy model over the bridge protocol");
  stub.task.add_to(st);
  st->add_option("--seed", stub.seed)->envname("SIMULSEQ_SEED");
  st->add_flag("--stdio", stub.stdio);
  st->add_option("--port", stub.port);

  for (auto* sub : {g, t, s, e, c, st}) sub->add_option("--config", config_path, "JSON file with flag values");

  try {
    auto args = expand_config(argc, argv);
    std::vector<const char*> cargs;
    for (const auto& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 1;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "simulseq: %s\n", err.what());
    return exit_code_for(err);
  }

  try {
    if (g->parsed()) return gen.run();
    if (t->parsed()) return train.run();
    if (s->parsed()) return sim.run();
    if (e->parsed()) return ev.run();
    if (c->parsed()) return conf.run();
    if (st->parsed()) return stub.run();
  } catch (const std::exception& err) {
    std::fprintf(stderr, "simulseq: %s\n", err.what());
    return exit_code_for(err);
  }
  return 1;
}
