// Command-line driver: microbenchmark generation, request-type selection,
// timed simulation of the seven standard machine configurations, bounded
// protocol checking, and metric reporting — individually as subcommands or
// end to end as `pipeline`.  Exit code 0 iff every stage succeeded and, for
// `check`, the explored matrix was violation- and deadlock-free.

#include <CLI11.hpp>

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fcssim/checker.hpp"
#include "fcssim/report.hpp"
#include "fcssim/selector.hpp"
#include "fcssim/simnet.hpp"
#include "fcssim/trace.hpp"

namespace {

using namespace fcssim;

int fail(const std::string& msg) {
  std::cerr << "error: " << msg << '\n';
  return 1;
}

std::string valid_config_names() {
  std::string s;
  for (const sim::SimConfig& c : sim::standard_configs()) {
    if (!s.empty()) s += ", ";
    s += c.name;
  }
  return s;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Accept "prod-cons" / "flex_vs" style spellings for the bench tokens.
std::string normalize_bench(std::string s) {
  std::string out;
  for (char ch : s)
    if (ch != '-' && ch != '_')
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

int worker_cap() {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap < 1) cap = 1;
  if (const char* e = std::getenv("FCSSIM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(e, &end, 10);
    if (end != e && v >= 1 && v <= 256) cap = static_cast<int>(v);
  }
  return cap;
}

template <typename Fn>
void run_parallel(int n, Fn fn) {
  const int workers = std::min(worker_cap(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  for (std::thread& th : pool) th.join();
}

// --- named / custom configurations -----------------------------------------

std::string print_config_kv(const sim::SimConfig& cfg) {
  std::ostringstream o;
  o << "name=" << cfg.name << '\n'
    << "cpu=" << sim::to_string(cfg.cpu) << '\n'
    << "gpu=" << sim::to_string(cfg.gpu) << '\n'
    << "wt_forwarding=" << (cfg.profile.supports_wt_forwarding ? 1 : 0) << '\n'
    << "owner_prediction=" << (cfg.profile.supports_owner_prediction ? 1 : 0)
    << '\n'
    << "word_granularity_cpu=" << (cfg.profile.word_granularity_cpu ? 1 : 0)
    << '\n'
    << "word_granularity_gpu=" << (cfg.profile.word_granularity_gpu ? 1 : 0)
    << '\n';
  return o.str();
}

bool parse_flavor(const std::string& tok, sim::Flavor& out) {
  for (sim::Flavor f : {sim::Flavor::Mesi, sim::Flavor::DeNovo,
                        sim::Flavor::GpuCoh, sim::Flavor::Flex})
    if (tok == sim::to_string(f)) {
      out = f;
      return true;
    }
  return false;
}

// Parse the `--print-config` key=value form back into a configuration.
std::string parse_config_kv(std::istream& is, sim::SimConfig& cfg) {
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      return "line " + std::to_string(n) + ": expected key=value";
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "name") {
      cfg.name = val;
    } else if (key == "cpu" || key == "gpu") {
      sim::Flavor f{};
      if (!parse_flavor(val, f))
        return "line " + std::to_string(n) + ": unknown flavor '" + val +
               "' (mesi, denovo, gpucoh, flex)";
      (key == "cpu" ? cfg.cpu : cfg.gpu) = f;
    } else if (key == "wt_forwarding") {
      cfg.profile.supports_wt_forwarding = val == "1";
    } else if (key == "owner_prediction") {
      cfg.profile.supports_owner_prediction = val == "1";
    } else if (key == "word_granularity_cpu") {
      cfg.profile.word_granularity_cpu = val == "1";
    } else if (key == "word_granularity_gpu") {
      cfg.profile.word_granularity_gpu = val == "1";
    } else {
      return "line " + std::to_string(n) + ": unknown key '" + key + "'";
    }
  }
  if (cfg.name.empty()) return "configuration has no name";
  return "";
}

// Resolve --configs names (plus an optional custom file) to run order.
std::string resolve_configs(const std::string& names,
                            const std::string& custom_path,
                            std::vector<sim::SimConfig>& out) {
  const std::vector<sim::SimConfig> table = sim::standard_configs();
  for (const std::string& name : split_csv(names)) {
    const sim::SimConfig* c = sim::find_config(table, name);
    if (c == nullptr)
      return "unknown configuration '" + name +
             "'; valid names: " + valid_config_names();
    out.push_back(*c);
  }
  if (!custom_path.empty()) {
    std::ifstream f(custom_path);
    if (!f) return "cannot open configuration file " + custom_path;
    sim::SimConfig cfg;
    if (std::string err = parse_config_kv(f, cfg); !err.empty())
      return custom_path + ": " + err;
    out.push_back(cfg);
  }
  if (out.empty()) return "no configuration selected";
  return "";
}

// --- benchmark flags --------------------------------------------------------

struct BenchOpts {
  std::string bench;
  std::uint64_t seed{1};
  int iterations{0};
  int cores_cpu{0};
  int cores_gpu{0};
  int partition_words{0};
  CLI::Option* o_seed{nullptr};
  CLI::Option* o_iter{nullptr};
  CLI::Option* o_cpu{nullptr};
  CLI::Option* o_gpu{nullptr};
  CLI::Option* o_part{nullptr};

  void attach(CLI::App* sub, bool required) {
    CLI::Option* ob = sub->add_option(
        "--bench", bench, "benchmark: flexvs, flexowt, flexoa, prodcons");
    if (required) ob->required();
    o_seed = sub->add_option("--seed", seed, "seed for all generator randomness");
    o_iter = sub->add_option("--iterations", iterations,
                             "barrier-separated iterations");
    o_cpu = sub->add_option("--cores-cpu", cores_cpu, "CPU core count");
    o_gpu = sub->add_option("--cores-gpu", cores_gpu, "GPU core count");
    o_part = sub->add_option("--partition-words", partition_words,
                             "words per data partition");
  }

  std::string resolve(trace::Bench& b, trace::BenchParams& p) const {
    const auto parsed = trace::parse_bench(normalize_bench(bench));
    if (!parsed)
      return "unknown benchmark '" + bench +
             "'; valid names: flexvs, flexowt, flexoa, prodcons";
    b = *parsed;
    p = trace::default_params(b);
    if (o_seed->count() > 0) p.seed = seed;
    if (o_iter->count() > 0) p.iterations = iterations;
    if (o_cpu->count() > 0) p.n_cpu = cores_cpu;
    if (o_gpu->count() > 0) p.n_gpu = cores_gpu;
    if (o_part->count() > 0) p.partition_words = partition_words;
    if (p.iterations < 1) return "--iterations must be at least 1";
    if (p.partition_words < 1) return "--partition-words must be at least 1";
    if (p.n_cpu < 0 || p.n_gpu < 0 || p.n_cpu + p.n_gpu < 1)
      return "core counts must be non-negative and sum to at least 1";
    return "";
  }
};

std::string make_or_load_trace(const std::string& trace_path,
                               const BenchOpts& bo, trace::AccessTrace& t,
                               std::string& bench_name) {
  if (!trace_path.empty()) {
    try {
      t = trace::read_trace_file(trace_path);
    } catch (const std::exception& e) {
      return std::string("reading ") + trace_path + ": " + e.what();
    }
    bench_name = std::filesystem::path(trace_path).stem().string();
    return "";
  }
  if (bo.bench.empty()) return "either --trace or --bench is required";
  trace::Bench b{};
  trace::BenchParams p;
  if (std::string err = bo.resolve(b, p); !err.empty()) return err;
  t = trace::generate(b, p);
  bench_name = std::string(trace::to_string(b));
  return "";
}

std::string write_text_file(const std::string& path, const std::string& body) {
  std::ofstream f(path);
  if (!f) return "cannot write " + path;
  f << body;
  return "";
}

// --- subcommand state -------------------------------------------------------

struct GenerateArgs {
  BenchOpts bench;
  std::string out;
};

struct SelectArgs {
  BenchOpts bench;
  std::string trace_path;
  std::string config{"FCS+pred"};
  std::string out{"selection.txt"};
  std::string format{"text"};
  bool no_fwd{false}, no_pred{false}, line_cpu{false}, line_gpu{false};
};

struct SimulateArgs {
  std::string trace_path;
  std::string configs{"FCS+pred"};
  std::string custom_config;
  std::string selection_path;
  std::string baseline;
  std::string out;
  std::string format{"text"};
  bool dump_msglog{false};
};

struct CheckArgs {
  std::uint64_t budget{10'000'000};
  bool dfs{false};
  bool mutations{false};
  std::string out;
  std::string format{"text"};
};

struct ReportArgs {
  std::string in;
  std::string baseline;
  std::string format{"text"};
};

struct PipelineArgs {
  BenchOpts bench;
  std::string configs{"SDD,FCS+fwd,FCS+pred"};
  std::string custom_config;
  std::string baseline;
  std::string out{"."};
  std::string format{"text"};
  bool dump_selection{false};
  bool dump_msglog{false};
};

// --- subcommand bodies ------------------------------------------------------

int cmd_generate(const GenerateArgs& a) {
  trace::Bench b{};
  trace::BenchParams p;
  if (std::string err = a.bench.resolve(b, p); !err.empty()) return fail(err);
  const trace::AccessTrace t = trace::generate(b, p);
  const trace::ValidationReport rep = trace::validate(t);
  if (!rep.ok()) return fail("generated trace failed validation: " + rep.errors.front());
  const std::string out =
      a.out.empty() ? std::string(trace::to_string(b)) + ".trace" : a.out;
  try {
    trace::write_trace_file(out, t);
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  std::cout << "wrote " << out << ": " << t.accesses.size() << " accesses, "
            << t.hdr.n_cpu << " cpu + " << t.hdr.n_gpu << " gpu cores\n";
  return 0;
}

int cmd_select(const SelectArgs& a) {
  trace::AccessTrace t;
  std::string bench_name;
  if (std::string err = make_or_load_trace(a.trace_path, a.bench, t, bench_name);
      !err.empty())
    return fail(err);

  const std::vector<sim::SimConfig> table = sim::standard_configs();
  const sim::SimConfig* named = sim::find_config(table, a.config);
  if (named == nullptr)
    return fail("unknown configuration '" + a.config +
                "'; valid names: " + valid_config_names());
  sel::HardwareProfile hp = named->profile;
  if (a.no_fwd) hp.supports_wt_forwarding = false;
  if (a.no_pred) hp.supports_owner_prediction = false;
  if (a.line_cpu) hp.word_granularity_cpu = false;
  if (a.line_gpu) hp.word_granularity_gpu = false;

  const sel::SelectionMap map = sel::select_all(t, hp);
  try {
    sel::write_selection_file(a.out, map);
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  std::cout << "selected " << map.per_access.size() << " accesses from "
            << bench_name << "; wrote " << a.out << '\n';
  if (a.format == "text") {
    for (const auto& [pc, ty] : map.per_inst)
      std::cout << "  pc " << pc << " -> " << to_string(ty) << '\n';
  }
  return 0;
}

struct RunRow {
  rep::MetricRow row;
  std::string error;
  std::vector<std::string> msglog;
};

// Simulate each configuration over `t`, selecting per configuration profile
// unless `forced_map` is provided.
std::string run_all(const trace::AccessTrace& t, const std::string& bench_name,
                    const std::vector<sim::SimConfig>& cfgs,
                    const sel::SelectionMap* forced_map, bool capture_msglog,
                    std::vector<RunRow>& rows) {
  rows.assign(cfgs.size(), {});
  run_parallel(static_cast<int>(cfgs.size()), [&](int i) {
    const sim::SimConfig& cfg = cfgs[static_cast<std::size_t>(i)];
    RunRow& r = rows[static_cast<std::size_t>(i)];
    r.row.bench = bench_name;
    r.row.config = cfg.name;
    const sel::SelectionMap* mp = nullptr;
    sel::SelectionMap local;
    if (cfg.uses_selection()) {
      if (forced_map != nullptr) {
        mp = forced_map;
      } else {
        local = sel::select_all(t, cfg.profile);
        mp = &local;
      }
    }
    const sim::SimResult res =
        sim::simulate(t, mp, cfg, sim::SimParams{}, capture_msglog);
    if (!res.ok) {
      r.error = cfg.name + ": " + res.error;
      return;
    }
    r.row.m = res.metrics;
    r.msglog = res.msglog;
  });
  for (const RunRow& r : rows)
    if (!r.error.empty()) return r.error;
  return "";
}

int emit_rows(const std::vector<RunRow>& rows, const std::string& baseline,
              const std::string& format, const std::string& out_dir,
              bool dump_msglog) {
  std::vector<rep::MetricRow> mrows;
  mrows.reserve(rows.size());
  for (const RunRow& r : rows) mrows.push_back(r.row);

  std::string base = baseline;
  if (base.empty() && mrows.size() > 1) base = mrows.front().config;
  if (!base.empty()) {
    bool present = false;
    for (const rep::MetricRow& r : mrows) present = present || r.config == base;
    if (!present)
      return fail("baseline '" + base + "' is not among the runs");
  }

  std::ostringstream csv;
  csv << rep::metrics_csv_header() << '\n';
  for (const rep::MetricRow& r : mrows) csv << rep::metrics_csv_row(r) << '\n';

  if (format == "csv") {
    std::cout << csv.str();
    if (!base.empty()) std::cout << rep::comparison_csv(mrows, base);
  } else {
    std::cout << rep::metrics_text(mrows);
    if (!base.empty()) std::cout << rep::comparison_text(mrows, base);
  }

  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (std::string err =
            write_text_file(out_dir + "/metrics.csv", csv.str());
        !err.empty())
      return fail(err);
    if (!base.empty()) {
      if (std::string err = write_text_file(out_dir + "/comparison.csv",
                                            rep::comparison_csv(mrows, base));
          !err.empty())
        return fail(err);
    }
    if (dump_msglog) {
      for (const RunRow& r : rows) {
        std::ostringstream body;
        for (const std::string& line : r.msglog) body << line << '\n';
        if (std::string err = write_text_file(
                out_dir + "/msglog-" + r.row.config + ".txt", body.str());
            !err.empty())
          return fail(err);
      }
    }
  }
  return 0;
}

int cmd_simulate(const SimulateArgs& a) {
  trace::AccessTrace t;
  try {
    t = trace::read_trace_file(a.trace_path);
  } catch (const std::exception& e) {
    return fail(std::string("reading ") + a.trace_path + ": " + e.what());
  }
  const std::string bench_name =
      std::filesystem::path(a.trace_path).stem().string();

  std::vector<sim::SimConfig> cfgs;
  if (std::string err = resolve_configs(a.configs, a.custom_config, cfgs);
      !err.empty())
    return fail(err);

  sel::SelectionMap forced;
  const sel::SelectionMap* forced_p = nullptr;
  if (!a.selection_path.empty()) {
    try {
      forced = sel::read_selection_file(a.selection_path);
    } catch (const std::exception& e) {
      return fail(std::string("reading ") + a.selection_path + ": " + e.what());
    }
    forced_p = &forced;
  }

  std::vector<RunRow> rows;
  if (std::string err = run_all(t, bench_name, cfgs, forced_p,
                                a.dump_msglog, rows);
      !err.empty())
    return fail(err);
  return emit_rows(rows, a.baseline, a.format, a.out, a.dump_msglog);
}

int cmd_check(const CheckArgs& a) {
  std::vector<chk::CheckConfig> cfgs = chk::standard_check_configs();
  for (chk::CheckConfig& c : cfgs) {
    c.state_budget = a.budget;
    c.depth_first = a.dfs;
  }

  std::vector<chk::ExploreResult> results(cfgs.size());
  run_parallel(static_cast<int>(cfgs.size()), [&](int i) {
    results[static_cast<std::size_t>(i)] =
        chk::explore(cfgs[static_cast<std::size_t>(i)]);
  });

  bool bad = false;
  std::ostringstream csv;
  csv << chk::result_csv_header() << '\n';
  std::vector<std::pair<std::string, std::uint64_t>> counts;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    const chk::ExploreResult& r = results[i];
    if (a.format == "csv")
      std::cout << chk::result_csv_row(cfgs[i], r) << '\n';
    else
      std::cout << chk::result_text(cfgs[i], r);
    csv << chk::result_csv_row(cfgs[i], r) << '\n';
    bad = bad || !r.ok || !r.violations.empty() || r.deadlocks != 0;
    if (r.ok) counts.emplace_back(cfgs[i].name, r.states);
  }
  if (counts.size() == cfgs.size() && !counts.empty()) {
    for (const chk::CountRow& row : chk::compare_state_counts(counts))
      if (a.format != "csv")
        std::cout << "state-count ratio " << row.name << " / "
                  << counts.front().first << " = " << row.ratio << '\n';
  }

  if (a.mutations) {
    struct Mutation {
      const char* name;
      chk::CheckConfig cfg;
    };
    std::vector<Mutation> muts;
    {
      chk::CheckConfig m;
      m.name = "skip-owner-revoke";
      m.n_cores = 2;
      m.n_blocks = 1;
      m.issues_per_core = 1;
      m.alphabet = {{{AccessKind::Store, RequestType::ReqO, 0, 0}},
                    {{AccessKind::Store, RequestType::ReqO, 0, 0}}};
      m.fault.skip_owner_revoke = true;
      muts.push_back({"grant without revoking the owner", m});
    }
    {
      chk::CheckConfig m;
      m.name = "skip-sharer-invalidate";
      m.n_cores = 2;
      m.n_blocks = 1;
      m.issues_per_core = 1;
      m.alphabet = {{{AccessKind::Store, RequestType::ReqO, 0, 0}},
                    {{AccessKind::Load, RequestType::ReqS, 0, 0}}};
      m.fault.skip_sharer_invalidate = true;
      muts.push_back({"grant without invalidating sharers", m});
    }
    {
      chk::CheckConfig m;
      m.name = "drop-nack-retry";
      m.n_cores = 2;
      m.n_blocks = 1;
      m.issues_per_core = 1;
      m.alphabet = {{{AccessKind::Store, RequestType::ReqO, 0, 0}},
                    {{AccessKind::Store, RequestType::ReqWTo, 0, 0}}};
      m.fault.drop_nack_retry = true;
      muts.push_back({"drop the retry after a refusal", m});
    }
    for (Mutation& m : muts) {
      m.cfg.state_budget = a.budget;
      const chk::ExploreResult r = chk::explore(m.cfg);
      const bool detected =
          r.ok && (!r.violations.empty() || r.deadlocks > 0);
      std::cout << "mutation " << m.cfg.name << " (" << m.name
                << "): " << (detected ? "detected" : "NOT DETECTED") << '\n';
      if (detected && !r.violations.empty())
        std::cout << "  " << r.violations.front().what << " ("
                  << r.violations.front().events.size() << " events)\n";
      if (detected && r.deadlocks > 0)
        std::cout << "  deadlock after " << r.deadlock_example.size()
                  << " events\n";
      bad = bad || !detected;
    }
  }

  if (!a.out.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(a.out, ec);
    if (std::string err = write_text_file(a.out + "/check.csv", csv.str());
        !err.empty())
      return fail(err);
  }
  return bad ? 1 : 0;
}

std::string parse_metrics_csv(std::istream& is,
                              std::vector<rep::MetricRow>& rows) {
  std::string line;
  if (!std::getline(is, line)) return "empty metrics file";
  if (line != rep::metrics_csv_header())
    return "unrecognized metrics header";
  int n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv(line);
    const std::size_t want = 6 + static_cast<std::size_t>(kNumRequestTypes) + 9;
    if (f.size() != want)
      return "line " + std::to_string(n) + ": expected " +
             std::to_string(want) + " fields, got " + std::to_string(f.size());
    rep::MetricRow r;
    std::size_t i = 0;
    auto u64 = [&](std::uint64_t& out) {
      out = std::strtoull(f[i++].c_str(), nullptr, 10);
    };
    r.bench = f[i++];
    r.config = f[i++];
    u64(r.m.cycles);
    u64(r.m.bytes);
    u64(r.m.hops);
    u64(r.m.msgs);
    for (int k = 0; k < kNumRequestTypes; ++k)
      u64(r.m.msgs_by_born[static_cast<std::size_t>(k)]);
    u64(r.m.llc_lookups_by_born[0]);  // re-imported as an undifferentiated total
    u64(r.m.pred_hits);
    u64(r.m.pred_misses);
    u64(r.m.nacks);
    u64(r.m.max_retry);
    u64(r.m.rmws_applied);
    u64(r.m.l1_hits);
    u64(r.m.l1_misses);
    u64(r.m.wb_forwards);
    rows.push_back(std::move(r));
  }
  return "";
}

int cmd_report(const ReportArgs& a) {
  std::ifstream f(a.in);
  if (!f) return fail("cannot open " + a.in);
  std::vector<rep::MetricRow> rows;
  if (std::string err = parse_metrics_csv(f, rows); !err.empty())
    return fail(a.in + ": " + err);
  if (a.format == "csv") {
    std::cout << rep::metrics_csv_header() << '\n';
    for (const rep::MetricRow& r : rows)
      std::cout << rep::metrics_csv_row(r) << '\n';
    if (!a.baseline.empty())
      std::cout << rep::comparison_csv(rows, a.baseline);
  } else {
    std::cout << rep::metrics_text(rows);
    if (!a.baseline.empty())
      std::cout << rep::comparison_text(rows, a.baseline);
  }
  return 0;
}

int cmd_pipeline(const PipelineArgs& a) {
  trace::Bench b{};
  trace::BenchParams p;
  if (std::string err = a.bench.resolve(b, p); !err.empty()) return fail(err);

  std::vector<sim::SimConfig> cfgs;
  if (std::string err = resolve_configs(a.configs, a.custom_config, cfgs);
      !err.empty())
    return fail(err);

  const trace::AccessTrace t = trace::generate(b, p);
  const trace::ValidationReport vrep = trace::validate(t);
  if (!vrep.ok())
    return fail("generated trace failed validation: " + vrep.errors.front());
  const std::string bench_name{trace::to_string(b)};

  std::error_code ec;
  std::filesystem::create_directories(a.out, ec);
  try {
    trace::write_trace_file(a.out + "/" + bench_name + ".trace", t);
  } catch (const std::exception& e) {
    return fail(e.what());
  }

  if (a.dump_selection) {
    for (const sim::SimConfig& cfg : cfgs) {
      if (!cfg.uses_selection()) continue;
      const sel::SelectionMap map = sel::select_all(t, cfg.profile);
      try {
        sel::write_selection_file(
            a.out + "/selection-" + cfg.name + ".txt", map);
      } catch (const std::exception& e) {
        return fail(e.what());
      }
    }
  }

  std::vector<RunRow> rows;
  if (std::string err =
          run_all(t, bench_name, cfgs, nullptr, a.dump_msglog, rows);
      !err.empty())
    return fail(err);
  return emit_rows(rows, a.baseline, a.format, a.out, a.dump_msglog);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "trace-driven request-type selection, timed simulation, and bounded "
      "protocol checking for heterogeneous CPU-GPU memory systems"};
  app.set_config("--config-file", "",
                 "key=value file mirroring every flag (one [section] per "
                 "subcommand); command-line flags take precedence");
  std::string print_cfg;
  app.add_option("--print-config", print_cfg,
                 "print the expansion of a named configuration and exit");

  GenerateArgs g;
  CLI::App* sg = app.add_subcommand("generate", "write a microbenchmark trace");
  g.bench.attach(sg, /*required=*/true);
  sg->add_option("--out", g.out, "output trace path (default <bench>.trace)");

  SelectArgs se;
  CLI::App* ss = app.add_subcommand(
      "select", "choose request types for a trace and write the map");
  se.bench.attach(ss, /*required=*/false);
  ss->add_option("--trace", se.trace_path, "input trace (else --bench generates)");
  ss->add_option("--config", se.config,
                 "configuration whose capability profile to select for");
  ss->add_option("--out", se.out, "output selection-map path");
  ss->add_option("--format", se.format, "text|csv")
      ->check(CLI::IsMember({"text", "csv"}));
  ss->add_flag("--no-fwd", se.no_fwd, "drop write-through forwarding support");
  ss->add_flag("--no-pred", se.no_pred, "drop owner-prediction support");
  ss->add_flag("--line-cpu", se.line_cpu, "line-granularity CPU state");
  ss->add_flag("--line-gpu", se.line_gpu, "line-granularity GPU state");

  SimulateArgs si;
  CLI::App* sm = app.add_subcommand("simulate", "run configurations over a trace");
  sm->add_option("--trace", si.trace_path, "input trace file")->required();
  sm->add_option("--configs", si.configs, "comma-separated configuration names");
  sm->add_option("--custom-config", si.custom_config,
                 "key=value configuration file to run as well");
  sm->add_option("--selection", si.selection_path,
                 "use this selection map instead of selecting per profile");
  sm->add_option("--baseline", si.baseline,
                 "normalize the comparison table to this configuration");
  sm->add_option("--out", si.out, "directory for metrics.csv and dumps");
  sm->add_option("--format", si.format, "text|csv")
      ->check(CLI::IsMember({"text", "csv"}));
  sm->add_flag("--dump-msglog", si.dump_msglog,
               "record per-message logs (written under --out)");

  CheckArgs ck;
  CLI::App* sc = app.add_subcommand(
      "check", "explore the bounded protocol state space");
  sc->add_option("--budget", ck.budget, "state budget per configuration");
  sc->add_flag("--dfs", ck.dfs, "depth-first frontier order");
  sc->add_flag("--mutations", ck.mutations,
               "also run the seeded protocol mutations and require detection");
  sc->add_option("--out", ck.out, "directory for check.csv");
  sc->add_option("--format", ck.format, "text|csv")
      ->check(CLI::IsMember({"text", "csv"}));

  ReportArgs rp;
  CLI::App* sr = app.add_subcommand("report", "render a metrics CSV file");
  sr->add_option("--in", rp.in, "metrics.csv produced by simulate/pipeline")
      ->required();
  sr->add_option("--baseline", rp.baseline,
                 "normalize the comparison table to this configuration");
  sr->add_option("--format", rp.format, "text|csv")
      ->check(CLI::IsMember({"text", "csv"}));

  PipelineArgs pl;
  CLI::App* sp = app.add_subcommand(
      "pipeline", "generate, select, simulate, and report in one run");
  pl.bench.attach(sp, /*required=*/true);
  sp->add_option("--configs", pl.configs, "comma-separated configuration names");
  sp->add_option("--custom-config", pl.custom_config,
                 "key=value configuration file to run as well");
  sp->add_option("--baseline", pl.baseline,
                 "normalize the comparison table to this configuration "
                 "(default: first named)");
  sp->add_option("--out", pl.out, "artifact directory");
  sp->add_option("--format", pl.format, "text|csv")
      ->check(CLI::IsMember({"text", "csv"}));
  sp->add_flag("--dump-selection", pl.dump_selection,
               "write each configuration's selection map");
  sp->add_flag("--dump-msglog", pl.dump_msglog, "write per-message logs");

  app.require_subcommand(0, 1);
  CLI11_PARSE(app, argc, argv);

  if (!print_cfg.empty()) {
    const std::vector<sim::SimConfig> table = sim::standard_configs();
    const sim::SimConfig* c = sim::find_config(table, print_cfg);
    if (c == nullptr)
      return fail("unknown configuration '" + print_cfg +
                  "'; valid names: " + valid_config_names());
    std::cout << print_config_kv(*c);
    return 0;
  }

  try {
    if (sg->parsed()) return cmd_generate(g);
    if (ss->parsed()) return cmd_select(se);
    if (sm->parsed()) return cmd_simulate(si);
    if (sc->parsed()) return cmd_check(ck);
    if (sr->parsed()) return cmd_report(rp);
    if (sp->parsed()) return cmd_pipeline(pl);
  } catch (const std::exception& e) {
    return fail(e.what());
  }

  std::cout << app.help();
  return 2;
}
