#include "fcssim/trace.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_map>

namespace fcssim::trace {

namespace {

// Region bases: far apart so A, B, and the flag words never share a block.
constexpr Addr kRegionA = 0x10000;
constexpr Addr kRegionB = 0x40000;
constexpr Addr kFlags = 0xF0000;
constexpr int kFlagWords = 4;

std::uint32_t store_value(std::uint64_t seq, int core) {
  return static_cast<std::uint32_t>((seq + 1) * 2654435761u) ^
         (static_cast<std::uint32_t>(core) * 0x9E3779B9u);
}

std::uint32_t rmw_addend(std::uint64_t seq) {
  return static_cast<std::uint32_t>(2 * seq + 1);  // odd, so no addend is a no-op
}

class Builder {
 public:
  Builder(const Geometry& geo, int n_cpu, int n_gpu) {
    t_.hdr.geo = geo;
    t_.hdr.n_cpu = n_cpu;
    t_.hdr.n_gpu = n_gpu;
  }

  void add(int core, AccessKind kind, Addr word_byte_addr, std::uint32_t pc,
           SyncKind sync = SyncKind::None) {
    const Geometry& g = t_.hdr.geo;
    MemoryAccess a;
    a.seq = seq_++;
    a.core = core;
    a.kind = kind;
    a.addr = g.block_of(word_byte_addr);
    a.mask = WordMask{1} << g.word_index(word_byte_addr);
    a.static_inst = pc;
    a.sync = sync;
    if (kind == AccessKind::Store) {
      a.values = {store_value(a.seq, core)};
    } else if (kind == AccessKind::Rmw) {
      a.values = {rmw_addend(a.seq)};
    }
    t_.accesses.push_back(std::move(a));
  }

  // Global barrier: every core releases on the rotating flag word, then every
  // core acquires on it.  Flag RMWs are the only sync accesses in a trace.
  void barrier() {
    const Addr flag = kFlags + Addr{barriers_ % kFlagWords} * t_.hdr.geo.word_size;
    ++barriers_;
    for (int c = 0; c < t_.hdr.n_cores(); ++c)
      add(c, AccessKind::Rmw, flag, pc::kBarrierRelease, SyncKind::Release);
    for (int c = 0; c < t_.hdr.n_cores(); ++c)
      add(c, AccessKind::Rmw, flag, pc::kBarrierAcquire, SyncKind::Acquire);
  }

  // Per-core acq-rel iteration marker on the rotating flag word.
  void markers(std::uint32_t iter) {
    const Addr flag = kFlags + Addr{iter % kFlagWords} * t_.hdr.geo.word_size;
    for (int c = 0; c < t_.hdr.n_cores(); ++c)
      add(c, AccessKind::Rmw, flag, pc::kIterMarker, SyncKind::AcqRel);
  }

  AccessTrace take() { return std::move(t_); }

 private:
  AccessTrace t_;
  std::uint64_t seq_ = 0;
  std::uint64_t barriers_ = 0;
};

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_common(const BenchParams& p) {
  require(p.n_cpu >= 0 && p.n_gpu >= 0 && p.n_cpu + p.n_gpu >= 1,
          "benchmark needs at least one core");
  require(p.partition_words >= 1, "partition_words must be positive");
  require(p.iterations >= 1, "iterations must be positive");
}

AccessTrace gen_interleaved_read_shared(const BenchParams& p, const Geometry& geo) {
  check_common(p);
  const int wpb = static_cast<int>(geo.words_per_block());
  require(p.n_cpu >= 1 && p.n_gpu >= 1, "flexvs needs cpus and gpus");

  const int C = p.n_cpu, G = p.n_gpu, P = p.partition_words;
  const int ws = static_cast<int>(geo.word_size);
  const int stride = std::max(1, G / C);  // stagger between CPU B rotations
  // Scattered stores: one cluster block per A partition per phase, with
  // per-gpu disjoint word slots inside it, capped by a 1-per-32-words density.
  const int wpg = std::max(1, wpb / G);   // word slots per gpu per cluster block
  const int nspar = std::min(C * wpg, std::max(1, P / 32));
  const int blocks_per_part = std::max(1, P / wpb);
  std::mt19937_64 rng(p.seed * 0x9E3779B97F4A7C15ull + 1);

  Builder b(geo, C, G);
  auto a_word = [&](int part, int w) { return kRegionA + Addr(part * P + w) * ws; };
  auto b_word = [&](int part, int w) { return kRegionB + Addr(part * P + w) * ws; };

  for (int i = 0; i < p.iterations; ++i) {
    // CPU phase: each cpu streams its fixed A partition, then one staggered
    // rotating gpu-owned B partition.
    for (int w = 0; w < P; ++w)
      for (int j = 0; j < C; ++j)
        b.add(j, AccessKind::Load, a_word(j, w), pc::kCpuLoadA);
    for (int w = 0; w < P; ++w)
      for (int j = 0; j < C; ++j)
        b.add(j, AccessKind::Load, b_word((j * stride + i) % G, w), pc::kCpuLoadB);
    b.barrier();

    // GPU phase: dense read+write pairs over the core's own B partition.
    // The store leads on block-start words so that a remote store heads each
    // phase's run in every block-conflict chain.
    for (int w = 0; w < P; ++w)
      for (int g = 0; g < G; ++g) {
        const int core = C + g;
        const Addr addr = b_word(g, w);
        if (w % wpb == 0) {
          b.add(core, AccessKind::Store, addr, pc::kGpuStoreB);
          b.add(core, AccessKind::Load, addr, pc::kGpuLoadB);
        } else {
          b.add(core, AccessKind::Load, addr, pc::kGpuLoadB);
          b.add(core, AccessKind::Store, addr, pc::kGpuStoreB);
        }
      }
    // Scattered A stores: one seeded cluster block per A partition per phase,
    // per-gpu disjoint word slots, target partition alternating per access.
    std::vector<int> cluster(C);
    for (int c = 0; c < C; ++c)
      cluster[c] = static_cast<int>(rng() % blocks_per_part);
    for (int t = 0; t < nspar; ++t)
      for (int g = 0; g < G; ++g) {
        const int c = (g + i + t) % C;
        const int slot = g * wpg + t / C;
        const int w = (cluster[c] * wpb + slot) % P;
        b.add(C + g, AccessKind::Store, a_word(c, w), pc::kGpuStoreA);
      }
    b.barrier();
  }
  return b.take();
}

AccessTrace gen_partitioned_rmw_mix(const BenchParams& p, const Geometry& geo) {
  check_common(p);
  require(p.n_cpu >= 1 && p.n_gpu >= 1, "flexowt needs cpus and gpus");
  const int C = p.n_cpu, G = p.n_gpu, P = p.partition_words;
  const int ws = static_cast<int>(geo.word_size);
  const int sparse = std::max(1, 2 * P / 16);  // 1 per 16 dense accesses
  std::mt19937_64 rng(p.seed * 0x9E3779B97F4A7C15ull + 2);

  Builder b(geo, C, G);
  auto a_word = [&](int part, int w) { return kRegionA + Addr(part * P + w) * ws; };
  auto b_word = [&](int part, int w) { return kRegionB + Addr(part * P + w) * ws; };

  for (int i = 0; i < p.iterations; ++i) {
    for (int w = 0; w < P; ++w)
      for (int j = 0; j < C; ++j) {
        b.add(j, AccessKind::Load, a_word(j, w), pc::kCpuLoadA);
        b.add(j, AccessKind::Store, a_word(j, w), pc::kCpuStoreA);
      }
    for (int t = 0; t < sparse; ++t)
      for (int j = 0; j < C; ++j) {
        const int q = (j + i) % G;
        const int off = static_cast<int>(rng() % P);
        b.add(j, AccessKind::Store, b_word(q, off), pc::kCpuStoreB);
      }
    b.barrier();

    for (int w = 0; w < P; ++w)
      for (int g = 0; g < G; ++g) {
        b.add(C + g, AccessKind::Load, b_word(g, w), pc::kGpuLoadB);
        b.add(C + g, AccessKind::Store, b_word(g, w), pc::kGpuStoreB);
      }
    for (int t = 0; t < sparse; ++t)
      for (int g = 0; g < G; ++g) {
        const int c = (g + i) % C;
        const int off = static_cast<int>(rng() % P);
        b.add(C + g, AccessKind::Store, a_word(c, off), pc::kGpuStoreA);
      }
    b.barrier();
  }
  return b.take();
}

AccessTrace gen_atomics_only(const BenchParams& p, const Geometry& geo) {
  check_common(p);
  require(p.n_cpu == 0, "flexoa is gpu-only (n_cpu must be 0)");
  require(p.n_gpu >= 2, "flexoa needs at least two gpus");
  const int G = p.n_gpu, P = p.partition_words;
  const int ws = static_cast<int>(geo.word_size);
  const int sparse = std::max(1, P / 16);
  std::mt19937_64 rng(p.seed * 0x9E3779B97F4A7C15ull + 3);

  Builder b(geo, 0, G);
  auto a_word = [&](int part, int w) { return kRegionA + Addr(part * P + w) * ws; };

  for (int i = 0; i < p.iterations; ++i) {
    for (int w = 0; w < P; ++w)
      for (int g = 0; g < G; ++g)
        b.add(g, AccessKind::Rmw, a_word(g, w), pc::kGpuRmwOwn);
    // One rotating remote partition per core per phase.
    for (int t = 0; t < sparse; ++t)
      for (int g = 0; g < G; ++g) {
        const int r = (g + 1 + i % (G - 1)) % G;
        const int off = static_cast<int>(rng() % P);
        b.add(g, AccessKind::Rmw, a_word(r, off), pc::kGpuRmwRemote);
      }
    b.markers(static_cast<std::uint32_t>(i));
  }
  return b.take();
}

AccessTrace gen_producer_consumer(const BenchParams& p, const Geometry& geo) {
  check_common(p);
  require(p.n_cpu >= 1 && p.n_gpu >= 1, "prodcons needs cpus and gpus");
  const int C = p.n_cpu, G = p.n_gpu, P = p.partition_words;
  const int K = std::max(C, G);  // producer/consumer pair count
  const int ws = static_cast<int>(geo.word_size);

  Builder b(geo, C, G);
  auto a_word = [&](int part, int w) { return kRegionA + Addr(part * P + w) * ws; };
  auto b_word = [&](int part, int w) { return kRegionB + Addr(part * P + w) * ws; };

  for (int i = 0; i < p.iterations; ++i) {
    for (int w = 0; w < P; ++w)
      for (int pr = 0; pr < K; ++pr)
        b.add(pr % C, AccessKind::Load, a_word(pr, w), pc::kCpuLoadA);
    for (int w = 0; w < P; ++w)
      for (int pr = 0; pr < K; ++pr)
        b.add(pr % C, AccessKind::Store, b_word(pr, w), pc::kCpuStoreB);
    b.barrier();

    for (int w = 0; w < P; ++w)
      for (int pr = 0; pr < K; ++pr)
        b.add(C + pr % G, AccessKind::Load, b_word(pr, w), pc::kGpuLoadB);
    for (int w = 0; w < P; ++w)
      for (int pr = 0; pr < K; ++pr)
        b.add(C + pr % G, AccessKind::Store, a_word(pr, w), pc::kGpuStoreA);
    b.barrier();
  }
  return b.take();
}

}  // namespace

std::string_view to_string(Bench b) {
  switch (b) {
    case Bench::InterleavedReadShared: return "flexvs";
    case Bench::PartitionedRmwMix: return "flexowt";
    case Bench::AtomicsOnly: return "flexoa";
    case Bench::ProducerConsumer: return "prodcons";
  }
  return "?";
}

std::optional<Bench> parse_bench(std::string_view name) {
  for (Bench b : {Bench::InterleavedReadShared, Bench::PartitionedRmwMix,
                  Bench::AtomicsOnly, Bench::ProducerConsumer})
    if (to_string(b) == name) return b;
  return std::nullopt;
}

BenchParams default_params(Bench b) {
  switch (b) {
    case Bench::InterleavedReadShared: return {2, 8, 256, 8, 1};
    case Bench::PartitionedRmwMix: return {2, 2, 128, 8, 1};
    case Bench::AtomicsOnly: return {0, 2, 128, 8, 1};
    case Bench::ProducerConsumer: return {2, 2, 16, 8, 1};
  }
  return {};
}

AccessTrace generate(Bench b, const BenchParams& p) {
  const Geometry geo;
  switch (b) {
    case Bench::InterleavedReadShared: return gen_interleaved_read_shared(p, geo);
    case Bench::PartitionedRmwMix: return gen_partitioned_rmw_mix(p, geo);
    case Bench::AtomicsOnly: return gen_atomics_only(p, geo);
    case Bench::ProducerConsumer: return gen_producer_consumer(p, geo);
  }
  throw std::invalid_argument("unknown benchmark");
}

BenchLayout layout_of(Bench b, const BenchParams& p, const Geometry&) {
  BenchLayout l;
  l.region_a = kRegionA;
  l.region_b = kRegionB;
  l.flags = kFlags;
  l.partition_words = p.partition_words;
  switch (b) {
    case Bench::InterleavedReadShared:
      l.a_partitions = p.n_cpu;
      l.b_partitions = p.n_gpu;
      break;
    case Bench::PartitionedRmwMix:
      l.a_partitions = p.n_cpu;
      l.b_partitions = p.n_gpu;
      break;
    case Bench::AtomicsOnly:
      l.a_partitions = p.n_gpu;
      l.b_partitions = 0;
      l.region_b = 0;
      break;
    case Bench::ProducerConsumer:
      l.a_partitions = std::max(p.n_cpu, p.n_gpu);
      l.b_partitions = l.a_partitions;
      break;
  }
  return l;
}

// --- validation -------------------------------------------------------------

ValidationReport validate(const AccessTrace& t) {
  ValidationReport r;
  auto err = [&](std::uint64_t seq, const std::string& what) {
    r.errors.push_back("access " + std::to_string(seq) + ": " + what);
  };
  const Geometry& g = t.hdr.geo;
  if (g.word_size == 0 || g.block_size == 0 || g.block_size % g.word_size != 0) {
    r.errors.push_back("geometry: block size must be a word-size multiple");
    return r;
  }
  if (t.hdr.n_cpu < 0 || t.hdr.n_gpu < 0 || t.hdr.n_cores() < 1)
    r.errors.push_back("header: need at least one core");
  const WordMask full = g.full_mask();
  std::uint64_t expect_seq = 0;
  for (const MemoryAccess& a : t.accesses) {
    if (a.seq != expect_seq) err(a.seq, "seq not dense/ascending");
    expect_seq = a.seq + 1;
    if (a.core < 0 || a.core >= t.hdr.n_cores()) err(a.seq, "core out of range");
    if (a.addr % g.block_size != 0) err(a.seq, "addr not block-aligned");
    if (a.mask == 0) err(a.seq, "empty word mask");
    if ((a.mask & ~full) != 0) err(a.seq, "mask exceeds block geometry");
    const std::size_t nwords = static_cast<std::size_t>(popcount_mask(a.mask & full));
    if (a.kind == AccessKind::Load) {
      if (!a.values.empty()) err(a.seq, "load carries store values");
    } else if (a.values.size() != nwords) {
      err(a.seq, "value count does not match mask");
    }
    if (a.sync != SyncKind::None && a.kind != AccessKind::Rmw)
      err(a.seq, "sync annotation on a non-RMW access");
    if (r.errors.size() > 64) {
      r.errors.push_back("(further errors suppressed)");
      break;
    }
  }
  return r;
}

bool is_data_race_free(const AccessTrace& t, bool allow_atomic_races,
                       std::string* first_race) {
  // Epoch = number of acquire-sync accesses the core has completed.  Sound
  // for the generated traces, where every barrier is an all-core barrier.
  std::vector<int> acquires(static_cast<std::size_t>(t.hdr.n_cores()), 0);
  struct Touch {
    int core;
    int epoch;
    bool write;
    bool rmw;
    bool sync;
    std::uint64_t seq;
  };
  std::unordered_map<Addr, std::vector<Touch>> words;
  const Geometry& g = t.hdr.geo;
  for (const MemoryAccess& a : t.accesses) {
    const int epoch = acquires[static_cast<std::size_t>(a.core)];
    for (unsigned w = 0; w < g.words_per_block(); ++w) {
      if (!mask_has(a.mask, w)) continue;
      auto& v = words[g.word_addr(a.addr, w)];
      const Touch cur{a.core, epoch, a.kind != AccessKind::Load,
                      a.kind == AccessKind::Rmw, a.is_sync(), a.seq};
      for (auto it = v.rbegin(); it != v.rend() && it->epoch == epoch; ++it) {
        const Touch& prev = *it;
        if (prev.core == cur.core) continue;
        if (!prev.write && !cur.write) continue;
        if (prev.sync && cur.sync) continue;  // synchronization accesses
        if (prev.rmw && cur.rmw && allow_atomic_races) continue;
        if (first_race) {
          std::ostringstream os;
          os << "word 0x" << std::hex << g.word_addr(a.addr, w) << std::dec
             << ": access " << prev.seq << " (core " << prev.core << ") races access "
             << cur.seq << " (core " << cur.core << ") in epoch " << epoch;
          *first_race = os.str();
        }
        return false;
      }
      v.push_back(cur);
    }
    if (a.has_acquire()) ++acquires[static_cast<std::size_t>(a.core)];
  }
  return true;
}

// --- text format ------------------------------------------------------------

TraceParseError::TraceParseError(int line, const std::string& what)
    : std::runtime_error("trace line " + std::to_string(line) + ": " + what),
      line_(line) {}

void write_trace(std::ostream& os, const AccessTrace& t) {
  os << "# fcstrace v1\n";
  os << "# geometry block " << t.hdr.geo.block_size << " word " << t.hdr.geo.word_size
     << "\n";
  os << "# cores cpu " << t.hdr.n_cpu << " gpu " << t.hdr.n_gpu << "\n";
  std::ostringstream line;
  for (const MemoryAccess& a : t.accesses) {
    line.str({});
    line << a.seq << ' ' << a.core << ' ' << to_string(t.device_of(a.core)) << ' '
         << (a.kind == AccessKind::Load ? 'L' : a.kind == AccessKind::Store ? 'S' : 'R')
         << ' ' << std::hex << a.addr << ' ' << a.mask << std::dec << ' '
         << a.static_inst << ' ' << to_string(a.sync) << ' ';
    if (a.values.empty()) {
      line << '-';
    } else {
      for (std::size_t i = 0; i < a.values.size(); ++i)
        line << (i ? "," : "") << std::hex << a.values[i] << std::dec;
    }
    os << line.str() << '\n';
  }
}

namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
T parse_int(std::string_view tok, int line, const char* what, int base = 10) {
  T value{};
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value, base);
  if (ec != std::errc{} || p != tok.data() + tok.size())
    throw TraceParseError(line, std::string("bad ") + what + " '" + std::string(tok) + "'");
  return value;
}

}  // namespace

AccessTrace read_trace(std::istream& is) {
  AccessTrace t;
  std::string raw;
  int lineno = 0;
  bool saw_magic = false, saw_geometry = false, saw_cores = false;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string_view line{raw};
    if (auto pos = line.find_last_not_of(" \t\r"); pos == std::string_view::npos)
      continue;
    else
      line = line.substr(0, pos + 1);
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "#") {
      if (toks.size() >= 3 && toks[1] == "fcstrace") {
        if (toks[2] != "v1") throw TraceParseError(lineno, "unsupported trace version");
        saw_magic = true;
      } else if (toks.size() == 6 && toks[1] == "geometry" && toks[2] == "block" &&
                 toks[4] == "word") {
        t.hdr.geo.block_size = parse_int<std::uint32_t>(toks[3], lineno, "block size");
        t.hdr.geo.word_size = parse_int<std::uint32_t>(toks[5], lineno, "word size");
        saw_geometry = true;
      } else if (toks.size() == 6 && toks[1] == "cores" && toks[2] == "cpu" &&
                 toks[4] == "gpu") {
        t.hdr.n_cpu = parse_int<int>(toks[3], lineno, "cpu count");
        t.hdr.n_gpu = parse_int<int>(toks[5], lineno, "gpu count");
        saw_cores = true;
      }
      continue;
    }
    if (!saw_magic) throw TraceParseError(lineno, "missing '# fcstrace v1' header");
    if (!saw_geometry || !saw_cores)
      throw TraceParseError(lineno, "access before geometry/cores header");
    if (toks.size() != 9) throw TraceParseError(lineno, "expected 9 fields");
    MemoryAccess a;
    a.seq = parse_int<std::uint64_t>(toks[0], lineno, "seq");
    a.core = parse_int<int>(toks[1], lineno, "core");
    if (toks[2] != "cpu" && toks[2] != "gpu")
      throw TraceParseError(lineno, "bad device class");
    if (toks[3] == "L")
      a.kind = AccessKind::Load;
    else if (toks[3] == "S")
      a.kind = AccessKind::Store;
    else if (toks[3] == "R")
      a.kind = AccessKind::Rmw;
    else
      throw TraceParseError(lineno, "bad access kind");
    a.addr = parse_int<Addr>(toks[4], lineno, "addr", 16);
    a.mask = parse_int<WordMask>(toks[5], lineno, "mask", 16);
    a.static_inst = parse_int<std::uint32_t>(toks[6], lineno, "pc");
    if (toks[7] == "-")
      a.sync = SyncKind::None;
    else if (toks[7] == "acq")
      a.sync = SyncKind::Acquire;
    else if (toks[7] == "rel")
      a.sync = SyncKind::Release;
    else if (toks[7] == "acqrel")
      a.sync = SyncKind::AcqRel;
    else
      throw TraceParseError(lineno, "bad sync kind");
    if (toks[8] != "-") {
      std::string_view v = toks[8];
      while (!v.empty()) {
        const auto comma = v.find(',');
        const auto tok = v.substr(0, comma);
        a.values.push_back(parse_int<std::uint32_t>(tok, lineno, "value", 16));
        if (comma == std::string_view::npos) break;
        v = v.substr(comma + 1);
      }
    }
    const DeviceClass claimed =
        toks[2] == "cpu" ? DeviceClass::Cpu : DeviceClass::Gpu;
    if (a.core < 0 || a.core >= t.hdr.n_cores())
      throw TraceParseError(lineno, "core out of range");
    if (t.hdr.device_of(a.core) != claimed)
      throw TraceParseError(lineno, "device class disagrees with core table");
    t.accesses.push_back(std::move(a));
  }
  if (!saw_magic) throw TraceParseError(lineno, "empty input (no trace header)");
  return t;
}

void write_trace_file(const std::string& path, const AccessTrace& t) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_trace(os, t);
  if (!os) throw std::runtime_error("write failed: " + path);
}

AccessTrace read_trace_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return read_trace(is);
}

}  // namespace fcssim::trace
