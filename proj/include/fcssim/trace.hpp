#pragma once

// Memory-access trace model: record layout, microbenchmark generators,
// structural validation, and the line-oriented text format.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "fcssim/types.hpp"

namespace fcssim::trace {

// One dynamic memory access.  `addr` is the block base address; `mask` marks
// the touched words inside that block; `values` holds one 32-bit payload per
// set mask bit (low word first) for stores and RMWs (RMW payloads are
// fetch-add operands), and is empty for loads.
struct MemoryAccess {
  std::uint64_t seq = 0;       // dense, unique, ascending trace position
  int core = 0;                // global core id (CPUs first, then GPUs)
  AccessKind kind = AccessKind::Load;
  Addr addr = 0;               // block base
  WordMask mask = 0;
  std::uint32_t static_inst = 0;  // static instruction (PC) id
  SyncKind sync = SyncKind::None;
  std::vector<std::uint32_t> values;

  bool is_sync() const { return sync != SyncKind::None; }
  bool has_acquire() const {
    return sync == SyncKind::Acquire || sync == SyncKind::AcqRel;
  }
  bool has_release() const {
    return sync == SyncKind::Release || sync == SyncKind::AcqRel;
  }
};

struct TraceHeader {
  Geometry geo;
  int n_cpu = 0;
  int n_gpu = 0;

  int n_cores() const { return n_cpu + n_gpu; }
  DeviceClass device_of(int core) const {
    return core < n_cpu ? DeviceClass::Cpu : DeviceClass::Gpu;
  }
};

struct AccessTrace {
  TraceHeader hdr;
  std::vector<MemoryAccess> accesses;

  DeviceClass device_of(int core) const { return hdr.device_of(core); }
};

// --- generators -------------------------------------------------------------

// The four microbenchmarks.  All operate on two word-addressed regions A and
// B (each `n_partitions * partition_words` words) plus a small flag region
// used for barrier synchronization; every iteration ends with a global
// release/acquire barrier on a rotating flag word.
//
//   InterleavedReadShared ("flexvs"):  each CPU core densely re-reads its
//     own fixed A partition every CPU phase (sync-separated streaming reuse)
//     and one rotating GPU-owned B partition (visits to any one B partition
//     are staggered n_gpu/n_cpu iterations apart); each GPU core densely
//     reads+writes its own fixed B partition (store leads the load on
//     block-start words, load leads elsewhere) and issues a few scattered A
//     stores per phase, clustered into one seeded block per A partition and
//     alternating target partition access by access.
//   PartitionedRmwMix ("flexowt"):  each CPU core densely loads+stores its
//     own A partition and sparsely stores into a rotating remote B
//     partition; GPUs mirror the pattern on B with sparse stores into A.
//   AtomicsOnly ("flexoa"):  GPU-only; each core runs dense RMWs over its
//     own partition and sparse RMWs into one rotating remote partition per
//     phase, with per-iteration acq-rel markers instead of intra-iteration
//     ordering (remote RMWs race benignly with the owner's dense RMWs).
//   ProducerConsumer ("prodcons"):  CPU core j reads A partition j then
//     writes B partition j; GPU core j reads B partition j then writes A
//     partition j, alternating phases.
enum class Bench { InterleavedReadShared, PartitionedRmwMix, AtomicsOnly, ProducerConsumer };

std::string_view to_string(Bench b);
std::optional<Bench> parse_bench(std::string_view name);

struct BenchParams {
  int n_cpu = 2;
  int n_gpu = 2;
  int partition_words = 16;
  int iterations = 8;
  std::uint64_t seed = 1;
};

// Per-benchmark default sizing (n_cpu/n_gpu/partition_words/iterations).
BenchParams default_params(Bench b);

AccessTrace generate(Bench b, const BenchParams& p);

// --- validation -------------------------------------------------------------

struct ValidationReport {
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

// Structural checks: dense ascending seq, cores within the header table,
// masks non-empty and within geometry, block-aligned addresses, value counts
// matching mask popcount (stores/RMWs carry values, loads carry none), and
// sync annotations appearing on RMWs only.
ValidationReport validate(const AccessTrace& t);

// Data-race scan used by tests: true when every pair of conflicting accesses
// from different cores is separated by a release (writer side) followed by
// an acquire (reader side) in trace order, treating RMWs as both.  Accesses
// to the same word by two cores inside one barrier epoch with at least one
// writer count as a race unless both are RMWs and `allow_atomic_races`.
bool is_data_race_free(const AccessTrace& t, bool allow_atomic_races,
                       std::string* first_race = nullptr);

// --- text format ------------------------------------------------------------
//
//   # fcstrace v1
//   # geometry block 64 word 4
//   # cores cpu 2 gpu 2
//   <seq> <core> <cpu|gpu> <L|S|R> <addr-hex> <mask-hex> <pc> <sync> <values|->
//
// with <sync> one of -, acq, rel, acqrel and <values> a comma-joined list of
// 32-bit hex payloads (one per set mask bit).

class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

void write_trace(std::ostream& os, const AccessTrace& t);
AccessTrace read_trace(std::istream& is);

void write_trace_file(const std::string& path, const AccessTrace& t);
AccessTrace read_trace_file(const std::string& path);

// Region/layout description for one generated benchmark instance; lets tests
// and metrics code classify addresses without re-deriving generator math.
struct BenchLayout {
  Addr region_a = 0;        // base of region A
  Addr region_b = 0;        // base of region B
  Addr flags = 0;           // base of flag region
  int a_partitions = 0;     // partition count in A (== writer/reader count)
  int b_partitions = 0;
  int partition_words = 0;
};

BenchLayout layout_of(Bench b, const BenchParams& p, const Geometry& geo = {});

// Static-instruction ids used by the generators (stable across runs).
namespace pc {
inline constexpr std::uint32_t kCpuLoadA = 1;
inline constexpr std::uint32_t kCpuLoadB = 2;
inline constexpr std::uint32_t kCpuStoreA = 3;
inline constexpr std::uint32_t kCpuStoreB = 4;
inline constexpr std::uint32_t kGpuLoadB = 5;
inline constexpr std::uint32_t kGpuStoreA = 6;
inline constexpr std::uint32_t kGpuStoreB = 7;
inline constexpr std::uint32_t kGpuRmwOwn = 8;
inline constexpr std::uint32_t kGpuRmwRemote = 9;
inline constexpr std::uint32_t kBarrierRelease = 10;
inline constexpr std::uint32_t kBarrierAcquire = 11;
inline constexpr std::uint32_t kIterMarker = 12;
}  // namespace pc

}  // namespace fcssim::trace
