#pragma once

// Deterministic timed simulation of a CPU+GPU system running an access
// trace over the coherence protocol.  Cores sit on a small mesh with the
// shared last-level cache at a fixed node; every message pays a per-hop
// latency and the LLC serves one message at a time.  Each core executes its
// slice of the trace in order: loads block per a device-class miss window,
// stores coalesce in a write buffer that drains at releases, and
// read-modify-writes serialize.  Acquire-marked accesses wait until every
// earlier release in the whole trace has completed, then self-invalidate
// whatever the core's protocol flavor requires.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fcssim/coherence.hpp"
#include "fcssim/selector.hpp"
#include "fcssim/trace.hpp"

namespace fcssim::sim {

// Per-device protocol flavor.  The first three ignore any selection map and
// issue a fixed request pattern; Flex follows the per-access selection.
enum class Flavor : std::uint8_t { Mesi, DeNovo, GpuCoh, Flex };

const char* to_string(Flavor f);

struct SimConfig {
  std::string name;
  Flavor cpu{Flavor::Mesi};
  Flavor gpu{Flavor::GpuCoh};
  // Capability profile a selection map must match when a Flex flavor is in
  // use; ignored otherwise.
  sel::HardwareProfile profile{};

  bool uses_selection() const {
    return cpu == Flavor::Flex || gpu == Flavor::Flex;
  }
};

// The seven standard machine configurations, addressable by name:
//   SMG      static MESI CPU + write-through GPU
//   SMD      static MESI CPU + word-granular ownership GPU
//   SDG      word-granular ownership CPU + write-through GPU
//   SDD      word-granular ownership on both sides
//   FCS      per-access selection, no forwarding, no prediction
//   FCS+fwd  selection with forwarded write-throughs
//   FCS+pred selection with forwarding and owner prediction
std::vector<SimConfig> standard_configs();
const SimConfig* find_config(const std::vector<SimConfig>& v,
                             const std::string& name);

struct SimParams {
  int hop_cycles{8};
  int llc_service_cycles{20};
  int l1_hit_cycles{1};
  int cpu_load_window{1};   // outstanding load misses per CPU core
  int gpu_load_window{16};  // outstanding load misses per GPU core
  int retry_cap{2};
  int msg_header_bytes{8};
  int word_bytes{4};
  int mesh_w{4}, mesh_h{4};
  int llc_node{5};
};

struct SimMetrics {
  std::uint64_t cycles{0};
  std::uint64_t bytes{0};
  std::uint64_t hops{0};
  std::uint64_t msgs{0};
  std::array<std::uint64_t, kNumRequestTypes> msgs_by_born{};
  std::array<std::uint64_t, kNumRequestTypes> llc_lookups_by_born{};
  std::map<std::uint32_t, std::uint64_t> llc_lookups_by_inst;
  // (static_inst << 32 | epoch-at-issue) -> {prediction hits, misses}
  std::map<std::uint64_t, std::array<std::uint64_t, 2>> pred_by_inst_epoch;
  std::uint64_t pred_hits{0};
  std::uint64_t pred_misses{0};
  std::uint64_t nacks{0};
  std::uint64_t max_retry{0};  // highest retry count on any request message
  std::uint64_t rmws_applied{0};
  std::uint64_t l1_hits{0};
  std::uint64_t l1_misses{0};
  std::uint64_t wb_forwards{0};
};

struct SimResult {
  bool ok{false};
  std::string error;
  SimMetrics metrics;
  // Final memory image: word address -> value, owned words read from their
  // owning cache.
  std::map<Addr, std::uint32_t> image;
  std::vector<std::string> msglog;
};

// Run one configuration over a trace.  `map` is required when the
// configuration uses selection and must carry a matching capability
// profile; static configurations ignore it entirely.
SimResult simulate(const trace::AccessTrace& t, const sel::SelectionMap* map,
                   const SimConfig& cfg, const SimParams& params = {},
                   bool capture_msglog = false);

// In-order reference execution: stores write, atomics fetch-add.
std::map<Addr, std::uint32_t> sc_reference_execute(const trace::AccessTrace& t);

std::uint64_t count_rmw_accesses(const trace::AccessTrace& t);

// Empty string when the images agree (missing words read as zero);
// otherwise a short description of the first difference.
std::string compare_images(const std::map<Addr, std::uint32_t>& expect,
                           const std::map<Addr, std::uint32_t>& got);

}  // namespace fcssim::sim
