#pragma once

// Request-type selection: scores each trace access against its future and
// past conflict chains, picks a root request type per access, widens request
// footprints by observed reuse, resolves per-instruction-group votes, and
// lowers the result onto a hardware capability profile.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fcssim/navindex.hpp"
#include "fcssim/trace.hpp"

namespace fcssim::sel {

// Capabilities of the target memory system.
struct HardwareProfile {
  bool supports_wt_forwarding = true;   // forwarded write-through requests
  bool supports_owner_prediction = true;  // direct-to-predicted-owner requests
  bool word_granularity_cpu = true;     // per-word state on CPU-class cores
  bool word_granularity_gpu = true;     // per-word state on GPU-class cores
};

// Tunables for the scoring heuristics.
struct ScoringParams {
  int ownership_window = 5;   // scored conflict hops per ownership walk
  int predictor_window = 4;   // same-instruction predecessors per stability walk
  double reuse_fraction = 0.75;
  // Criticality of a conflicting access: loads and non-release RMWs score by
  // device class; stores and release RMWs score crit_other.
  double crit_cpu_load = 6.0;
  double crit_gpu_load = 2.0;
  double crit_other = 1.0;
  double weight_known_core = 2.0;  // conflicting core already in the walk
  double weight_new_core = 0.5;    // first encounter with a core
  // Effective per-core cache footprint available for reuse, bytes.
  std::uint64_t capacity_cpu = 2048;
  std::uint64_t capacity_gpu = 2048;

  std::uint64_t capacity_for(DeviceClass d) const {
    return d == DeviceClass::Cpu ? capacity_cpu : capacity_gpu;
  }
};

struct SelectedAccess {
  RequestType voted;       // group-vote winner (root type)
  RequestType final_type;  // after footprint widening and profile lowering
  WordMask mask;           // request footprint within the access's block
};

struct SelectionMap {
  HardwareProfile profile;
  bool equalized_criticality = false;
  std::vector<SelectedAccess> per_access;  // parallel to the trace
  // Modal final type per static instruction (informational summary).
  std::map<std::uint32_t, RequestType> per_inst;
};

class Selector {
 public:
  Selector(const trace::AccessTrace& t, const HardwareProfile& hp,
           const ScoringParams& sp);

  const NavIndex& nav() const { return nav_; }

  // Scoring predicates (exposed for targeted tests).
  bool ownership_beneficial(std::size_t x) const;
  bool shared_state_beneficial(std::size_t x) const;
  bool owner_prediction_beneficial(std::size_t x) const;

  // Root request type for one access, before voting and widening.
  RequestType root_type(std::size_t x) const;

  // Footprint widening within the access's block.
  WordMask intra_sync_load_reuse(std::size_t x) const;
  WordMask inter_sync_store_reuse(std::size_t x) const;

  // Criticality of an access under the active weighting.
  double criticality(std::size_t y) const;

  // Full pipeline: root types, votes, footprints, profile lowering.
  SelectionMap run() const;

 private:
  bool reuse_possible_bytes(std::size_t x, std::uint64_t bytes) const;

  const trace::AccessTrace* t_;
  HardwareProfile hp_;
  ScoringParams sp_;
  bool equalized_;
  NavIndex nav_;
};

// Priority order for vote ties: higher wins.
int vote_priority(RequestType t);

// Convenience wrapper.
SelectionMap select_all(const trace::AccessTrace& t, const HardwareProfile& hp,
                        const ScoringParams& sp = {});

// Text serialization of a selection map (one line per access).
void write_selection(std::ostream& os, const SelectionMap& m);
SelectionMap read_selection(std::istream& is);
void write_selection_file(const std::string& path, const SelectionMap& m);
SelectionMap read_selection_file(const std::string& path);

}  // namespace fcssim::sel
