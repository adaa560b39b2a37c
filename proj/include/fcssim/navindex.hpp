#pragma once

// Navigation index over one access trace: conflict chains (same-word and
// same-block), backward conflict links, sync-separation queries, and
// unique-footprint scans used by the cache-reuse heuristic.

#include <cstdint>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fcssim/trace.hpp"

namespace fcssim::sel {

class NavIndex {
 public:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  explicit NavIndex(const trace::AccessTrace& t);

  const trace::AccessTrace& trace() const { return *t_; }
  const trace::MemoryAccess& at(std::size_t i) const { return t_->accesses[i]; }
  std::size_t size() const { return t_->accesses.size(); }

  // Next/previous access (in trace order) touching any common word.
  std::size_t next_conflict(std::size_t i) const { return next_conflict_[i]; }
  std::size_t prev_conflict(std::size_t i) const { return prev_conflict_[i]; }

  // Next access touching the same block.
  std::size_t next_block_conflict(std::size_t i) const {
    return next_block_conflict_[i];
  }

  // True when a and b (a earlier, both same core) are separated by an
  // intervening same-core synchronization access S with:
  //   (1) a or b an RMW and S any sync, or
  //   (2) a a load and S carrying acquire semantics, or
  //   (3) a a store and S carrying release semantics.
  // Cross-core pairs are never sync-separated here (the caller's
  // different-core test subsumes them).
  bool sync_separated(std::size_t a, std::size_t b) const;

  // Positions of one core's accesses, ascending.
  const std::vector<std::size_t>& core_positions(int core) const {
    return core_pos_[static_cast<std::size_t>(core)];
  }

  // Positions of one (core, static instruction) stream, ascending.
  const std::vector<std::size_t>& core_inst_positions(int core,
                                                      std::uint32_t inst) const;

  DeviceClass device_of(std::size_t i) const {
    return t_->hdr.device_of(t_->accesses[i].core);
  }

 private:
  const trace::AccessTrace* t_;
  std::vector<std::size_t> next_conflict_, prev_conflict_, next_block_conflict_;
  std::vector<std::vector<std::size_t>> core_pos_;
  // Per core: positions of sync accesses, of acquire-syncs, of release-syncs.
  std::vector<std::vector<std::size_t>> sync_any_, sync_acq_, sync_rel_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> core_inst_pos_;
};

// Incremental unique-footprint scan: number of distinct bytes the fixed
// access's core touches strictly between it and an (advancing) later
// position.  `advance` positions must not decrease across calls.
class ReuseScanner {
 public:
  ReuseScanner(const NavIndex& nav, std::size_t x);
  std::uint64_t advance(std::size_t j);

 private:
  const NavIndex* nav_;
  const std::vector<std::size_t>* positions_;
  std::size_t cursor_;  // index into positions_
  std::unordered_set<Addr> words_;
  std::uint64_t bytes_ = 0;
};

}  // namespace fcssim::sel
