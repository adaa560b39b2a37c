#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fcssim/selector.hpp"
#include "fcssim/simnet.hpp"
#include "fcssim/trace.hpp"

using namespace fcssim;
using sim::Flavor;
using sim::SimConfig;
using sim::SimParams;
using sim::SimResult;

namespace {

constexpr Addr kBlk = 0x1000;
constexpr Addr kBlk2 = 0x2000;
constexpr Addr kFlag = 0xF000;

// Hand-built trace helper mirroring the generator encoding: addr is the
// block base, word selection lives in the mask.
struct Maker {
  trace::AccessTrace t;
  std::uint64_t seq = 0;

  Maker(int n_cpu, int n_gpu) {
    t.hdr.geo = Geometry{};
    t.hdr.n_cpu = n_cpu;
    t.hdr.n_gpu = n_gpu;
  }

  trace::MemoryAccess& add(int core, AccessKind k, Addr block, WordMask mask,
                           std::vector<std::uint32_t> values = {},
                           SyncKind sync = SyncKind::None) {
    trace::MemoryAccess a;
    a.seq = seq++;
    a.core = core;
    a.kind = k;
    a.addr = block;
    a.mask = mask;
    a.static_inst = 1;
    a.sync = sync;
    a.values = std::move(values);
    t.accesses.push_back(a);
    return t.accesses.back();
  }
};

SimConfig static_config(Flavor cpu, Flavor gpu) {
  SimConfig c;
  c.name = std::string(sim::to_string(cpu)) + "/" + sim::to_string(gpu);
  c.cpu = cpu;
  c.gpu = gpu;
  return c;
}

SimResult run_static(const trace::AccessTrace& t, Flavor cpu, Flavor gpu) {
  return sim::simulate(t, nullptr, static_config(cpu, gpu));
}

}  // namespace

TEST_CASE("the standard configuration table lists seven systems") {
  const auto cfgs = sim::standard_configs();
  REQUIRE(cfgs.size() == 7);
  const std::vector<std::string> names = {"SMG", "SMD",     "SDG",     "SDD",
                                          "FCS", "FCS+fwd", "FCS+pred"};
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(cfgs[i].name == names[i]);
  CHECK(cfgs[0].cpu == Flavor::Mesi);
  CHECK(cfgs[0].gpu == Flavor::GpuCoh);
  CHECK_FALSE(cfgs[0].uses_selection());
  CHECK(cfgs[3].cpu == Flavor::DeNovo);
  CHECK(cfgs[3].gpu == Flavor::DeNovo);
  for (int i = 4; i < 7; ++i) {
    CHECK(cfgs[static_cast<std::size_t>(i)].cpu == Flavor::Flex);
    CHECK(cfgs[static_cast<std::size_t>(i)].uses_selection());
  }
  CHECK_FALSE(cfgs[4].profile.supports_wt_forwarding);
  CHECK(cfgs[5].profile.supports_wt_forwarding);
  CHECK_FALSE(cfgs[5].profile.supports_owner_prediction);
  CHECK(cfgs[6].profile.supports_owner_prediction);
  CHECK(sim::find_config(cfgs, "SDD") == &cfgs[3]);
  CHECK(sim::find_config(cfgs, "nope") == nullptr);
}

TEST_CASE("a single word-granular load miss has an exact round-trip cost") {
  // Core 0 sits at mesh node (0,0); the shared cache at node (1,1): two hops
  // each way at 8 cycles per hop.  The request is header-only (8 bytes), the
  // response carries one word (12 bytes), and the directory spends 20 cycles
  // on the lookup: issue 0, arrive 16, served 36, delivered 52.
  Maker mk(1, 0);
  mk.add(0, AccessKind::Load, kBlk, 0b1);
  const auto r = run_static(mk.t, Flavor::DeNovo, Flavor::DeNovo);
  REQUIRE(r.ok);
  CHECK(r.metrics.cycles == 52);
  CHECK(r.metrics.bytes == 20);
  CHECK(r.metrics.msgs == 2);
  CHECK(r.metrics.hops == 4);
  CHECK(r.metrics.l1_misses == 1);
  CHECK(r.metrics.l1_hits == 0);
  CHECK(r.metrics.nacks == 0);
}

TEST_CASE("a repeated load hits in the private cache for one cycle") {
  Maker mk(1, 0);
  mk.add(0, AccessKind::Load, kBlk, 0b1);
  mk.add(0, AccessKind::Load, kBlk, 0b1);
  const auto r = run_static(mk.t, Flavor::DeNovo, Flavor::DeNovo);
  REQUIRE(r.ok);
  CHECK(r.metrics.cycles == 53);  // one extra hit cycle after the miss returns
  CHECK(r.metrics.msgs == 2);     // no new traffic for the hit
  CHECK(r.metrics.l1_hits == 1);
  CHECK(r.metrics.l1_misses == 1);
}

TEST_CASE("load miss windows overlap on a gpu core and serialize on a cpu") {
  // Sixteen independent block loads.  The gpu window (16) pipelines them
  // behind one another at the directory: arrivals 16..31, service completes
  // 36, 56, ..., 336, last grant lands at 352.  The cpu window (1) runs the
  // same sequence as sixteen dependent 52-cycle round trips.
  Maker gpu(0, 1);
  for (int i = 0; i < 16; ++i)
    gpu.add(0, AccessKind::Load, kBlk + Addr(i) * 0x40, 0b1);
  const auto rg = run_static(gpu.t, Flavor::DeNovo, Flavor::DeNovo);
  REQUIRE(rg.ok);
  CHECK(rg.metrics.cycles == 352);

  Maker cpu(1, 0);
  for (int i = 0; i < 16; ++i)
    cpu.add(0, AccessKind::Load, kBlk + Addr(i) * 0x40, 0b1);
  const auto rc = run_static(cpu.t, Flavor::DeNovo, Flavor::DeNovo);
  REQUIRE(rc.ok);
  CHECK(rc.metrics.cycles == 16 * 52);
  CHECK(rc.metrics.bytes == rg.metrics.bytes);  // same traffic, different time
}

TEST_CASE("buffered stores forward to younger loads and drain at trace end") {
  Maker mk(1, 0);
  mk.add(0, AccessKind::Store, kBlk, 0b1, {42});
  mk.add(0, AccessKind::Load, kBlk, 0b1);
  const auto r = run_static(mk.t, Flavor::DeNovo, Flavor::DeNovo);
  REQUIRE(r.ok);
  CHECK(r.metrics.wb_forwards == 1);
  // The end-of-trace flush registers ownership: header-only request plus
  // header-only grant — the dirty word stays in the private cache.
  CHECK(r.metrics.msgs == 2);
  CHECK(r.metrics.bytes == 16);
  CHECK(r.image.at(kBlk) == 42);
  const auto oracle = sim::sc_reference_execute(mk.t);
  CHECK(sim::compare_images(oracle, r.image).empty());
}

TEST_CASE("a partially overlapping load flushes the store buffer first") {
  Maker mk(1, 0);
  mk.add(0, AccessKind::Store, kBlk, 0b01, {7});
  mk.add(0, AccessKind::Load, kBlk, 0b11);
  const auto r = run_static(mk.t, Flavor::DeNovo, Flavor::DeNovo);
  REQUIRE(r.ok);
  CHECK(r.metrics.wb_forwards == 0);
  CHECK(r.image.at(kBlk) == 7);
  CHECK(sim::compare_images(sim::sc_reference_execute(mk.t), r.image).empty());
}

TEST_CASE("line-granular flavors fetch whole blocks where word flavors do not") {
  Maker mk(1, 0);
  mk.add(0, AccessKind::Load, kBlk, 0b01);
  mk.add(0, AccessKind::Load, kBlk, 0b10);
  const auto mesi = run_static(mk.t, Flavor::Mesi, Flavor::Mesi);
  REQUIRE(mesi.ok);
  CHECK(mesi.metrics.l1_misses == 1);  // neighbour word rides the line fill
  CHECK(mesi.metrics.l1_hits == 1);
  CHECK(mesi.metrics.msgs == 2);
  const auto denovo = run_static(mk.t, Flavor::DeNovo, Flavor::DeNovo);
  REQUIRE(denovo.ok);
  CHECK(denovo.metrics.l1_misses == 2);  // word-exact fills
  CHECK(denovo.metrics.msgs == 4);
}

TEST_CASE("acquire self-invalidation clears valid words on non-mesi cores") {
  Maker mk(0, 1);
  mk.add(0, AccessKind::Load, kBlk, 0b1);
  mk.add(0, AccessKind::Load, kBlk, 0b1);
  mk.add(0, AccessKind::Rmw, kFlag, 0b1, {1}, SyncKind::AcqRel);
  mk.add(0, AccessKind::Load, kBlk, 0b1);
  SimParams narrow;
  narrow.gpu_load_window = 1;  // keep the repeat load behind the first fill
  const auto r = sim::simulate(mk.t, nullptr,
                               static_config(Flavor::GpuCoh, Flavor::GpuCoh),
                               narrow);
  REQUIRE(r.ok);
  CHECK(r.metrics.l1_hits == 1);    // only the pre-sync repeat hits
  CHECK(r.metrics.l1_misses == 3);  // two block loads and the atomic
  CHECK(r.metrics.rmws_applied == 1);

  // A mesi core keeps its line across the same synchronization.
  Maker mm(1, 0);
  mm.add(0, AccessKind::Load, kBlk, 0b1);
  mm.add(0, AccessKind::Load, kBlk, 0b1);
  mm.add(0, AccessKind::Rmw, kFlag, 0b1, {1}, SyncKind::AcqRel);
  mm.add(0, AccessKind::Load, kBlk, 0b1);
  const auto m = run_static(mm.t, Flavor::Mesi, Flavor::Mesi);
  REQUIRE(m.ok);
  CHECK(m.metrics.l1_hits == 2);
}

TEST_CASE("mesi stores coalesce in the buffer and later stores hit owned lines") {
  Maker mk(1, 0);
  mk.add(0, AccessKind::Store, kBlk, 0b01, {1});
  mk.add(0, AccessKind::Store, kBlk, 0b10, {2});
  // Flag release forces the drain; both words travel in one line-wide
  // ownership request.
  mk.add(0, AccessKind::Rmw, kFlag, 0b1, {1}, SyncKind::Release);
  mk.add(0, AccessKind::Store, kBlk, 0b100, {3});
  const auto r = run_static(mk.t, Flavor::Mesi, Flavor::Mesi);
  REQUIRE(r.ok);
  // Drain request + grant, atomic request + grant, then the post-drain store
  // hits the now-owned line and the end-of-trace flush finds nothing new...
  // except the in-place store needs no message at all.
  CHECK(r.metrics.msgs == 4);
  CHECK(r.image.at(kBlk) == 1);
  CHECK(r.image.at(kBlk + 4) == 2);
  CHECK(r.image.at(kBlk + 8) == 3);
  CHECK(sim::compare_images(sim::sc_reference_execute(mk.t), r.image).empty());
}

TEST_CASE("racing atomics migrate ownership and never lose an update") {
  Maker mk(2, 0);
  mk.add(0, AccessKind::Rmw, kBlk, 0b1, {5});
  mk.add(1, AccessKind::Rmw, kBlk, 0b1, {7});
  mk.add(0, AccessKind::Rmw, kBlk, 0b1, {1});
  const auto r = run_static(mk.t, Flavor::DeNovo, Flavor::DeNovo);
  REQUIRE(r.ok);
  CHECK(r.image.at(kBlk) == 13);
  CHECK(r.metrics.rmws_applied == 3);
  CHECK(r.metrics.rmws_applied == sim::count_rmw_accesses(mk.t));
}

TEST_CASE("release and acquire pairs order cross-core data handoffs") {
  Maker mk(2, 0);
  mk.add(0, AccessKind::Store, kBlk, 0b1, {42});
  mk.add(0, AccessKind::Rmw, kFlag, 0b1, {1}, SyncKind::Release);
  mk.add(1, AccessKind::Rmw, kFlag, 0b1, {1}, SyncKind::Acquire);
  mk.add(1, AccessKind::Load, kBlk, 0b1);
  mk.add(1, AccessKind::Store, kBlk2, 0b1, {9});
  const auto r = run_static(mk.t, Flavor::DeNovo, Flavor::DeNovo);
  REQUIRE(r.ok);
  CHECK(r.image.at(kBlk) == 42);
  CHECK(r.image.at(kBlk2) == 9);
  CHECK(r.image.at(kFlag) == 2);
  CHECK(sim::compare_images(sim::sc_reference_execute(mk.t), r.image).empty());
}

TEST_CASE("the sequential reference executor folds stores and atomics") {
  Maker mk(1, 0);
  mk.add(0, AccessKind::Store, kBlk, 0b101, {3, 4});
  mk.add(0, AccessKind::Rmw, kBlk, 0b100, {10});
  mk.add(0, AccessKind::Load, kBlk, 0b111);
  const auto img = sim::sc_reference_execute(mk.t);
  CHECK(img.at(kBlk) == 3);
  CHECK(img.at(kBlk + 8) == 14);
  CHECK(img.count(kBlk + 4) == 0);
  CHECK(sim::count_rmw_accesses(mk.t) == 1);

  std::map<Addr, std::uint32_t> other = img;
  other[kBlk + 8] = 99;
  CHECK_FALSE(sim::compare_images(img, other).empty());
  other[kBlk + 8] = 14;
  other[kBlk + 4] = 0;  // explicit zero equals an absent word
  CHECK(sim::compare_images(img, other).empty());
}

TEST_CASE("selection-driven systems validate their map against capabilities") {
  trace::BenchParams p;
  p.n_cpu = 1;
  p.n_gpu = 1;
  p.partition_words = 16;
  p.iterations = 1;
  p.seed = 3;
  const auto t = trace::generate(trace::Bench::ProducerConsumer, p);
  const auto cfgs = sim::standard_configs();
  const auto* fcs = sim::find_config(cfgs, "FCS");
  const auto* pred = sim::find_config(cfgs, "FCS+pred");

  const auto no_map = sim::simulate(t, nullptr, *fcs);
  CHECK_FALSE(no_map.ok);
  CHECK(no_map.error.find("selection") != std::string::npos);

  const auto rich = sel::select_all(t, pred->profile);
  const auto mismatch = sim::simulate(t, &rich, *fcs);
  CHECK_FALSE(mismatch.ok);
  CHECK(mismatch.error.find("capability") != std::string::npos);

  const auto plain = sel::select_all(t, fcs->profile);
  CHECK(sim::simulate(t, &plain, *fcs).ok);
  // A map selected for weaker hardware runs fine on richer hardware.
  CHECK(sim::simulate(t, &plain, *pred).ok);
}

TEST_CASE("every generated benchmark matches the reference image everywhere") {
  const auto cfgs = sim::standard_configs();
  for (const auto bench :
       {trace::Bench::InterleavedReadShared, trace::Bench::PartitionedRmwMix,
        trace::Bench::AtomicsOnly, trace::Bench::ProducerConsumer}) {
    for (const std::uint64_t seed : {11ull, 12ull}) {
      trace::BenchParams p = trace::default_params(bench);
      p.n_cpu = bench == trace::Bench::AtomicsOnly ? 0 : 2;
      p.n_gpu = 2;
      p.partition_words = 32;
      p.iterations = 3;
      p.seed = seed;
      const auto t = trace::generate(bench, p);
      const auto oracle = sim::sc_reference_execute(t);
      const auto rmws = sim::count_rmw_accesses(t);
      for (const auto& cfg : cfgs) {
        CAPTURE(trace::to_string(bench));
        CAPTURE(cfg.name);
        CAPTURE(seed);
        sel::SelectionMap map;
        const sel::SelectionMap* mp = nullptr;
        if (cfg.uses_selection()) {
          map = sel::select_all(t, cfg.profile);
          mp = &map;
        }
        const auto r = sim::simulate(t, mp, cfg);
        REQUIRE_MESSAGE(r.ok, r.error);
        const auto diff = sim::compare_images(oracle, r.image);
        CHECK_MESSAGE(diff.empty(), diff);
        CHECK(r.metrics.rmws_applied == rmws);
      }
    }
  }
}

TEST_CASE("owner prediction changes routing but never the memory image") {
  trace::BenchParams p = trace::default_params(trace::Bench::PartitionedRmwMix);
  p.n_cpu = 2;
  p.n_gpu = 2;
  p.partition_words = 64;
  p.iterations = 5;
  p.seed = 21;
  const auto t = trace::generate(trace::Bench::PartitionedRmwMix, p);
  const auto cfgs = sim::standard_configs();
  const auto* fwd = sim::find_config(cfgs, "FCS+fwd");
  const auto* pred = sim::find_config(cfgs, "FCS+pred");
  const auto map_fwd = sel::select_all(t, fwd->profile);
  const auto map_pred = sel::select_all(t, pred->profile);
  const auto rf = sim::simulate(t, &map_fwd, *fwd);
  const auto rp = sim::simulate(t, &map_pred, *pred);
  REQUIRE_MESSAGE(rf.ok, rf.error);
  REQUIRE_MESSAGE(rp.ok, rp.error);
  CHECK(sim::compare_images(rf.image, rp.image).empty());
  CHECK(rp.metrics.pred_hits + rp.metrics.pred_misses > 0);
  CHECK(rp.metrics.pred_hits > rp.metrics.pred_misses);
  CHECK(rf.metrics.pred_hits + rf.metrics.pred_misses == 0);
  // Direct requests bypass the directory; the predicted run does fewer
  // lookups overall.
  std::uint64_t lf = 0, lp = 0;
  for (std::size_t i = 0; i < kNumRequestTypes; ++i) {
    lf += rf.metrics.llc_lookups_by_born[i];
    lp += rp.metrics.llc_lookups_by_born[i];
  }
  CHECK(lp < lf);
}

TEST_CASE("predicted direct requests that miss are refused and retried") {
  // Two cpu stores, gpu core 2 writes the same words through a stale-free
  // prediction path: the very first predicted request has no table entry and
  // bootstraps through the directory; a later one aims at the recorded owner.
  trace::BenchParams p = trace::default_params(trace::Bench::ProducerConsumer);
  p.n_cpu = 2;
  p.n_gpu = 2;
  p.partition_words = 32;
  p.iterations = 4;
  p.seed = 5;
  const auto t = trace::generate(trace::Bench::ProducerConsumer, p);
  const auto cfgs = sim::standard_configs();
  const auto* pred = sim::find_config(cfgs, "FCS+pred");
  const auto map = sel::select_all(t, pred->profile);
  const auto r = sim::simulate(t, &map, *pred);
  REQUIRE_MESSAGE(r.ok, r.error);
  CHECK(r.metrics.pred_hits > 0);
  CHECK(r.metrics.max_retry <= 2);
  CHECK(sim::compare_images(sim::sc_reference_execute(t), r.image).empty());
}

TEST_CASE("message logs can be captured for debugging") {
  Maker mk(1, 0);
  mk.add(0, AccessKind::Load, kBlk, 0b1);
  const auto r = sim::simulate(mk.t, nullptr,
                               static_config(Flavor::DeNovo, Flavor::DeNovo),
                               SimParams{}, true);
  REQUIRE(r.ok);
  REQUIRE(r.msglog.size() == 2);
  CHECK(r.msglog[0].find("Request") != std::string::npos);
  CHECK(r.msglog[1].find("Grant") != std::string::npos);
}
