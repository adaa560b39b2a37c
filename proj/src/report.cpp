#include "fcssim/report.hpp"

#include <cstdint>
#include <iomanip>
#include <sstream>

namespace fcssim::rep {

namespace {

std::uint64_t total_llc_lookups(const sim::SimMetrics& m) {
  std::uint64_t n = 0;
  for (std::uint64_t v : m.llc_lookups_by_born) n += v;
  return n;
}

double ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return num == 0 ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(double v) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(3) << v;
  return o.str();
}

const MetricRow* find_baseline(const std::vector<MetricRow>& rows,
                               const std::string& bench,
                               const std::string& baseline) {
  for (const MetricRow& r : rows)
    if (r.bench == bench && r.config == baseline) return &r;
  return nullptr;
}

}  // namespace

std::string metrics_csv_header() {
  std::ostringstream o;
  o << "bench,config,cycles,bytes,hops,msgs";
  for (int i = 0; i < kNumRequestTypes; ++i)
    o << ",req_" << to_string(static_cast<RequestType>(i));
  o << ",llc_lookups,pred_hits,pred_misses,nacks,max_retry,rmws_applied"
       ",l1_hits,l1_misses,wb_forwards";
  return o.str();
}

std::string metrics_csv_row(const MetricRow& r) {
  const sim::SimMetrics& m = r.m;
  std::ostringstream o;
  o << r.bench << ',' << r.config << ',' << m.cycles << ',' << m.bytes << ','
    << m.hops << ',' << m.msgs;
  for (std::uint64_t v : m.msgs_by_born) o << ',' << v;
  o << ',' << total_llc_lookups(m) << ',' << m.pred_hits << ','
    << m.pred_misses << ',' << m.nacks << ',' << m.max_retry << ','
    << m.rmws_applied << ',' << m.l1_hits << ',' << m.l1_misses << ','
    << m.wb_forwards;
  return o.str();
}

std::string metrics_text(const std::vector<MetricRow>& rows) {
  std::ostringstream o;
  o << std::left << std::setw(10) << "bench" << std::setw(10) << "config"
    << std::right << std::setw(12) << "cycles" << std::setw(12) << "bytes"
    << std::setw(9) << "msgs" << std::setw(7) << "nacks" << std::setw(10)
    << "pred_hit" << std::setw(10) << "pred_miss" << std::setw(10)
    << "l1_hits" << std::setw(10) << "l1_miss" << '\n';
  for (const MetricRow& r : rows) {
    o << std::left << std::setw(10) << r.bench << std::setw(10) << r.config
      << std::right << std::setw(12) << r.m.cycles << std::setw(12)
      << r.m.bytes << std::setw(9) << r.m.msgs << std::setw(7) << r.m.nacks
      << std::setw(10) << r.m.pred_hits << std::setw(10) << r.m.pred_misses
      << std::setw(10) << r.m.l1_hits << std::setw(10) << r.m.l1_misses
      << '\n';
  }
  return o.str();
}

std::string comparison_csv_header() {
  return "bench,config,baseline,cycles_ratio,bytes_ratio,msgs_ratio";
}

std::string comparison_csv(const std::vector<MetricRow>& rows,
                           const std::string& baseline) {
  std::ostringstream o;
  o << comparison_csv_header() << '\n';
  for (const MetricRow& r : rows) {
    const MetricRow* base = find_baseline(rows, r.bench, baseline);
    if (base == nullptr) continue;
    o << r.bench << ',' << r.config << ',' << baseline << ','
      << fmt(ratio(r.m.cycles, base->m.cycles)) << ','
      << fmt(ratio(r.m.bytes, base->m.bytes)) << ','
      << fmt(ratio(r.m.msgs, base->m.msgs)) << '\n';
  }
  return o.str();
}

std::string comparison_text(const std::vector<MetricRow>& rows,
                            const std::string& baseline) {
  std::ostringstream o;
  o << "normalized to " << baseline << " (same benchmark)\n";
  o << std::left << std::setw(10) << "bench" << std::setw(10) << "config"
    << std::right << std::setw(10) << "cycles" << std::setw(10) << "bytes"
    << std::setw(10) << "msgs" << '\n';
  bool skipped = false;
  for (const MetricRow& r : rows) {
    const MetricRow* base = find_baseline(rows, r.bench, baseline);
    if (base == nullptr) {
      skipped = true;
      continue;
    }
    o << std::left << std::setw(10) << r.bench << std::setw(10) << r.config
      << std::right << std::setw(10) << fmt(ratio(r.m.cycles, base->m.cycles))
      << std::setw(10) << fmt(ratio(r.m.bytes, base->m.bytes))
      << std::setw(10) << fmt(ratio(r.m.msgs, base->m.msgs)) << '\n';
  }
  if (skipped)
    o << "(benchmarks with no " << baseline << " run omitted)\n";
  return o.str();
}

}  // namespace fcssim::rep
