#pragma once

// Rendering of simulation metrics as machine-readable CSV and aligned text
// tables, plus a comparison table that normalizes each run against a named
// baseline configuration on the same benchmark.  CSV is the stable contract
// (one header, one row per run); the text form is for eyeballs.

#include <string>
#include <vector>

#include "fcssim/simnet.hpp"

namespace fcssim::rep {

struct MetricRow {
  std::string bench;
  std::string config;
  sim::SimMetrics m;
};

// Columns: bench, config, the headline counters, one column per request
// type ("req_ReqV", ...), then the predictor / retry / cache counters.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricRow& r);

// Fixed-width table with the headline counters only.
std::string metrics_text(const std::vector<MetricRow>& rows);

// Cycles / bytes / message ratios of every run against the run of
// `baseline` on the same benchmark.  Benchmarks with no baseline run are
// skipped (noted in the text form).
std::string comparison_csv_header();
std::string comparison_csv(const std::vector<MetricRow>& rows,
                           const std::string& baseline);
std::string comparison_text(const std::vector<MetricRow>& rows,
                            const std::string& baseline);

}  // namespace fcssim::rep
