#pragma once

#include "bosa/harness/pipeline.hpp"

namespace bosa::harness {

struct DeltaRow
{
  std::string task;
  std::string variant;
  double score_10 = 0.0;
  double score_cross = 0.0;
  double best_100 = 0.0;
  std::string best_variant;
  metrics::TransferDelta delta;
};

/// One row per variant that has both target-10 and cross runs; needs target-100 runs for the baseline.
std::vector<DeltaRow> delta_rows(const ExperimentReport &report);

/// Scatter of the (x, y) transfer deltas with zero axes and the diagonal.
std::string scatter_svg(const std::vector<DeltaRow> &rows);

/// report.csv, deltas.csv, ablation.csv, scatter.svg and summary.json in `dir`.
void write_report(const ExperimentReport &report, const std::filesystem::path &dir);

/// Rebuild a report from the result.json files under `runs_dir`.
ExperimentReport load_runs(const std::filesystem::path &runs_dir);

} // namespace bosa::harness
