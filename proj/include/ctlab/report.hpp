#pragma once

#include <string>
#include <vector>

#include "ctlab/trainer.hpp"

namespace ctlab {

// Aggregated metrics of one evaluation run, as persisted to report files.
struct ReportData {
  std::string label;  // column heading, e.g. "FBP", "3D model"
  double data_range = 1.0;
  struct Row {
    std::string name;
    MetricStat psnr_db, ssim_x100, rmse;
  };
  std::vector<Row> rows;
  Row average;  // mean of per-volume means / stds
};

ReportData summarize(const std::string& label,
                     const std::vector<VolumeEval>& evals);

void write_report_json(const ReportData& r, const std::string& path);
ReportData read_report_json(const std::string& path);
void write_report_tsv(const ReportData& r, const std::string& path);

// Side-by-side per-volume "mean+-std" tables (one block per metric) for any
// number of runs, ending in an Average row.
std::string render_tables(const std::vector<ReportData>& reports);

}  // namespace ctlab
