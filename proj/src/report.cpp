#include "ctlab/report.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ctlab {

ReportData summarize(const std::string& label,
                     const std::vector<VolumeEval>& evals) {
  ReportData r;
  r.label = label;
  if (evals.empty()) return r;
  r.data_range = evals.front().report.data_range;
  for (const auto& e : evals) {
    ReportData::Row row;
    row.name = e.name;
    row.psnr_db = e.report.psnr_db;
    row.ssim_x100 = e.report.ssim_x100;
    row.rmse = e.report.rmse;
    r.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(r.rows.size());
  r.average.name = "Average";
  for (const auto& row : r.rows) {
    r.average.psnr_db.mean += row.psnr_db.mean / n;
    r.average.psnr_db.stddev += row.psnr_db.stddev / n;
    r.average.ssim_x100.mean += row.ssim_x100.mean / n;
    r.average.ssim_x100.stddev += row.ssim_x100.stddev / n;
    r.average.rmse.mean += row.rmse.mean / n;
    r.average.rmse.stddev += row.rmse.stddev / n;
  }
  return r;
}

namespace {

nlohmann::json stat_json(const MetricStat& s) {
  return {{"mean", s.mean}, {"std", s.stddev}};
}

MetricStat stat_from(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>()};
}

nlohmann::json row_json(const ReportData::Row& row) {
  return {{"name", row.name},
          {"psnr_db", stat_json(row.psnr_db)},
          {"ssim_x100", stat_json(row.ssim_x100)},
          {"rmse", stat_json(row.rmse)}};
}

ReportData::Row row_from(const nlohmann::json& j) {
  ReportData::Row row;
  row.name = j.at("name").get<std::string>();
  row.psnr_db = stat_from(j.at("psnr_db"));
  row.ssim_x100 = stat_from(j.at("ssim_x100"));
  row.rmse = stat_from(j.at("rmse"));
  return row;
}

}  // namespace

void write_report_json(const ReportData& r, const std::string& path) {
  nlohmann::json j;
  j["label"] = r.label;
  j["data_range"] = r.data_range;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back(row_json(row));
  j["volumes"] = std::move(rows);
  j["average"] = row_json(r.average);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

ReportData read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed report " + path + ": " + e.what());
  }
  ReportData r;
  r.label = j.at("label").get<std::string>();
  r.data_range = j.at("data_range").get<double>();
  for (const auto& row : j.at("volumes")) r.rows.push_back(row_from(row));
  r.average = row_from(j.at("average"));
  return r;
}

void write_report_tsv(const ReportData& r, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "volume\tpsnr_mean\tpsnr_std\tssim_mean\tssim_std\trmse_mean\trmse_std\n";
  const auto line = [&](const ReportData::Row& row) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s\t%.6f\t%.6f\t%.6f\t%.6f\t%.8g\t%.8g\n",
                  row.name.c_str(), row.psnr_db.mean, row.psnr_db.stddev,
                  row.ssim_x100.mean, row.ssim_x100.stddev, row.rmse.mean,
                  row.rmse.stddev);
    out << buf;
  };
  for (const auto& row : r.rows) line(row);
  line(r.average);
}

namespace {

std::string pm(const MetricStat& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f+-%.2f", s.mean, s.stddev);
  return buf;
}

void render_metric_block(std::string& out, const char* title,
                         const std::vector<ReportData>& reports,
                         MetricStat ReportData::Row::*field) {
  const std::size_t rows = reports.front().rows.size();
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Volume"};
  for (const auto& r : reports) header.push_back(title + (" of " + r.label));
  cells.push_back(header);
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<std::string> row{reports.front().rows[i].name};
    for (const auto& r : reports)
      row.push_back(i < r.rows.size() ? pm(r.rows[i].*field) : "-");
    cells.push_back(std::move(row));
  }
  std::vector<std::string> avg{"Average"};
  for (const auto& r : reports) avg.push_back(pm(r.average.*field));
  cells.push_back(std::move(avg));

  std::vector<std::size_t> widths(cells.front().size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c)
      widths[c] = std::max(widths[c], row[c].size());
  for (std::size_t ri = 0; ri < cells.size(); ++ri) {
    std::string line;
    for (std::size_t c = 0; c < cells[ri].size(); ++c) {
      std::string cell = cells[ri][c];
      cell.resize(widths[c], ' ');
      line += cell;
      if (c + 1 < cells[ri].size()) line += "  ";
    }
    out += line + "\n";
    if (ri == 0 || ri + 2 == cells.size())
      out += std::string(line.size(), '-') + "\n";
  }
  out += "\n";
}

}  // namespace

std::string render_tables(const std::vector<ReportData>& reports) {
  if (reports.empty()) return "(no reports)\n";
  std::string out;
  render_metric_block(out, "SSIM", reports, &ReportData::Row::ssim_x100);
  render_metric_block(out, "PSNR", reports, &ReportData::Row::psnr_db);
  return out;
}

}  // namespace ctlab
