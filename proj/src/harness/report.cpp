#include "bosa/harness/report.hpp"
#include "bosa/nn/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

namespace bosa::harness {

namespace fs = std::filesystem;

namespace {

std::string num(double v, int digits = 6)
{
  if (!std::isfinite(v)) { return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf"); }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string label(const RunRecord &r) { return r.sweep.empty() ? r.variant : r.variant + "@" + r.sweep; }

std::optional<envs::Family> report_family(const ExperimentReport &report)
{
  if (report.config.is_object() && report.config.contains("env")) {
    return envs::parse_family(report.config.at("env").at("family").get<std::string>());
  }
  return std::nullopt;
}

/// (setting, label) -> per-seed scores, in run order.
std::map<std::pair<std::string, std::string>, std::vector<double>> group_scores(const ExperimentReport &report)
{
  std::map<std::pair<std::string, std::string>, std::vector<double>> out;
  for (const auto &r : report.runs) { out[{r.setting, label(r)}].push_back(r.eval.normalized_score); }
  return out;
}

double episode_std(const RunRecord &r, const std::optional<envs::Family> &family)
{
  if (r.eval.returns.size() < 2) { return 0.0; }
  std::vector<double> scores;
  for (double ret : r.eval.returns) {
    scores.push_back(family ? envs::normalized_score(*family, ret) : ret);
  }
  return metrics::summarize(scores).std;
}

} // namespace

std::vector<DeltaRow> delta_rows(const ExperimentReport &report)
{
  const auto groups = group_scores(report);
  double best = -std::numeric_limits<double>::infinity();
  std::string best_variant;
  for (const auto &[where, scores] : groups) {
    if (where.first != to_string(Setting::target_full)) { continue; }
    const double m = metrics::summarize(scores).mean;
    if (m > best) {
      best = m;
      best_variant = where.second;
    }
  }
  std::vector<DeltaRow> rows;
  if (best_variant.empty()) { return rows; }
  for (const auto &[where, cross] : groups) {
    if (where.first != to_string(Setting::cross)) { continue; }
    const auto sub = groups.find({to_string(Setting::target_subset), where.second});
    if (sub == groups.end()) { continue; }
    DeltaRow row;
    row.task = report.name;
    row.variant = where.second;
    row.score_10 = metrics::summarize(sub->second).mean;
    row.score_cross = metrics::summarize(cross).mean;
    row.best_100 = best;
    row.best_variant = best_variant;
    row.delta = metrics::transfer_deltas(row.score_10, row.score_cross, best);
    rows.push_back(row);
  }
  return rows;
}

std::string scatter_svg(const std::vector<DeltaRow> &rows)
{
  constexpr double size = 480.0, margin = 60.0;
  double lo = -1.0, hi = 0.5;
  for (const auto &r : rows) {
    lo = std::min({lo, r.delta.x, r.delta.y});
    hi = std::max({hi, r.delta.x, r.delta.y});
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const auto px = [&](double v) { return margin + (v - lo) / (hi - lo) * (size - 2 * margin); };
  const auto py = [&](double v) { return size - margin - (v - lo) / (hi - lo) * (size - 2 * margin); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size - 2 * margin << "\" height=\""
    << size - 2 * margin << "\" fill=\"none\" stroke=\"black\"/>\n";
  // Zero axes and the y = x diagonal.
  s << "<line x1=\"" << num(px(0), 2) << "\" y1=\"" << margin << "\" x2=\"" << num(px(0), 2) << "\" y2=\""
    << size - margin << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  s << "<line x1=\"" << margin << "\" y1=\"" << num(py(0), 2) << "\" x2=\"" << size - margin << "\" y2=\""
    << num(py(0), 2) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  s << "<line x1=\"" << num(px(lo), 2) << "\" y1=\"" << num(py(lo), 2) << "\" x2=\"" << num(px(hi), 2)
    << "\" y2=\"" << num(py(hi), 2) << "\" stroke=\"lightgray\"/>\n";
  s << "<text x=\"" << size / 2 << "\" y=\"" << size - 20 << "\" text-anchor=\"middle\">"
    << "x = (score_10 - best_100) / best_100</text>\n";
  s << "<text x=\"18\" y=\"" << size / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << size / 2
    << ")\">y = (score_cross - best_100) / best_100</text>\n";
  for (double t : {lo, 0.0, hi}) {
    s << "<text x=\"" << num(px(t), 2) << "\" y=\"" << size - margin + 14 << "\" text-anchor=\"middle\">"
      << num(t, 2) << "</text>\n";
    s << "<text x=\"" << margin - 4 << "\" y=\"" << num(py(t) + 4, 2) << "\" text-anchor=\"end\">" << num(t, 2)
      << "</text>\n";
  }
  for (const auto &r : rows) {
    s << "<circle cx=\"" << num(px(r.delta.x), 2) << "\" cy=\"" << num(py(r.delta.y), 2)
      << "\" r=\"4\" fill=\"steelblue\"><title>" << r.task << " " << r.variant << "</title></circle>\n";
    s << "<text x=\"" << num(px(r.delta.x) + 6, 2) << "\" y=\"" << num(py(r.delta.y) - 6, 2) << "\">" << r.variant
      << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_report(const ExperimentReport &report, const fs::path &dir)
{
  fs::create_directories(dir);
  const auto family = report_family(report);

  std::ostringstream csv;
  csv << "variant,dataset,seed,score,std\n";
  for (const auto &r : report.runs) {
    csv << label(r) << ',' << r.setting << ',' << r.seed << ',' << num(r.eval.normalized_score) << ','
        << num(episode_std(r, family)) << '\n';
  }
  nlohmann::json aggregates = nlohmann::json::array();
  for (const auto &[where, scores] : group_scores(report)) {
    const metrics::Summary s = metrics::summarize(scores);
    csv << where.second << ',' << where.first << ",mean," << num(s.mean) << ',' << num(s.std) << '\n';
    aggregates.push_back(
      {{"variant", where.second}, {"dataset", where.first}, {"mean", s.mean}, {"std", s.std}, {"seeds", s.count}});
  }
  nn::write_file(dir / "report.csv", csv.str());

  const auto deltas = delta_rows(report);
  std::ostringstream d;
  d << "task,variant,score_10,score_cross,best_100,best_variant,x,y\n";
  for (const auto &r : deltas) {
    d << r.task << ',' << r.variant << ',' << num(r.score_10) << ',' << num(r.score_cross) << ',' << num(r.best_100)
      << ',' << r.best_variant << ',' << num(r.delta.x) << ',' << num(r.delta.y) << '\n';
  }
  nn::write_file(dir / "deltas.csv", d.str());
  nn::write_file(dir / "scatter.svg", scatter_svg(deltas));

  std::ostringstream a;
  a << "setting,variant,full_mean,ablated_mean,percent_change\n";
  for (const auto &r : ablation_table(report)) {
    a << r.setting << ',' << r.variant << ',' << num(r.full_mean) << ',' << num(r.ablated_mean) << ','
      << num(r.percent_change, 2) << '\n';
  }
  nn::write_file(dir / "ablation.csv", a.str());

  nlohmann::json runs = nlohmann::json::array();
  for (const auto &r : report.runs) { runs.push_back(r.to_json()); }
  const nlohmann::json summary = {{"name", report.name},
                                  {"artifacts", report.artifacts},
                                  {"aggregates", aggregates},
                                  {"runs", runs},
                                  {"assertion_failures", report.assertion_failures}};
  nn::write_file(dir / "summary.json", summary.dump(2) + "\n");
}

ExperimentReport load_runs(const fs::path &runs_dir)
{
  if (!fs::is_directory(runs_dir)) { throw std::invalid_argument(runs_dir.string() + ": not a directory"); }
  ExperimentReport report;
  const fs::path root = fs::weakly_canonical(runs_dir);
  report.name = root.filename().string();
  for (const fs::path &candidate : {root / "config.resolved.json", root.parent_path() / "config.resolved.json"}) {
    if (fs::exists(candidate)) {
      report.config = nlohmann::json::parse(nn::read_file(candidate));
      report.name = report.config.value("name", report.name);
      break;
    }
  }
  for (const auto &entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "result.json") {
      report.runs.push_back(RunRecord::from_json(nlohmann::json::parse(nn::read_file(entry.path()))));
    }
  }
  std::sort(report.runs.begin(), report.runs.end(),
            [](const RunRecord &a, const RunRecord &b) { return a.id < b.id; });
  if (report.runs.empty()) { throw std::invalid_argument(runs_dir.string() + ": no result.json files found"); }
  return report;
}

} // namespace bosa::harness
