#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "pta/metrics.hpp"

namespace pta {

std::string to_string(NdtwReference n) { return n == NdtwReference::kPoints ? "points" : "length"; }

NdtwReference ndtw_reference_from_string(const std::string& s) {
  if (s == "points") return NdtwReference::kPoints;
  if (s == "length") return NdtwReference::kLength;
  throw ConfigError("ndtw_reference must be 'points' or 'length', got '" + s + "'");
}

EpisodeMetrics evaluate_record(const std::string& id, const TrajectoryRecord<double>& rec) {
  EpisodeMetrics m;
  m.episode_id = id;
  m.ne = navigation_error(rec);
  const bool ok = success(rec);
  m.sr = ok ? 1.0 : 0.0;
  m.osr = oracle_success(rec) ? 1.0 : 0.0;
  m.pl = polyline_length(rec.predicted);
  m.spl = spl_term(ok, rec.shortest_length, m.pl);
  m.cls = coverage_weighted_length_score(rec.predicted, rec.reference, rec.d_th);
  m.dtw = dtw(rec.predicted, rec.reference);
  double size = static_cast<double>(rec.reference.rows());
  if (rec.norm == NdtwReference::kLength && rec.reference.rows() > 1) size = polyline_length(rec.reference);
  m.ndtw = std::exp(-m.dtw / (size * rec.d_th));
  m.sdtw = ok ? m.ndtw : 0.0;
  return m;
}

MetricsReport MetricsReport::from(std::vector<EpisodeMetrics> rows) {
  MetricsReport report;
  report.mean.episode_id = "mean";
  const double n = static_cast<double>(rows.size());
  if (!rows.empty()) {
    for (const auto& r : rows) {
      report.mean.ne += r.ne / n;
      report.mean.sr += r.sr / n;
      report.mean.osr += r.osr / n;
      report.mean.spl += r.spl / n;
      report.mean.pl += r.pl / n;
      report.mean.cls += r.cls / n;
      report.mean.dtw += r.dtw / n;
      report.mean.ndtw += r.ndtw / n;
      report.mean.sdtw += r.sdtw / n;
    }
  }
  report.episodes = std::move(rows);
  return report;
}

const std::vector<std::string>& MetricsReport::columns() {
  static const std::vector<std::string> cols = {"episode", "NE",  "SR",  "OSR",  "SPL",
                                                "PL",      "CLS", "DTW", "nDTW", "SDTW"};
  return cols;
}

namespace {

std::vector<double> values(const EpisodeMetrics& m) {
  return {m.ne, m.sr, m.osr, m.spl, m.pl, m.cls, m.dtw, m.ndtw, m.sdtw};
}

}  // namespace

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  const auto& cols = columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  auto row = [&os](const EpisodeMetrics& m) {
    os << m.episode_id;
    for (double v : values(m)) os << ',' << v;
    os << '\n';
  };
  for (const auto& e : episodes) row(e);
  row(mean);
  return os.str();
}

std::string MetricsReport::to_json() const {
  auto obj = [](const EpisodeMetrics& m) {
    nlohmann::ordered_json j;
    const auto& cols = columns();
    j[cols[0]] = m.episode_id;
    const auto v = values(m);
    for (std::size_t i = 0; i < v.size(); ++i) j[cols[i + 1]] = v[i];
    return j;
  };
  nlohmann::ordered_json j;
  j["format_version"] = kReportFormatVersion;
  j["columns"] = columns();
  j["episodes"] = nlohmann::ordered_json::array();
  for (const auto& e : episodes) j["episodes"].push_back(obj(e));
  j["mean"] = obj(mean);
  return j.dump(1);
}

}  // namespace pta
