#include "avnav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace avnav {

using nlohmann::json;

MetricsRecord to_metrics(const EpisodeOutcome& outcome) {
  MetricsRecord r;
  r.success = outcome.success;
  r.path_len = outcome.path_cells;
  r.shortest_len = outcome.shortest_len;
  r.actions_taken = outcome.actions_taken;
  r.min_actions = outcome.min_actions;
  r.dtg = outcome.final_dtg;
  r.sound_end_step = outcome.sound_end_step;
  r.reach_step = outcome.reach_step;
  r.queries = outcome.query_steps;
  return r;
}

Aggregates compute_metrics(const std::vector<MetricsRecord>& records, bool sws_over_successes) {
  if (records.empty()) throw input_error("compute_metrics: empty record set");
  Aggregates agg;
  agg.episodes = static_cast<int>(records.size());
  int successes = 0;
  int silent_successes = 0;
  double spl = 0.0, sna = 0.0, dtg = 0.0;
  for (const MetricsRecord& r : records) {
    if (r.success) {
      ++successes;
      // Degenerate zero-length optima count as perfect.
      spl += r.shortest_len <= 0.0 ? 1.0 : r.shortest_len / std::max(r.path_len, r.shortest_len);
      sna += r.min_actions <= 0
                 ? 1.0
                 : static_cast<double>(r.min_actions) /
                       std::max<double>(r.actions_taken, r.min_actions);
      if (r.reach_step.has_value() && *r.reach_step > r.sound_end_step) ++silent_successes;
    }
    dtg += r.dtg;
  }
  double n = static_cast<double>(records.size());
  agg.sr = successes / n;
  agg.spl = spl / n;
  agg.sna = sna / n;
  agg.dtg = dtg / n;
  agg.sws = sws_over_successes ? (successes > 0 ? silent_successes / static_cast<double>(successes) : 0.0)
                               : silent_successes / n;
  return agg;
}

std::vector<std::pair<double, double>> silence_ratio_curve(const std::vector<MetricsRecord>& records) {
  if (records.empty()) throw input_error("silence_ratio_curve: empty record set");
  std::vector<std::pair<double, bool>> points;
  points.reserve(records.size());
  for (const MetricsRecord& r : records) {
    double duration = std::max(1, r.sound_end_step);
    points.push_back({static_cast<double>(r.min_actions) / duration, r.success});
  }
  std::sort(points.begin(), points.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<double, double>> curve;
  double n = static_cast<double>(points.size());
  int cumulative = 0;
  for (size_t i = 0; i < points.size(); ++i) {
    if (points[i].second) ++cumulative;
    bool last_of_ratio = i + 1 == points.size() || points[i + 1].first > points[i].first;
    if (last_of_ratio) curve.push_back({points[i].first, cumulative / n});
  }
  return curve;
}

Histogram query_histogram(const std::vector<MetricsRecord>& records, int bin_width) {
  if (bin_width < 1) throw input_error("query_histogram: bin_width must be >= 1");
  Histogram hist;
  hist.bin_width = bin_width;
  for (const MetricsRecord& r : records) {
    for (int q : r.queries) {
      int bin = q / bin_width;
      if (bin >= static_cast<int>(hist.counts.size())) {
        hist.counts.resize(static_cast<size_t>(bin) + 1, 0);
      }
      ++hist.counts[static_cast<size_t>(bin)];
      ++hist.total;
    }
  }
  return hist;
}

std::vector<SeedSummary> summarize_over_seeds(const std::vector<ReportRow>& rows) {
  std::map<std::tuple<std::string, std::string, std::string, int>, std::vector<const ReportRow*>>
      groups;
  for (const ReportRow& row : rows) {
    groups[{row.method, row.feedback, row.regime, row.k_allowed}].push_back(&row);
  }
  std::vector<SeedSummary> out;
  for (const auto& [key, members] : groups) {
    SeedSummary s;
    s.method = std::get<0>(key);
    s.feedback = std::get<1>(key);
    s.regime = std::get<2>(key);
    s.k_allowed = std::get<3>(key);
    s.seeds = static_cast<int>(members.size());
    auto accumulate = [&members](auto getter) {
      double mean = 0.0;
      for (const ReportRow* r : members) mean += getter(r->agg);
      mean /= static_cast<double>(members.size());
      double var = 0.0;
      for (const ReportRow* r : members) {
        double d = getter(r->agg) - mean;
        var += d * d;
      }
      return std::make_pair(mean, std::sqrt(var / static_cast<double>(members.size())));
    };
    std::tie(s.mean.sr, s.stddev.sr) = accumulate([](const Aggregates& a) { return a.sr; });
    std::tie(s.mean.spl, s.stddev.spl) = accumulate([](const Aggregates& a) { return a.spl; });
    std::tie(s.mean.sna, s.stddev.sna) = accumulate([](const Aggregates& a) { return a.sna; });
    std::tie(s.mean.dtg, s.stddev.dtg) = accumulate([](const Aggregates& a) { return a.dtg; });
    std::tie(s.mean.sws, s.stddev.sws) = accumulate([](const Aggregates& a) { return a.sws; });
    s.mean.episodes = members.front()->agg.episodes;
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace

void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << "method,feedback,regime,k_allowed,seed,episodes,sr,spl,sna,dtg,sws\n";
  for (const ReportRow& r : rows) {
    out << r.method << ',' << r.feedback << ',' << r.regime << ',' << r.k_allowed << ',' << r.seed
        << ',' << r.agg.episodes << ',' << fmt(r.agg.sr) << ',' << fmt(r.agg.spl) << ','
        << fmt(r.agg.sna) << ',' << fmt(r.agg.dtg) << ',' << fmt(r.agg.sws) << "\n";
  }
}

void write_summary_csv(const std::string& path, const std::vector<SeedSummary>& rows) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << "method,feedback,regime,k_allowed,seeds,sr_mean,sr_std,spl_mean,spl_std,"
         "sna_mean,sna_std,dtg_mean,dtg_std,sws_mean,sws_std\n";
  for (const SeedSummary& s : rows) {
    out << s.method << ',' << s.feedback << ',' << s.regime << ',' << s.k_allowed << ','
        << s.seeds << ',' << fmt(s.mean.sr) << ',' << fmt(s.stddev.sr) << ',' << fmt(s.mean.spl)
        << ',' << fmt(s.stddev.spl) << ',' << fmt(s.mean.sna) << ',' << fmt(s.stddev.sna) << ','
        << fmt(s.mean.dtg) << ',' << fmt(s.stddev.dtg) << ',' << fmt(s.mean.sws) << ','
        << fmt(s.stddev.sws) << "\n";
  }
}

std::string report_json(const std::vector<ReportRow>& rows) {
  json arr = json::array();
  for (const ReportRow& r : rows) {
    arr.push_back({{"method", r.method},
                   {"feedback", r.feedback},
                   {"regime", r.regime},
                   {"k_allowed", r.k_allowed},
                   {"seed", r.seed},
                   {"episodes", r.agg.episodes},
                   {"sr", r.agg.sr},
                   {"spl", r.agg.spl},
                   {"sna", r.agg.sna},
                   {"dtg", r.agg.dtg},
                   {"sws", r.agg.sws}});
  }
  return json{{"schema", 1}, {"rows", arr}}.dump();
}

void write_histogram_csv(const std::string& path, const Histogram& hist) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << "bin_start,count\n";
  for (size_t i = 0; i < hist.counts.size(); ++i) {
    out << i * static_cast<size_t>(hist.bin_width) << ',' << hist.counts[i] << "\n";
  }
}

void write_curve_csv(const std::string& path,
                     const std::vector<std::pair<double, double>>& curve) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << "ratio,cumulative_success\n";
  for (const auto& [x, y] : curve) out << fmt(x) << ',' << fmt(y) << "\n";
}

std::vector<SweepEntry> sweep_allowed_queries(
    const std::vector<std::string>& methods, const std::vector<int>& k_values,
    const std::function<Aggregates(const std::string&, int)>& evaluate) {
  std::vector<SweepEntry> out;
  for (const std::string& method : methods) {
    for (int k : k_values) {
      out.push_back({method, k, evaluate(method, k)});
    }
  }
  return out;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << "method,k_allowed,episodes,sr,spl,sna,dtg,sws\n";
  for (const SweepEntry& e : entries) {
    out << e.method << ',' << e.k_allowed << ',' << e.agg.episodes << ',' << fmt(e.agg.sr) << ','
        << fmt(e.agg.spl) << ',' << fmt(e.agg.sna) << ',' << fmt(e.agg.dtg) << ','
        << fmt(e.agg.sws) << "\n";
  }
}

}  // namespace avnav
