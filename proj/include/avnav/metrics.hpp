#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avnav/common.hpp"
#include "avnav/policy.hpp"

namespace avnav {

struct MetricsRecord {
  bool success = false;
  double path_len = 0.0;      // cells traveled
  double shortest_len = 0.0;  // geodesic start-to-goal
  int actions_taken = 0;
  int min_actions = 0;
  double dtg = 0.0;
  int sound_end_step = 0;
  std::optional<int> reach_step;
  std::vector<int> queries;
};

MetricsRecord to_metrics(const EpisodeOutcome& outcome);

struct Aggregates {
  double sr = 0.0;
  double spl = 0.0;
  double sna = 0.0;
  double dtg = 0.0;
  double sws = 0.0;
  int episodes = 0;
};

// SWS counts over all episodes by default; the switch uses successful
// episodes as the denominator instead.
Aggregates compute_metrics(const std::vector<MetricsRecord>& records,
                           bool sws_over_successes = false);

// Cumulative success against the silence ratio min_actions / sound duration;
// one point per distinct ratio, y = successes with ratio <= x over all episodes.
std::vector<std::pair<double, double>> silence_ratio_curve(const std::vector<MetricsRecord>& records);

struct Histogram {
  int bin_width = 1;
  std::vector<int> counts;
  int total = 0;
};

Histogram query_histogram(const std::vector<MetricsRecord>& records, int bin_width);

struct ReportRow {
  std::string method;
  std::string feedback;
  std::string regime;
  int k_allowed = 0;
  std::uint64_t seed = 0;
  Aggregates agg;
};

struct SeedSummary {
  std::string method;
  std::string feedback;
  std::string regime;
  int k_allowed = 0;
  int seeds = 0;
  Aggregates mean;
  Aggregates stddev;
};

std::vector<SeedSummary> summarize_over_seeds(const std::vector<ReportRow>& rows);

void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows);
void write_summary_csv(const std::string& path, const std::vector<SeedSummary>& rows);
std::string report_json(const std::vector<ReportRow>& rows);
void write_histogram_csv(const std::string& path, const Histogram& hist);
void write_curve_csv(const std::string& path,
                     const std::vector<std::pair<double, double>>& curve);

// Evaluates each (method, K) pair through the supplied callback; kept
// callback-shaped so the expensive episode runs live with the runner.
struct SweepEntry {
  std::string method;
  int k_allowed = 0;
  Aggregates agg;
};
std::vector<SweepEntry> sweep_allowed_queries(
    const std::vector<std::string>& methods, const std::vector<int>& k_values,
    const std::function<Aggregates(const std::string&, int)>& evaluate);
void write_sweep_csv(const std::string& path, const std::vector<SweepEntry>& entries);

}  // namespace avnav
