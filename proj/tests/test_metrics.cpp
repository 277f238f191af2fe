#include "avnav/metrics.hpp"

#include "doctest.h"

using namespace avnav;

namespace {

MetricsRecord make_record(bool success, double path, double shortest, int actions,
                          int min_actions, double dtg, int sound_end, int reach) {
  MetricsRecord r;
  r.success = success;
  r.path_len = path;
  r.shortest_len = shortest;
  r.actions_taken = actions;
  r.min_actions = min_actions;
  r.dtg = dtg;
  r.sound_end_step = sound_end;
  if (reach >= 0) r.reach_step = reach;
  return r;
}

}  // namespace

TEST_CASE("compute_metrics formula cases") {
  std::vector<MetricsRecord> records;
  records.push_back(make_record(true, 10.0, 10.0, 12, 12, 0.0, 12, 20));   // SPL term 1, SWS
  records.push_back(make_record(true, 20.0, 10.0, 24, 12, 0.0, 30, 25));   // SPL term 0.5
  records.push_back(make_record(false, 5.0, 8.0, 6, 10, 4.0, 15, -1));

  Aggregates agg = compute_metrics(records);
  CHECK(agg.sr == doctest::Approx(2.0 / 3.0));
  CHECK(agg.spl == doctest::Approx((1.0 + 0.5) / 3.0).epsilon(1e-12));
  CHECK(agg.sna == doctest::Approx((1.0 + 0.5) / 3.0).epsilon(1e-12));
  CHECK(agg.dtg == doctest::Approx(4.0 / 3.0));
  CHECK(agg.sws == doctest::Approx(1.0 / 3.0));  // only the first reaches after silence

  Aggregates alt = compute_metrics(records, true);
  CHECK(alt.sws == doctest::Approx(0.5));  // successful-episode denominator

  CHECK_THROWS_AS(compute_metrics({}), Error);
}

TEST_CASE("aggregate bounds hold on random records") {
  Rng rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> steps(1, 80);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<MetricsRecord> records;
    for (int i = 0; i < 40; ++i) {
      int min_a = steps(rng);
      int extra = steps(rng);
      double shortest = static_cast<double>(steps(rng));
      bool success = unit(rng) < 0.5;
      records.push_back(make_record(success, shortest + extra, shortest, min_a + extra, min_a,
                                    success ? 0.0 : unit(rng) * 10.0, steps(rng),
                                    success ? steps(rng) : -1));
    }
    Aggregates agg = compute_metrics(records);
    CHECK(agg.spl <= agg.sr + 1e-12);
    CHECK(agg.sna <= agg.sr + 1e-12);
    CHECK(agg.sws <= agg.sr + 1e-12);
    CHECK(agg.sr >= 0.0);
    CHECK(agg.sr <= 1.0);
    CHECK(agg.dtg >= 0.0);
  }
}

TEST_CASE("silence ratio curve is cumulative and monotone") {
  std::vector<MetricsRecord> records;
  records.push_back(make_record(true, 5, 5, 5, 5, 0, 10, 3));    // ratio 0.5
  records.push_back(make_record(true, 5, 5, 5, 10, 0, 10, 12));  // ratio 1.0
  records.push_back(make_record(false, 5, 5, 5, 20, 2, 10, -1)); // ratio 2.0
  records.push_back(make_record(true, 5, 5, 5, 30, 0, 10, 40));  // ratio 3.0

  auto curve = silence_ratio_curve(records);
  REQUIRE(curve.size() == 4);
  CHECK(curve[0].second == doctest::Approx(0.25));
  CHECK(curve[1].second == doctest::Approx(0.5));
  CHECK(curve[2].second == doctest::Approx(0.5));
  CHECK(curve.back().second == doctest::Approx(0.75));
  for (size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].second >= curve[i - 1].second);
    CHECK(curve[i].first >= curve[i - 1].first);
  }
  // Ratios above one can only be successes after the sound ended.
  for (const auto& r : records) {
    double ratio = static_cast<double>(r.min_actions) / r.sound_end_step;
    if (ratio > 1.0 && r.success) {
      REQUIRE(r.reach_step.has_value());
      CHECK(*r.reach_step > r.sound_end_step);
    }
  }
}

TEST_CASE("query histogram bins and totals") {
  std::vector<MetricsRecord> records(3);
  records[0].queries = {15, 30};
  records[1].queries = {45};
  records[2].queries = {};

  Histogram none = query_histogram({records[2]}, 10);
  CHECK(none.total == 0);
  CHECK(none.counts.empty());

  Histogram hist = query_histogram(records, 10);
  CHECK(hist.total == 3);
  REQUIRE(hist.counts.size() == 5);
  CHECK(hist.counts[1] == 1);  // 15
  CHECK(hist.counts[3] == 1);  // 30
  CHECK(hist.counts[4] == 1);  // 45
  CHECK_THROWS_AS(query_histogram(records, 0), Error);
}

TEST_CASE("seed summaries compute mean and standard deviation") {
  std::vector<ReportRow> rows;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ReportRow r;
    r.method = "learned";
    r.feedback = "language";
    r.regime = "heard";
    r.k_allowed = 3;
    r.seed = seed;
    r.agg.sr = 0.4 + 0.1 * static_cast<double>(seed);
    r.agg.episodes = 100;
    rows.push_back(r);
  }
  auto summary = summarize_over_seeds(rows);
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].seeds == 3);
  CHECK(summary[0].mean.sr == doctest::Approx(0.5));
  CHECK(summary[0].stddev.sr == doctest::Approx(std::sqrt(0.02 / 3.0)));
}

TEST_CASE("sweep table covers methods times caps") {
  std::vector<std::string> methods{"learned", "uniform", "random"};
  std::vector<int> ks{0, 1, 2, 3, 4, 5};
  auto entries = sweep_allowed_queries(methods, ks, [](const std::string&, int k) {
    Aggregates a;
    a.sr = 0.1 * k;
    a.episodes = 10;
    return a;
  });
  CHECK(entries.size() == methods.size() * ks.size());
  CHECK(entries[0].method == "learned");
  CHECK(entries[0].k_allowed == 0);
  CHECK(entries.back().method == "random");
  CHECK(entries.back().k_allowed == 5);
}
