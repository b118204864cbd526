/*
 * Copyright (c) 2026, the blscomm authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "blscomm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "blscomm/error.hpp"

namespace blscomm::metrics {

namespace {

double mean_of(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

/// Sample standard deviation (n-1); 0 for n < 2.
double stddev_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

double ci95_half_width(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  return t_quantile_975(static_cast<int>(xs.size()) - 1) * stddev_of(xs) /
         std::sqrt(static_cast<double>(xs.size()));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

double t_quantile_975(int df) {
  static const double table[30] = {
      12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
      2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
      2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (df < 1) throw ConfigError("t quantile needs df >= 1");
  if (df <= 30) return table[df - 1];
  return 1.960;
}

Aggregate aggregate(const std::vector<std::vector<std::vector<double>>>& latency,
                    int num_batches) {
  if (latency.empty() || latency.front().empty()) {
    throw ConfigError("aggregate: need at least one run and one rank");
  }
  const std::size_t ranks = latency.front().size();
  Aggregate out;
  out.runs = static_cast<int>(latency.size());
  out.ranks = static_cast<int>(ranks);
  out.num_batches = num_batches;

  std::vector<double> all_l;
  std::vector<double> run_mean_l;
  std::vector<double> run_throughput;
  for (const auto& run : latency) {
    if (run.size() != ranks) throw ConfigError("aggregate: ragged rank dimension");
    std::vector<double> per_rank;
    double throughput = 0.0;
    for (const auto& iters : run) {
      if (iters.size() != static_cast<std::size_t>(num_batches)) {
        throw ConfigError("aggregate: every (run, rank) needs num_batches samples");
      }
      const double l = mean_of(iters);
      if (l <= 0.0) throw ConfigError("aggregate: non-positive latency");
      per_rank.push_back(l);
      all_l.push_back(l);
      throughput += static_cast<double>(num_batches) / l;
    }
    out.mean_latency.push_back(per_rank);
    run_mean_l.push_back(mean_of(per_rank));
    run_throughput.push_back(throughput);
  }
  out.latency_mean = mean_of(all_l);
  out.latency_ci95 = ci95_half_width(run_mean_l);
  out.throughput_mean = mean_of(run_throughput);
  out.throughput_ci95 = ci95_half_width(run_throughput);
  return out;
}

LagReport check_lag(
    const std::vector<std::vector<std::pair<std::uint64_t, double>>>& traces, int bound_k) {
  struct Event {
    double t;
    int rank;
    std::int64_t iteration;
  };
  std::vector<Event> events;
  for (std::size_t r = 0; r < traces.size(); ++r) {
    for (const auto& [iter, t] : traces[r]) {
      events.push_back(Event{t, static_cast<int>(r), static_cast<std::int64_t>(iter)});
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });

  std::vector<std::int64_t> level(traces.size(), -1);
  LagReport report;
  std::size_t i = 0;
  while (i < events.size()) {
    // Identical timestamps form one atomic group.
    std::size_t j = i;
    while (j < events.size() && events[j].t == events[i].t) {
      level[static_cast<std::size_t>(events[j].rank)] =
          std::max(level[static_cast<std::size_t>(events[j].rank)], events[j].iteration);
      ++j;
    }
    const auto [lo, hi] = std::minmax_element(level.begin(), level.end());
    report.max_lag = std::max(report.max_lag, *hi - *lo);
    i = j;
  }
  report.pass = report.max_lag <= static_cast<std::int64_t>(bound_k) + 1;
  return report;
}

void write_samples_csv(const std::string& path, const std::vector<Sample>& samples) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "run,rank,iteration,latency_s,delay_injected_s\n";
  for (const Sample& s : samples) {
    out << s.run << ',' << s.rank << ',' << s.iteration << ',' << format_double(s.latency_s)
        << ',' << format_double(s.delay_s) << '\n';
  }
}

std::vector<Sample> read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) return {};
  if (line != "run,rank,iteration,latency_s,delay_injected_s") {
    throw ConfigError("unexpected metrics csv header in " + path);
  }
  std::vector<Sample> samples;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 5) {
      throw ConfigError(path + " line " + std::to_string(line_no) + ": expected 5 fields");
    }
    Sample s;
    s.run = std::stoi(fields[0]);
    s.rank = std::stoi(fields[1]);
    s.iteration = std::stoi(fields[2]);
    s.latency_s = std::stod(fields[3]);
    s.delay_s = std::stod(fields[4]);
    samples.push_back(s);
  }
  return samples;
}

std::vector<std::vector<std::vector<double>>> group_samples(const std::vector<Sample>& samples) {
  std::map<int, std::map<int, std::map<int, double>>> grouped;
  for (const Sample& s : samples) grouped[s.run][s.rank][s.iteration] = s.latency_s;
  std::vector<std::vector<std::vector<double>>> out;
  for (const auto& [run, ranks] : grouped) {
    (void)run;
    std::vector<std::vector<double>> per_rank;
    for (const auto& [rank, iters] : ranks) {
      (void)rank;
      std::vector<double> xs;
      for (const auto& [it, l] : iters) {
        (void)it;
        xs.push_back(l);
      }
      per_rank.push_back(std::move(xs));
    }
    out.push_back(std::move(per_rank));
  }
  return out;
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "workload,backend_mode,bound_k,latency_mean,latency_ci95,throughput_mean,"
         "throughput_ci95,max_lag\n";
  for (const SummaryRow& r : rows) {
    out << r.workload << ',' << r.backend_mode << ',' << r.bound_k << ','
        << format_double(r.latency_mean) << ',' << format_double(r.latency_ci95) << ','
        << format_double(r.throughput_mean) << ',' << format_double(r.throughput_ci95) << ','
        << format_double(r.max_lag) << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) return {};
  std::vector<SummaryRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 8) {
      throw ConfigError(path + " line " + std::to_string(line_no) + ": expected 8 fields");
    }
    SummaryRow r;
    r.workload = fields[0];
    r.backend_mode = fields[1];
    r.bound_k = std::stoi(fields[2]);
    r.latency_mean = std::stod(fields[3]);
    r.latency_ci95 = std::stod(fields[4]);
    r.throughput_mean = std::stod(fields[5]);
    r.throughput_ci95 = std::stod(fields[6]);
    r.max_lag = std::stod(fields[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace blscomm::metrics
