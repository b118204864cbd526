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

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace blscomm::metrics {

/// One per-iteration latency measurement.
struct Sample {
  int run = 0;
  int rank = 0;
  int iteration = 0;
  double latency_s = 0.0;
  double delay_s = 0.0;
};

/// Aggregated latency/throughput over runs x ranks.
///
/// L(i,j) is the mean batch latency of run i at rank j; throughput per
/// run is T(i) = sum_j num_batches / L(i,j) (data parallelism sums
/// rank throughputs). Confidence intervals are Student-t over the run
/// count at 95%.
struct Aggregate {
  double latency_mean = 0.0;
  double latency_ci95 = 0.0;
  double throughput_mean = 0.0;
  double throughput_ci95 = 0.0;
  int runs = 0;
  int ranks = 0;
  int num_batches = 0;
  std::vector<std::vector<double>> mean_latency;  // [run][rank]
};

/// latency[run][rank][iteration]; every (run, rank) needs exactly
/// num_batches samples.
Aggregate aggregate(const std::vector<std::vector<std::vector<double>>>& latency,
                    int num_batches);

/// Two-sided 95% Student-t quantile for `df` degrees of freedom.
double t_quantile_975(int df);

struct LagReport {
  std::int64_t max_lag = 0;
  bool pass = true;
};

/// traces[rank] holds (iteration, initiation time) pairs in time order.
/// The lag at any instant is max-min over ranks of the highest
/// initiated iteration (not-yet-started ranks count as -1); events with
/// identical timestamps are applied as one group. Fails when the
/// maximum exceeds bound_k + 1.
LagReport check_lag(
    const std::vector<std::vector<std::pair<std::uint64_t, double>>>& traces, int bound_k);

// CSV files. Columns are fixed; floating-point fields round-trip
// exactly (%.17g).

void write_samples_csv(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> read_samples_csv(const std::string& path);

/// Regroups flat samples into [run][rank][iteration] latency arrays.
std::vector<std::vector<std::vector<double>>> group_samples(const std::vector<Sample>& samples);

struct SummaryRow {
  std::string workload;
  std::string backend_mode;
  int bound_k = 0;
  double latency_mean = 0.0;
  double latency_ci95 = 0.0;
  double throughput_mean = 0.0;
  double throughput_ci95 = 0.0;
  double max_lag = 0.0;
};

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(const std::string& path);

}  // namespace blscomm::metrics
