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

#include <Eigen/Core>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "blscomm/collective.hpp"
#include "blscomm/transport.hpp"

namespace blscomm::dlrm {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::VectorXf;

/// Model shape. Embedding tables are partitioned across ranks in
/// contiguous blocks of ceil(num_tables/comm_size); MLP weights are
/// replicated. All weights derive deterministically from `seed`
/// (splitmix64 streams, uniform in [-0.5/fan_in, 0.5/fan_in]).
struct ModelConfig {
  int num_tables = 26;
  int emb_dim = 64;
  int num_dense = 13;
  std::vector<int> table_rows;             // empty: defaults to 10000 per table
  std::vector<int> bottom_dims{512, 256, 64};  // last entry must equal emb_dim
  std::vector<int> top_dims{512, 256, 1};      // last entry must be 1
  std::uint64_t seed = 0;

  /// Fills defaults and validates; call before use.
  void finalize();

  int table_block(int comm_size) const {
    return (num_tables + comm_size - 1) / comm_size;
  }
  /// [begin, end) of tables owned by `rank`.
  std::pair<int, int> table_range(int rank, int comm_size) const;
  int tables_on(int rank, int comm_size) const;
  /// Width of the dot-interaction output: emb_dim plus all
  /// strictly-lower-triangular pairwise dots of num_tables+1 vectors.
  int interaction_dim() const {
    const int t = num_tables + 1;
    return emb_dim + t * (t - 1) / 2;
  }
  /// [begin, end) of batch rows processed by `rank` (contiguous blocks
  /// of ceil(rows/comm_size)).
  static std::pair<int, int> row_range(int batch_rows, int rank, int comm_size);

  /// Compact shape for tests and fast acceptance runs.
  static ModelConfig small(std::uint64_t seed);
};

struct MlpLayer {
  MatRM weights;  // out x in
  VectorXf bias;
};

struct ShardedModel {
  ModelConfig config;
  int rank = 0;
  int comm_size = 1;
  int table_begin = 0;
  int table_end = 0;
  std::vector<MatRM> tables;  // local shard, table_rows x emb_dim each
  std::vector<MlpLayer> bottom;
  std::vector<MlpLayer> top;
};

ShardedModel build_model(const ModelConfig& config, int rank, int comm_size);

/// Per-table, per-row index lists: lists[table][row] -> table rows to
/// sum-pool.
using IndexLists = std::vector<std::vector<std::vector<std::uint32_t>>>;

/// One mini-batch from this rank's perspective.
struct RankBatch {
  int global_rows = 0;
  int row_begin = 0;
  int row_end = 0;
  MatRM dense;                              // (row_end - row_begin) x num_dense
  IndexLists indices;                       // [num_tables][my rows]: this rank's samples
  IndexLists plan;                          // [my tables][global rows]: lookup plan (pre-exchanged)
  std::vector<std::uint32_t> recv_bytes;    // expected exchange payload per peer
};

// Strict ascending-index kernels. Sum order is pinned so that the
// synchronous and bounded-lag paths (and the scalar test oracles)
// agree bit-for-bit.
float dot_strict(const float* a, const float* b, int n);

/// Sum-pools the looked-up rows of every owned table for every global
/// sample. pooled[t] has plan-row count rows of emb_dim.
std::vector<MatRM> apply_emb(const ShardedModel& model, const IndexLists& plan);

/// Affine + ReLU stack ending at emb_dim.
MatRM bottom_mlp(const ShardedModel& model, const MatRM& dense);

/// x (rows x emb_dim) with one pooled vector per table: concatenates x
/// followed by the strictly-lower-triangular pairwise dots of the
/// num_tables+1 stacked vectors, row-major pair order.
MatRM interact_features(const MatRM& x, std::span<const MatRM> table_vectors);

/// Affine + ReLU stack with a final sigmoid; returns CTR in [0,1].
VectorXf top_mlp(const ShardedModel& model, const MatRM& interactions);

/// Uniform random delays injected at the top of each loop body.
struct DelaySchedule {
  std::vector<std::vector<double>> seconds;  // [rank][iteration]
};

/// Instrumentation collected by the forward loops. Body samples
/// partition the timed loop (the last body absorbs the drain), so
/// their sum is the loop wall time.
struct ForwardTrace {
  std::vector<double> body_seconds;
  std::vector<double> delay_seconds;
  std::vector<std::pair<std::uint64_t, double>> initiations;  // (iteration, t)
  std::vector<int> wait_bodies;  // loop-body index at each in-loop completion
  int drain_waits = 0;
};

using Predictions = std::vector<VectorXf>;  // per batch, this rank's rows

/// Listing-1 style forward: initiate, overlap the bottom MLP, then
/// block; exactly one request outstanding at any time.
Predictions forward_sync(Communicator& comm, const ShardedModel& model,
                         const std::vector<RankBatch>& batches,
                         const DelaySchedule* delays = nullptr, ForwardTrace* trace = nullptr,
                         std::optional<std::chrono::milliseconds> deadline = std::nullopt);

/// Bounded-lag forward: completes the tail request only when more than
/// bound_k are outstanding, and drains after the last batch. CTR for
/// iteration j always uses the dense-MLP output produced in body j.
Predictions forward_bls(Communicator& comm, const ShardedModel& model,
                        const std::vector<RankBatch>& batches, int bound_k,
                        SafetyMode safety = SafetyMode::faithful,
                        const DelaySchedule* delays = nullptr, ForwardTrace* trace = nullptr,
                        std::optional<std::chrono::milliseconds> deadline = std::nullopt);

/// Segment capacity (bytes) needed for the embedding exchange between
/// any pair of ranks.
std::size_t exchange_capacity(const ModelConfig& config, int comm_size, int max_batch_rows);

}  // namespace blscomm::dlrm
