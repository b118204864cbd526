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

#include "blscomm/dlrm.hpp"

#include <cmath>
#include <cstring>
#include <deque>
#include <thread>

#include "blscomm/error.hpp"
#include "blscomm/rng.hpp"

namespace blscomm::dlrm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void fill_uniform(SplitMix64& rng, float* data, std::size_t n, float fan_in) {
  const float half = 0.5f / fan_in;
  for (std::size_t i = 0; i < n; ++i) data[i] = rng.next_uniform(-half, half);
}

MlpLayer make_layer(std::uint64_t stream, int out_dim, int in_dim) {
  SplitMix64 rng(stream);
  MlpLayer layer;
  layer.weights.resize(out_dim, in_dim);
  fill_uniform(rng, layer.weights.data(), layer.weights.size(), static_cast<float>(in_dim));
  layer.bias.resize(out_dim);
  fill_uniform(rng, layer.bias.data(), static_cast<std::size_t>(out_dim),
               static_cast<float>(in_dim));
  return layer;
}

std::vector<MlpLayer> make_mlp(std::uint64_t seed, std::uint64_t which, int in_dim,
                               std::span<const int> dims) {
  std::vector<MlpLayer> layers;
  int in = in_dim;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    layers.push_back(
        make_layer(key_mix({seed, kRngMlp, which, static_cast<std::uint64_t>(i)}), dims[i], in));
    in = dims[i];
  }
  return layers;
}

MatRM mlp_run(std::span<const MlpLayer> layers, const MatRM& input, bool final_sigmoid) {
  MatRM cur = input;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const MlpLayer& layer = layers[li];
    if (cur.cols() != layer.weights.cols()) {
      throw ProtocolError("mlp: input width " + std::to_string(cur.cols()) +
                          " does not match layer fan-in " + std::to_string(layer.weights.cols()));
    }
    MatRM next(cur.rows(), layer.weights.rows());
    const bool last = li + 1 == layers.size();
    for (Eigen::Index r = 0; r < cur.rows(); ++r) {
      const float* in = cur.row(r).data();
      for (Eigen::Index o = 0; o < layer.weights.rows(); ++o) {
        float acc = layer.bias(o);
        const float* w = layer.weights.row(o).data();
        for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) acc += w[j] * in[j];
        if (last && final_sigmoid) {
          next(r, o) = 1.0f / (1.0f + std::exp(-acc));
        } else {
          next(r, o) = acc > 0.0f ? acc : 0.0f;
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace

void ModelConfig::finalize() {
  if (num_tables < 1) throw ConfigError("model: num_tables must be >= 1");
  if (emb_dim < 1) throw ConfigError("model: emb_dim must be >= 1");
  if (num_dense < 1) throw ConfigError("model: num_dense must be >= 1");
  if (table_rows.empty()) table_rows.assign(static_cast<std::size_t>(num_tables), 10000);
  if (table_rows.size() != static_cast<std::size_t>(num_tables)) {
    throw ConfigError("model: table_rows must have num_tables entries");
  }
  for (int rows : table_rows) {
    if (rows < 1) throw ConfigError("model: table_rows entries must be >= 1");
  }
  if (bottom_dims.empty() || bottom_dims.back() != emb_dim) {
    throw ConfigError("model: bottom MLP must end at emb_dim");
  }
  if (top_dims.empty() || top_dims.back() != 1) {
    throw ConfigError("model: top MLP must end at width 1");
  }
}

std::pair<int, int> ModelConfig::table_range(int rank, int comm_size) const {
  const int block = table_block(comm_size);
  const int begin = std::min(num_tables, block * rank);
  const int end = std::min(num_tables, begin + block);
  return {begin, end};
}

int ModelConfig::tables_on(int rank, int comm_size) const {
  const auto [b, e] = table_range(rank, comm_size);
  return e - b;
}

std::pair<int, int> ModelConfig::row_range(int batch_rows, int rank, int comm_size) {
  const int block = (batch_rows + comm_size - 1) / comm_size;
  const int begin = std::min(batch_rows, block * rank);
  const int end = std::min(batch_rows, begin + block);
  return {begin, end};
}

ModelConfig ModelConfig::small(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.num_tables = 6;
  cfg.emb_dim = 8;
  cfg.num_dense = 4;
  cfg.table_rows.assign(6, 50);
  cfg.bottom_dims = {16, 8};
  cfg.top_dims = {16, 1};
  cfg.seed = seed;
  return cfg;
}

ShardedModel build_model(const ModelConfig& config, int rank, int comm_size) {
  ModelConfig cfg = config;
  cfg.finalize();
  ShardedModel model;
  model.config = cfg;
  model.rank = rank;
  model.comm_size = comm_size;
  std::tie(model.table_begin, model.table_end) = cfg.table_range(rank, comm_size);
  for (int t = model.table_begin; t < model.table_end; ++t) {
    SplitMix64 rng(key_mix({cfg.seed, kRngEmbedding, static_cast<std::uint64_t>(t)}));
    MatRM table(cfg.table_rows[static_cast<std::size_t>(t)], cfg.emb_dim);
    fill_uniform(rng, table.data(), table.size(), static_cast<float>(cfg.emb_dim));
    model.tables.push_back(std::move(table));
  }
  model.bottom = make_mlp(cfg.seed, 0, cfg.num_dense, cfg.bottom_dims);
  model.top = make_mlp(cfg.seed, 1, cfg.interaction_dim(), cfg.top_dims);
  return model;
}

float dot_strict(const float* a, const float* b, int n) {
  float acc = 0.0f;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

std::vector<MatRM> apply_emb(const ShardedModel& model, const IndexLists& plan) {
  const int local_tables = model.table_end - model.table_begin;
  if (plan.size() != static_cast<std::size_t>(local_tables)) {
    throw ProtocolError("apply_emb: plan must cover the locally owned tables");
  }
  std::vector<MatRM> pooled;
  pooled.reserve(plan.size());
  for (int t = 0; t < local_tables; ++t) {
    const auto& rows = plan[static_cast<std::size_t>(t)];
    const MatRM& table = model.tables[static_cast<std::size_t>(t)];
    MatRM out(static_cast<Eigen::Index>(rows.size()), model.config.emb_dim);
    out.setZero();
    for (std::size_t sample = 0; sample < rows.size(); ++sample) {
      for (std::uint32_t idx : rows[sample]) {
        if (static_cast<Eigen::Index>(idx) >= table.rows()) {
          throw ProtocolError("apply_emb: index " + std::to_string(idx) +
                              " out of range for table " +
                              std::to_string(model.table_begin + t));
        }
        out.row(static_cast<Eigen::Index>(sample)) += table.row(idx);
      }
    }
    pooled.push_back(std::move(out));
  }
  return pooled;
}

MatRM bottom_mlp(const ShardedModel& model, const MatRM& dense) {
  return mlp_run(model.bottom, dense, /*final_sigmoid=*/false);
}

MatRM interact_features(const MatRM& x, std::span<const MatRM> table_vectors) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index dim = x.cols();
  for (const MatRM& t : table_vectors) {
    if (t.rows() != rows || t.cols() != dim) {
      throw ProtocolError("interact_features: vector shape mismatch");
    }
  }
  const int t_count = static_cast<int>(table_vectors.size()) + 1;
  MatRM z(rows, dim + t_count * (t_count - 1) / 2);
  for (Eigen::Index r = 0; r < rows; ++r) {
    std::vector<const float*> vecs;
    vecs.reserve(static_cast<std::size_t>(t_count));
    vecs.push_back(x.row(r).data());
    for (const MatRM& t : table_vectors) vecs.push_back(t.row(r).data());
    for (Eigen::Index d = 0; d < dim; ++d) z(r, d) = x(r, d);
    Eigen::Index col = dim;
    for (int i = 1; i < t_count; ++i) {
      for (int j = 0; j < i; ++j) {
        z(r, col++) = dot_strict(vecs[static_cast<std::size_t>(i)],
                                 vecs[static_cast<std::size_t>(j)], static_cast<int>(dim));
      }
    }
  }
  return z;
}

VectorXf top_mlp(const ShardedModel& model, const MatRM& interactions) {
  const MatRM out = mlp_run(model.top, interactions, /*final_sigmoid=*/true);
  VectorXf ctr(out.rows());
  for (Eigen::Index r = 0; r < out.rows(); ++r) ctr(r) = out(r, 0);
  return ctr;
}

std::size_t exchange_capacity(const ModelConfig& config, int comm_size, int max_batch_rows) {
  const std::size_t max_tables = static_cast<std::size_t>(config.table_block(comm_size));
  const std::size_t max_rows = static_cast<std::size_t>(
      (max_batch_rows + comm_size - 1) / comm_size);
  return std::max<std::size_t>(
      1, max_tables * max_rows * static_cast<std::size_t>(config.emb_dim) * sizeof(float));
}

namespace {

/// Packs this rank's pooled table vectors destined for rank `dest`:
/// for each local table ascending, the rows of dest's minibatch block.
void pack_exchange_segment(const ShardedModel& model, const std::vector<MatRM>& pooled,
                           int dest, int global_rows, std::vector<std::byte>& out) {
  const auto [rb, re] = ModelConfig::row_range(global_rows, dest, model.comm_size);
  const int rows = re - rb;
  const std::size_t row_bytes = static_cast<std::size_t>(model.config.emb_dim) * sizeof(float);
  out.resize(pooled.size() * static_cast<std::size_t>(rows) * row_bytes);
  std::byte* cursor = out.data();
  for (const MatRM& table : pooled) {
    if (rows > 0) {
      std::memcpy(cursor, table.row(rb).data(), static_cast<std::size_t>(rows) * row_bytes);
      cursor += static_cast<std::size_t>(rows) * row_bytes;
    }
  }
}

/// Rebuilds per-global-table vectors for this rank's rows from the
/// received segments (source rank order gives ascending table ids).
std::vector<MatRM> unpack_exchange(const ShardedModel& model, const RecvResult& result,
                                   int my_rows) {
  const ModelConfig& cfg = model.config;
  std::vector<MatRM> per_table;
  per_table.reserve(static_cast<std::size_t>(cfg.num_tables));
  const std::size_t row_bytes = static_cast<std::size_t>(cfg.emb_dim) * sizeof(float);
  for (int src = 0; src < model.comm_size; ++src) {
    const auto [tb, te] = cfg.table_range(src, model.comm_size);
    const auto& seg = result.segments[static_cast<std::size_t>(src)];
    const std::size_t expected =
        static_cast<std::size_t>(te - tb) * static_cast<std::size_t>(my_rows) * row_bytes;
    if (seg.size() != expected) {
      throw ProtocolError("exchange segment from rank " + std::to_string(src) +
                          " has unexpected size");
    }
    const std::byte* cursor = seg.data();
    for (int t = tb; t < te; ++t) {
      MatRM vecs(my_rows, cfg.emb_dim);
      if (my_rows > 0) {
        std::memcpy(vecs.data(), cursor, static_cast<std::size_t>(my_rows) * row_bytes);
      }
      cursor += static_cast<std::size_t>(my_rows) * row_bytes;
      per_table.push_back(std::move(vecs));
    }
  }
  return per_table;
}

struct PendingDense {
  std::uint64_t iteration;
  MatRM x;
};

/// Shared forward-loop driver. `bound_k < 0` never waits inside the
/// loop (unused); bound 0 with a single slot is the synchronous path.
Predictions run_forward(Communicator& comm, const ShardedModel& model,
                        const std::vector<RankBatch>& batches, int bound_k, int slot_count,
                        SafetyMode safety, const DelaySchedule* delays, ForwardTrace* trace,
                        std::optional<std::chrono::milliseconds> deadline) {
  int max_rows = 1;
  for (const auto& b : batches) max_rows = std::max(max_rows, b.global_rows);
  BlsConfig cfg;
  cfg.bound_k = bound_k;
  cfg.slot_count = slot_count;
  cfg.safety = safety;
  cfg.per_peer_bytes = exchange_capacity(model.config, model.comm_size, max_rows);
  BlsContext ctx(comm, cfg);
  comm.fence();

  Predictions predictions(batches.size());
  std::deque<PendingDense> x_fifo;
  std::vector<std::vector<std::byte>> segments(static_cast<std::size_t>(model.comm_size));
  std::vector<std::span<const std::byte>> segment_views(
      static_cast<std::size_t>(model.comm_size));

  const auto epoch = Clock::now();
  auto body_start = epoch;
  int current_body = 0;

  auto complete_one = [&](bool in_loop) {
    RecvResult result = ctx.wait(deadline);
    if (x_fifo.empty() || x_fifo.front().iteration != result.iteration) {
      throw ProtocolError("dense-output FIFO out of step with the request FIFO");
    }
    PendingDense pending = std::move(x_fifo.front());
    x_fifo.pop_front();
    const RankBatch& batch = batches[static_cast<std::size_t>(result.iteration)];
    const int my_rows = batch.row_end - batch.row_begin;
    const auto per_table = unpack_exchange(model, result, my_rows);
    const MatRM z = interact_features(pending.x, per_table);
    predictions[static_cast<std::size_t>(result.iteration)] = top_mlp(model, z);
    if (trace != nullptr) {
      if (in_loop) {
        trace->wait_bodies.push_back(current_body);
      } else {
        trace->drain_waits += 1;
      }
    }
  };

  for (std::size_t j = 0; j < batches.size(); ++j) {
    current_body = static_cast<int>(j);
    if (j > 0 && trace != nullptr) {
      const auto now = Clock::now();
      trace->body_seconds.push_back(std::chrono::duration<double>(now - body_start).count());
      body_start = now;
    }
    double injected = 0.0;
    if (delays != nullptr && !delays->seconds.empty()) {
      const auto& mine = delays->seconds[static_cast<std::size_t>(model.rank)];
      if (j < mine.size()) injected = mine[j];
    }
    if (injected > 0.0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(injected));
    }
    if (trace != nullptr) trace->delay_seconds.push_back(injected);

    const RankBatch& batch = batches[j];
    const auto pooled = apply_emb(model, batch.plan);
    for (int dest = 0; dest < model.comm_size; ++dest) {
      pack_exchange_segment(model, pooled, dest, batch.global_rows,
                            segments[static_cast<std::size_t>(dest)]);
      segment_views[static_cast<std::size_t>(dest)] = segments[static_cast<std::size_t>(dest)];
    }
    const std::uint64_t iteration = ctx.initiate(segment_views, batch.recv_bytes, deadline);
    if (trace != nullptr) trace->initiations.emplace_back(iteration, seconds_since(epoch));

    x_fifo.push_back(PendingDense{iteration, bottom_mlp(model, batch.dense)});

    if (ctx.outstanding() > bound_k) complete_one(/*in_loop=*/true);
  }
  while (ctx.outstanding() > 0) complete_one(/*in_loop=*/false);
  if (trace != nullptr && !batches.empty()) {
    trace->body_seconds.push_back(
        std::chrono::duration<double>(Clock::now() - body_start).count());
  }
  return predictions;
}

}  // namespace

Predictions forward_sync(Communicator& comm, const ShardedModel& model,
                         const std::vector<RankBatch>& batches, const DelaySchedule* delays,
                         ForwardTrace* trace, std::optional<std::chrono::milliseconds> deadline) {
  return run_forward(comm, model, batches, /*bound_k=*/0, /*slot_count=*/1,
                     SafetyMode::faithful, delays, trace, deadline);
}

Predictions forward_bls(Communicator& comm, const ShardedModel& model,
                        const std::vector<RankBatch>& batches, int bound_k, SafetyMode safety,
                        const DelaySchedule* delays, ForwardTrace* trace,
                        std::optional<std::chrono::milliseconds> deadline) {
  if (bound_k < 0) throw ConfigError("forward_bls: bound_k must be >= 0");
  // bound_k + 1 slots: the loop holds bound_k requests across bodies
  // plus the one initiated before the in-body wait.
  return run_forward(comm, model, batches, bound_k, bound_k + 1, safety, delays, trace,
                     deadline);
}

}  // namespace blscomm::dlrm
