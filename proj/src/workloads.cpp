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

#include "blscomm/workloads.hpp"

#include <atomic>
#include <cstring>
#include <fstream>
#include <sstream>

#include "blscomm/collective.hpp"
#include "blscomm/error.hpp"
#include "blscomm/rng.hpp"

namespace blscomm::workloads {

namespace {

std::atomic<int> g_generation_depth{0};

void require_generation_phase(const char* what) {
  if (g_generation_depth.load(std::memory_order_relaxed) <= 0) {
    throw ProtocolError(std::string(what) + " invoked outside the data-preparation phase");
  }
}

}  // namespace

GenerationPhase::GenerationPhase() { g_generation_depth.fetch_add(1); }
GenerationPhase::~GenerationPhase() { g_generation_depth.fetch_sub(1); }

bool in_generation_phase() { return g_generation_depth.load() > 0; }

Kind kind_from_string(const std::string& s) {
  if (s == "balanced") return Kind::balanced;
  if (s == "hetero") return Kind::hetero;
  if (s == "delays") return Kind::delays;
  if (s == "csv") return Kind::csv;
  throw ConfigError("unknown workload '" + s + "'");
}

std::string to_string(Kind k) {
  switch (k) {
    case Kind::balanced: return "balanced";
    case Kind::hetero: return "hetero";
    case Kind::delays: return "delays";
    case Kind::csv: return "csv";
  }
  return "?";
}

dlrm::DelaySchedule gen_delays(const WorkloadSpec& spec, int comm_size) {
  require_generation_phase("gen_delays");
  if (spec.delay_max_s < 0) throw ConfigError("delay_max_s must be >= 0");
  dlrm::DelaySchedule schedule;
  schedule.seconds.resize(static_cast<std::size_t>(comm_size));
  for (int r = 0; r < comm_size; ++r) {
    auto& mine = schedule.seconds[static_cast<std::size_t>(r)];
    mine.resize(static_cast<std::size_t>(spec.num_batches));
    for (int i = 0; i < spec.num_batches; ++i) {
      SplitMix64 rng(key_mix({spec.seed, kRngDelay, static_cast<std::uint64_t>(r),
                              static_cast<std::uint64_t>(i)}));
      mine[static_cast<std::size_t>(i)] = rng.next_unit() * spec.delay_max_s;
    }
  }
  return schedule;
}

CsvRows parse_criteo_csv(const std::string& path, const dlrm::ModelConfig& config) {
  require_generation_phase("parse_criteo_csv");
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open csv file '" + path + "'");
  const int dense_fields = config.num_dense;
  const int sparse_fields = config.num_tables;
  std::vector<std::vector<float>> dense_rows;
  CsvRows out;
  out.ids.resize(static_cast<std::size_t>(sparse_fields));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    const std::size_t expected = 1 + static_cast<std::size_t>(dense_fields + sparse_fields);
    if (fields.size() != expected) {
      throw ConfigError("csv line " + std::to_string(line_no) + ": expected " +
                        std::to_string(expected) + " fields, found " +
                        std::to_string(fields.size()));
    }
    auto parse_float = [&](const std::string& s, int col) {
      char* end = nullptr;
      const float v = std::strtof(s.c_str(), &end);
      if (end == s.c_str() || *end != '\0') {
        throw ConfigError("csv line " + std::to_string(line_no) + ": field " +
                          std::to_string(col) + " is not numeric");
      }
      return v;
    };
    parse_float(fields[0], 0);  // label; parsed for validity, unused in inference
    std::vector<float> drow(static_cast<std::size_t>(dense_fields));
    for (int d = 0; d < dense_fields; ++d) {
      drow[static_cast<std::size_t>(d)] = parse_float(fields[static_cast<std::size_t>(1 + d)],
                                                      1 + d);
    }
    for (int t = 0; t < sparse_fields; ++t) {
      const std::string& s = fields[static_cast<std::size_t>(1 + dense_fields + t)];
      char* end = nullptr;
      const long long v = std::strtoll(s.c_str(), &end, 10);
      if (end == s.c_str() || *end != '\0' || v < 0) {
        throw ConfigError("csv line " + std::to_string(line_no) + ": field " +
                          std::to_string(1 + dense_fields + t) +
                          " is not a non-negative integer");
      }
      if (v >= config.table_rows[static_cast<std::size_t>(t)]) {
        throw ConfigError("csv line " + std::to_string(line_no) + ": id " + std::to_string(v) +
                          " exceeds table " + std::to_string(t) + " rows (" +
                          std::to_string(config.table_rows[static_cast<std::size_t>(t)]) + ")");
      }
      out.ids[static_cast<std::size_t>(t)].push_back(static_cast<std::uint32_t>(v));
    }
    dense_rows.push_back(std::move(drow));
  }
  out.rows = static_cast<int>(dense_rows.size());
  out.dense.resize(out.rows, dense_fields);
  for (int r = 0; r < out.rows; ++r) {
    for (int d = 0; d < dense_fields; ++d) {
      out.dense(r, d) = dense_rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(d)];
    }
  }
  return out;
}

namespace {

/// Synthetic draws, keyed per (seed, batch, table, global row) so any
/// rank can regenerate exactly the rows it owns.
std::vector<std::uint32_t> draw_indices(const WorkloadSpec& spec, const dlrm::ModelConfig& cfg,
                                        int batch, int table, int global_row) {
  SplitMix64 rng(key_mix({spec.seed, kRngSparse, static_cast<std::uint64_t>(batch),
                          static_cast<std::uint64_t>(table),
                          static_cast<std::uint64_t>(global_row)}));
  const int mult =
      spec.kind == Kind::hetero
          ? 1 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(spec.max_multiplicity)))
          : 1;
  std::vector<std::uint32_t> ids(static_cast<std::size_t>(mult));
  const auto rows = static_cast<std::uint32_t>(cfg.table_rows[static_cast<std::size_t>(table)]);
  for (int m = 0; m < mult; ++m) ids[static_cast<std::size_t>(m)] = rng.next_below(rows);
  return ids;
}

void fill_dense_row(const WorkloadSpec& spec, float* row, int cols, int batch, int global_row) {
  SplitMix64 rng(key_mix({spec.seed, kRngDense, static_cast<std::uint64_t>(batch),
                          static_cast<std::uint64_t>(global_row)}));
  for (int c = 0; c < cols; ++c) row[c] = static_cast<float>(rng.next_unit());
}

/// Serialized index lists for the metadata round: per (table of dest,
/// row of this rank): u32 count + count u32 ids.
std::vector<std::byte> pack_metadata(const dlrm::ModelConfig& cfg, const dlrm::RankBatch& batch,
                                     int dest, int comm_size) {
  const auto [tb, te] = cfg.table_range(dest, comm_size);
  std::vector<std::byte> out;
  for (int t = tb; t < te; ++t) {
    for (int row = batch.row_begin; row < batch.row_end; ++row) {
      const auto& ids =
          batch.indices[static_cast<std::size_t>(t)][static_cast<std::size_t>(row - batch.row_begin)];
      const std::size_t at = out.size();
      out.resize(at + 4 + 4 * ids.size());
      put_le32(out.data() + at, static_cast<std::uint32_t>(ids.size()));
      for (std::size_t i = 0; i < ids.size(); ++i) {
        put_le32(out.data() + at + 4 + 4 * i, ids[i]);
      }
    }
  }
  return out;
}

void unpack_metadata(const dlrm::ModelConfig& cfg, dlrm::RankBatch& batch, int rank,
                     int comm_size, const RecvResult& result) {
  const auto [tb, te] = cfg.table_range(rank, comm_size);
  batch.plan.assign(static_cast<std::size_t>(te - tb), {});
  for (auto& per_table : batch.plan) {
    per_table.resize(static_cast<std::size_t>(batch.global_rows));
  }
  for (int src = 0; src < comm_size; ++src) {
    const auto [rb, re] = dlrm::ModelConfig::row_range(batch.global_rows, src, comm_size);
    const auto& seg = result.segments[static_cast<std::size_t>(src)];
    std::size_t cursor = 0;
    for (int t = tb; t < te; ++t) {
      for (int row = rb; row < re; ++row) {
        if (cursor + 4 > seg.size()) throw ProtocolError("metadata segment truncated");
        const std::uint32_t count = get_le32(seg.data() + cursor);
        cursor += 4;
        if (cursor + 4ull * count > seg.size()) {
          throw ProtocolError("metadata segment truncated");
        }
        auto& ids = batch.plan[static_cast<std::size_t>(t - tb)][static_cast<std::size_t>(row)];
        ids.resize(count);
        for (std::uint32_t i = 0; i < count; ++i) {
          ids[i] = get_le32(seg.data() + cursor);
          cursor += 4;
        }
      }
    }
    if (cursor != seg.size()) throw ProtocolError("metadata segment has trailing bytes");
  }
}

}  // namespace

std::vector<dlrm::RankBatch> prepare_batches(Communicator& comm,
                                             const dlrm::ModelConfig& config,
                                             const WorkloadSpec& spec) {
  GenerationPhase phase;
  dlrm::ModelConfig cfg = config;
  cfg.finalize();
  if (spec.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (spec.kind == Kind::hetero && spec.max_multiplicity < 1) {
    throw ConfigError("max_multiplicity must be >= 1");
  }
  if (spec.kind == Kind::csv && cfg.num_dense != 13) {
    throw ConfigError("csv workload requires the 13-dense-field layout");
  }

  const int comm_size = comm.size();
  const int rank = comm.rank();

  CsvRows csv;
  int num_batches = spec.num_batches;
  if (spec.kind == Kind::csv) {
    csv = parse_criteo_csv(spec.csv_path, cfg);
    num_batches = (csv.rows + spec.batch_size - 1) / spec.batch_size;
  }

  std::vector<dlrm::RankBatch> batches(static_cast<std::size_t>(std::max(0, num_batches)));
  int max_mult = spec.kind == Kind::hetero ? spec.max_multiplicity : 1;
  int max_rows_per_rank = 0;

  for (int b = 0; b < num_batches; ++b) {
    dlrm::RankBatch& batch = batches[static_cast<std::size_t>(b)];
    batch.global_rows = spec.kind == Kind::csv
                            ? std::min(spec.batch_size, csv.rows - b * spec.batch_size)
                            : spec.batch_size;
    std::tie(batch.row_begin, batch.row_end) =
        dlrm::ModelConfig::row_range(batch.global_rows, rank, comm_size);
    const int my_rows = batch.row_end - batch.row_begin;
    max_rows_per_rank = std::max(max_rows_per_rank, my_rows);
    batch.dense.resize(my_rows, cfg.num_dense);
    batch.indices.assign(static_cast<std::size_t>(cfg.num_tables), {});
    for (auto& per_table : batch.indices) per_table.resize(static_cast<std::size_t>(my_rows));

    for (int row = 0; row < my_rows; ++row) {
      const int global_row = batch.row_begin + row;
      if (spec.kind == Kind::csv) {
        const int csv_row = b * spec.batch_size + global_row;
        for (int d = 0; d < cfg.num_dense; ++d) batch.dense(row, d) = csv.dense(csv_row, d);
        for (int t = 0; t < cfg.num_tables; ++t) {
          batch.indices[static_cast<std::size_t>(t)][static_cast<std::size_t>(row)] = {
              csv.ids[static_cast<std::size_t>(t)][static_cast<std::size_t>(csv_row)]};
        }
      } else {
        fill_dense_row(spec, batch.dense.row(row).data(), cfg.num_dense, b, global_row);
        for (int t = 0; t < cfg.num_tables; ++t) {
          batch.indices[static_cast<std::size_t>(t)][static_cast<std::size_t>(row)] =
              draw_indices(spec, cfg, b, t, global_row);
        }
      }
    }

    batch.recv_bytes.resize(static_cast<std::size_t>(comm_size));
    for (int src = 0; src < comm_size; ++src) {
      batch.recv_bytes[static_cast<std::size_t>(src)] = static_cast<std::uint32_t>(
          static_cast<std::size_t>(cfg.tables_on(src, comm_size)) *
          static_cast<std::size_t>(my_rows) * static_cast<std::size_t>(cfg.emb_dim) *
          sizeof(float));
    }
  }

  // Metadata round: routes each rank's index lists to the table owners
  // before timing starts, so the measured loop only moves vectors.
  const std::size_t meta_capacity =
      std::max<std::size_t>(1, static_cast<std::size_t>(cfg.table_block(comm_size)) *
                                   static_cast<std::size_t>(std::max(1, max_rows_per_rank)) *
                                   (4 + 4 * static_cast<std::size_t>(max_mult)));
  RefA2AContext meta(comm, meta_capacity);
  std::vector<std::vector<std::byte>> segments(static_cast<std::size_t>(comm_size));
  std::vector<std::span<const std::byte>> views(static_cast<std::size_t>(comm_size));
  for (int b = 0; b < num_batches; ++b) {
    dlrm::RankBatch& batch = batches[static_cast<std::size_t>(b)];
    for (int dest = 0; dest < comm_size; ++dest) {
      segments[static_cast<std::size_t>(dest)] = pack_metadata(cfg, batch, dest, comm_size);
      views[static_cast<std::size_t>(dest)] = segments[static_cast<std::size_t>(dest)];
    }
    const RecvResult result = meta.exchange(views);
    unpack_metadata(cfg, batch, rank, comm_size, result);
  }
  return batches;
}

}  // namespace blscomm::workloads
