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

#include <string>
#include <vector>

#include "blscomm/dlrm.hpp"
#include "blscomm/transport.hpp"

namespace blscomm::workloads {

enum class Kind { balanced, hetero, delays, csv };

Kind kind_from_string(const std::string& s);
std::string to_string(Kind k);

struct WorkloadSpec {
  Kind kind = Kind::balanced;
  int batch_size = 512;
  int num_batches = 16;
  int max_multiplicity = 1;   // hetero: uniform per (table, sample) in [1, max]
  double delay_max_s = 0.0;   // delays: uniform per (rank, iteration) in [0, max]
  std::uint64_t seed = 0;
  std::string csv_path;
};

/// All batches and delay schedules are produced before the timed loop;
/// generator entry points assert this phase to keep generation out of
/// the measurements.
class GenerationPhase {
 public:
  GenerationPhase();
  ~GenerationPhase();
};

bool in_generation_phase();

/// Uniform [0, delay_max_s] seconds per (rank, iteration), seeded.
dlrm::DelaySchedule gen_delays(const WorkloadSpec& spec, int comm_size);

/// Builds this rank's batches, including the collective metadata
/// pre-exchange that distributes index lists to the table owners.
/// Collective: all ranks call with identical spec and model config.
std::vector<dlrm::RankBatch> prepare_batches(Communicator& comm,
                                             const dlrm::ModelConfig& config,
                                             const WorkloadSpec& spec);

/// Parsed Criteo-layout rows: label,13 floats,26 hashed category ids.
struct CsvRows {
  dlrm::MatRM dense;                                  // rows x 13
  std::vector<std::vector<std::uint32_t>> ids;        // [26][rows]
  int rows = 0;
};

/// Throws with the offending line number on malformed rows or ids that
/// exceed the configured table rows.
CsvRows parse_criteo_csv(const std::string& path, const dlrm::ModelConfig& config);

}  // namespace blscomm::workloads
