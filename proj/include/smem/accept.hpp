#pragma once

#include <optional>
#include <string>
#include <vector>

#include "smem/synth.hpp"
#include "smem/train.hpp"

namespace smem {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

// Pinned scenario configurations shared by the acceptance suite and the
// `repro` subcommand.
SynthSpec abs_scenario_spec();
SynthSpec rel_scenario_spec();
TrainConfig abs_scenario_config(const std::string& model);
TrainConfig rel_scenario_config(const std::string& model);

// Trained artifacts cached across criteria so each scenario trains once.
struct AcceptanceContext {
  std::optional<SynthDataset> abs_data;
  std::optional<SynthDataset> rel_data;
  std::optional<TrainOutcome> abs_smem;
  std::optional<TrainOutcome> abs_ibow;
  std::optional<TrainOutcome> rel_smem;
  std::optional<TrainOutcome> rel_ibow;

  const SynthDataset& absolute();
  const SynthDataset& relative();
  TrainOutcome& absolute_smem();
  TrainOutcome& absolute_ibow();
  TrainOutcome& relative_smem();
  TrainOutcome& relative_ibow();
};

constexpr int kNumCriteria = 10;

// Criterion ids are 1-based; usage error outside 1..10.
CriterionResult run_criterion(int id, AcceptanceContext& ctx);
std::vector<CriterionResult> run_all_criteria(AcceptanceContext& ctx);

// Names accepted by `repro` (e.g. "gradcheck", "abs-position", ...).
const std::vector<std::pair<std::string, int>>& repro_scenarios();

}  // namespace smem
