#pragma once

#include <string>

#include "rigidity/engine.hpp"
#include "rigidity/partition.hpp"

namespace rigidity {

struct DecomposeResult {
    IterateResult engine;
    CaccioppoliPartition partition;  // completed: every Omega_rho cell labeled
    SeparatorResult separator;
    AssemblyResult assembly;
    DeformationField displacement;
    RigidityReport rep;
};

/// Full pipeline: field -> engine -> partition -> separator -> extension ->
/// displacement -> report. Deterministic given (field, config).
DecomposeResult run_decompose(const DeformationField& f, const EngineConfig& cfg);

/// Rewrites `part` so the separator's completed labels own the pieces;
/// motions are kept, cell lists and perimeters follow the new labels.
void complete_partition(CaccioppoliPartition& part, const SeparatorResult& sep);

}  // namespace rigidity
