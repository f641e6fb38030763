#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "rigidity/engine.hpp"
#include "rigidity/field.hpp"
#include "rigidity/generators.hpp"
#include "rigidity/grid_set.hpp"
#include "rigidity/partition.hpp"
#include "rigidity/schedule.hpp"

namespace rigidity {

using json = nlohmann::json;

json field_to_json(const DeformationField& f);
DeformationField field_from_json(const json& j);
void save_field(const std::string& path, const DeformationField& f);
DeformationField load_field(const std::string& path);

/// Mask and spacing round-trip bit-exactly; components are re-derived
/// canonically on load.
json gridset_to_json(const GridSet& w);
GridSet gridset_from_json(const json& j);
void save_gridset(const std::string& path, const GridSet& w);
GridSet load_gridset(const std::string& path);

json config_to_json(const EngineConfig& cfg);
EngineConfig config_from_json(const json& j);
EngineConfig load_config(const std::string& path);

json report_to_json(const RigidityReport& rep);
json linear_report_to_json(const LinearVariantReport& rep);
json trace_record_to_json(const StepRecord& r);

void save_text(const std::string& path, const std::string& text);

std::string labels_csv(const std::vector<int>& labels, int nx, int ny);
json motions_json(const CaccioppoliPartition& part);
std::string separator_csv(const std::vector<EdgeKey>& edges);
std::string probe_csv(const ProbeResult& probe);

}  // namespace rigidity
