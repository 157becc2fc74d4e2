// Structured JSON configuration: parsing with strict key checking, plus
// canonical dumps of the effective configuration for manifests/hashing.
#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "seqci/dgp.hpp"
#include "seqci/estimator.hpp"
#include "seqci/mc_study.hpp"

namespace seqci {

using ConfigJson = nlohmann::ordered_json;

// Reads a config file ({} when path is empty). Throws ConfigError on parse
// failure or when any section/key is not recognized by the parsers below.
ConfigJson load_config_file(const std::string& path);

// Rejects keys outside `allowed`, naming the offender and its context.
void check_keys(const ConfigJson& obj, std::initializer_list<const char*> allowed,
                const std::string& context);

DgpConfig parse_dgp(const ConfigJson& root);
EstimatorConfig parse_estimator(const ConfigJson& root);
McStudyConfig parse_mc_study(const ConfigJson& root);
SweepConfig parse_sweep(const ConfigJson& root, int* grid_points_out = nullptr);

// Validates that the file only contains sections a command understands.
void check_sections(const ConfigJson& root, std::initializer_list<const char*> allowed);

ConfigJson dump_dgp(const DgpConfig& cfg);
ConfigJson dump_estimator(const EstimatorConfig& cfg);
ConfigJson dump_mc_study(const McStudyConfig& cfg);
ConfigJson dump_sweep(const SweepConfig& cfg);

// FNV-1a hash of a canonical dump, reported in run manifests.
std::uint64_t config_hash(const ConfigJson& effective);

}  // namespace seqci
