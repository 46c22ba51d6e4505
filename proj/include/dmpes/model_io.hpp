#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "dmpes/harness.hpp"

namespace dmpes {

using Json = nlohmann::json;

/// Parses a JSON file; malformed content raises ConfigError carrying the
/// parser's position diagnostics.
Json load_json_file(const std::string& path);

Json to_json(const Model& model);
Model model_from_json(const Json& j);

Json to_json(const ConditionalModel& model);
ConditionalModel conditional_from_json(const Json& j);

/// A model document is conditional when it carries a "special" block.
bool is_conditional_model_json(const Json& j);

Json to_json(const ExperimentConfig& config);
/// `base_dir` resolves a relative "model_path" reference.
ExperimentConfig experiment_from_json(const Json& j,
                                      const std::string& base_dir);
ExperimentConfig load_experiment(const std::string& path);

Json to_json(const ReplicationStats& stats);
ReplicationStats stats_from_json(const Json& j);

/// Panel CSV columns: group, component, x1..xp.
void write_panel_csv(std::ostream& os, const Sample& sample);
Sample read_panel_csv(std::istream& is);
Sample load_panel_csv(const std::string& path);

/// Match CSV columns: pair_id, treated_row, control_row, distance.
void write_match_csv(std::ostream& os, const MatchResult& result);

Json to_json(const VerificationReport& report);
std::string render_text(const VerificationReport& report);
std::string render_directions_csv(const VerificationReport& report);

/// Locale-independent fixed formatting used by all text output.
std::string format_number(double value);

}  // namespace dmpes
