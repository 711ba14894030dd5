#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace halluprobe::study {

/// Applies a `key=value` override to a config document. Keys use dot paths
/// (`seeds.token_set=7`); values are parsed as JSON when possible and fall
/// back to strings.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Runs the study named by config["study"], writes report.json plus TSV
/// sidecars into out_dir, and returns the report. Stage failures are
/// recorded under report["failed_stages"] instead of aborting the run;
/// the report is always written.
nlohmann::json run_study(const nlohmann::json& config, const std::filesystem::path& out_dir);

nlohmann::json run_hp_study(const nlohmann::json& config, const std::filesystem::path& out_dir);
nlohmann::json run_nh_study(const nlohmann::json& config, const std::filesystem::path& out_dir);
nlohmann::json run_amplification_study(const nlohmann::json& config,
                                       const std::filesystem::path& out_dir);

/// Maps the error categories recorded in failed_stages to the CLI exit
/// code; 0 when the report carries no failures.
int report_exit_code(const nlohmann::json& report);

}  // namespace halluprobe::study
