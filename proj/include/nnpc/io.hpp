#pragma once

// File formats: trajectory/dataset CSV, model bundle JSON, atomic writes.

#include <filesystem>
#include <string>

#include "json.hpp"

#include "nnpc/converter.hpp"
#include "nnpc/neural_net.hpp"
#include "nnpc/sysid.hpp"

namespace nnpc {

/// printf-style %.<digits>g.
[[nodiscard]] std::string format_sig(double value, int digits);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
[[nodiscard]] std::string read_file(const std::filesystem::path& path);

/// `t,i_l,v_c,duty,dcm_flag`, 9 significant digits.
[[nodiscard]] std::string trajectory_csv(const Trajectory& traj);

/// `# sample_period=<s> seed=<n> episode_starts=<i,j,...>` then `k,i_l,v_c,d`
/// with 17 significant digits so the values reload bit-exactly.
[[nodiscard]] std::string dataset_csv(const RawDataset& raw);
[[nodiscard]] RawDataset parse_dataset_csv(const std::string& text);

[[nodiscard]] nlohmann::json to_json(const Network& net);
[[nodiscard]] Network network_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json to_json(const NormStats& stats);
[[nodiscard]] NormStats norm_stats_from_json(const nlohmann::json& j);

[[nodiscard]] std::string bundle_to_string(const IdentifierBundle& bundle);
[[nodiscard]] IdentifierBundle bundle_from_string(const std::string& text);

void save_bundle(const std::filesystem::path& path, const IdentifierBundle& bundle);
[[nodiscard]] IdentifierBundle load_bundle(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const RawDataset& raw);
[[nodiscard]] RawDataset load_dataset(const std::filesystem::path& path);

}  // namespace nnpc
