#pragma once

// JSON schemas for worlds, episodes, and R2R-style inputs.
//
// World (format_version 1):
//   {"format_version": 1, "scan": str, "seed": uint, "d_feat": int,
//    "nodes": [{"id": int, "xyz": [x, y, z], "name"?: str}], "edges": [[a, b]],
//    "features"?: {"node id": [[36 rows of d_feat]]}}
//   Node ids are 0..n-1. Without "features" the synthetic generator for
//   `seed` is attached.
// Episodes: [{"id", "scan", "instruction_tokens", "path", "heading_sector",
//   "d_th", "elevation"?, "instruction"?}]
//
// Schema violations raise DataError with the JSON path of the offending field.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pta/nav_env.hpp"

namespace pta {

inline constexpr int kWorldFormatVersion = 1;

nlohmann::json world_to_json(const World& world, bool include_features = false);
World world_from_json(const nlohmann::json& j, const std::string& origin = "$");

nlohmann::json episodes_to_json(const std::vector<Episode>& episodes);
std::vector<Episode> episodes_from_json(const nlohmann::json& j, const std::string& origin = "$");

/// Reads a JSON document; IoError with the file path on failure.
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes pretty-printed JSON (deterministic key order).
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

World load_world(const std::filesystem::path& path);
void save_world(const std::filesystem::path& path, const World& world);
std::vector<Episode> load_episodes(const std::filesystem::path& path);
void save_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes);

/// Matterport-style connectivity file: [{"image_id", "pose"[16], "included",
/// "unobstructed"[n]}]. Node names keep the image ids; synthetic features are
/// seeded from the scan name.
World connectivity_from_json(const nlohmann::json& j, const std::string& scan, int d_feat,
                             const std::string& origin = "$");
World load_connectivity(const std::filesystem::path& path, const std::string& scan, int d_feat);

/// R2R episode records: [{"path_id", "scan", "path": [image ids], "heading": rad,
/// "instructions": [str]}]. One Episode per instruction; heading is rounded to
/// the nearest 30-degree sector.
std::vector<Episode> r2r_episodes_from_json(const nlohmann::json& j,
                                            const std::map<std::string, World>& worlds,
                                            double d_th = 3.0, const std::string& origin = "$");
std::vector<Episode> load_r2r_episodes(const std::filesystem::path& path,
                                       const std::map<std::string, World>& worlds,
                                       double d_th = 3.0);

/// Seed derived from a scan name (FNV-1a).
std::uint64_t scan_seed(const std::string& scan);

}  // namespace pta
