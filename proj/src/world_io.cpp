#include "pta/world_io.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_map>

namespace pta {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw DataError(path + ": " + what);
}

const json& member(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) schema_error(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) schema_error(path + "." + key, "missing field");
  return *it;
}

const json& array_of(const json& j, const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected an array");
  return j;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) schema_error(path, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) schema_error(path, "expected an integer");
  return j.get<int>();
}

std::string string_of(const json& j, const std::string& path) {
  if (!j.is_string()) schema_error(path, "expected a string");
  return j.get<std::string>();
}

std::vector<int> int_array(const json& j, const std::string& path) {
  array_of(j, path);
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(integer(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

Eigen::Vector3d xyz(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) schema_error(path, "expected an array of 3 numbers");
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]"), number(j[2], path + "[2]")};
}

void add_edge(World& w, int a, int b, const std::string& path) {
  if (a < 0 || b < 0 || a >= w.size() || b >= w.size() || a == b) {
    schema_error(path, "edge endpoints must be distinct node ids");
  }
  auto& na = w.neighbors[static_cast<std::size_t>(a)];
  auto& nb = w.neighbors[static_cast<std::size_t>(b)];
  if (std::find(na.begin(), na.end(), b) == na.end()) na.push_back(b);
  if (std::find(nb.begin(), nb.end(), a) == nb.end()) nb.push_back(a);
}

}  // namespace

std::uint64_t scan_seed(const std::string& scan) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : scan) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

json world_to_json(const World& world, bool include_features) {
  json nodes = json::array();
  for (int i = 0; i < world.size(); ++i) {
    const auto& p = world.positions[static_cast<std::size_t>(i)];
    json n = {{"id", i}, {"xyz", {p.x(), p.y(), p.z()}}};
    if (!world.node_names.empty()) n["name"] = world.node_names[static_cast<std::size_t>(i)];
    nodes.push_back(std::move(n));
  }
  json edges = json::array();
  for (auto [a, b] : world.edges()) edges.push_back({a, b});
  json j = {{"format_version", kWorldFormatVersion},
            {"scan", world.scan},
            {"seed", world.seed},
            {"d_feat", world.d_feat},
            {"nodes", std::move(nodes)},
            {"edges", std::move(edges)}};
  if (include_features && world.features) {
    json feats = json::object();
    for (int i = 0; i < world.size(); ++i) {
      json rows = json::array();
      for (int v = 0; v < kViewCount; ++v) {
        RowVector f = world.features->view(i, v);
        rows.push_back(std::vector<double>(f.data(), f.data() + f.size()));
      }
      feats[std::to_string(i)] = std::move(rows);
    }
    j["features"] = std::move(feats);
  }
  return j;
}

World world_from_json(const json& j, const std::string& origin) {
  World w;
  if (j.contains("format_version") &&
      integer(j["format_version"], origin + ".format_version") != kWorldFormatVersion) {
    schema_error(origin + ".format_version", "unsupported world format version");
  }
  w.scan = string_of(member(j, "scan", origin), origin + ".scan");
  const auto& seed = member(j, "seed", origin);
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) {
    schema_error(origin + ".seed", "expected an unsigned integer");
  }
  w.seed = seed.get<std::uint64_t>();
  w.d_feat = integer(member(j, "d_feat", origin), origin + ".d_feat");
  if (w.d_feat <= 0) schema_error(origin + ".d_feat", "must be positive");

  const std::string npath = origin + ".nodes";
  const auto& nodes = array_of(member(j, "nodes", origin), npath);
  w.positions.resize(nodes.size());
  w.neighbors.assign(nodes.size(), {});
  bool named = false;
  std::vector<std::string> names(nodes.size());
  std::vector<bool> seen(nodes.size(), false);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string p = npath + "[" + std::to_string(i) + "]";
    const int id = integer(member(nodes[i], "id", p), p + ".id");
    if (id < 0 || id >= static_cast<int>(nodes.size()) || seen[static_cast<std::size_t>(id)]) {
      schema_error(p + ".id", "ids must be unique and lie in 0..n-1");
    }
    seen[static_cast<std::size_t>(id)] = true;
    w.positions[static_cast<std::size_t>(id)] = xyz(member(nodes[i], "xyz", p), p + ".xyz");
    if (nodes[i].contains("name")) {
      names[static_cast<std::size_t>(id)] = string_of(nodes[i]["name"], p + ".name");
      named = true;
    }
  }
  if (named) w.node_names = std::move(names);

  const std::string epath = origin + ".edges";
  const auto& edges = array_of(member(j, "edges", origin), epath);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string p = epath + "[" + std::to_string(i) + "]";
    if (!edges[i].is_array() || edges[i].size() != 2) schema_error(p, "expected [a, b]");
    add_edge(w, integer(edges[i][0], p + "[0]"), integer(edges[i][1], p + "[1]"), p);
  }
  for (auto& n : w.neighbors) std::sort(n.begin(), n.end());

  if (j.contains("features")) {
    const std::string fpath = origin + ".features";
    const auto& f = j["features"];
    if (!f.is_object()) schema_error(fpath, "expected an object keyed by node id");
    std::vector<Matrix> blocks;
    for (int i = 0; i < w.size(); ++i) {
      const std::string key = std::to_string(i);
      const auto& rows = array_of(member(f, key.c_str(), fpath), fpath + "." + key);
      if (rows.size() != static_cast<std::size_t>(kViewCount)) {
        schema_error(fpath + "." + key, "expected 36 view rows");
      }
      Matrix block(kViewCount, w.d_feat);
      for (int v = 0; v < kViewCount; ++v) {
        const std::string rp = fpath + "." + key + "[" + std::to_string(v) + "]";
        const auto& row = array_of(rows[static_cast<std::size_t>(v)], rp);
        if (row.size() != static_cast<std::size_t>(w.d_feat)) schema_error(rp, "expected d_feat values");
        for (int c = 0; c < w.d_feat; ++c) block(v, c) = number(row[static_cast<std::size_t>(c)], rp);
      }
      blocks.push_back(std::move(block));
    }
    w.features = std::make_shared<TableFeatures>(std::move(blocks));
  } else {
    attach_synthetic_features(w);
  }
  w.validate();
  return w;
}

json episodes_to_json(const std::vector<Episode>& episodes) {
  json arr = json::array();
  for (const auto& e : episodes) {
    arr.push_back({{"id", e.id},
                   {"scan", e.scan},
                   {"instruction", detokenize(e.instruction)},
                   {"instruction_tokens", e.instruction},
                   {"path", e.path},
                   {"heading_sector", e.heading},
                   {"elevation", e.elevation},
                   {"d_th", e.d_th}});
  }
  return arr;
}

std::vector<Episode> episodes_from_json(const json& j, const std::string& origin) {
  array_of(j, origin);
  std::vector<Episode> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = origin + "[" + std::to_string(i) + "]";
    Episode e;
    e.id = string_of(member(j[i], "id", p), p + ".id");
    e.scan = string_of(member(j[i], "scan", p), p + ".scan");
    e.instruction = int_array(member(j[i], "instruction_tokens", p), p + ".instruction_tokens");
    for (std::size_t k = 0; k < e.instruction.size(); ++k) {
      if (e.instruction[k] < 0 || e.instruction[k] >= vocab_size()) {
        schema_error(p + ".instruction_tokens[" + std::to_string(k) + "]", "token id out of vocabulary");
      }
    }
    e.path = int_array(member(j[i], "path", p), p + ".path");
    if (e.path.empty()) schema_error(p + ".path", "must not be empty");
    e.heading = integer(member(j[i], "heading_sector", p), p + ".heading_sector");
    if (e.heading < 0 || e.heading >= kHeadingSectors) schema_error(p + ".heading_sector", "must lie in 0..11");
    if (j[i].contains("elevation")) e.elevation = integer(j[i]["elevation"], p + ".elevation");
    e.d_th = number(member(j[i], "d_th", p), p + ".d_th");
    if (!(e.d_th > 0.0)) schema_error(p + ".d_th", "must be positive");
    out.push_back(std::move(e));
  }
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

World load_world(const std::filesystem::path& path) {
  return world_from_json(read_json_file(path), path.string());
}

void save_world(const std::filesystem::path& path, const World& world) {
  write_json_file(path, world_to_json(world));
}

std::vector<Episode> load_episodes(const std::filesystem::path& path) {
  return episodes_from_json(read_json_file(path), path.string());
}

void save_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes) {
  write_json_file(path, episodes_to_json(episodes));
}

World connectivity_from_json(const json& j, const std::string& scan, int d_feat,
                             const std::string& origin) {
  array_of(j, origin);
  World w;
  w.scan = scan;
  w.seed = scan_seed(scan);
  w.d_feat = d_feat;
  // Only included viewpoints become nodes; remember their original slots.
  std::vector<int> slot_to_node(j.size(), -1);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = origin + "[" + std::to_string(i) + "]";
    bool included = true;
    if (j[i].contains("included")) {
      if (!j[i]["included"].is_boolean()) schema_error(p + ".included", "expected a boolean");
      included = j[i]["included"].get<bool>();
    }
    const std::string name = string_of(member(j[i], "image_id", p), p + ".image_id");
    const auto& pose = array_of(member(j[i], "pose", p), p + ".pose");
    if (pose.size() != 16) schema_error(p + ".pose", "expected 16 numbers (row-major 4x4)");
    Eigen::Vector3d pos{number(pose[3], p + ".pose[3]"), number(pose[7], p + ".pose[7]"),
                        number(pose[11], p + ".pose[11]")};
    if (!included) continue;
    slot_to_node[i] = w.size();
    w.positions.push_back(pos);
    w.node_names.push_back(name);
  }
  w.neighbors.assign(w.positions.size(), {});
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (slot_to_node[i] < 0) continue;
    const std::string p = origin + "[" + std::to_string(i) + "].unobstructed";
    const auto& row = array_of(member(j[i], "unobstructed", origin + "[" + std::to_string(i) + "]"), p);
    if (row.size() != j.size()) schema_error(p, "expected one entry per viewpoint");
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!row[k].is_boolean()) schema_error(p + "[" + std::to_string(k) + "]", "expected a boolean");
      if (row[k].get<bool>() && slot_to_node[k] >= 0 && k != i) {
        add_edge(w, slot_to_node[i], slot_to_node[k], p);
      }
    }
  }
  for (auto& n : w.neighbors) std::sort(n.begin(), n.end());
  w.validate();
  attach_synthetic_features(w);
  return w;
}

World load_connectivity(const std::filesystem::path& path, const std::string& scan, int d_feat) {
  return connectivity_from_json(read_json_file(path), scan, d_feat, path.string());
}

std::vector<Episode> r2r_episodes_from_json(const json& j, const std::map<std::string, World>& worlds,
                                            double d_th, const std::string& origin) {
  array_of(j, origin);
  std::vector<Episode> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = origin + "[" + std::to_string(i) + "]";
    const std::string scan = string_of(member(j[i], "scan", p), p + ".scan");
    auto wit = worlds.find(scan);
    if (wit == worlds.end()) schema_error(p + ".scan", "unknown scan '" + scan + "'");
    const World& world = wit->second;
    std::unordered_map<std::string, int> by_name;
    for (int n = 0; n < world.size(); ++n) by_name.emplace(world.node_names.at(static_cast<std::size_t>(n)), n);

    const auto& path_json = array_of(member(j[i], "path", p), p + ".path");
    std::vector<int> path;
    for (std::size_t k = 0; k < path_json.size(); ++k) {
      const std::string kp = p + ".path[" + std::to_string(k) + "]";
      auto it = by_name.find(string_of(path_json[k], kp));
      if (it == by_name.end()) schema_error(kp, "viewpoint not in scan " + scan);
      path.push_back(it->second);
    }
    const double heading = number(member(j[i], "heading", p), p + ".heading");
    const int sector = wrap_sector(static_cast<int>(std::lround(heading / (std::numbers::pi / 6.0))));
    std::string base_id;
    if (j[i].contains("path_id")) {
      const auto& pid = j[i]["path_id"];
      base_id = pid.is_string() ? pid.get<std::string>() : std::to_string(integer(pid, p + ".path_id"));
    } else {
      base_id = std::to_string(i);
    }
    const auto& instructions = array_of(member(j[i], "instructions", p), p + ".instructions");
    for (std::size_t k = 0; k < instructions.size(); ++k) {
      Episode e;
      e.id = base_id + "_" + std::to_string(k);
      e.scan = scan;
      e.instruction = tokenize(string_of(instructions[k], p + ".instructions[" + std::to_string(k) + "]"));
      e.path = path;
      e.heading = sector;
      e.d_th = d_th;
      e.validate(world);
      out.push_back(std::move(e));
    }
  }
  return out;
}

std::vector<Episode> load_r2r_episodes(const std::filesystem::path& path,
                                       const std::map<std::string, World>& worlds, double d_th) {
  return r2r_episodes_from_json(read_json_file(path), worlds, d_th, path.string());
}

}  // namespace pta
