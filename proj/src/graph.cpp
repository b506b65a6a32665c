// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include "leci/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "leci/error.hpp"

namespace leci {

void validate(const Graph& g) {
  if (g.x.size() != g.num_nodes * g.feature_dim)
    throw ValidationError("x", "expected " +
                                   std::to_string(g.num_nodes * g.feature_dim) +
                                   " values, got " + std::to_string(g.x.size()));
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  for (const auto& e : g.edges) {
    if (e.u >= g.num_nodes || e.v >= g.num_nodes)
      throw ValidationError("edges", "endpoint out of range (" +
                                         std::to_string(e.u) + "," +
                                         std::to_string(e.v) + ")");
    if (e.u == e.v)
      throw ValidationError("edges", "self-loop at " + std::to_string(e.u));
    if (e.u > e.v)
      throw ValidationError("edges", "pair (" + std::to_string(e.u) + "," +
                                         std::to_string(e.v) +
                                         ") is not ordered u<v");
    if (!seen.insert({e.u, e.v}).second)
      throw ValidationError("edges", "duplicate pair (" + std::to_string(e.u) +
                                         "," + std::to_string(e.v) + ")");
  }
  if (g.motif_mask.size() != g.edges.size())
    throw ValidationError("motif_mask", "length differs from edge count");
  if (g.edge_weight.size() != g.edges.size())
    throw ValidationError("edge_weight", "length differs from edge count");
  for (double w : g.edge_weight)
    if (!(w >= 0.0 && w <= 1.0))
      throw ValidationError("edge_weight", "value outside [0,1]");
  if (g.y < 0) throw ValidationError("y", "negative class index");
  if (g.env < 0) throw ValidationError("env", "negative environment index");
}

Batch make_batch(const std::vector<const Graph*>& graphs) {
  require(!graphs.empty(), "batch: empty graph list");
  Batch b;
  b.num_graphs = graphs.size();
  b.feature_dim = graphs.front()->feature_dim;
  b.node_offset.push_back(0);
  b.edge_offset.push_back(0);
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = *graphs[gi];
    require(g.feature_dim == b.feature_dim,
            "batch: mixed feature dims " + std::to_string(b.feature_dim) +
                " and " + std::to_string(g.feature_dim));
    const auto off = static_cast<std::uint32_t>(b.num_nodes);
    b.x.insert(b.x.end(), g.x.begin(), g.x.end());
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      b.edge_u.push_back(g.edges[e].u + off);
      b.edge_v.push_back(g.edges[e].v + off);
      b.edge_weight.push_back(g.edge_weight[e]);
      b.motif_mask.push_back(g.motif_mask[e]);
      b.edge_graph_id.push_back(static_cast<std::uint32_t>(gi));
    }
    b.node_graph_id.insert(b.node_graph_id.end(), g.num_nodes,
                           static_cast<std::uint32_t>(gi));
    b.num_nodes += g.num_nodes;
    b.node_offset.push_back(b.num_nodes);
    b.edge_offset.push_back(b.edge_u.size());
    b.y.push_back(g.y);
    b.env.push_back(g.env);
  }
  return b;
}

Batch make_batch(const std::vector<Graph>& graphs) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(graphs.size());
  for (const auto& g : graphs) ptrs.push_back(&g);
  return make_batch(ptrs);
}

std::vector<Graph> unbatch(const Batch& b) {
  std::vector<Graph> out(b.num_graphs);
  for (std::size_t gi = 0; gi < b.num_graphs; ++gi) {
    Graph& g = out[gi];
    const std::size_t n0 = b.node_offset[gi], n1 = b.node_offset[gi + 1];
    const std::size_t e0 = b.edge_offset[gi], e1 = b.edge_offset[gi + 1];
    g.num_nodes = n1 - n0;
    g.feature_dim = b.feature_dim;
    g.x.assign(b.x.begin() + static_cast<std::ptrdiff_t>(n0 * b.feature_dim),
               b.x.begin() + static_cast<std::ptrdiff_t>(n1 * b.feature_dim));
    for (std::size_t e = e0; e < e1; ++e) {
      g.edges.push_back({static_cast<std::uint32_t>(b.edge_u[e] - n0),
                         static_cast<std::uint32_t>(b.edge_v[e] - n0)});
      g.edge_weight.push_back(b.edge_weight[e]);
      g.motif_mask.push_back(b.motif_mask[e]);
    }
    g.y = b.y[gi];
    g.env = b.env[gi];
  }
  return out;
}

std::vector<Graph>& split_part(DatasetSplit& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "id_val") return s.id_val;
  if (name == "ood_val") return s.ood_val;
  if (name == "ood_test") return s.ood_test;
  throw ConfigError("unknown split name '" + name + "'");
}

const std::vector<Graph>& split_part(const DatasetSplit& s,
                                     const std::string& name) {
  return split_part(const_cast<DatasetSplit&>(s), name);
}

namespace {

constexpr const char* kHeader = R"({"format":"leci-graphs","version":1})";

void append_real(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

}  // namespace

std::string graph_to_json_line(const Graph& g, const std::string& split) {
  std::string s;
  s.reserve(64 + g.edges.size() * 10 + g.x.size() * 4);
  s += "{\"num_nodes\":";
  s += std::to_string(g.num_nodes);
  s += ",\"edges\":[";
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    if (i) s += ',';
    s += '[';
    s += std::to_string(g.edges[i].u);
    s += ',';
    s += std::to_string(g.edges[i].v);
    s += ']';
  }
  s += "],\"x\":[";
  for (std::size_t r = 0; r < g.num_nodes; ++r) {
    if (r) s += ',';
    s += '[';
    for (std::size_t c = 0; c < g.feature_dim; ++c) {
      if (c) s += ',';
      append_real(s, g.x[r * g.feature_dim + c]);
    }
    s += ']';
  }
  s += "],\"y\":";
  s += std::to_string(g.y);
  s += ",\"env\":";
  s += std::to_string(g.env);
  s += ",\"motif_mask\":[";
  for (std::size_t i = 0; i < g.motif_mask.size(); ++i) {
    if (i) s += ',';
    s += g.motif_mask[i] ? "true" : "false";
  }
  s += "],\"split\":\"";
  s += split;
  s += "\"}";
  return s;
}

std::string part_to_jsonl(const std::vector<Graph>& graphs,
                          const std::string& split) {
  std::string out = kHeader;
  out += '\n';
  for (const auto& g : graphs) {
    out += graph_to_json_line(g, split);
    out += '\n';
  }
  return out;
}

std::string split_to_jsonl(const DatasetSplit& s) {
  std::string out = kHeader;
  out += '\n';
  for (const char* name : kSplitNames)
    for (const auto& g : split_part(s, name)) {
      out += graph_to_json_line(g, name);
      out += '\n';
    }
  return out;
}

namespace {

Graph graph_from_json(const nlohmann::json& j, std::size_t line) {
  auto fail = [line](const std::string& msg) {
    throw ParseError("line " + std::to_string(line) + ": " + msg, line);
  };
  for (const char* key :
       {"num_nodes", "edges", "x", "y", "env", "motif_mask", "split"})
    if (!j.contains(key)) fail(std::string("missing key '") + key + "'");

  Graph g;
  try {
    g.num_nodes = j.at("num_nodes").get<std::size_t>();
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) fail("edge is not a pair");
      g.edges.push_back({e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>()});
    }
    const auto& xs = j.at("x");
    if (!xs.is_array()) fail("x is not an array");
    if (xs.size() != g.num_nodes)
      throw ValidationError("x", "expected " + std::to_string(g.num_nodes) +
                                     " rows, got " + std::to_string(xs.size()));
    g.feature_dim = xs.empty() ? 0 : xs.front().size();
    for (const auto& row : xs) {
      if (!row.is_array() || row.size() != g.feature_dim)
        throw ValidationError("x", "ragged feature rows");
      for (const auto& v : row) g.x.push_back(v.get<double>());
    }
    g.y = j.at("y").get<std::int64_t>();
    g.env = j.at("env").get<std::int64_t>();
    for (const auto& m : j.at("motif_mask")) g.motif_mask.push_back(m.get<bool>());
  } catch (const nlohmann::json::exception& ex) {
    fail(std::string("bad value: ") + ex.what());
  }
  g.edge_weight.assign(g.edges.size(), 1.0);
  validate(g);
  return g;
}

}  // namespace

DatasetSplit split_from_jsonl(const std::string& text) {
  DatasetSplit s;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      throw ParseError("line " + std::to_string(lineno) + ": " + ex.what(),
                       lineno);
    }
    if (!header_seen) {
      if (!j.is_object() || j.value("format", "") != "leci-graphs")
        throw ParseError("line 1: missing leci-graphs header", lineno);
      if (j.value("version", 0) != 1)
        throw ParseError("line 1: unsupported version", lineno);
      header_seen = true;
      continue;
    }
    if (!j.is_object())
      throw ParseError("line " + std::to_string(lineno) + ": not an object",
                       lineno);
    Graph g = graph_from_json(j, lineno);
    const std::string split = j.at("split").get<std::string>();
    try {
      split_part(s, split).push_back(std::move(g));
    } catch (const ConfigError&) {
      throw ValidationError("split", "unknown split '" + split + "' on line " +
                                         std::to_string(lineno));
    }
  }
  if (!header_seen) throw ParseError("empty file: missing header", 0);
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

void save_jsonl(const DatasetSplit& s, const std::filesystem::path& path) {
  write_file(path, split_to_jsonl(s));
}

DatasetSplit load_jsonl(const std::filesystem::path& path) {
  return split_from_jsonl(read_file(path));
}

void save_split_dir(const DatasetSplit& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const char* name : kSplitNames)
    write_file(dir / (std::string(name) + ".jsonl"),
               part_to_jsonl(split_part(s, name), name));
}

DatasetSplit load_split_dir(const std::filesystem::path& dir) {
  DatasetSplit s;
  for (const char* name : kSplitNames) {
    const auto path = dir / (std::string(name) + ".jsonl");
    if (!std::filesystem::exists(path))
      throw ConfigError("missing data file '" + path.string() + "'");
    DatasetSplit part = load_jsonl(path);
    for (const char* other : kSplitNames) {
      auto& src = split_part(part, other);
      auto& dst = split_part(s, other);
      dst.insert(dst.end(), std::make_move_iterator(src.begin()),
                 std::make_move_iterator(src.end()));
    }
  }
  return s;
}

std::size_t count_envs(const std::vector<Graph>& graphs) {
  std::int64_t mx = -1;
  for (const auto& g : graphs) mx = std::max(mx, g.env);
  return static_cast<std::size_t>(mx + 1);
}

std::size_t count_classes(const std::vector<Graph>& graphs) {
  std::int64_t mx = -1;
  for (const auto& g : graphs) mx = std::max(mx, g.y);
  return static_cast<std::size_t>(mx + 1);
}

}  // namespace leci
