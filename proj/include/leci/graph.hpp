// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace leci {

struct Edge {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

// Undirected graph with node features, a graph label, an environment id and
// a ground-truth mask over edges marking the label-determining motif.
struct Graph {
  std::size_t num_nodes = 0;
  std::size_t feature_dim = 0;
  std::vector<double> x;  // num_nodes x feature_dim, row-major
  std::vector<Edge> edges;  // u < v
  std::vector<double> edge_weight;  // one per edge, in [0,1]
  std::int64_t y = 0;
  std::int64_t env = 0;
  std::vector<bool> motif_mask;  // one per edge

  friend bool operator==(const Graph&, const Graph&) = default;
};

// Throws ValidationError naming the offending field.
void validate(const Graph& g);

// Disjoint union of graphs. Graph i owns nodes [node_offset[i],
// node_offset[i+1]) and edges [edge_offset[i], edge_offset[i+1]).
struct Batch {
  std::size_t num_graphs = 0;
  std::size_t num_nodes = 0;
  std::size_t feature_dim = 0;
  std::vector<double> x;
  std::vector<std::uint32_t> edge_u;
  std::vector<std::uint32_t> edge_v;
  std::vector<double> edge_weight;
  std::vector<bool> motif_mask;
  std::vector<std::uint32_t> node_graph_id;
  std::vector<std::uint32_t> edge_graph_id;
  std::vector<std::size_t> node_offset;
  std::vector<std::size_t> edge_offset;
  std::vector<std::int64_t> y;
  std::vector<std::int64_t> env;

  std::size_t num_edges() const { return edge_u.size(); }
};

Batch make_batch(const std::vector<const Graph*>& graphs);
Batch make_batch(const std::vector<Graph>& graphs);
std::vector<Graph> unbatch(const Batch& batch);

struct DatasetSplit {
  std::vector<Graph> train;
  std::vector<Graph> id_val;
  std::vector<Graph> ood_val;
  std::vector<Graph> ood_test;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

inline constexpr const char* kSplitNames[4] = {"train", "id_val", "ood_val",
                                               "ood_test"};

std::vector<Graph>& split_part(DatasetSplit& s, const std::string& name);
const std::vector<Graph>& split_part(const DatasetSplit& s,
                                     const std::string& name);

// JSON-lines encoding. The first line is {"format":"leci-graphs","version":1};
// each following line holds one graph with keys in the fixed order
// num_nodes, edges, x, y, env, motif_mask, split. Reals use 17 significant
// digits. Edge weights are not stored; loaded graphs carry unit weights.
std::string graph_to_json_line(const Graph& g, const std::string& split);
std::string split_to_jsonl(const DatasetSplit& s);
std::string part_to_jsonl(const std::vector<Graph>& graphs,
                          const std::string& split);

// Parses JSON-lines text; graphs are routed by their "split" key.
// Throws ParseError (with line number) or ValidationError.
DatasetSplit split_from_jsonl(const std::string& text);

void save_jsonl(const DatasetSplit& s, const std::filesystem::path& path);
DatasetSplit load_jsonl(const std::filesystem::path& path);

// One file per split: <dir>/train.jsonl, id_val.jsonl, ood_val.jsonl,
// ood_test.jsonl.
void save_split_dir(const DatasetSplit& s, const std::filesystem::path& dir);
DatasetSplit load_split_dir(const std::filesystem::path& dir);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

// Number of distinct env ids (max + 1) and labels (max + 1) in a list.
std::size_t count_envs(const std::vector<Graph>& graphs);
std::size_t count_classes(const std::vector<Graph>& graphs);

}  // namespace leci
