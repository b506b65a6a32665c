// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.
//
// Synthetic base+motif graphs under a covariate shift.
//
// Motifs (label-determining, node ids local to the motif):
//   house : square 0-1-2-3-0 with roof apex 4 joined to 0 and 1
//           (5 nodes, 6 edges)
//   cycle : 5-cycle 0-1-2-3-4-0 (5 nodes, 5 edges)
//   crane : triangle 0-1-2 with legs 1-3 and 2-4 (5 nodes, 5 edges)
//
// Bases (label-irrelevant, environment-determining):
//   wheel              hub 0 joined to rim cycle 1..n-1        n >= 4
//   tree               binary heap, parent of i is (i-1)/2     n >= 2
//   ladder             two rails of n/2 with rungs             n even, >= 4
//   star               hub 0 joined to leaves 1..n-1           n >= 2
//   path               0-1-...-(n-1)                           n >= 2
//   dorogovtsev_mendes seed triangle; each new node joins both
//                      ends of a uniformly random edge         n >= 3
//   circular_ladder    ladder with both rails closed           n even, >= 6
//
// Each generated graph is one base plus one motif joined by a single
// attachment edge between a uniform base node and a uniform motif node. The
// attachment edge is in neither the motif mask nor the base.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leci/graph.hpp"
#include "leci/rng.hpp"

namespace leci {

enum class MotifKind { kHouse, kCycle, kCrane };
enum class BaseKind {
  kWheel,
  kTree,
  kLadder,
  kStar,
  kPath,
  kDorogovtsevMendes,
  kCircularLadder
};
enum class FeatureMode { kConstant, kDegreeOneHot, kEnvColor };
enum class SplitMode { kBase, kSize };

MotifKind parse_motif(const std::string& name);
BaseKind parse_base(const std::string& name);
FeatureMode parse_feature_mode(const std::string& name);
SplitMode parse_split_mode(const std::string& name);
std::string to_string(MotifKind k);
std::string to_string(BaseKind k);
std::string to_string(FeatureMode m);
std::string to_string(SplitMode m);

inline constexpr MotifKind kAllMotifs[3] = {MotifKind::kHouse, MotifKind::kCycle,
                                            MotifKind::kCrane};

struct EdgeList {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;  // u < v
};

EdgeList make_motif(MotifKind kind);
std::size_t base_min_nodes(BaseKind kind);
// Throws ConfigError when n_nodes is below the family minimum or has the
// wrong parity.
EdgeList make_base(BaseKind kind, std::size_t n_nodes, Rng& rng);

inline constexpr std::size_t kDegreeFeatureDim = 10;

struct GenConfig {
  std::uint64_t seed = 0;
  SplitMode split_mode = SplitMode::kBase;
  std::size_t n_per_class_per_env = 200;  // train
  std::size_t eval_per_class = 100;       // id_val, ood_val, ood_test each
  std::vector<BaseKind> train_bases = {BaseKind::kWheel, BaseKind::kTree,
                                       BaseKind::kLadder};
  BaseKind oodval_base = BaseKind::kStar;
  BaseKind oodtest_base = BaseKind::kPath;
  std::size_t base_size_min = 10;
  std::size_t base_size_max = 20;
  // Size split: train environments are consecutive buckets
  // [edges[i], edges[i+1]); ood ranges are inclusive.
  std::vector<std::size_t> size_bucket_edges = {6, 10, 14, 18};
  std::size_t size_oodval_min = 18, size_oodval_max = 24;
  std::size_t size_oodtest_min = 26, size_oodtest_max = 34;
  FeatureMode feature_mode = FeatureMode::kConstant;
  double noise_edge_prob = 0.0;
};

// Throws ConfigError naming the offending field.
void validate(const GenConfig& cfg);

// True when the ood test base is Dorogovtsev-Mendes (the "motif2" variant).
bool is_motif2(const GenConfig& cfg);

// Human-readable environment names for each split, indexed by env id.
struct EnvManifest {
  std::vector<std::string> train, id_val, ood_val, ood_test;
};
EnvManifest env_names(const GenConfig& cfg);

// Pure function of cfg; graph i of a split draws from a stream forked from
// the master seed by (split, i), so the result is independent of `threads`.
DatasetSplit generate(const GenConfig& cfg, unsigned threads = 1);

// ---- micro universe -------------------------------------------------------

// One enumerated outcome of the micro covariate SCM. Every edge carries a
// canonical label built from fixed node names: base nodes are named by base
// kind and index, motif nodes by motif kind and index, and the motif end of
// the attachment edge uses a motif-independent name.
struct MicroOutcome {
  int env = 0;    // 0: base is a 4-node path, 1: base is a triangle
  int label = 0;  // 0: 2-path motif, 1: 3-star motif
  double prob = 0.0;
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;
  std::vector<std::string> edge_labels;
  std::vector<bool> causal;  // edge belongs to G_C
};

struct MicroUniverse {
  std::vector<MicroOutcome> outcomes;
  std::size_t num_envs = 2;
  std::size_t num_labels = 2;
};

MicroUniverse build_micro_universe();

}  // namespace leci
