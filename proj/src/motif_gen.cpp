// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include "leci/motif_gen.hpp"

#include <algorithm>
#include <set>
#include <thread>

#include "leci/error.hpp"

namespace leci {

namespace {

struct Named {
  const char* name;
  int value;
};

constexpr Named kMotifNames[] = {{"house", 0}, {"cycle", 1}, {"crane", 2}};
constexpr Named kBaseNames[] = {{"wheel", 0},
                                {"tree", 1},
                                {"ladder", 2},
                                {"star", 3},
                                {"path", 4},
                                {"dorogovtsev_mendes", 5},
                                {"circular_ladder", 6}};

template <std::size_t N>
int lookup(const Named (&table)[N], const std::string& name, const char* what) {
  for (const auto& e : table)
    if (name == e.name) return e.value;
  throw ConfigError(std::string("unknown ") + what + " '" + name + "'");
}

template <std::size_t N>
std::string reverse_lookup(const Named (&table)[N], int v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

void add_edge(EdgeList& g, std::size_t a, std::size_t b) {
  if (a > b) std::swap(a, b);
  g.edges.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)});
}

}  // namespace

MotifKind parse_motif(const std::string& name) {
  return static_cast<MotifKind>(lookup(kMotifNames, name, "motif"));
}
BaseKind parse_base(const std::string& name) {
  return static_cast<BaseKind>(lookup(kBaseNames, name, "base graph"));
}
FeatureMode parse_feature_mode(const std::string& name) {
  if (name == "constant") return FeatureMode::kConstant;
  if (name == "degree_onehot") return FeatureMode::kDegreeOneHot;
  if (name == "env_color") return FeatureMode::kEnvColor;
  throw ConfigError("unknown feature_mode '" + name + "'");
}
SplitMode parse_split_mode(const std::string& name) {
  if (name == "base") return SplitMode::kBase;
  if (name == "size") return SplitMode::kSize;
  throw ConfigError("unknown split_mode '" + name + "'");
}
std::string to_string(MotifKind k) {
  return reverse_lookup(kMotifNames, static_cast<int>(k));
}
std::string to_string(BaseKind k) {
  return reverse_lookup(kBaseNames, static_cast<int>(k));
}
std::string to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::kConstant: return "constant";
    case FeatureMode::kDegreeOneHot: return "degree_onehot";
    case FeatureMode::kEnvColor: return "env_color";
  }
  return "?";
}
std::string to_string(SplitMode m) {
  return m == SplitMode::kBase ? "base" : "size";
}

EdgeList make_motif(MotifKind kind) {
  EdgeList g;
  g.num_nodes = 5;
  switch (kind) {
    case MotifKind::kHouse:
      for (auto [a, b] : {std::pair{0, 1}, {1, 2}, {2, 3}, {0, 3}, {0, 4}, {1, 4}})
        add_edge(g, a, b);
      break;
    case MotifKind::kCycle:
      for (std::size_t i = 0; i < 5; ++i) add_edge(g, i, (i + 1) % 5);
      break;
    case MotifKind::kCrane:
      for (auto [a, b] : {std::pair{0, 1}, {1, 2}, {0, 2}, {1, 3}, {2, 4}})
        add_edge(g, a, b);
      break;
  }
  return g;
}

std::size_t base_min_nodes(BaseKind kind) {
  switch (kind) {
    case BaseKind::kWheel: return 4;
    case BaseKind::kTree: return 2;
    case BaseKind::kLadder: return 4;
    case BaseKind::kStar: return 2;
    case BaseKind::kPath: return 2;
    case BaseKind::kDorogovtsevMendes: return 3;
    case BaseKind::kCircularLadder: return 6;
  }
  return 0;
}

EdgeList make_base(BaseKind kind, std::size_t n, Rng& rng) {
  if (n < base_min_nodes(kind))
    throw ConfigError(to_string(kind) + " needs at least " +
                      std::to_string(base_min_nodes(kind)) + " nodes, got " +
                      std::to_string(n));
  const bool needs_even =
      kind == BaseKind::kLadder || kind == BaseKind::kCircularLadder;
  if (needs_even && n % 2 != 0)
    throw ConfigError(to_string(kind) + " needs an even node count, got " +
                      std::to_string(n));
  EdgeList g;
  g.num_nodes = n;
  switch (kind) {
    case BaseKind::kWheel:
      for (std::size_t i = 1; i < n; ++i) {
        add_edge(g, 0, i);
        add_edge(g, i, i + 1 < n ? i + 1 : 1);
      }
      break;
    case BaseKind::kTree:
      for (std::size_t i = 1; i < n; ++i) add_edge(g, (i - 1) / 2, i);
      break;
    case BaseKind::kLadder:
    case BaseKind::kCircularLadder: {
      const std::size_t k = n / 2;
      for (std::size_t i = 0; i < k; ++i) {
        add_edge(g, i, k + i);
        if (i + 1 < k) {
          add_edge(g, i, i + 1);
          add_edge(g, k + i, k + i + 1);
        }
      }
      if (kind == BaseKind::kCircularLadder) {
        add_edge(g, 0, k - 1);
        add_edge(g, k, 2 * k - 1);
      }
      break;
    }
    case BaseKind::kStar:
      for (std::size_t i = 1; i < n; ++i) add_edge(g, 0, i);
      break;
    case BaseKind::kPath:
      for (std::size_t i = 0; i + 1 < n; ++i) add_edge(g, i, i + 1);
      break;
    case BaseKind::kDorogovtsevMendes:
      add_edge(g, 0, 1);
      add_edge(g, 1, 2);
      add_edge(g, 0, 2);
      for (std::size_t v = 3; v < n; ++v) {
        const Edge e = g.edges[rng.below(g.edges.size())];
        add_edge(g, e.u, v);
        add_edge(g, e.v, v);
      }
      break;
  }
  return g;
}

void validate(const GenConfig& cfg) {
  if (cfg.n_per_class_per_env == 0)
    throw ConfigError("n_per_class_per_env: must be positive");
  if (cfg.eval_per_class == 0)
    throw ConfigError("eval_per_class: must be positive");
  if (cfg.train_bases.empty()) throw ConfigError("train_bases: empty list");
  if (!(cfg.noise_edge_prob >= 0.0 && cfg.noise_edge_prob < 1.0))
    throw ConfigError("noise_edge_prob: must be in [0,1)");
  auto check_range = [](std::size_t lo, std::size_t hi, const char* key) {
    if (lo > hi) throw ConfigError(std::string(key) + ": empty range");
    if (hi - lo < 1 && lo % 2 != 0)
      throw ConfigError(std::string(key) + ": range holds no even size");
  };
  auto check_kind = [](BaseKind k, std::size_t lo, const char* key) {
    if (lo < base_min_nodes(k))
      throw ConfigError(std::string(key) + ": " + to_string(k) +
                        " needs at least " + std::to_string(base_min_nodes(k)) +
                        " nodes");
  };
  if (cfg.split_mode == SplitMode::kBase) {
    check_range(cfg.base_size_min, cfg.base_size_max, "base_size_min");
    const std::size_t lo = cfg.base_size_min + cfg.base_size_min % 2;
    for (auto k : cfg.train_bases) check_kind(k, lo, "train_bases");
    check_kind(cfg.oodval_base, lo, "oodval_base");
    check_kind(cfg.oodtest_base, lo, "oodtest_base");
    std::set<BaseKind> train(cfg.train_bases.begin(), cfg.train_bases.end());
    if (train.size() != cfg.train_bases.size())
      throw ConfigError("train_bases: duplicate entries");
    if (train.count(cfg.oodtest_base))
      throw ConfigError("oodtest_base: must not be a train base");
  } else {
    const auto& e = cfg.size_bucket_edges;
    if (e.size() < 2)
      throw ConfigError("size_bucket_edges: need at least two edges");
    for (std::size_t i = 0; i + 1 < e.size(); ++i) {
      if (e[i] >= e[i + 1])
        throw ConfigError("size_bucket_edges: must be strictly increasing");
      check_range(e[i], e[i + 1] - 1, "size_bucket_edges");
    }
    check_range(cfg.size_oodval_min, cfg.size_oodval_max, "size_oodval_min");
    check_range(cfg.size_oodtest_min, cfg.size_oodtest_max, "size_oodtest_min");
    if (cfg.size_oodtest_min < e.back())
      throw ConfigError(
          "size_oodtest_min: ood test sizes must exceed every train bucket");
    const std::size_t lo = e.front() + e.front() % 2;
    for (auto k : cfg.train_bases) check_kind(k, lo, "train_bases");
  }
}

bool is_motif2(const GenConfig& cfg) {
  return cfg.split_mode == SplitMode::kBase &&
         cfg.oodtest_base == BaseKind::kDorogovtsevMendes;
}

EnvManifest env_names(const GenConfig& cfg) {
  EnvManifest m;
  if (cfg.split_mode == SplitMode::kBase) {
    for (auto k : cfg.train_bases) m.train.push_back(to_string(k));
    m.id_val = m.train;
    m.ood_val = {to_string(cfg.oodval_base)};
    m.ood_test = {to_string(cfg.oodtest_base)};
  } else {
    const auto& e = cfg.size_bucket_edges;
    for (std::size_t i = 0; i + 1 < e.size(); ++i)
      m.train.push_back("size_" + std::to_string(e[i]) + "_" +
                        std::to_string(e[i + 1] - 1));
    m.id_val = m.train;
    m.ood_val = {"size_" + std::to_string(cfg.size_oodval_min) + "_" +
                 std::to_string(cfg.size_oodval_max)};
    m.ood_test = {"size_" + std::to_string(cfg.size_oodtest_min) + "_" +
                  std::to_string(cfg.size_oodtest_max)};
  }
  return m;
}

namespace {

// Base sizes are drawn from the even integers of [lo, hi] for every family,
// so the node-count distribution carries no information about the family.
std::size_t draw_even(std::size_t lo, std::size_t hi, Rng& rng) {
  const std::size_t first = lo + lo % 2;
  const std::size_t count = (hi - first) / 2 + 1;
  return first + 2 * rng.below(count);
}

struct GraphSpec {
  BaseKind base;
  std::size_t size_lo, size_hi;
  MotifKind motif;
  std::int64_t env;
  bool ood;  // colors: unseen color when true
};

Graph build_graph(const GraphSpec& spec, const GenConfig& cfg,
                  std::size_t color_dim, Rng rng) {
  Rng shape_rng = rng.fork(0);
  Rng attach_rng = rng.fork(1);
  Rng noise_rng = rng.fork(2);

  const std::size_t nb = draw_even(spec.size_lo, spec.size_hi, shape_rng);
  EdgeList base = make_base(spec.base, nb, shape_rng);
  if (cfg.noise_edge_prob > 0.0) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> have;
    for (const auto& e : base.edges) have.insert({e.u, e.v});
    for (std::uint32_t a = 0; a < nb; ++a)
      for (std::uint32_t b = a + 1; b < nb; ++b)
        if (noise_rng.uniform() < cfg.noise_edge_prob && !have.count({a, b}))
          base.edges.push_back({a, b});
  }
  const EdgeList motif = make_motif(spec.motif);

  Graph g;
  g.num_nodes = nb + motif.num_nodes;
  std::vector<std::pair<Edge, bool>> all;
  for (const auto& e : base.edges) all.push_back({e, false});
  const auto off = static_cast<std::uint32_t>(nb);
  for (const auto& e : motif.edges) all.push_back({{e.u + off, e.v + off}, true});
  const auto a = static_cast<std::uint32_t>(attach_rng.below(nb));
  const auto b = static_cast<std::uint32_t>(off + attach_rng.below(motif.num_nodes));
  all.push_back({{a, b}, false});
  std::sort(all.begin(), all.end(), [](const auto& l, const auto& r) {
    return std::pair{l.first.u, l.first.v} < std::pair{r.first.u, r.first.v};
  });
  for (const auto& [e, m] : all) {
    g.edges.push_back(e);
    g.motif_mask.push_back(m);
  }
  g.edge_weight.assign(g.edges.size(), 1.0);
  g.y = static_cast<std::int64_t>(spec.motif);
  g.env = spec.env;

  switch (cfg.feature_mode) {
    case FeatureMode::kConstant:
      g.feature_dim = 1;
      g.x.assign(g.num_nodes, 1.0);
      break;
    case FeatureMode::kDegreeOneHot: {
      g.feature_dim = kDegreeFeatureDim;
      std::vector<std::size_t> deg(g.num_nodes, 0);
      for (const auto& e : g.edges) {
        ++deg[e.u];
        ++deg[e.v];
      }
      g.x.assign(g.num_nodes * g.feature_dim, 0.0);
      for (std::size_t v = 0; v < g.num_nodes; ++v)
        g.x[v * g.feature_dim + std::min(deg[v], kDegreeFeatureDim - 1)] = 1.0;
      break;
    }
    case FeatureMode::kEnvColor: {
      // [1, color]: train environments get the unit color e_env, ood
      // graphs the all-ones color that never occurs in training.
      g.feature_dim = 1 + color_dim;
      g.x.assign(g.num_nodes * g.feature_dim, 0.0);
      for (std::size_t v = 0; v < g.num_nodes; ++v) {
        double* row = g.x.data() + v * g.feature_dim;
        row[0] = 1.0;
        for (std::size_t c = 0; c < color_dim; ++c)
          row[1 + c] = spec.ood ? 1.0
                                : (static_cast<std::size_t>(spec.env) == c ? 1.0 : 0.0);
      }
      break;
    }
  }
  return g;
}

}  // namespace

DatasetSplit generate(const GenConfig& cfg, unsigned threads) {
  validate(cfg);
  const Rng master(cfg.seed);
  const bool base_mode = cfg.split_mode == SplitMode::kBase;
  const std::size_t n_train_envs =
      base_mode ? cfg.train_bases.size() : cfg.size_bucket_edges.size() - 1;

  // Graph i of every split has class i % 3; in-distribution splits cycle the
  // environment every 3 graphs so each (class, env) cell is filled evenly.
  auto spec_for = [&](int split, std::size_t i) {
    GraphSpec s{};
    s.motif = kAllMotifs[i % 3];
    const bool in_dist = split <= 1;
    s.ood = !in_dist;
    const std::size_t env = in_dist ? (i / 3) % n_train_envs : 0;
    s.env = static_cast<std::int64_t>(env);
    if (base_mode) {
      s.base = in_dist ? cfg.train_bases[env]
                       : (split == 2 ? cfg.oodval_base : cfg.oodtest_base);
      s.size_lo = cfg.base_size_min;
      s.size_hi = cfg.base_size_max;
    } else {
      s.base = cfg.train_bases[(i / (3 * n_train_envs)) % cfg.train_bases.size()];
      if (in_dist) {
        s.size_lo = cfg.size_bucket_edges[env];
        s.size_hi = cfg.size_bucket_edges[env + 1] - 1;
      } else if (split == 2) {
        s.size_lo = cfg.size_oodval_min;
        s.size_hi = cfg.size_oodval_max;
      } else {
        s.size_lo = cfg.size_oodtest_min;
        s.size_hi = cfg.size_oodtest_max;
      }
    }
    return s;
  };

  const std::size_t counts[4] = {3 * n_train_envs * cfg.n_per_class_per_env,
                                 3 * cfg.eval_per_class, 3 * cfg.eval_per_class,
                                 3 * cfg.eval_per_class};
  DatasetSplit out;
  std::vector<Graph>* parts[4] = {&out.train, &out.id_val, &out.ood_val,
                                  &out.ood_test};
  const unsigned nthreads = std::max(1u, threads);
  for (int split = 0; split < 4; ++split) {
    auto& dst = *parts[split];
    dst.resize(counts[split]);
    const Rng split_rng = master.fork(static_cast<std::uint64_t>(split));
    auto work = [&](unsigned t) {
      for (std::size_t i = t; i < counts[split]; i += nthreads)
        dst[i] = build_graph(spec_for(split, i), cfg, n_train_envs,
                             split_rng.fork(i));
    };
    if (nthreads == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(work, t);
      for (auto& th : pool) th.join();
    }
  }
  return out;
}

MicroUniverse build_micro_universe() {
  struct Part {
    std::size_t n;
    std::vector<std::pair<int, int>> edges;
    const char* name;
  };
  const Part bases[2] = {{4, {{0, 1}, {1, 2}, {2, 3}}, "p"},
                         {3, {{0, 1}, {1, 2}, {0, 2}}, "t"}};
  const Part motifs[2] = {{3, {{0, 1}, {1, 2}}, "l"},
                          {4, {{0, 1}, {0, 2}, {0, 3}}, "s"}};

  MicroUniverse u;
  for (int env = 0; env < 2; ++env)
    for (int label = 0; label < 2; ++label) {
      const Part& b = bases[env];
      const Part& m = motifs[label];
      for (std::size_t attach = 0; attach < b.n; ++attach) {
        MicroOutcome o;
        o.env = env;
        o.label = label;
        o.prob = 0.25 / static_cast<double>(b.n);
        o.num_nodes = b.n + m.n;
        auto base_name = [&](std::size_t i) {
          return std::string("b") + b.name + std::to_string(i);
        };
        auto motif_name = [&](std::size_t i) {
          return std::string("m") + m.name + std::to_string(i);
        };
        for (auto [p, q] : b.edges) {
          o.edges.push_back({static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(q)});
          o.edge_labels.push_back(base_name(p) + "-" + base_name(q));
          o.causal.push_back(false);
        }
        const auto off = static_cast<std::uint32_t>(b.n);
        for (auto [p, q] : m.edges) {
          o.edges.push_back({off + p, off + q});
          o.edge_labels.push_back(motif_name(p) + "-" + motif_name(q));
          o.causal.push_back(true);
        }
        // Attachment joins base node `attach` to motif node 0.
        o.edges.push_back({static_cast<std::uint32_t>(attach), off});
        o.edge_labels.push_back(base_name(attach) + "-m*0");
        o.causal.push_back(false);
        u.outcomes.push_back(std::move(o));
      }
    }
  return u;
}

}  // namespace leci
