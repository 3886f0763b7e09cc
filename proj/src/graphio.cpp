#include "muchgcn/graphio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "muchgcn/rng.hpp"

namespace muchgcn {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<int> read_int_lines(const fs::path& p) {
  std::vector<int> out;
  for (const std::string& line : read_lines(p)) {
    try {
      out.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw std::runtime_error("bad integer line in " + p.string() + ": '" + line + "'");
    }
  }
  return out;
}

/// Remap arbitrary integer labels to 0..C-1 preserving numeric order.
int remap_labels(std::vector<int>& labels) {
  std::set<int> distinct(labels.begin(), labels.end());
  std::map<int, int> index;
  int next = 0;
  for (int v : distinct) index[v] = next++;
  for (int& v : labels) v = index[v];
  return next;
}

}  // namespace

TuData read_tu_files(const fs::path& dir, const std::string& name) {
  const fs::path base = dir / name;
  const fs::path a_path = base / (name + "_A.txt");
  const fs::path ind_path = base / (name + "_graph_indicator.txt");
  const fs::path lab_path = base / (name + "_graph_labels.txt");
  const fs::path nl_path = base / (name + "_node_labels.txt");
  if (!fs::exists(base)) throw std::runtime_error("dataset directory not found: " + base.string());

  std::vector<int> indicator = read_int_lines(ind_path);  // 1-based graph id per node
  int total_nodes = static_cast<int>(indicator.size());
  int num_graphs = 0;
  for (int g : indicator) {
    if (g < 1) throw std::runtime_error("graph indicator must be 1-based in " + ind_path.string());
    num_graphs = std::max(num_graphs, g);
  }

  TuData raw;
  raw.graph_labels = read_int_lines(lab_path);
  if (static_cast<int>(raw.graph_labels.size()) != num_graphs)
    throw std::runtime_error("graph label count does not match indicator in " + lab_path.string());
  raw.num_classes = remap_labels(raw.graph_labels);

  // Per-graph node counts and local ids (TU node ids are global and 1-based).
  std::vector<int> graph_size(num_graphs, 0);
  std::vector<int> local_id(total_nodes), graph_of(total_nodes);
  for (int v = 0; v < total_nodes; ++v) {
    int g = indicator[v] - 1;
    graph_of[v] = g;
    local_id[v] = graph_size[g]++;
  }
  raw.adjacency.reserve(num_graphs);
  for (int g = 0; g < num_graphs; ++g) {
    if (graph_size[g] == 0) throw std::runtime_error("graph with zero nodes in " + ind_path.string());
    raw.adjacency.emplace_back(std::vector<int>{graph_size[g], graph_size[g]});
  }

  for (const std::string& line : read_lines(a_path)) {
    std::istringstream ss(line);
    long i = 0, j = 0;
    char comma = 0;
    if (!(ss >> i >> comma >> j) || comma != ',')
      throw std::runtime_error("bad edge line in " + a_path.string() + ": '" + line + "'");
    if (i < 1 || i > total_nodes || j < 1 || j > total_nodes)
      throw std::runtime_error("edge endpoint out of range in " + a_path.string() + ": '" + line + "'");
    int u = static_cast<int>(i) - 1, w = static_cast<int>(j) - 1;
    if (graph_of[u] != graph_of[w])
      throw std::runtime_error("edge crosses graphs in " + a_path.string() + ": '" + line + "'");
    if (u == w) continue;  // drop self-loops; adjacency keeps a zero diagonal
    Array& a = raw.adjacency[graph_of[u]];
    a.at(local_id[u], local_id[w]) = 1.0;
    a.at(local_id[w], local_id[u]) = 1.0;
  }

  if (fs::exists(nl_path)) {
    std::vector<int> nl = read_int_lines(nl_path);
    if (static_cast<int>(nl.size()) != total_nodes)
      throw std::runtime_error("node label count does not match indicator in " + nl_path.string());
    raw.num_node_labels = remap_labels(nl);
    raw.node_labels.resize(num_graphs);
    for (int g = 0; g < num_graphs; ++g) raw.node_labels[g].resize(graph_size[g]);
    for (int v = 0; v < total_nodes; ++v) raw.node_labels[graph_of[v]][local_id[v]] = nl[v];
  }
  return raw;
}

Array build_features(const Array& adjacency, const std::vector<int>* node_labels,
                     int num_node_labels, FeatureMode mode) {
  int n = adjacency.rows();
  std::vector<double> degree(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) degree[i] += adjacency.at(i, j);

  if (mode == FeatureMode::kSocial) {
    Array f({n, 1});
    for (int i = 0; i < n; ++i) f.at(i, 0) = degree[i];
    return f;
  }

  // Bio recipe: one-hot node label, degree, local clustering coefficient.
  int onehot = node_labels ? num_node_labels : 0;
  Array f({n, onehot + 2});
  for (int i = 0; i < n; ++i) {
    if (node_labels) f.at(i, (*node_labels)[i]) = 1.0;
    f.at(i, onehot) = degree[i];
    // clustering = 2*closed_triangles / (deg*(deg-1)); zero when deg < 2
    if (degree[i] >= 2.0) {
      std::vector<int> nb;
      for (int j = 0; j < n; ++j)
        if (adjacency.at(i, j) != 0.0) nb.push_back(j);
      int tri = 0;
      for (size_t p = 0; p < nb.size(); ++p)
        for (size_t q = p + 1; q < nb.size(); ++q)
          if (adjacency.at(nb[p], nb[q]) != 0.0) ++tri;
      f.at(i, onehot + 1) = 2.0 * tri / (degree[i] * (degree[i] - 1.0));
    }
  }
  return f;
}

Dataset build_dataset(const TuData& raw, FeatureMode mode, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  ds.num_classes = raw.num_classes;
  for (size_t g = 0; g < raw.adjacency.size(); ++g) {
    Graph gr;
    gr.adjacency = raw.adjacency[g];
    const std::vector<int>* nl =
        raw.node_labels.empty() ? nullptr : &raw.node_labels[g];
    gr.features = build_features(gr.adjacency, nl, raw.num_node_labels, mode);
    gr.label = raw.graph_labels[g];
    ds.max_nodes = std::max(ds.max_nodes, gr.n());
    ds.input_dim = gr.features.cols();
    ds.graphs.push_back(std::move(gr));
  }
  return ds;
}

Dataset parse_tu_dataset(const fs::path& dir, const std::string& name, FeatureMode mode) {
  return build_dataset(read_tu_files(dir, name), mode, name);
}

void write_tu_dataset(const fs::path& dir, const std::string& name, const Dataset& ds) {
  const fs::path base = dir / name;
  fs::create_directories(base);
  std::ofstream a(base / (name + "_A.txt"));
  std::ofstream ind(base / (name + "_graph_indicator.txt"));
  std::ofstream lab(base / (name + "_graph_labels.txt"));
  if (!a || !ind || !lab) throw std::runtime_error("cannot write dataset under " + base.string());
  long node_base = 0;
  for (size_t g = 0; g < ds.graphs.size(); ++g) {
    const Graph& gr = ds.graphs[g];
    for (int i = 0; i < gr.n(); ++i) {
      ind << (g + 1) << "\n";
      for (int j = 0; j < gr.n(); ++j)
        if (gr.adjacency.at(i, j) != 0.0) a << (node_base + i + 1) << ", " << (node_base + j + 1) << "\n";
    }
    lab << gr.label << "\n";
    node_base += gr.n();
  }
}

SyntheticFamily synthetic_family_from_string(const std::string& s) {
  if (s == "cycles_vs_chords") return SyntheticFamily::kCyclesVsChords;
  if (s == "k_communities") return SyntheticFamily::kKCommunities;
  throw std::invalid_argument("unknown synthetic family: " + s);
}

namespace {

Graph make_cycle_graph(int n, bool with_chords, Rng& rng) {
  Graph g;
  g.adjacency = Array({n, n});
  for (int i = 0; i < n; ++i) {
    int j = (i + 1) % n;
    g.adjacency.at(i, j) = g.adjacency.at(j, i) = 1.0;
  }
  if (with_chords) {
    int want = (n + 3) / 4;  // ceil(n/4)
    std::vector<std::pair<int, int>> candidates;
    for (int u = 0; u < n; ++u)
      for (int v = u + 2; v < n; ++v)
        if (!(u == 0 && v == n - 1)) candidates.emplace_back(u, v);  // exclude cycle edges
    rng.shuffle(candidates);
    for (int c = 0; c < want; ++c) {
      auto [u, v] = candidates[c];
      g.adjacency.at(u, v) = g.adjacency.at(v, u) = 1.0;
    }
  }
  g.label = with_chords ? 1 : 0;
  return g;
}

Graph make_community_graph(int k, Rng& rng) {
  int n = rng.uniform_int(12, 18);
  std::vector<int> block(n);
  for (int i = 0; i < n; ++i) block[i] = i * k / n;  // near-equal contiguous blocks
  Graph g;
  g.adjacency = Array({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double p = block[i] == block[j] ? 0.8 : 0.05;
      if (rng.uniform() < p) g.adjacency.at(i, j) = g.adjacency.at(j, i) = 1.0;
    }
  g.label = k - 2;
  return g;
}

}  // namespace

Dataset generate_synthetic(SyntheticFamily family, int count, uint64_t seed) {
  if (count <= 0) throw std::invalid_argument("generate_synthetic: count must be positive");
  Rng root(seed);
  Dataset ds;
  ds.num_classes = 2;
  for (int g = 0; g < count; ++g) {
    Rng rng = root.stream("graph", static_cast<uint64_t>(g));
    Graph gr;
    if (family == SyntheticFamily::kCyclesVsChords) {
      ds.name = "cycles_vs_chords";
      int n = rng.uniform_int(8, 20);
      gr = make_cycle_graph(n, g % 2 == 1, rng);
    } else {
      ds.name = "k_communities";
      gr = make_community_graph(2 + g % 2, rng);
    }
    gr.features = build_features(gr.adjacency, nullptr, 0, FeatureMode::kSocial);
    ds.max_nodes = std::max(ds.max_nodes, gr.n());
    ds.input_dim = gr.features.cols();
    ds.graphs.push_back(std::move(gr));
  }
  return ds;
}

std::vector<std::pair<std::vector<int>, std::vector<int>>> make_folds(
    std::span<const int> labels, int k, uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_folds: need at least 2 folds");
  if (static_cast<int>(labels.size()) < k)
    throw std::invalid_argument("make_folds: fewer examples than folds");
  // Group indices per class, shuffle each group, deal round-robin so every
  // fold sees near-identical class proportions.
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) by_class[labels[i]].push_back(i);
  Rng root(seed);
  std::vector<std::vector<int>> fold_members(k);
  int cursor = 0;
  for (auto& [cls, members] : by_class) {
    Rng rng = root.stream("class", static_cast<uint64_t>(cls));
    rng.shuffle(members);
    for (int idx : members) fold_members[cursor++ % k].push_back(idx);
  }
  std::vector<std::pair<std::vector<int>, std::vector<int>>> folds(k);
  for (int f = 0; f < k; ++f) {
    std::vector<int>& test = folds[f].second;
    std::vector<int>& train = folds[f].first;
    test = fold_members[f];
    std::sort(test.begin(), test.end());
    for (int g = 0; g < k; ++g)
      if (g != f) train.insert(train.end(), fold_members[g].begin(), fold_members[g].end());
    std::sort(train.begin(), train.end());
  }
  return folds;
}

Array Batch::graph_features(int b) const {
  int n = max_nodes(), d = input_dim();
  Array out({n, d});
  std::copy(features.data.begin() + static_cast<long>(b) * n * d,
            features.data.begin() + static_cast<long>(b + 1) * n * d, out.data.begin());
  return out;
}

Array Batch::graph_adjacency(int b) const {
  int n = max_nodes();
  Array out({n, n});
  std::copy(adjacency.data.begin() + static_cast<long>(b) * n * n,
            adjacency.data.begin() + static_cast<long>(b + 1) * n * n, out.data.begin());
  return out;
}

Array Batch::graph_mask(int b) const {
  int n = max_nodes();
  Array out({n});
  std::copy(node_mask.data.begin() + static_cast<long>(b) * n,
            node_mask.data.begin() + static_cast<long>(b + 1) * n, out.data.begin());
  return out;
}

std::vector<Batch> batchify(const Dataset& ds, std::span<const int> indices, int batch_size,
                            int max_nodes) {
  if (batch_size < 1) throw std::invalid_argument("batchify: batch_size must be positive");
  std::vector<Batch> out;
  for (size_t start = 0; start < indices.size(); start += batch_size) {
    size_t stop = std::min(indices.size(), start + batch_size);
    int bsz = static_cast<int>(stop - start);
    Batch b;
    b.features = Array({bsz, max_nodes, ds.input_dim});
    b.adjacency = Array({bsz, max_nodes, max_nodes});
    b.node_mask = Array({bsz, max_nodes});
    for (int bi = 0; bi < bsz; ++bi) {
      const Graph& g = ds.graphs.at(indices[start + bi]);
      if (g.n() > max_nodes)
        throw std::invalid_argument("batchify: graph with " + std::to_string(g.n()) +
                                    " nodes exceeds max_nodes=" + std::to_string(max_nodes));
      if (g.features.cols() != ds.input_dim)
        throw std::invalid_argument("batchify: inconsistent feature width");
      long frow = (static_cast<long>(bi) * max_nodes) * ds.input_dim;
      for (int i = 0; i < g.n(); ++i)
        for (int j = 0; j < ds.input_dim; ++j)
          b.features.data[frow + static_cast<long>(i) * ds.input_dim + j] = g.features.at(i, j);
      long arow = static_cast<long>(bi) * max_nodes * max_nodes;
      for (int i = 0; i < g.n(); ++i)
        for (int j = 0; j < g.n(); ++j)
          b.adjacency.data[arow + static_cast<long>(i) * max_nodes + j] = g.adjacency.at(i, j);
      for (int i = 0; i < g.n(); ++i) b.node_mask.data[static_cast<long>(bi) * max_nodes + i] = 1.0;
      b.labels.push_back(g.label);
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace muchgcn
