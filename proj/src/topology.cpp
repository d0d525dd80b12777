#include "netdyn/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "netdyn/common.hpp"

namespace netdyn {

Topology::Topology(int n_, bool directed_) : n(n_), directed(directed_) {
    if (n < 1) throw ConfigError("topology: node count must be >= 1");
    adjacency.assign(size_t(n) * n, 0.0);
    node_type.assign(n, 0);
    edge_type.assign(size_t(n) * n, -1);
}

void Topology::set_edge(int i, int j, double w, int type) {
    if (i == j && !allow_self_loops) throw ConfigError("topology: self-loop on node " + std::to_string(i));
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("topology: edge weight must be finite and >= 0");
    adjacency[size_t(i) * n + j] = w;
    edge_type[size_t(i) * n + j] = w != 0.0 ? type : -1;
    if (!directed) {
        adjacency[size_t(j) * n + i] = w;
        edge_type[size_t(j) * n + i] = w != 0.0 ? type : -1;
    }
}

void Topology::remove_edge(int i, int j) {
    adjacency[size_t(i) * n + j] = 0.0;
    edge_type[size_t(i) * n + j] = -1;
    if (!directed) {
        adjacency[size_t(j) * n + i] = 0.0;
        edge_type[size_t(j) * n + i] = -1;
    }
}

int Topology::num_node_types() const {
    int k = 0;
    for (int t : node_type) k = std::max(k, t + 1);
    return std::max(k, 1);
}

int Topology::num_edge_types() const {
    int e = 0;
    for (int t : edge_type) e = std::max(e, t + 1);
    return std::max(e, 1);
}

int Topology::edge_count() const {
    int c = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (has_edge(i, j)) ++c;
    if (!directed) {
        int loops = 0;
        for (int i = 0; i < n; ++i)
            if (has_edge(i, i)) ++loops;
        c = (c - loops) / 2 + loops;
    }
    return c;
}

int Topology::in_degree(int i) const {
    int c = 0;
    for (int j = 0; j < n; ++j)
        if (has_edge(i, j)) ++c;
    return c;
}

double Topology::mean_degree() const {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += in_degree(i);
    return s / n;
}

std::vector<Edge> Topology::edges() const {
    std::vector<Edge> out;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (has_edge(i, j))
                out.push_back({i, j, weight(i, j), std::max(edge_type[size_t(i) * n + j], 0)});
    return out;
}

void Topology::validate() const {
    if (int(node_type.size()) != n || adjacency.size() != size_t(n) * n || edge_type.size() != size_t(n) * n)
        throw ConfigError("topology: inconsistent array sizes");
    for (double w : adjacency)
        if (!std::isfinite(w) || w < 0.0) throw ConfigError("topology: weights must be finite and >= 0");
    if (!allow_self_loops)
        for (int i = 0; i < n; ++i)
            if (has_edge(i, i)) throw ConfigError("topology: unexpected self-loop");
    // type labels must be dense in their ranges
    std::set<int> kinds(node_type.begin(), node_type.end());
    for (int k = 0; k < int(kinds.size()); ++k)
        if (!kinds.count(k)) throw ConfigError("topology: node_type labels not dense");
}

ObservationMask ObservationMask::all_true(int n, int d) {
    ObservationMask m;
    m.state_mask.assign(size_t(n) * d, 1);
    m.adj_mask.assign(size_t(n) * n, 1);
    return m;
}

bool ObservationMask::node_observed(int i, int d) const {
    if (state_mask.empty()) return true;
    for (int k = 0; k < d; ++k)
        if (!state_mask[size_t(i) * d + k]) return false;
    return true;
}

bool ObservationMask::edge_observed(int i, int j, int n) const {
    if (adj_mask.empty()) return true;
    return adj_mask[size_t(i) * n + j] != 0;
}

Topology gen_er(int n, double p, uint64_t seed) {
    if (n < 2) throw ConfigError("gen_er: n must be >= 2");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("gen_er: p must be in [0,1]");
    Topology t(n, false);
    Rng rng(seed);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (uniform01(rng) < p) t.set_edge(i, j, 1.0);
    return t;
}

Topology gen_ba(int n, int m, uint64_t seed) {
    if (m < 1 || m >= n) throw ConfigError("gen_ba: require 1 <= m < n");
    Topology t(n, false);
    Rng rng(seed);
    std::vector<int> degree(n, 0);
    // complete core on the first m nodes
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            t.set_edge(i, j, 1.0);
            ++degree[i];
            ++degree[j];
        }
    // repeated-nodes urn: attachment probability proportional to degree
    std::vector<int> urn;
    for (int i = 0; i < m; ++i)
        for (int r = 0; r < degree[i]; ++r) urn.push_back(i);
    for (int v = m; v < n; ++v) {
        std::set<int> targets;
        while (int(targets.size()) < m) {
            int pick;
            if (urn.empty())
                pick = uniform_int(rng, 0, v - 1);  // degenerate m=1 start
            else
                pick = urn[size_t(uniform01(rng) * urn.size())];
            targets.insert(pick);
        }
        for (int u : targets) {
            t.set_edge(v, u, 1.0);
            ++degree[v];
            ++degree[u];
            urn.push_back(u);
            urn.push_back(v);
        }
    }
    return t;
}

Topology load_edge_list(const std::string& path, bool weighted, bool directed) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_edge_list: cannot open " + path);
    struct Rec {
        int i, j;
        double w;
    };
    std::vector<Rec> recs;
    int max_id = -1;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        int i, j;
        if (!(ls >> i >> j) || i < 0 || j < 0)
            throw ConfigError("load_edge_list: parse error at line " + std::to_string(line_no));
        double w = 1.0;
        if (weighted) {
            if (ls >> w) {
                if (w < 0.0) throw ConfigError("load_edge_list: negative weight at line " + std::to_string(line_no));
            } else {
                w = 1.0;
            }
        }
        std::string rest;
        if (ls >> rest) throw ConfigError("load_edge_list: trailing tokens at line " + std::to_string(line_no));
        recs.push_back({i, j, w});
        max_id = std::max({max_id, i, j});
    }
    if (max_id < 0) throw ConfigError("load_edge_list: no edges in " + path);
    Topology t(max_id + 1, directed);
    t.allow_self_loops = true;  // ingested data may carry loops
    for (const auto& r : recs) t.set_edge(r.i, r.j, r.w);
    return t;
}

void save_edge_list(const Topology& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw StageError("save_edge_list: cannot write " + path);
    char buf[96];
    for (int i = 0; i < t.n; ++i) {
        int j_end = t.directed ? t.n : i + 1;
        for (int j = 0; j < j_end; ++j)
            if (t.has_edge(i, j)) {
                snprintf(buf, sizeof buf, "%d %d %.17g\n", i, j, t.weight(i, j));
                out << buf;
            }
    }
}

void save_adjacency_csv(const Topology& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw StageError("save_adjacency_csv: cannot write " + path);
    char buf[48];
    for (int i = 0; i < t.n; ++i) {
        for (int j = 0; j < t.n; ++j) {
            snprintf(buf, sizeof buf, "%.17g", t.weight(i, j));
            out << buf << (j + 1 < t.n ? "," : "\n");
        }
    }
}

Topology perturb_topology(const Topology& t, double eta, uint64_t seed) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("perturb_topology: eta must be in [0,1]");
    Topology out = t;
    Rng rng(seed);
    auto flip = [&](int i, int j) {
        if (uniform01(rng) < eta) {
            if (t.has_edge(i, j))
                out.remove_edge(i, j);
            else
                out.set_edge(i, j, 1.0);
        }
    };
    if (t.directed) {
        for (int i = 0; i < t.n; ++i)
            for (int j = 0; j < t.n; ++j)
                if (i != j || t.allow_self_loops) flip(i, j);
    } else {
        for (int i = 0; i < t.n; ++i)
            for (int j = i + 1; j < t.n; ++j) flip(i, j);
    }
    return out;
}

}  // namespace netdyn
