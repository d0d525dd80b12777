#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace netdyn {

struct Edge {
    int dst = 0;  // node receiving the influence (row index i in A_ij)
    int src = 0;  // neighbour j
    double weight = 1.0;
    int type = 0;
};

/// Weighted adjacency over n nodes with per-node and per-edge type labels.
/// A(i,j) is the weight of the influence of node j on node i; undirected
/// topologies keep the matrix symmetric.
struct Topology {
    int n = 0;
    bool directed = false;
    bool allow_self_loops = false;
    std::vector<double> adjacency;  // row-major n*n, 0 = no edge
    std::vector<int> node_type;     // size n, dense labels in [0, K)
    std::vector<int> edge_type;     // row-major n*n, -1 where no edge

    Topology() = default;
    explicit Topology(int n_, bool directed_ = false);

    double weight(int i, int j) const { return adjacency[size_t(i) * n + j]; }
    bool has_edge(int i, int j) const { return weight(i, j) != 0.0; }
    void set_edge(int i, int j, double w, int type = 0);
    void remove_edge(int i, int j);

    int num_node_types() const;
    int num_edge_types() const;
    int edge_count() const;           // undirected pairs counted once
    int in_degree(int i) const;       // number of incoming edges (row i)
    double mean_degree() const;

    std::vector<Edge> edges() const;  // directed influence list, one entry per nonzero A(i,j)

    void validate() const;            // invariant check, throws on violation
};

struct ObservationMask {
    std::vector<uint8_t> state_mask;  // n*d, true = observed
    std::vector<uint8_t> adj_mask;    // n*n, true = observed

    static ObservationMask all_true(int n, int d);
    bool node_observed(int i, int d) const;
    bool edge_observed(int i, int j, int n) const;
    bool empty() const { return state_mask.empty() && adj_mask.empty(); }
};

Topology gen_er(int n, double p, uint64_t seed);
Topology gen_ba(int n, int m, uint64_t seed);
Topology load_edge_list(const std::string& path, bool weighted, bool directed);
void save_edge_list(const Topology& t, const std::string& path);
void save_adjacency_csv(const Topology& t, const std::string& path);
Topology perturb_topology(const Topology& t, double eta, uint64_t seed);

}  // namespace netdyn
