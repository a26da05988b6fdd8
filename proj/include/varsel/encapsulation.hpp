#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "varsel/planner.hpp"

namespace varsel {

class EncapsulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Minimal directed graph keyed by (sv, tag) pairs; the working form for
// reduction and subpolicy extraction.
struct KeyGraph {
    std::map<AnKey, std::string> labels;
    std::set<std::pair<AnKey, AnKey>> edges;

    bool operator==(const KeyGraph&) const = default;
    bool operator<(const KeyGraph& o) const {
        if (labels != o.labels) return labels < o.labels;
        return edges < o.edges;
    }
    bool contains(const AnKey& k) const { return labels.count(k) != 0; }
};

KeyGraph to_keygraph(const ActionNetwork& an);

// One conditioning alternative per choice point, pruned to nodes that still
// reach the goal and are supported by a root.
std::vector<ActionNetwork> split_alternatives(const ActionNetwork& an,
                                              std::size_t max_alternatives = 4096);

struct ReducedGraph {
    std::map<AnKey, std::string> labels;
    struct Edge {
        AnKey from, to;
        bool plain = false;   // realized by a direct edge in every alternative
        auto operator<=>(const Edge&) const = default;
    };
    std::vector<Edge> edges;

    KeyGraph as_keygraph() const;
};

// Keeps the nodes present in every alternative and the immediate
// common-successor relation shared by all of them. Order-free over the
// alternative list; idempotent.
ReducedGraph reduce_to_reliable(const std::vector<KeyGraph>& alternatives);
ReducedGraph reduce_to_reliable(const std::vector<ActionNetwork>& alternatives);

// Reduced subgoal graph; encapsulated edges carry alternative subnetworks,
// recursively of this same type.
struct Ean {
    std::map<AnKey, std::string> labels;
    struct Edge {
        AnKey from, to;
        bool encapsulated = false;
        std::vector<Ean> alternatives;   // empty for plain edges
    };
    std::vector<Edge> edges;

    std::size_t node_count() const { return labels.size(); }
};

// Collects, for every reduced edge, the subnetwork realizing the connection
// in each alternative and attaches the deduplicated list.
Ean extract_subpolicies(const ReducedGraph& reduced, const std::vector<KeyGraph>& alternatives);

// Groups alternatives sharing at least one node and reduces each group to a
// nested sub-EAN; stops when no group of size >= 2 forms.
Ean recursive_encapsulate(Ean ean);

// Full pipeline: split, reduce, extract, recurse.
Ean encapsulate(const ActionNetwork& an, std::size_t max_alternatives = 4096);

}  // namespace varsel
