#include "varsel/encapsulation.hpp"

#include <algorithm>
#include <climits>
#include <functional>

namespace varsel {

KeyGraph to_keygraph(const ActionNetwork& an) {
    KeyGraph g;
    for (const auto& n : an.nodes) g.labels[n.key] = n.label;
    for (const auto& e : an.edges)
        g.edges.insert({an.nodes[static_cast<std::size_t>(e.from)].key,
                        an.nodes[static_cast<std::size_t>(e.to)].key});
    return g;
}

namespace {

// Drops nodes that no longer reach the goal or are not supported by a root.
void prune_alternative(ActionNetwork& an) {
    bool changed = true;
    while (changed) {
        changed = false;
        std::size_t n = an.nodes.size();
        std::vector<char> to_goal(n, 0), rooted(n, 0);
        for (int g : an.goals)
            if (g >= 0) to_goal[static_cast<std::size_t>(g)] = 1;
        bool more = true;
        while (more) {
            more = false;
            for (const auto& e : an.edges)
                if (to_goal[static_cast<std::size_t>(e.to)] &&
                    !to_goal[static_cast<std::size_t>(e.from)]) {
                    to_goal[static_cast<std::size_t>(e.from)] = 1;
                    more = true;
                }
        }
        for (std::size_t i = 0; i < n; ++i)
            rooted[i] = an.nodes[i].satisfied_by_current ? 1 : 0;
        more = true;
        while (more) {
            more = false;
            for (const auto& e : an.edges)
                if (rooted[static_cast<std::size_t>(e.from)] &&
                    !rooted[static_cast<std::size_t>(e.to)]) {
                    rooted[static_cast<std::size_t>(e.to)] = 1;
                    more = true;
                }
        }
        std::vector<char> keep(n, 0);
        for (std::size_t i = 0; i < n; ++i) keep[i] = to_goal[i] && rooted[i];
        bool all = true;
        for (std::size_t i = 0; i < n; ++i)
            if (!keep[i]) all = false;
        if (all) break;

        ActionNetwork pruned;
        std::vector<int> remap(n, -1);
        for (std::size_t i = 0; i < n; ++i) {
            if (!keep[i]) continue;
            remap[i] = static_cast<int>(pruned.nodes.size());
            pruned.nodes.push_back(an.nodes[i]);
            pruned.index[an.nodes[i].key] = remap[i];
        }
        for (const auto& e : an.edges) {
            int f = remap[static_cast<std::size_t>(e.from)];
            int t = remap[static_cast<std::size_t>(e.to)];
            if (f >= 0 && t >= 0) pruned.edges.push_back(ActionNetwork::Edge{f, t, e.kind});
        }
        for (int g : an.goals)
            if (g >= 0 && remap[static_cast<std::size_t>(g)] >= 0)
                pruned.goals.push_back(remap[static_cast<std::size_t>(g)]);
        pruned.goal_reachable = an.goal_reachable;
        an = std::move(pruned);
        changed = true;
    }
}

}  // namespace

std::vector<ActionNetwork> split_alternatives(const ActionNetwork& an,
                                              std::size_t max_alternatives) {
    // Choice points: nodes with more than one incoming conditioning edge.
    std::map<int, std::vector<std::size_t>> choices;
    for (std::size_t i = 0; i < an.edges.size(); ++i)
        if (an.edges[i].kind == EdgeKind::Conditioning) choices[an.edges[i].to].push_back(i);
    std::vector<std::vector<std::size_t>> points;
    for (auto& [node, edge_ids] : choices)
        if (edge_ids.size() > 1) points.push_back(edge_ids);

    std::size_t combinations = 1;
    for (const auto& p : points) {
        combinations *= p.size();
        if (combinations > max_alternatives)
            throw EncapsulationError("alternative count exceeds the cap of " +
                                     std::to_string(max_alternatives));
    }

    std::vector<ActionNetwork> out;
    for (std::size_t combo = 0; combo < combinations; ++combo) {
        std::set<std::size_t> dropped;
        std::size_t rest = combo;
        for (const auto& p : points) {
            std::size_t pick = rest % p.size();
            rest /= p.size();
            for (std::size_t k = 0; k < p.size(); ++k)
                if (k != pick) dropped.insert(p[k]);
        }
        ActionNetwork alt;
        alt.nodes = an.nodes;
        alt.index = an.index;
        alt.goals = an.goals;
        alt.goal_reachable = an.goal_reachable;
        for (std::size_t i = 0; i < an.edges.size(); ++i)
            if (dropped.count(i) == 0) alt.edges.push_back(an.edges[i]);
        prune_alternative(alt);
        out.push_back(std::move(alt));
    }
    return out;
}

KeyGraph ReducedGraph::as_keygraph() const {
    KeyGraph g;
    g.labels = labels;
    for (const auto& e : edges) g.edges.insert({e.from, e.to});
    return g;
}

namespace {

// Successor map of a key graph.
std::map<AnKey, std::vector<AnKey>> successors(const KeyGraph& g) {
    std::map<AnKey, std::vector<AnKey>> out;
    for (const auto& [from, to] : g.edges) out[from].push_back(to);
    return out;
}

// Immediate common successors of `u`: common nodes reachable from u through
// non-common nodes only.
std::set<AnKey> immediate_common_successors(const KeyGraph& g,
                                            const std::map<AnKey, std::vector<AnKey>>& succ,
                                            const std::set<AnKey>& common, const AnKey& u) {
    std::set<AnKey> found;
    std::set<AnKey> seen;
    std::vector<AnKey> stack{u};
    bool first = true;
    while (!stack.empty()) {
        AnKey cur = stack.back();
        stack.pop_back();
        auto it = succ.find(cur);
        if (it == succ.end()) continue;
        for (const AnKey& next : it->second) {
            if (common.count(next) != 0) {
                found.insert(next);
            } else if (seen.insert(next).second) {
                stack.push_back(next);
            }
        }
        first = false;
    }
    (void)first;
    return found;
}

}  // namespace

ReducedGraph reduce_to_reliable(const std::vector<KeyGraph>& alternatives) {
    ReducedGraph out;
    if (alternatives.empty()) return out;

    std::set<AnKey> common;
    for (const auto& [k, _] : alternatives.front().labels) common.insert(k);
    for (std::size_t i = 1; i < alternatives.size(); ++i) {
        std::set<AnKey> next;
        for (const AnKey& k : common)
            if (alternatives[i].contains(k)) next.insert(k);
        common = std::move(next);
    }
    for (const AnKey& k : common) out.labels[k] = alternatives.front().labels.at(k);

    std::vector<std::map<AnKey, std::vector<AnKey>>> succs;
    succs.reserve(alternatives.size());
    for (const auto& a : alternatives) succs.push_back(successors(a));

    for (const AnKey& u : common) {
        std::set<AnKey> shared =
            immediate_common_successors(alternatives.front(), succs.front(), common, u);
        for (std::size_t i = 1; i < alternatives.size() && !shared.empty(); ++i) {
            std::set<AnKey> here =
                immediate_common_successors(alternatives[i], succs[i], common, u);
            std::set<AnKey> inter;
            for (const AnKey& v : shared)
                if (here.count(v) != 0) inter.insert(v);
            shared = std::move(inter);
        }
        for (const AnKey& v : shared) {
            bool plain = true;
            for (const auto& a : alternatives)
                if (a.edges.count({u, v}) == 0) plain = false;
            // A direct edge in every alternative can still coexist with
            // longer realizations; plain additionally requires no interior.
            out.edges.push_back(ReducedGraph::Edge{u, v, plain});
        }
    }
    std::sort(out.edges.begin(), out.edges.end());
    return out;
}

ReducedGraph reduce_to_reliable(const std::vector<ActionNetwork>& alternatives) {
    std::vector<KeyGraph> gs;
    gs.reserve(alternatives.size());
    for (const auto& a : alternatives) gs.push_back(to_keygraph(a));
    return reduce_to_reliable(gs);
}

namespace {

// Interior of the (u, v) connection inside one alternative: non-common nodes
// on u -> v paths that avoid every other common node.
KeyGraph connection_interior(const KeyGraph& g, const std::set<AnKey>& common, const AnKey& u,
                             const AnKey& v) {
    auto succ = successors(g);
    std::map<AnKey, std::vector<AnKey>> pred;
    for (const auto& [from, to] : g.edges) pred[to].push_back(from);

    std::set<AnKey> from_u;
    std::vector<AnKey> stack;
    if (auto it = succ.find(u); it != succ.end())
        for (const AnKey& n : it->second)
            if (common.count(n) == 0 && from_u.insert(n).second) stack.push_back(n);
    while (!stack.empty()) {
        AnKey cur = stack.back();
        stack.pop_back();
        if (auto it = succ.find(cur); it != succ.end())
            for (const AnKey& n : it->second)
                if (common.count(n) == 0 && from_u.insert(n).second) stack.push_back(n);
    }
    std::set<AnKey> to_v;
    if (auto it = pred.find(v); it != pred.end())
        for (const AnKey& n : it->second)
            if (common.count(n) == 0 && to_v.insert(n).second) stack.push_back(n);
    while (!stack.empty()) {
        AnKey cur = stack.back();
        stack.pop_back();
        if (auto it = pred.find(cur); it != pred.end())
            for (const AnKey& n : it->second)
                if (common.count(n) == 0 && to_v.insert(n).second) stack.push_back(n);
    }
    KeyGraph interior;
    for (const AnKey& n : from_u)
        if (to_v.count(n) != 0) interior.labels[n] = g.labels.at(n);
    for (const auto& [from, to] : g.edges)
        if (interior.contains(from) && interior.contains(to)) interior.edges.insert({from, to});
    return interior;
}

Ean keygraph_to_ean(const KeyGraph& g) {
    Ean e;
    e.labels = g.labels;
    for (const auto& [from, to] : g.edges)
        e.edges.push_back(Ean::Edge{from, to, false, {}});
    return e;
}

}  // namespace

Ean extract_subpolicies(const ReducedGraph& reduced, const std::vector<KeyGraph>& alternatives) {
    std::set<AnKey> common;
    for (const auto& [k, _] : reduced.labels) common.insert(k);

    Ean out;
    out.labels = reduced.labels;
    for (const auto& re : reduced.edges) {
        Ean::Edge edge;
        edge.from = re.from;
        edge.to = re.to;
        std::set<KeyGraph> realizations;
        for (const auto& a : alternatives) {
            KeyGraph interior = connection_interior(a, common, re.from, re.to);
            realizations.insert(std::move(interior));
        }
        bool all_trivial = true;
        for (const auto& r : realizations)
            if (!r.labels.empty()) all_trivial = false;
        if (all_trivial) {
            edge.encapsulated = false;
        } else {
            edge.encapsulated = true;
            for (const auto& r : realizations) edge.alternatives.push_back(keygraph_to_ean(r));
        }
        out.edges.push_back(std::move(edge));
    }
    return out;
}

namespace {

KeyGraph ean_alternative_to_keygraph(const Ean& e) {
    KeyGraph g;
    g.labels = e.labels;
    for (const auto& edge : e.edges) g.edges.insert({edge.from, edge.to});
    return g;
}

}  // namespace

Ean recursive_encapsulate(Ean ean) {
    for (auto& edge : ean.edges) {
        if (!edge.encapsulated || edge.alternatives.size() < 2) continue;

        // Group alternatives sharing at least one node.
        std::size_t n = edge.alternatives.size();
        std::vector<std::size_t> parent(n);
        for (std::size_t i = 0; i < n; ++i) parent[i] = i;
        std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                bool share = false;
                for (const auto& [k, _] : edge.alternatives[i].labels)
                    if (edge.alternatives[j].labels.count(k) != 0) {
                        share = true;
                        break;
                    }
                if (share) parent[find(i)] = find(j);
            }
        std::map<std::size_t, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);

        std::vector<Ean> rebuilt;
        for (const auto& [_, members] : groups) {
            if (members.size() < 2) {
                rebuilt.push_back(std::move(edge.alternatives[members.front()]));
                continue;
            }
            std::vector<KeyGraph> sub;
            std::size_t min_nodes = SIZE_MAX;
            for (std::size_t i : members) {
                sub.push_back(ean_alternative_to_keygraph(edge.alternatives[i]));
                min_nodes = std::min(min_nodes, sub.back().labels.size());
            }
            ReducedGraph r = reduce_to_reliable(sub);
            if (r.labels.size() >= min_nodes && r.labels.size() == sub.front().labels.size()) {
                bool identical = true;
                for (const auto& s : sub)
                    if (!(s == sub.front())) identical = false;
                if (!identical) {
                    // No strict shrink and not identical: leave as leaves.
                    for (std::size_t i : members)
                        rebuilt.push_back(std::move(edge.alternatives[i]));
                    continue;
                }
            }
            Ean nested = extract_subpolicies(r, sub);
            rebuilt.push_back(recursive_encapsulate(std::move(nested)));
        }
        edge.alternatives = std::move(rebuilt);
    }
    return ean;
}

Ean encapsulate(const ActionNetwork& an, std::size_t max_alternatives) {
    auto alternatives = split_alternatives(an, max_alternatives);
    std::vector<KeyGraph> graphs;
    graphs.reserve(alternatives.size());
    for (const auto& a : alternatives) graphs.push_back(to_keygraph(a));
    ReducedGraph reduced = reduce_to_reliable(graphs);
    return recursive_encapsulate(extract_subpolicies(reduced, graphs));
}

}  // namespace varsel
