#pragma once

// Independent reference implementations used only by tests. These transcribe
// the intended semantics directly and must stay decoupled from the library's
// implementation paths.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "varsel/encapsulation.hpp"
#include "varsel/fsm_env.hpp"
#include "varsel/model.hpp"

namespace oracle {

using varsel::StateValue;

struct CsvInstance {
    std::vector<StateValue> pos;       // source states at their relevant step
    std::vector<StateValue> neg;
    std::vector<StateValue> targets;   // current target states
};

struct CsvHalf {
    std::vector<std::size_t> target_indices;
    StateValue state = StateValue::Unobserved;
    std::vector<std::size_t> pos_kept;   // indices into the instance's pos list
    std::vector<std::size_t> neg_kept;
};

struct CsvOutcome {
    bool split = false;
    std::vector<CsvHalf> halves;   // one entry when no split
};

// Literal decision-tree evaluation: satisfaction means every positive source
// active and no negative source active; a mixed target set is first divided
// into an active half and an inactive half sharing the unobserved targets.
inline CsvOutcome evaluate_csv(const CsvInstance& in) {
    auto keep_all = [](std::size_t n) {
        std::vector<std::size_t> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = i;
        return v;
    };

    bool any_pos = false, all_pos = !in.pos.empty();
    for (auto s : in.pos) {
        if (s == StateValue::Active) any_pos = true;
        else all_pos = false;
    }

    std::vector<std::size_t> act, inact, unobs;
    for (std::size_t i = 0; i < in.targets.size(); ++i) {
        if (in.targets[i] == StateValue::Active) act.push_back(i);
        else if (in.targets[i] == StateValue::Inactive) inact.push_back(i);
        else unobs.push_back(i);
    }

    CsvOutcome out;
    std::vector<std::vector<std::size_t>> target_sets;
    if (any_pos && !act.empty() && !inact.empty()) {
        out.split = true;
        auto a = act;
        a.insert(a.end(), unobs.begin(), unobs.end());
        auto b = inact;
        b.insert(b.end(), unobs.begin(), unobs.end());
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        target_sets.push_back(a);
        target_sets.push_back(b);
    } else {
        target_sets.push_back(keep_all(in.targets.size()));
    }

    for (const auto& tset : target_sets) {
        CsvHalf half;
        half.target_indices = tset;
        half.pos_kept = keep_all(in.pos.size());
        half.neg_kept = keep_all(in.neg.size());
        bool has_active = false, has_inactive = false;
        for (std::size_t i : tset) {
            if (in.targets[i] == StateValue::Active) has_active = true;
            if (in.targets[i] == StateValue::Inactive) has_inactive = true;
        }
        if (!any_pos) {
            half.state = StateValue::Unobserved;
        } else if (has_active) {
            half.state = StateValue::Active;
            half.pos_kept.clear();
            for (std::size_t i = 0; i < in.pos.size(); ++i)
                if (in.pos[i] == StateValue::Active) half.pos_kept.push_back(i);
            half.neg_kept.clear();
            for (std::size_t i = 0; i < in.neg.size(); ++i)
                if (in.neg[i] != StateValue::Active) half.neg_kept.push_back(i);
        } else if (!has_inactive) {
            half.state = StateValue::Unobserved;
        } else if (!all_pos) {
            half.state = StateValue::Unobserved;
        } else {
            bool any_neg = false;
            for (auto s : in.neg)
                if (s == StateValue::Active) any_neg = true;
            if (any_neg) {
                half.state = StateValue::Unobserved;
                half.neg_kept.clear();
                for (std::size_t i = 0; i < in.neg.size(); ++i)
                    if (in.neg[i] == StateValue::Active) half.neg_kept.push_back(i);
            } else {
                half.state = StateValue::Inactive;
            }
        }
        out.halves.push_back(std::move(half));
    }
    return out;
}

// Plain state evaluation of an instance against possibly refined source
// lists (subsets of the original indices).
inline StateValue evaluate_csv_state_only(const CsvInstance& in,
                                          const std::vector<std::size_t>& pos_kept,
                                          const std::vector<std::size_t>& neg_kept) {
    bool any_pos = false, all_pos = !pos_kept.empty();
    for (std::size_t i : pos_kept) {
        if (in.pos[i] == StateValue::Active) any_pos = true;
        else all_pos = false;
    }
    if (!any_pos) return StateValue::Unobserved;
    bool has_active = false, has_inactive = false;
    for (auto t : in.targets) {
        if (t == StateValue::Active) has_active = true;
        if (t == StateValue::Inactive) has_inactive = true;
    }
    if (has_active) return StateValue::Active;
    if (!has_inactive) return StateValue::Unobserved;
    if (!all_pos) return StateValue::Unobserved;
    for (std::size_t i : neg_kept)
        if (in.neg[i] == StateValue::Active) return StateValue::Unobserved;
    return StateValue::Inactive;
}

// BFS path existence in a key graph.
inline bool path_exists(const varsel::KeyGraph& g, const varsel::AnKey& from,
                        const varsel::AnKey& to) {
    if (from == to) return true;
    std::set<varsel::AnKey> seen{from};
    std::vector<varsel::AnKey> stack{from};
    while (!stack.empty()) {
        auto cur = stack.back();
        stack.pop_back();
        for (const auto& [a, b] : g.edges) {
            if (!(a == cur)) continue;
            if (b == to) return true;
            if (seen.insert(b).second) stack.push_back(b);
        }
    }
    return false;
}

// Expected episode length under an optimal policy, by value iteration over
// the 64 cell configurations. Episodes end when cell 1 holds G.
inline double optimal_expected_steps(const varsel::FsmSpec& spec) {
    using varsel::CellState;
    auto idx = [](CellState a, CellState b) {
        return static_cast<std::size_t>(a) * 8 + static_cast<std::size_t>(b);
    };
    std::vector<double> value(64, 1e9);
    for (int b = 0; b < 8; ++b) value[idx(CellState::G, static_cast<CellState>(b))] = 0;

    auto first_match = [&](CellState c1, CellState c2, int action) -> const varsel::Transition* {
        for (const auto& t : spec.transitions) {
            if (!t.pre1.matches(c1) || !t.pre2.matches(c2)) continue;
            if (t.action.has_value() && *t.action != action) continue;
            return &t;
        }
        return nullptr;
    };

    for (int sweep = 0; sweep < 10000; ++sweep) {
        double delta = 0;
        for (int a8 = 0; a8 < 8; ++a8) {
            for (int b8 = 0; b8 < 8; ++b8) {
                CellState c1 = static_cast<CellState>(a8), c2 = static_cast<CellState>(b8);
                if (c1 == CellState::G) continue;
                double best = 1e9;
                for (int action = 0; action < spec.n_actions; ++action) {
                    const auto* t = first_match(c1, c2, action);
                    double v;
                    if (t == nullptr) {
                        v = 1 + value[idx(c1, c2)];
                    } else {
                        v = 1;
                        for (const auto& o : t->outcomes) {
                            CellState n1 = o.cell1.apply(c1), n2 = o.cell2.apply(c2);
                            v += o.probability * value[idx(n1, n2)];
                        }
                    }
                    best = std::min(best, v);
                }
                double old = value[idx(c1, c2)];
                value[idx(c1, c2)] = best;
                delta = std::max(delta, std::abs(best - old));
            }
        }
        if (delta < 1e-12) break;
    }
    return value[idx(CellState::Empty, CellState::Empty)];
}

// Canonical multiset of transition records for inclusion checks.
inline std::multiset<std::string> transition_multiset(const varsel::FsmSpec& spec) {
    std::multiset<std::string> out;
    for (const auto& t : spec.transitions) {
        std::string k;
        k += t.pre1.any ? "*" : varsel::to_string(t.pre1.state);
        k += "|";
        k += t.pre2.any ? "*" : varsel::to_string(t.pre2.state);
        k += "|";
        k += t.action.has_value() ? std::to_string(*t.action) : "*";
        for (const auto& o : t.outcomes) {
            k += "|";
            k += o.cell1.keep ? "=" : varsel::to_string(o.cell1.state);
            k += ",";
            k += o.cell2.keep ? "=" : varsel::to_string(o.cell2.state);
            k += ",";
            k += std::to_string(o.probability);
        }
        out.insert(k);
    }
    return out;
}

}  // namespace oracle
