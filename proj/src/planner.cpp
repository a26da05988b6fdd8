#include "varsel/planner.hpp"

#include <algorithm>
#include <set>

#include "varsel/fsm_env.hpp"

namespace varsel {

const char* to_string(TargetTag t) {
    switch (t) {
        case TargetTag::Activate: return "A";
        case TargetTag::Deactivate: return "D";
        case TargetTag::One: return "1";
        case TargetTag::Zero: return "0";
    }
    return "?";
}

TargetTag precondition_tag(TargetTag t) {
    switch (t) {
        case TargetTag::Activate: return TargetTag::Zero;
        case TargetTag::Deactivate: return TargetTag::One;
        case TargetTag::One: return TargetTag::Activate;
        case TargetTag::Zero: return TargetTag::Deactivate;
    }
    return TargetTag::Zero;
}

const char* to_string(EdgeKind k) {
    switch (k) {
        case EdgeKind::Conditioning: return "conditioning";
        case EdgeKind::Source: return "source";
        case EdgeKind::Precondition: return "precondition";
        case EdgeKind::Constituent: return "constituent";
        case EdgeKind::Constituency: return "constituency";
    }
    return "?";
}

PlanView::PlanView(const Model& m) : model_(&m) {
    std::map<std::vector<SvId>, SvId> by_constituents;
    SvId next = m.next_id();

    auto group_for = [&](std::vector<SvId> bsvs) -> SvId {
        std::sort(bsvs.begin(), bsvs.end());
        auto it = by_constituents.find(bsvs);
        if (it != by_constituents.end()) return it->second;
        GroupSv g;
        g.id = next++;
        g.name = "G" + std::to_string(gsvs_.size());
        g.constituents = bsvs;
        by_constituents[bsvs] = g.id;
        gsvs_.push_back(std::move(g));
        return gsvs_.back().id;
    };

    auto rewire_sources = [&](const std::vector<SvId>& sources) {
        std::vector<SvId> out;
        std::vector<SvId> groupable;
        for (SvId s : sources) {
            if (m.kind_of(s) == SvKind::Bsv && !m.bsv(s).is_action)
                groupable.push_back(s);
            else
                out.push_back(s);
        }
        if (groupable.size() >= 2)
            out.push_back(group_for(groupable));
        else
            out.insert(out.end(), groupable.begin(), groupable.end());
        std::sort(out.begin(), out.end());
        return out;
    };

    for (const auto& c : m.csvs()) {
        CsvLinks l;
        l.pos = rewire_sources(c.pos_sources);
        l.neg = rewire_sources(c.neg_sources);
        std::vector<SvId> act_owners, deact_owners;
        for (SvId t : c.targets) {
            if (m.kind_of(t) == SvKind::Csv) {
                l.targets.push_back(EventRef{t, true, TargetTag::Activate});
            } else {
                const auto& d = m.dsv(t);
                (d.polarity == DsvPolarity::Activation ? act_owners : deact_owners)
                    .push_back(d.owner);
            }
        }
        auto add_events = [&](std::vector<SvId>& owners, TargetTag tag) {
            if (owners.empty()) return;
            if (owners.size() >= 2) {
                l.targets.push_back(EventRef{group_for(owners), false, tag});
            } else {
                l.targets.push_back(EventRef{owners.front(), false, tag});
            }
        };
        add_events(act_owners, TargetTag::Activate);
        add_events(deact_owners, TargetTag::Deactivate);
        for (const auto& e : l.targets)
            if (!e.is_csv)
                event_conditioners_[{e.sv, static_cast<std::uint8_t>(e.tag)}].push_back(c.id);
        links_[c.id] = std::move(l);
    }
    for (auto& [_, v] : event_conditioners_) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    for (const auto& g : gsvs_) {
        for (SvId b : g.constituents) constituencies_[b].push_back(g.id);
    }
    for (const auto& g : gsvs_) {
        std::set<SvId> sharing;
        for (SvId b : g.constituents)
            for (SvId other : constituencies_[b])
                if (other != g.id) sharing.insert(other);
        constituencies_[g.id].assign(sharing.begin(), sharing.end());
    }
}

bool PlanView::is_gsv(SvId id) const {
    return id >= model_->next_id() && id < model_->next_id() + gsvs_.size();
}

const GroupSv& PlanView::gsv(SvId id) const {
    if (!is_gsv(id)) throw PlanError("not a GSV id");
    return gsvs_[id - model_->next_id()];
}

const std::string& PlanView::name_of(SvId id) const {
    if (is_gsv(id)) return gsv(id).name;
    return model_->name_of(id);
}

const PlanView::CsvLinks& PlanView::links(SvId csv_id) const {
    auto it = links_.find(csv_id);
    if (it == links_.end()) throw PlanError("no links for CSV " + std::to_string(csv_id));
    return it->second;
}

const std::vector<SvId>& PlanView::event_conditioners(SvId base, TargetTag tag) const {
    static const std::vector<SvId> kEmpty;
    auto it = event_conditioners_.find({base, static_cast<std::uint8_t>(tag)});
    return it == event_conditioners_.end() ? kEmpty : it->second;
}

const std::vector<SvId>& PlanView::constituencies(SvId id) const {
    static const std::vector<SvId> kEmpty;
    auto it = constituencies_.find(id);
    return it == constituencies_.end() ? kEmpty : it->second;
}

StateValue PlanView::current(SvId id) const {
    if (!is_gsv(id)) return model_->state_of(id);
    const auto& g = gsv(id);
    bool all_active = true, all_inactive = true;
    for (SvId b : g.constituents) {
        StateValue v = model_->state_of(b);
        all_active &= v == StateValue::Active;
        all_inactive &= v == StateValue::Inactive;
    }
    if (all_active) return StateValue::Active;
    if (all_inactive) return StateValue::Inactive;
    return StateValue::Unobserved;
}

StateValue PlanView::previous(SvId id) const {
    if (!is_gsv(id)) return model_->prev_state_of(id);
    const auto& g = gsv(id);
    bool all_active = true, all_inactive = true;
    for (SvId b : g.constituents) {
        StateValue v = model_->prev_state_of(b);
        all_active &= v == StateValue::Active;
        all_inactive &= v == StateValue::Inactive;
    }
    if (all_active) return StateValue::Active;
    if (all_inactive) return StateValue::Inactive;
    return StateValue::Unobserved;
}

PlanView build_gsvs(const Model& m) { return PlanView(m); }

bool satisfied_by_current(const PlanView& view, SvId sv, TargetTag tag) {
    StateValue cur = view.current(sv);
    StateValue prev = view.previous(sv);
    switch (tag) {
        case TargetTag::One: return cur == StateValue::Active;
        case TargetTag::Zero: return cur != StateValue::Active;
        case TargetTag::Activate:
            return cur == StateValue::Active && prev != StateValue::Active;
        case TargetTag::Deactivate:
            return cur != StateValue::Active && prev == StateValue::Active;
    }
    return false;
}

namespace {

struct AnBuilder {
    const PlanView& view;
    ActionNetwork net;
    std::set<std::tuple<int, int, std::uint8_t>> edge_set;

    explicit AnBuilder(const PlanView& v) : view(v) {}

    std::string label_for(const AnKey& k) const {
        if (k.tag < 0) return view.name_of(k.sv);
        return view.name_of(k.sv) + "(" + to_string(static_cast<TargetTag>(k.tag)) + ")";
    }

    void add_edge(int from, int to, EdgeKind kind) {
        if (edge_set.insert({from, to, static_cast<std::uint8_t>(kind)}).second)
            net.edges.push_back(ActionNetwork::Edge{from, to, kind});
    }

    // Returns the node index; expands it on first encounter. Open nodes are
    // not reopened; the caller just links to them.
    int open(const AnKey& key) {
        int existing = net.find(key);
        if (existing >= 0) return existing;
        int idx = static_cast<int>(net.nodes.size());
        ActionNetwork::Node node;
        node.key = key;
        node.label = label_for(key);
        net.nodes.push_back(node);
        net.index[key] = idx;

        bool is_csv_node = key.tag < 0;
        SvId sv = key.sv;
        TargetTag tag = static_cast<TargetTag>(std::max(key.tag, 0));

        bool satisfied = is_csv_node ? view.model().state_of(sv) == StateValue::Active
                                     : satisfied_by_current(view, sv, tag);
        if (satisfied) {
            net.nodes[idx].satisfied_by_current = true;
            return idx;   // roots are not expanded
        }

        struct Pathway {
            AnKey key;
            EdgeKind kind;
        };
        std::vector<Pathway> pathways;

        if (!is_csv_node) {
            pathways.push_back({AnKey{sv, static_cast<int>(precondition_tag(tag))},
                                EdgeKind::Precondition});
            if (view.is_gsv(sv))
                for (SvId b : view.gsv(sv).constituents)
                    pathways.push_back({AnKey{b, key.tag}, EdgeKind::Constituent});
            for (SvId g : view.constituencies(sv))
                pathways.push_back({AnKey{g, key.tag}, EdgeKind::Constituency});
            if (tag == TargetTag::Activate || tag == TargetTag::Deactivate)
                for (SvId c : view.event_conditioners(sv, tag))
                    pathways.push_back({AnKey{c, -1}, EdgeKind::Conditioning});
        } else {
            const auto& links = view.links(sv);
            for (SvId s : links.pos) {
                if (view.is_gsv(s) || view.model().kind_of(s) == SvKind::Bsv) {
                    pathways.push_back(
                        {AnKey{s, static_cast<int>(TargetTag::One)}, EdgeKind::Source});
                } else {
                    const auto& d = view.model().dsv(s);
                    TargetTag t = d.polarity == DsvPolarity::Activation ? TargetTag::Activate
                                                                        : TargetTag::Deactivate;
                    pathways.push_back({AnKey{d.owner, static_cast<int>(t)}, EdgeKind::Source});
                }
            }
            for (SvId s : links.neg) {
                SvId base = s;
                if (!view.is_gsv(s) && view.model().kind_of(s) == SvKind::Dsv)
                    base = view.model().dsv(s).owner;
                pathways.push_back(
                    {AnKey{base, static_cast<int>(TargetTag::Zero)}, EdgeKind::Source});
            }
            for (SvId up : view.model().conditioners_of(sv))
                pathways.push_back({AnKey{up, -1}, EdgeKind::Conditioning});
        }

        for (const auto& p : pathways) {
            int pre = open(p.key);
            add_edge(pre, net.find(key), p.kind);
        }
        return net.find(key);
    }
};

}  // namespace

ActionNetwork plan(const PlanView& view, const std::vector<std::pair<SvId, TargetTag>>& goals) {
    AnBuilder b(view);
    for (const auto& [sv, tag] : goals) {
        if (!view.is_gsv(sv) && !view.model().contains(sv))
            throw PlanError("unknown goal SV " + std::to_string(sv));
        int idx = b.open(AnKey{sv, static_cast<int>(tag)});
        b.net.goals.push_back(idx);
    }

    // Reachability semantics: roots and action states are given; a state
    // node is supported by its activation/deactivation event, a constituency
    // or (for groups) all constituents; an event node needs its precondition
    // and a conditioner (or, for groups, every constituent event); a CSV
    // needs every one of its source requirements. Everything unsupported is
    // a dead end.
    std::size_t n = b.net.nodes.size();
    std::vector<std::vector<int>> pre_in(n), cond_in(n), cons_in(n), constcy_in(n), src_in(n);
    for (const auto& e : b.net.edges) {
        switch (e.kind) {
            case EdgeKind::Precondition: pre_in[static_cast<std::size_t>(e.to)].push_back(e.from); break;
            case EdgeKind::Conditioning: cond_in[static_cast<std::size_t>(e.to)].push_back(e.from); break;
            case EdgeKind::Constituent: cons_in[static_cast<std::size_t>(e.to)].push_back(e.from); break;
            case EdgeKind::Constituency: constcy_in[static_cast<std::size_t>(e.to)].push_back(e.from); break;
            case EdgeKind::Source: src_in[static_cast<std::size_t>(e.to)].push_back(e.from); break;
        }
    }
    std::vector<char> reachable(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& node = b.net.nodes[i];
        if (node.satisfied_by_current)
            reachable[i] = 1;
        else if (node.key.tag >= 0 && !view.is_gsv(node.key.sv) &&
                 view.model().kind_of(node.key.sv) == SvKind::Bsv &&
                 view.model().bsv(node.key.sv).is_action)
            reachable[i] = 1;   // the agent can take any action
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (reachable[i]) continue;
            const auto& node = b.net.nodes[i];
            bool ok = false;
            if (node.key.tag < 0) {
                // CSV: every source requirement, both polarities.
                ok = true;
                for (int p : src_in[i])
                    if (!reachable[static_cast<std::size_t>(p)]) ok = false;
                if (src_in[i].empty()) ok = false;
            } else {
                TargetTag tag = static_cast<TargetTag>(node.key.tag);
                bool is_event = tag == TargetTag::Activate || tag == TargetTag::Deactivate;
                if (is_event) {
                    bool precondition_ok = false;
                    for (int p : pre_in[i])
                        if (reachable[static_cast<std::size_t>(p)]) precondition_ok = true;
                    bool cause_ok = false;
                    for (int p : cond_in[i])
                        if (reachable[static_cast<std::size_t>(p)]) cause_ok = true;
                    if (!cause_ok && !cons_in[i].empty()) {
                        cause_ok = true;   // a group event via all constituent events
                        for (int p : cons_in[i])
                            if (!reachable[static_cast<std::size_t>(p)]) cause_ok = false;
                    }
                    ok = precondition_ok && cause_ok;
                } else {
                    for (int p : pre_in[i])
                        if (reachable[static_cast<std::size_t>(p)]) ok = true;
                    for (int p : constcy_in[i])
                        if (reachable[static_cast<std::size_t>(p)]) ok = true;
                    if (!ok && !cons_in[i].empty()) {
                        ok = true;
                        for (int p : cons_in[i])
                            if (!reachable[static_cast<std::size_t>(p)]) ok = false;
                    }
                }
            }
            if (ok) {
                reachable[i] = 1;
                changed = true;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) b.net.nodes[i].dead_end = !reachable[i];
    b.net.goal_reachable = true;
    for (int g : b.net.goals)
        if (!reachable[static_cast<std::size_t>(g)]) b.net.goal_reachable = false;
    return b.net;
}

namespace {

bool sources_hold_now(const Model& m, const ConditioningSv& c, SvId action) {
    for (SvId s : c.pos_sources) {
        if (m.kind_of(s) == SvKind::Bsv && m.bsv(s).is_action) {
            if (s != action) return false;
        } else if (m.state_of(s) != StateValue::Active) {
            return false;
        }
    }
    for (SvId s : c.neg_sources) {
        if (m.kind_of(s) == SvKind::Bsv && m.bsv(s).is_action) {
            if (s == action) return false;
        } else if (m.state_of(s) == StateValue::Active) {
            return false;
        }
    }
    return true;
}

// A conditional CSV is expected active only when one of its conditioners is;
// the flags mark the exceptions.
bool prediction_explained(const Model& m, SvId csv_id, SvId action, std::set<SvId>& evisited) {
    const auto& c = m.csv(csv_id);
    if (c.flag != Flag::Conditional) return true;
    if (!evisited.insert(csv_id).second) return false;
    for (SvId k : m.conditioners_of(csv_id)) {
        if (evisited.count(k) != 0) continue;
        if (sources_hold_now(m, m.csv(k), action) && prediction_explained(m, k, action, evisited))
            return true;
    }
    return false;
}

// Whether taking `action` now can turn the CSV active on the next step: all
// non-action sources hold now, action requirements coincide with the
// candidate, the activation is predicted (unconditional-ish flag or a
// fireable conditioner), and some target can actually go active — a DSV
// target needs its owner in the right precondition state now, a CSV target
// needs to be fireable itself.
bool can_fire(const Model& m, SvId csv_id, SvId action, std::set<SvId>& visited) {
    if (!visited.insert(csv_id).second) return false;
    const auto& c = m.csv(csv_id);
    if (!sources_hold_now(m, c, action)) return false;
    {
        std::set<SvId> evisited;
        if (!prediction_explained(m, csv_id, action, evisited)) return false;
    }
    for (SvId t : c.targets) {
        if (m.kind_of(t) == SvKind::Dsv) {
            const auto& d = m.dsv(t);
            StateValue owner = m.state_of(d.owner);
            bool precondition_holds = d.polarity == DsvPolarity::Activation
                                          ? owner != StateValue::Active
                                          : owner == StateValue::Active;
            if (precondition_holds) return true;
        } else if (can_fire(m, t, action, visited)) {
            return true;
        }
    }
    return false;
}

}  // namespace

std::vector<std::pair<SvId, SvId>> candidate_actions(const ActionNetwork& net,
                                                     const PlanView& view) {
    const Model& m = view.model();
    std::vector<std::pair<SvId, SvId>> out;
    for (const auto& node : net.nodes) {
        if (node.key.tag >= 0 || node.dead_end) continue;
        SvId csv_id = node.key.sv;
        const auto& c = m.csv(csv_id);
        for (SvId s : c.pos_sources) {
            if (m.kind_of(s) != SvKind::Bsv || !m.bsv(s).is_action) continue;
            std::set<SvId> visited;
            if (can_fire(m, csv_id, s, visited)) out.push_back({s, csv_id});
        }
    }
    return out;
}

SvId choose_action(const ActionNetwork& net, const PlanView& view, std::mt19937_64& rng,
                   double exploration_rate) {
    const Model& m = view.model();
    std::vector<SvId> actions;
    for (const auto& b : m.bsvs())
        if (b.is_action) actions.push_back(b.id);
    if (actions.empty()) throw PlanError("no actions defined");

    if (rand_unit(rng) < exploration_rate)
        return actions[rand_below(rng, actions.size())];

    std::set<SvId> candidates;
    for (const auto& [action, _] : candidate_actions(net, view)) candidates.insert(action);
    if (candidates.empty()) return actions[rand_below(rng, actions.size())];
    std::vector<SvId> sorted(candidates.begin(), candidates.end());
    return sorted[rand_below(rng, sorted.size())];
}

}  // namespace varsel
