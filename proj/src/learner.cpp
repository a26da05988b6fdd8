#include "varsel/learner.hpp"

#include <algorithm>

#include "varsel/significance.hpp"

namespace varsel {

namespace {

bool erase_sorted(std::vector<SvId>& v, SvId id) {
    auto it = std::lower_bound(v.begin(), v.end(), id);
    if (it == v.end() || *it != id) return false;
    v.erase(it);
    return true;
}

// Removes positive sources that were not active and negative sources that
// were active; used when a target fired.
void refine_on_active(Model& m, ConditioningSv& c, StepReport& report, bool reset_counters) {
    Refinement r;
    r.csv = c.id;
    for (auto it = c.pos_sources.begin(); it != c.pos_sources.end();) {
        if (m.source_state(*it) != StateValue::Active) {
            r.removed_pos.push_back(*it);
            it = c.pos_sources.erase(it);
        } else {
            ++it;
        }
    }
    for (auto it = c.neg_sources.begin(); it != c.neg_sources.end();) {
        if (m.source_state(*it) == StateValue::Active) {
            r.removed_neg.push_back(*it);
            it = c.neg_sources.erase(it);
        } else {
            ++it;
        }
    }
    if (!r.removed_pos.empty() || !r.removed_neg.empty()) {
        if (reset_counters)
            for (auto& k : c.counters) k = NceCounters{};
        report.refinements.push_back(std::move(r));
    }
}

// Keeps only the active negative sources; used when an active negative
// source explains the suppression of inactive targets.
void refine_neg_keep_active(Model& m, ConditioningSv& c, StepReport& report, bool reset_counters) {
    Refinement r;
    r.csv = c.id;
    for (auto it = c.neg_sources.begin(); it != c.neg_sources.end();) {
        if (m.source_state(*it) != StateValue::Active) {
            r.removed_neg.push_back(*it);
            it = c.neg_sources.erase(it);
        } else {
            ++it;
        }
    }
    if (!r.removed_neg.empty()) {
        if (reset_counters)
            for (auto& k : c.counters) k = NceCounters{};
        report.refinements.push_back(std::move(r));
    }
}

}  // namespace

StateValue evaluate_csv_state(const Model& m, const ConditioningSv& c) {
    bool any_pos_active = false;
    bool all_pos_active = !c.pos_sources.empty();
    for (SvId s : c.pos_sources) {
        if (m.source_state(s) == StateValue::Active)
            any_pos_active = true;
        else
            all_pos_active = false;
    }
    if (!any_pos_active) return StateValue::Unobserved;

    bool any_target_active = false, any_target_inactive = false;
    for (SvId t : c.targets) {
        StateValue v = m.state_of(t);
        if (v == StateValue::Active) any_target_active = true;
        if (v == StateValue::Inactive) any_target_inactive = true;
    }
    if (any_target_active) return StateValue::Active;
    if (!any_target_inactive) return StateValue::Unobserved;
    if (!all_pos_active) return StateValue::Unobserved;
    for (SvId s : c.neg_sources)
        if (m.source_state(s) == StateValue::Active) return StateValue::Unobserved;
    return StateValue::Inactive;
}

StateValue compute_csv_state(Model& m, SvId csv_id, bool learning, StepReport& report) {
    {
        ConditioningSv& c = m.csv(csv_id);
        c.prev_state = c.state;
    }
    if (!learning) {
        ConditioningSv& c = m.csv(csv_id);
        c.state = evaluate_csv_state(m, c);
        return c.state;
    }

    bool any_pos_active = false;
    for (SvId s : m.csv(csv_id).pos_sources)
        if (m.source_state(s) == StateValue::Active) {
            any_pos_active = true;
            break;
        }
    if (!any_pos_active) {
        ConditioningSv& c = m.csv(csv_id);
        c.state = StateValue::Unobserved;
        return c.state;
    }

    SvId copy = m.separate_active_inactive_targets(csv_id);
    if (copy != kNoSv) {
        report.duplications.push_back(Duplication{csv_id, copy});
        // The inactive half is processed on its own turn; the caller's order
        // includes it right after the original.
    }

    ConditioningSv& c = m.csv(csv_id);
    bool all_pos_active = !c.pos_sources.empty();
    for (SvId s : c.pos_sources)
        if (m.source_state(s) != StateValue::Active) all_pos_active = false;
    bool any_target_active = false, any_target_inactive = false;
    for (SvId t : c.targets) {
        StateValue v = m.state_of(t);
        if (v == StateValue::Active) any_target_active = true;
        if (v == StateValue::Inactive) any_target_inactive = true;
    }

    if (any_target_active) {
        c.state = StateValue::Active;
        refine_on_active(m, c, report, false);
        return c.state;
    }
    if (!any_target_inactive) {
        c.state = StateValue::Unobserved;
        return c.state;
    }
    if (!all_pos_active) {
        c.state = StateValue::Unobserved;
        return c.state;
    }
    bool any_neg_active = false;
    for (SvId s : c.neg_sources)
        if (m.source_state(s) == StateValue::Active) any_neg_active = true;
    if (any_neg_active) {
        c.state = StateValue::Unobserved;
        refine_neg_keep_active(m, c, report, false);
        return c.state;
    }
    c.state = StateValue::Inactive;
    return c.state;
}

std::vector<SvId> collect_unexplained(const Model& m) {
    std::vector<SvId> out;
    auto consider = [&](SvId id, StateValue state, Flag flag) {
        if (state != StateValue::Active) return;
        if (flag == Flag::Unconditional) return;
        for (SvId c : m.conditioners_of(id))
            if (m.state_of(c) == StateValue::Active) return;
        out.push_back(id);
    };
    for (const auto& d : m.dsvs()) consider(d.id, d.state, d.flag);
    for (const auto& c : m.csvs()) consider(c.id, c.state, c.flag);
    std::sort(out.begin(), out.end());
    return out;
}

std::set<SvId> trivial_sources(const Model& m, SvId sv) {
    std::set<SvId> trivial;
    std::vector<SvId> stack{sv};
    std::set<SvId> seen;
    while (!stack.empty()) {
        SvId cur = stack.back();
        stack.pop_back();
        if (!seen.insert(cur).second) continue;
        trivial.insert(cur);
        switch (m.kind_of(cur)) {
            case SvKind::Dsv:
                trivial.insert(m.dsv(cur).owner);
                break;
            case SvKind::Csv: {
                const auto& c = m.csv(cur);
                trivial.insert(c.pos_sources.begin(), c.pos_sources.end());
                trivial.insert(c.neg_sources.begin(), c.neg_sources.end());
                for (SvId t : c.targets) stack.push_back(t);
                break;
            }
            default:
                break;
        }
    }
    return trivial;
}

std::set<SvId> trivial_sources_of_set(const Model& m, const std::vector<SvId>& targets) {
    std::set<SvId> out;
    for (SvId t : targets) {
        auto one = trivial_sources(m, t);
        out.insert(one.begin(), one.end());
    }
    return out;
}

std::pair<std::vector<SvId>, std::vector<SvId>> eligible_positive_sources(
    const Model& m, const std::vector<SvId>& candidates,
    const std::vector<SvId>& prospective_targets) {
    std::vector<std::set<SvId>> trivial_per_target;
    trivial_per_target.reserve(prospective_targets.size());
    for (SvId t : prospective_targets) trivial_per_target.push_back(trivial_sources(m, t));

    std::vector<SvId> kept_sources;
    for (SvId cand : candidates) {
        bool useful = false;
        for (const auto& tset : trivial_per_target)
            if (tset.count(cand) == 0) {
                useful = true;
                break;
            }
        if (useful) kept_sources.push_back(cand);
    }
    std::vector<SvId> kept_targets;
    for (std::size_t i = 0; i < prospective_targets.size(); ++i) {
        bool informative = false;
        for (SvId cand : kept_sources)
            if (trivial_per_target[i].count(cand) == 0) {
                informative = true;
                break;
            }
        if (informative) kept_targets.push_back(prospective_targets[i]);
    }
    return {std::move(kept_sources), std::move(kept_targets)};
}

std::vector<SvId> eligible_negative_sources(const Model& m, const ConditioningSv& c,
                                            const std::vector<SvId>& candidates) {
    std::set<SvId> excluded = trivial_sources(m, c.id);
    // Cumulative positive sources upstream of (and including) the CSV.
    std::vector<SvId> stack{c.id};
    std::set<SvId> seen;
    while (!stack.empty()) {
        SvId cur = stack.back();
        stack.pop_back();
        if (!seen.insert(cur).second) continue;
        const auto& cc = m.csv(cur);
        excluded.insert(cc.pos_sources.begin(), cc.pos_sources.end());
        for (SvId up : m.conditioners_of(cur)) stack.push_back(up);
    }
    std::vector<SvId> out;
    for (SvId cand : candidates)
        if (excluded.count(cand) == 0) out.push_back(cand);
    return out;
}

std::vector<SvId> relevant_active_pool(const Model& m) {
    std::vector<SvId> pool;
    for (const auto& b : m.bsvs())
        if (m.source_state(b.id) == StateValue::Active) pool.push_back(b.id);
    for (const auto& d : m.dsvs())
        if (d.prev_state == StateValue::Active) pool.push_back(d.id);
    std::sort(pool.begin(), pool.end());
    return pool;
}

SvId form_csv(Model& m, const std::vector<SvId>& unexplained, const std::vector<SvId>& active_pool,
              StepReport& report) {
    std::vector<SvId> targets;
    for (SvId u : unexplained) {
        if (m.kind_of(u) == SvKind::Csv && m.csv(u).conditioner_formation_blocked) continue;
        targets.push_back(u);
    }
    if (targets.empty()) return kNoSv;

    auto [sources, kept_targets] = eligible_positive_sources(m, active_pool, targets);
    std::set<SvId> kept(kept_targets.begin(), kept_targets.end());
    for (SvId t : targets) {
        if (kept.count(t) != 0) continue;
        Flag old = m.flag_of(t);
        if (old != Flag::PossiblyConditional) {
            m.set_flag(t, Flag::PossiblyConditional);
            report.flags_changed.push_back(FlagChange{t, old, Flag::PossiblyConditional});
        }
    }
    if (kept_targets.empty()) return kNoSv;

    ConditioningSv& c = m.create_csv(sources, {}, kept_targets);
    // The formation instance itself counts: targets observed active with
    // sources satisfied by construction.
    for (auto& k : c.counters) k = NceCounters{1, 1, 1, 1};
    return c.id;
}

void form_negative_connections(Model& m, SvId csv_id, const std::vector<SvId>& active_pool,
                               StepReport& report) {
    if (m.csv(csv_id).neg_connections_formed)
        throw ModelError("negative connections formed twice on " + m.name_of(csv_id));

    // Targets currently unobserved are split off first so this one-time
    // change does not touch them.
    bool has_unobserved = false, has_other = false;
    for (SvId t : m.csv(csv_id).targets) {
        if (m.state_of(t) == StateValue::Unobserved)
            has_unobserved = true;
        else
            has_other = true;
    }
    if (has_unobserved && has_other) {
        const ConditioningSv& c = m.csv(csv_id);
        std::vector<SvId> protected_targets, affected;
        std::vector<NceCounters> prot_k, aff_k;
        for (std::size_t i = 0; i < c.targets.size(); ++i) {
            if (m.state_of(c.targets[i]) == StateValue::Unobserved) {
                protected_targets.push_back(c.targets[i]);
                prot_k.push_back(c.counters[i]);
            } else {
                affected.push_back(c.targets[i]);
                aff_k.push_back(c.counters[i]);
            }
        }
        ConditioningSv& copy = m.create_csv(c.pos_sources, c.neg_sources, protected_targets);
        ConditioningSv& orig = m.csv(csv_id);
        copy.counters = std::move(prot_k);
        copy.state = StateValue::Unobserved;   // all retained targets are unobserved
        copy.prev_state = orig.prev_state;
        copy.flag = orig.flag;
        copy.neg_connections_formed = orig.neg_connections_formed;
        copy.conditioner_formation_blocked = orig.conditioner_formation_blocked;
        std::vector<SvId> ups = m.conditioners_of(csv_id);
        for (SvId up : ups) {
            ConditioningSv& u = m.csv(up);
            auto it = std::lower_bound(u.targets.begin(), u.targets.end(), csv_id);
            NceCounters copied = u.counters[static_cast<std::size_t>(it - u.targets.begin())];
            auto pos = std::lower_bound(u.targets.begin(), u.targets.end(), copy.id);
            std::size_t idx = static_cast<std::size_t>(pos - u.targets.begin());
            u.targets.insert(pos, copy.id);
            u.counters.insert(u.counters.begin() + static_cast<std::ptrdiff_t>(idx), copied);
        }
        orig.targets = std::move(affected);
        orig.counters = std::move(aff_k);
        m.rebuild_conditioner_index();
        report.duplications.push_back(Duplication{csv_id, copy.id});
    }

    ConditioningSv& c = m.csv(csv_id);
    c.neg_sources = eligible_negative_sources(m, c, active_pool);
    std::sort(c.neg_sources.begin(), c.neg_sources.end());
    c.neg_connections_formed = true;
}

void update_unconditionality(Model& m, SvId sv, UnconditionalityEvent event, StepReport& report) {
    Flag old = m.flag_of(sv);
    if (old == Flag::PossiblyConditional) return;   // absorbing
    Flag next = old;
    switch (event) {
        case UnconditionalityEvent::InactiveAfterNegFormation:
            if (old == Flag::Unconditional) next = Flag::Conditional;
            break;
        case UnconditionalityEvent::ActiveWithoutExplanationAndNoCsvFormable:
            next = Flag::PossiblyConditional;
            break;
    }
    if (next != old) {
        m.set_flag(sv, next);
        report.flags_changed.push_back(FlagChange{sv, old, next});
    }
}

void model_refinement(Model& m, StepReport& report) {
    (void)report;
    bool changed = true;
    while (changed) {
        changed = false;
        // Empty positive sources or empty targets cannot survive.
        for (const auto& c : m.csvs()) {
            if (c.pos_sources.empty() || c.targets.empty()) {
                m.remove_csv(c.id);
                changed = true;
                break;
            }
        }
        if (changed) continue;
        // Merge CSVs representing the same thing from divergent histories.
        const auto& csvs = m.csvs();
        for (std::size_t i = 0; i < csvs.size() && !changed; ++i) {
            for (std::size_t j = i + 1; j < csvs.size(); ++j) {
                const auto& a = csvs[i];
                const auto& b = csvs[j];
                if (a.pos_sources != b.pos_sources || a.neg_sources != b.neg_sources ||
                    a.targets != b.targets)
                    continue;
                SvId keep_id = std::min(a.id, b.id);
                SvId drop_id = std::max(a.id, b.id);
                ConditioningSv& keep = m.csv(keep_id);
                ConditioningSv& drop = m.csv(drop_id);
                for (std::size_t t = 0; t < keep.counters.size(); ++t) {
                    keep.counters[t].n_steps_observed += drop.counters[t].n_steps_observed;
                    keep.counters[t].n_incidence += drop.counters[t].n_incidence;
                    keep.counters[t].n_ss += drop.counters[t].n_ss;
                    keep.counters[t].n_cc += drop.counters[t].n_cc;
                }
                keep.flag = std::max(keep.flag, drop.flag);
                keep.neg_connections_formed |= drop.neg_connections_formed;
                keep.conditioner_formation_blocked |= drop.conditioner_formation_blocked;
                // Retarget upstream conditioners of the dropped CSV.
                std::vector<SvId> ups = m.conditioners_of(drop_id);
                for (SvId up : ups) {
                    ConditioningSv& u = m.csv(up);
                    auto it = std::lower_bound(u.targets.begin(), u.targets.end(), drop_id);
                    std::size_t di = static_cast<std::size_t>(it - u.targets.begin());
                    NceCounters dk = u.counters[di];
                    u.targets.erase(it);
                    u.counters.erase(u.counters.begin() + static_cast<std::ptrdiff_t>(di));
                    auto kit = std::lower_bound(u.targets.begin(), u.targets.end(), keep_id);
                    if (kit != u.targets.end() && *kit == keep_id) {
                        std::size_t ki = static_cast<std::size_t>(kit - u.targets.begin());
                        u.counters[ki].n_steps_observed += dk.n_steps_observed;
                        u.counters[ki].n_incidence += dk.n_incidence;
                        u.counters[ki].n_ss += dk.n_ss;
                        u.counters[ki].n_cc += dk.n_cc;
                    } else {
                        std::size_t ki = static_cast<std::size_t>(kit - u.targets.begin());
                        u.targets.insert(kit, keep_id);
                        u.counters.insert(u.counters.begin() + static_cast<std::ptrdiff_t>(ki), dk);
                    }
                }
                m.remove_csv(drop_id);
                changed = true;
                break;
            }
        }
    }
}

StepReport process_environment_step(Model& m, const std::map<SvId, StateValue>& observations,
                                    const LearnOptions& opts) {
    StepReport report;
    report.step = m.step_counter() + 1;

    m.compute_dsv_states(observations);

    auto order = m.computation_order();
    if (!opts.learning_enabled) {
        for (SvId id : order) compute_csv_state(m, id, false, report);
        m.bump_step_counter();
        return report;
    }

    std::vector<SvId> pool = relevant_active_pool(m);

    // Duplication inserts siblings whose targets are already computed; they
    // are processed immediately after their original.
    std::vector<SvId> queue = order;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        SvId id = queue[qi];
        if (!m.contains(id)) continue;
        std::size_t dup_before = report.duplications.size();
        StateValue state = compute_csv_state(m, id, true, report);
        for (std::size_t d = dup_before; d < report.duplications.size(); ++d)
            queue.insert(queue.begin() + static_cast<std::ptrdiff_t>(qi) + 1,
                         report.duplications[d].copy);

        if (state == StateValue::Inactive) {
            if (!m.csv(id).neg_connections_formed)
                form_negative_connections(m, id, pool, report);
            else
                update_unconditionality(m, id, UnconditionalityEvent::InactiveAfterNegFormation,
                                        report);
        }
        // Counter bookkeeping, once per (CSV, target) per step.
        ConditioningSv& c = m.csv(id);
        bool ss = m.sources_satisfied(c);
        for (std::size_t t = 0; t < c.targets.size(); ++t)
            update_counters(c.counters[t], ss, m.state_of(c.targets[t]));
        if (opts.reset_counters_on_refinement) {
            for (const auto& r : report.refinements)
                if (r.csv == id && (!r.removed_pos.empty() || !r.removed_neg.empty()))
                    for (auto& k : c.counters) k = NceCounters{};
        }
    }

    if (opts.significance_enabled) apply_significance_policy(m, opts.epsilon);

    report.unexplained = collect_unexplained(m);
    report.new_csv = form_csv(m, report.unexplained, pool, report);

    model_refinement(m, report);
    m.bump_step_counter();
    return report;
}

}  // namespace varsel
