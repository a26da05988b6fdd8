#include "varsel/model.hpp"

#include <algorithm>
#include <cstring>

namespace varsel {

const char* to_string(StateValue v) {
    switch (v) {
        case StateValue::Active: return "A";
        case StateValue::Inactive: return "I";
        case StateValue::Unobserved: return "U";
    }
    return "?";
}

const char* to_string(SvKind k) {
    switch (k) {
        case SvKind::Bsv: return "bsv";
        case SvKind::Dsv: return "dsv";
        case SvKind::Csv: return "csv";
        case SvKind::Gsv: return "gsv";
    }
    return "?";
}

const char* to_string(Flag f) {
    switch (f) {
        case Flag::Unconditional: return "unconditional";
        case Flag::Conditional: return "conditional";
        case Flag::PossiblyConditional: return "possibly_conditional";
    }
    return "?";
}

std::optional<StateValue> state_from_string(const std::string& s) {
    if (s == "A") return StateValue::Active;
    if (s == "I") return StateValue::Inactive;
    if (s == "U") return StateValue::Unobserved;
    return std::nullopt;
}

std::optional<Flag> flag_from_string(const std::string& s) {
    if (s == "unconditional") return Flag::Unconditional;
    if (s == "conditional") return Flag::Conditional;
    if (s == "possibly_conditional") return Flag::PossiblyConditional;
    return std::nullopt;
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

Model::Model(const std::vector<BsvSpec>& specs) {
    for (const auto& spec : specs) {
        if (by_name_.count(spec.name) != 0)
            throw ModelError("duplicate BSV name: " + spec.name);
        BaseSv b;
        b.id = allocate_id(SvKind::Bsv);
        b.name = spec.name;
        b.is_action = spec.is_action;
        by_name_[b.name] = b.id;
        if (!spec.is_action) {
            DynamicsSv a;
            a.id = allocate_id(SvKind::Dsv);
            a.name = spec.name + "_A";
            a.owner = b.id;
            a.polarity = DsvPolarity::Activation;
            DynamicsSv d;
            d.id = allocate_id(SvKind::Dsv);
            d.name = spec.name + "_D";
            d.owner = b.id;
            d.polarity = DsvPolarity::Deactivation;
            b.dsv_activation = a.id;
            b.dsv_deactivation = d.id;
            by_name_[a.name] = a.id;
            by_name_[d.name] = d.id;
            dsvs_.push_back(std::move(a));
            dsvs_.push_back(std::move(d));
        }
        bsvs_.push_back(std::move(b));
    }
    // locs_ indexes were reserved by allocate_id; fill them now that vectors
    // are stable.
    std::uint32_t bi = 0;
    for (auto& b : bsvs_) locs_[b.id] = Loc{SvKind::Bsv, bi++};
    std::uint32_t di = 0;
    for (auto& d : dsvs_) locs_[d.id] = Loc{SvKind::Dsv, di++};
}

SvId Model::allocate_id(SvKind) {
    SvId id = next_id_++;
    locs_.emplace_back();
    return id;
}

Model::Loc Model::locate(SvId id) const {
    if (id >= locs_.size() || !locs_[id].has_value())
        throw ModelError("unknown SV id " + std::to_string(id));
    return *locs_[id];
}

bool Model::contains(SvId id) const {
    return id < locs_.size() && locs_[id].has_value();
}

SvKind Model::kind_of(SvId id) const { return locate(id).kind; }

const std::string& Model::name_of(SvId id) const {
    Loc l = locate(id);
    switch (l.kind) {
        case SvKind::Bsv: return bsvs_[l.index].name;
        case SvKind::Dsv: return dsvs_[l.index].name;
        default: return csvs_[l.index].name;
    }
}

SvId Model::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? kNoSv : it->second;
}

const BaseSv& Model::bsv(SvId id) const {
    Loc l = locate(id);
    if (l.kind != SvKind::Bsv) throw ModelError("not a BSV: " + std::to_string(id));
    return bsvs_[l.index];
}
BaseSv& Model::bsv(SvId id) { return const_cast<BaseSv&>(std::as_const(*this).bsv(id)); }

const DynamicsSv& Model::dsv(SvId id) const {
    Loc l = locate(id);
    if (l.kind != SvKind::Dsv) throw ModelError("not a DSV: " + std::to_string(id));
    return dsvs_[l.index];
}
DynamicsSv& Model::dsv(SvId id) { return const_cast<DynamicsSv&>(std::as_const(*this).dsv(id)); }

const ConditioningSv& Model::csv(SvId id) const {
    Loc l = locate(id);
    if (l.kind != SvKind::Csv) throw ModelError("not a CSV: " + std::to_string(id));
    return csvs_[l.index];
}
ConditioningSv& Model::csv(SvId id) { return const_cast<ConditioningSv&>(std::as_const(*this).csv(id)); }

StateValue Model::state_of(SvId id) const {
    Loc l = locate(id);
    switch (l.kind) {
        case SvKind::Bsv: return bsvs_[l.index].state;
        case SvKind::Dsv: return dsvs_[l.index].state;
        default: return csvs_[l.index].state;
    }
}

StateValue Model::prev_state_of(SvId id) const {
    Loc l = locate(id);
    switch (l.kind) {
        case SvKind::Bsv: return bsvs_[l.index].prev_state;
        case SvKind::Dsv: return dsvs_[l.index].prev_state;
        default: return csvs_[l.index].prev_state;
    }
}

StateValue Model::source_state(SvId id) const {
    Loc l = locate(id);
    if (l.kind == SvKind::Bsv && bsvs_[l.index].is_action) return bsvs_[l.index].state;
    return prev_state_of(id);
}

Flag Model::flag_of(SvId id) const {
    Loc l = locate(id);
    if (l.kind == SvKind::Dsv) return dsvs_[l.index].flag;
    if (l.kind == SvKind::Csv) return csvs_[l.index].flag;
    throw ModelError("SV has no flag: " + std::to_string(id));
}

void Model::set_flag(SvId id, Flag f) {
    Loc l = locate(id);
    if (l.kind == SvKind::Dsv)
        dsvs_[l.index].flag = f;
    else if (l.kind == SvKind::Csv)
        csvs_[l.index].flag = f;
    else
        throw ModelError("SV has no flag: " + std::to_string(id));
}

const std::vector<SvId>& Model::conditioners_of(SvId id) const {
    static const std::vector<SvId> kEmpty;
    auto it = conditioners_of_.find(id);
    return it == conditioners_of_.end() ? kEmpty : it->second;
}

void Model::reset_states(const std::map<SvId, StateValue>& observations) {
    for (const auto& [id, v] : observations) {
        if (!contains(id) || kind_of(id) != SvKind::Bsv)
            throw ModelError("observation for non-BSV id " + std::to_string(id));
        if (v == StateValue::Unobserved)
            throw ModelError("BSVs are always observed: " + name_of(id));
    }
    for (auto& b : bsvs_) {
        auto it = observations.find(b.id);
        StateValue v = it != observations.end() ? it->second : StateValue::Inactive;
        b.state = b.prev_state = v;
    }
    for (auto& d : dsvs_) {
        const BaseSv& owner = bsv(d.owner);
        if (d.polarity == DsvPolarity::Activation)
            d.state = owner.state == StateValue::Active ? StateValue::Unobserved
                                                        : StateValue::Inactive;
        else
            d.state = owner.state == StateValue::Active ? StateValue::Inactive
                                                        : StateValue::Unobserved;
        d.prev_state = d.state;
    }
    for (auto& c : csvs_) c.state = c.prev_state = StateValue::Unobserved;
}

void Model::compute_dsv_states(const std::map<SvId, StateValue>& observations) {
    for (const auto& [id, v] : observations) {
        if (!contains(id) || kind_of(id) != SvKind::Bsv)
            throw ModelError("observation for non-BSV id " + std::to_string(id));
        if (v == StateValue::Unobserved)
            throw ModelError("BSVs are always observed: " + name_of(id));
    }
    for (const auto& b : bsvs_) {
        if (!b.is_action && observations.find(b.id) == observations.end())
            throw ModelError("missing observation for BSV " + b.name);
    }
    for (auto& b : bsvs_) {
        auto it = observations.find(b.id);
        b.prev_state = b.state;
        if (it != observations.end())
            b.state = it->second;
        else
            b.state = StateValue::Inactive;   // action BSVs default to not taken
    }
    for (auto& d : dsvs_) {
        const BaseSv& owner = bsv(d.owner);
        d.prev_state = d.state;
        if (d.polarity == DsvPolarity::Activation) {
            if (owner.prev_state == StateValue::Active)
                d.state = StateValue::Unobserved;
            else
                d.state = owner.state == StateValue::Active ? StateValue::Active
                                                            : StateValue::Inactive;
        } else {
            if (owner.prev_state != StateValue::Active)
                d.state = StateValue::Unobserved;
            else
                d.state = owner.state == StateValue::Active ? StateValue::Inactive
                                                            : StateValue::Active;
        }
    }
}

bool Model::sources_satisfied(const ConditioningSv& c) const {
    for (SvId s : c.pos_sources)
        if (source_state(s) != StateValue::Active) return false;
    for (SvId s : c.neg_sources)
        if (source_state(s) == StateValue::Active) return false;
    return true;
}

std::vector<SvId> Model::computation_order() const {
    // Level of a CSV = 1 + max level of its CSV targets (DSV targets are
    // level 0). Ties broken by id so runs are reproducible.
    std::map<SvId, int> level;
    std::vector<SvId> pending;
    pending.reserve(csvs_.size());
    for (const auto& c : csvs_) pending.push_back(c.id);
    bool progress = true;
    while (!pending.empty() && progress) {
        progress = false;
        std::vector<SvId> still;
        for (SvId id : pending) {
            const auto& c = csv(id);
            int lvl = 1;
            bool ready = true;
            for (SvId t : c.targets) {
                if (kind_of(t) != SvKind::Csv) continue;
                auto it = level.find(t);
                if (it == level.end()) {
                    ready = false;
                    break;
                }
                lvl = std::max(lvl, it->second + 1);
            }
            if (ready) {
                level[id] = lvl;
                progress = true;
            } else {
                still.push_back(id);
            }
        }
        pending.swap(still);
    }
    if (!pending.empty())
        throw ModelError("conditioning cycle detected");
    std::vector<SvId> order;
    order.reserve(level.size());
    for (const auto& [id, _] : level) order.push_back(id);
    std::sort(order.begin(), order.end(), [&](SvId a, SvId b) {
        if (level[a] != level[b]) return level[a] < level[b];
        return a < b;
    });
    return order;
}

ConditioningSv& Model::create_csv(std::vector<SvId> pos, std::vector<SvId> neg,
                                  std::vector<SvId> targets) {
    ConditioningSv c;
    c.id = allocate_id(SvKind::Csv);
    c.name = "C" + std::to_string(csv_name_seq_++);
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    std::sort(targets.begin(), targets.end());
    c.pos_sources = std::move(pos);
    c.neg_sources = std::move(neg);
    c.targets = std::move(targets);
    c.counters.assign(c.targets.size(), NceCounters{});
    locs_[c.id] = Loc{SvKind::Csv, static_cast<std::uint32_t>(csvs_.size())};
    by_name_[c.name] = c.id;
    for (SvId t : c.targets) conditioners_of_[t].push_back(c.id);
    csvs_.push_back(std::move(c));
    return csvs_.back();
}

ConditioningSv& Model::restore_csv(ConditioningSv c) {
    if (c.id == kNoSv) throw ModelError("restore_csv requires an id");
    while (locs_.size() <= c.id) {
        locs_.emplace_back();
        ++next_id_;
    }
    if (locs_[c.id].has_value()) throw ModelError("duplicate id on restore");
    if (c.id >= next_id_) next_id_ = c.id + 1;
    locs_[c.id] = Loc{SvKind::Csv, static_cast<std::uint32_t>(csvs_.size())};
    by_name_[c.name] = c.id;
    for (SvId t : c.targets) conditioners_of_[t].push_back(c.id);
    csvs_.push_back(std::move(c));
    // Keep future names unique.
    if (csvs_.back().name.size() > 1 && csvs_.back().name[0] == 'C') {
        std::uint32_t seq = static_cast<std::uint32_t>(std::atoi(csvs_.back().name.c_str() + 1));
        csv_name_seq_ = std::max(csv_name_seq_, seq + 1);
    }
    return csvs_.back();
}

SvId Model::separate_active_inactive_targets(SvId csv_id) {
    ConditioningSv& c = csv(csv_id);
    std::vector<SvId> act, inact, unobs;
    for (SvId t : c.targets) {
        switch (state_of(t)) {
            case StateValue::Active: act.push_back(t); break;
            case StateValue::Inactive: inact.push_back(t); break;
            case StateValue::Unobserved: unobs.push_back(t); break;
        }
    }
    if (act.empty() || inact.empty()) return kNoSv;

    auto counters_for = [&](const std::vector<SvId>& keep) {
        std::vector<NceCounters> out;
        out.reserve(keep.size());
        for (SvId t : keep) {
            auto it = std::lower_bound(c.targets.begin(), c.targets.end(), t);
            out.push_back(c.counters[static_cast<std::size_t>(it - c.targets.begin())]);
        }
        return out;
    };

    std::vector<SvId> keep_active = act;
    keep_active.insert(keep_active.end(), unobs.begin(), unobs.end());
    std::sort(keep_active.begin(), keep_active.end());
    std::vector<SvId> keep_inactive = inact;
    keep_inactive.insert(keep_inactive.end(), unobs.begin(), unobs.end());
    std::sort(keep_inactive.begin(), keep_inactive.end());

    auto active_counters = counters_for(keep_active);
    auto inactive_counters = counters_for(keep_inactive);

    ConditioningSv& copy = create_csv(c.pos_sources, c.neg_sources, keep_inactive);
    // create_csv may reallocate csvs_; re-resolve the original.
    ConditioningSv& orig = csv(csv_id);
    copy.counters = std::move(inactive_counters);
    copy.state = orig.state;
    copy.prev_state = orig.prev_state;
    copy.flag = orig.flag;
    copy.neg_connections_formed = orig.neg_connections_formed;
    copy.conditioner_formation_blocked = orig.conditioner_formation_blocked;

    // Upstream conditioners keep explaining both halves.
    std::vector<SvId> ups = conditioners_of(csv_id);
    for (SvId up : ups) {
        ConditioningSv& u = csv(up);
        auto it = std::lower_bound(u.targets.begin(), u.targets.end(), csv_id);
        NceCounters copied = u.counters[static_cast<std::size_t>(it - u.targets.begin())];
        auto pos = std::lower_bound(u.targets.begin(), u.targets.end(), copy.id);
        std::size_t idx = static_cast<std::size_t>(pos - u.targets.begin());
        u.targets.insert(pos, copy.id);
        u.counters.insert(u.counters.begin() + static_cast<std::ptrdiff_t>(idx), copied);
        conditioners_of_[copy.id].push_back(up);
    }
    std::sort(conditioners_of_[copy.id].begin(), conditioners_of_[copy.id].end());

    orig.targets = keep_active;
    orig.counters = std::move(active_counters);
    // conditioners_of entries for targets moved wholly to the copy are stale
    // for the original; rebuild the inverse index.
    rebuild_conditioner_index();
    return copy.id;
}

void Model::remove_csv(SvId id) {
    Loc l = locate(id);
    if (l.kind != SvKind::Csv) throw ModelError("not a CSV: " + std::to_string(id));
    by_name_.erase(csvs_[l.index].name);
    csvs_.erase(csvs_.begin() + l.index);
    locs_[id].reset();
    for (std::uint32_t i = l.index; i < csvs_.size(); ++i)
        locs_[csvs_[i].id] = Loc{SvKind::Csv, i};
    // Drop the removed CSV from every upstream target list.
    for (auto& c : csvs_) {
        auto it = std::lower_bound(c.targets.begin(), c.targets.end(), id);
        if (it != c.targets.end() && *it == id) {
            std::size_t idx = static_cast<std::size_t>(it - c.targets.begin());
            c.targets.erase(it);
            c.counters.erase(c.counters.begin() + static_cast<std::ptrdiff_t>(idx));
        }
    }
    rebuild_conditioner_index();
}

void Model::rebuild_conditioner_index() {
    conditioners_of_.clear();
    for (const auto& c : csvs_)
        for (SvId t : c.targets) conditioners_of_[t].push_back(c.id);
    for (auto& [_, v] : conditioners_of_) std::sort(v.begin(), v.end());
}

void Model::set_states_raw(SvId id, StateValue state, StateValue prev) {
    Loc l = locate(id);
    switch (l.kind) {
        case SvKind::Bsv:
            bsvs_[l.index].state = state;
            bsvs_[l.index].prev_state = prev;
            break;
        case SvKind::Dsv:
            dsvs_[l.index].state = state;
            dsvs_[l.index].prev_state = prev;
            break;
        default:
            csvs_[l.index].state = state;
            csvs_[l.index].prev_state = prev;
    }
}

std::uint64_t Model::structure_hash() const {
    std::uint64_t h = fnv1a64("model", 5);
    auto mix_u32 = [&h](std::uint32_t v) { h = fnv1a64(&v, sizeof(v), h); };
    auto mix_u8 = [&h](std::uint8_t v) { h = fnv1a64(&v, sizeof(v), h); };
    mix_u32(static_cast<std::uint32_t>(bsvs_.size()));
    mix_u32(static_cast<std::uint32_t>(dsvs_.size()));
    for (const auto& d : dsvs_) mix_u8(static_cast<std::uint8_t>(d.flag));
    mix_u32(static_cast<std::uint32_t>(csvs_.size()));
    for (const auto& c : csvs_) {
        mix_u32(c.id);
        for (SvId s : c.pos_sources) mix_u32(s);
        mix_u32(0xFFFFFFFE);
        for (SvId s : c.neg_sources) mix_u32(s);
        mix_u32(0xFFFFFFFD);
        for (SvId t : c.targets) mix_u32(t);
        mix_u8(static_cast<std::uint8_t>(c.flag));
        mix_u8(c.neg_connections_formed ? 1 : 0);
        mix_u8(c.conditioner_formation_blocked ? 1 : 0);
    }
    return h;
}

}  // namespace varsel
