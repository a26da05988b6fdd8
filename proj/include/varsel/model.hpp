#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace varsel {

// Ternary state of a state variable. The integer notation (1/-1/0) is label
// only; no arithmetic is ever done on states.
enum class StateValue : std::uint8_t { Active, Inactive, Unobserved };

enum class SvKind : std::uint8_t { Bsv, Dsv, Csv, Gsv };

enum class DsvPolarity : std::uint8_t { Activation, Deactivation };

// Qualitative uncertainty marker of a conditioning target. Moves only
// forward: Unconditional -> Conditional -> PossiblyConditional.
enum class Flag : std::uint8_t { Unconditional, Conditional, PossiblyConditional };

using SvId = std::uint32_t;
inline constexpr SvId kNoSv = 0xFFFFFFFFu;

const char* to_string(StateValue v);
const char* to_string(SvKind k);
const char* to_string(Flag f);
std::optional<StateValue> state_from_string(const std::string& s);
std::optional<Flag> flag_from_string(const std::string& s);

struct BsvSpec {
    std::string name;
    bool is_action = false;
};

struct BaseSv {
    SvId id = kNoSv;
    std::string name;
    bool is_action = false;
    StateValue state = StateValue::Inactive;       // restricted to Active/Inactive
    StateValue prev_state = StateValue::Inactive;
    SvId dsv_activation = kNoSv;   // kNoSv for action BSVs
    SvId dsv_deactivation = kNoSv;
};

struct DynamicsSv {
    SvId id = kNoSv;
    std::string name;
    SvId owner = kNoSv;
    DsvPolarity polarity = DsvPolarity::Activation;
    StateValue state = StateValue::Unobserved;
    StateValue prev_state = StateValue::Unobserved;
    Flag flag = Flag::Conditional;   // a fresh DSV needs an explanation
};

// Per-(CSV, target) event counts for the causal-effect estimate. Nothing
// changes while the target is unobserved.
struct NceCounters {
    std::uint64_t n_steps_observed = 0;
    std::uint64_t n_incidence = 0;
    std::uint64_t n_ss = 0;
    std::uint64_t n_cc = 0;

    bool operator==(const NceCounters&) const = default;
};

struct ConditioningSv {
    SvId id = kNoSv;
    std::string name;
    std::vector<SvId> pos_sources;   // BSVs/DSVs, sorted, only ever shrinks
    std::vector<SvId> neg_sources;   // BSVs/DSVs, sorted, shrinks after one-time formation
    std::vector<SvId> targets;       // DSVs/CSVs, sorted
    std::vector<NceCounters> counters;   // parallel to targets
    StateValue state = StateValue::Unobserved;
    StateValue prev_state = StateValue::Unobserved;
    Flag flag = Flag::Unconditional;
    bool neg_connections_formed = false;
    bool conditioner_formation_blocked = false;
};

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The learned network: BSVs with their paired DSVs, plus CSVs whose source
// and target sets refine over time. Single writer; one step-processing
// sequence mutates a model at a time.
class Model {
public:
    Model() = default;
    explicit Model(const std::vector<BsvSpec>& bsvs);

    const std::vector<BaseSv>& bsvs() const { return bsvs_; }
    const std::vector<DynamicsSv>& dsvs() const { return dsvs_; }
    const std::vector<ConditioningSv>& csvs() const { return csvs_; }
    std::vector<ConditioningSv>& csvs_mutable() { return csvs_; }

    std::uint64_t step_counter() const { return step_counter_; }
    SvId next_id() const { return next_id_; }

    SvKind kind_of(SvId id) const;
    const std::string& name_of(SvId id) const;
    SvId find(const std::string& name) const;   // kNoSv when absent

    const BaseSv& bsv(SvId id) const;
    BaseSv& bsv(SvId id);
    const DynamicsSv& dsv(SvId id) const;
    DynamicsSv& dsv(SvId id);
    const ConditioningSv& csv(SvId id) const;
    ConditioningSv& csv(SvId id);
    bool contains(SvId id) const;

    StateValue state_of(SvId id) const;
    StateValue prev_state_of(SvId id) const;

    // State a source contributes to satisfaction checks and formation pools:
    // action BSVs are interval-aligned with the step's events and read at the
    // current step; everything else is read at the previous step.
    StateValue source_state(SvId id) const;

    Flag flag_of(SvId id) const;   // DSV or CSV
    void set_flag(SvId id, Flag f);

    // CSVs conditioning `id`, in creation order. Exact inverse of the union
    // of CSV target sets.
    const std::vector<SvId>& conditioners_of(SvId id) const;

    // First observation of a stream: prev := state, no events.
    void reset_states(const std::map<SvId, StateValue>& observations);

    // Rotates BSV states in, recomputes every DSV from the t-1 -> t
    // transition of its owner. Rejects unknown ids, Unobserved values and
    // missing non-action BSVs before mutating anything.
    void compute_dsv_states(const std::map<SvId, StateValue>& observations);

    bool sources_satisfied(const ConditioningSv& c) const;

    // CSV ids ordered so that every CSV appears after all of its CSV
    // targets (targets are computed first). Throws on a conditioning cycle.
    std::vector<SvId> computation_order() const;

    ConditioningSv& create_csv(std::vector<SvId> pos, std::vector<SvId> neg,
                               std::vector<SvId> targets);

    // Deserialization path: installs a CSV with its stored id and name,
    // which may leave gaps in the id space.
    ConditioningSv& restore_csv(ConditioningSv c);

    // Splits a CSV whose current targets mix Active and Inactive members into
    // an Active-half (keeps the id) and an Inactive-half (fresh id).
    // Unobserved targets are copied into both. Returns the copy's id, or
    // kNoSv when no split was needed. Upstream conditioners gain the copy.
    SvId separate_active_inactive_targets(SvId csv_id);

    void remove_csv(SvId id);
    void rebuild_conditioner_index();
    void bump_step_counter() { ++step_counter_; }

    // Test/serialization hooks.
    void set_states_raw(SvId id, StateValue state, StateValue prev);
    void set_step_counter(std::uint64_t s) { step_counter_ = s; }

    // Hash over the structural content (sources, targets, flags); states and
    // counters excluded.
    std::uint64_t structure_hash() const;

private:
    friend Model model_from_json_impl(const std::string&);

    struct Loc {
        SvKind kind;
        std::uint32_t index;
    };

    SvId allocate_id(SvKind kind);
    Loc locate(SvId id) const;

    std::vector<BaseSv> bsvs_;
    std::vector<DynamicsSv> dsvs_;
    std::vector<ConditioningSv> csvs_;
    std::vector<std::optional<Loc>> locs_;                 // indexed by id
    std::map<SvId, std::vector<SvId>> conditioners_of_;
    std::map<std::string, SvId> by_name_;
    SvId next_id_ = 0;
    std::uint64_t step_counter_ = 0;
    std::uint32_t csv_name_seq_ = 0;   // dense C<k> naming, never reused
};

// Versioned JSON checkpoint; round-trips losslessly.
std::string model_to_json(const Model& m);
Model model_from_json(const std::string& text);

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 1469598103934665603ull);

}  // namespace varsel
