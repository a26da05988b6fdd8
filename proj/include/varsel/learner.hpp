#pragma once

#include <set>

#include "varsel/model.hpp"

namespace varsel {

struct Refinement {
    SvId csv = kNoSv;
    std::vector<SvId> removed_pos;
    std::vector<SvId> removed_neg;
};

struct Duplication {
    SvId original = kNoSv;
    SvId copy = kNoSv;
};

struct FlagChange {
    SvId sv = kNoSv;
    Flag from = Flag::Unconditional;
    Flag to = Flag::Unconditional;
};

struct StepReport {
    std::uint64_t step = 0;
    std::vector<SvId> unexplained;
    SvId new_csv = kNoSv;   // at most one CSV is created per step
    std::vector<Refinement> refinements;
    std::vector<Duplication> duplications;
    std::vector<FlagChange> flags_changed;
};

struct LearnOptions {
    bool learning_enabled = true;
    bool significance_enabled = false;
    double epsilon = 0.25;
    bool reset_counters_on_refinement = false;
};

enum class UnconditionalityEvent {
    InactiveAfterNegFormation,
    ActiveWithoutExplanationAndNoCsvFormable,
};

// One full interaction step: state computation sweep, then (when learning)
// negative-connection formation, flag updates, counter updates, significance
// policy, one new CSV for the step's unexplained SVs, and model refinement.
// With learning disabled only the pure state sweep runs.
StepReport process_environment_step(Model& m, const std::map<SvId, StateValue>& observations,
                                    const LearnOptions& opts);

// Active DSVs/CSVs that are not Unconditional and have no Active conditioner.
std::vector<SvId> collect_unexplained(const Model& m);

// Sources implied by knowing the structure downstream of `sv` (or of a
// prospective target): the downstream SVs themselves, their sources, and the
// owner BSV of every DSV reached.
std::set<SvId> trivial_sources(const Model& m, SvId sv);
std::set<SvId> trivial_sources_of_set(const Model& m, const std::vector<SvId>& targets);

// Keeps a candidate iff it is non-trivial for at least one prospective
// target, then drops targets for which every kept candidate is trivial.
std::pair<std::vector<SvId>, std::vector<SvId>> eligible_positive_sources(
    const Model& m, const std::vector<SvId>& candidates,
    const std::vector<SvId>& prospective_targets);

// Drops candidates trivial for the CSV plus the cumulative positive sources
// of the CSV and all its transitive conditioners (including itself).
std::vector<SvId> eligible_negative_sources(const Model& m, const ConditioningSv& c,
                                            const std::vector<SvId>& candidates);

SvId form_csv(Model& m, const std::vector<SvId>& unexplained, const std::vector<SvId>& active_pool,
              StepReport& report);

void form_negative_connections(Model& m, SvId csv_id, const std::vector<SvId>& active_pool,
                               StepReport& report);

void update_unconditionality(Model& m, SvId sv, UnconditionalityEvent event, StepReport& report);

// Removes CSVs with empty positive sources or empty targets and merges CSVs
// with identical (pos, neg, targets), keeping the older id and summing
// counters. Cascades until stable.
void model_refinement(Model& m, StepReport& report);

// SVs whose satisfaction-relevant state is Active this step (non-action SVs
// at the previous step, action BSVs at the current step). BSVs and DSVs only.
std::vector<SvId> relevant_active_pool(const Model& m);

// State computation for one CSV, including duplication and source
// refinements when learning is enabled. Pure evaluation otherwise.
StateValue compute_csv_state(Model& m, SvId csv_id, bool learning, StepReport& report);

// Side-effect-free evaluation used by the frozen sweep and replay checks.
StateValue evaluate_csv_state(const Model& m, const ConditioningSv& c);

}  // namespace varsel
