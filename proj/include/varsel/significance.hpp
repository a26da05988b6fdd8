#pragma once

#include <optional>
#include <string>

#include "varsel/model.hpp"

namespace varsel {

// One step of counter bookkeeping for a (CSV, target) pair. An unobserved
// target changes nothing.
void update_counters(NceCounters& k, bool sources_satisfied, StateValue target_state);

// Normalized causal effect (P(I|SS) - P(I)) / P(I); nullopt when any of the
// required counts is zero.
std::optional<double> nce(const NceCounters& k);

// Re-derives conditioner_formation_blocked for every CSV: blocked iff the
// NCE of every target is defined and below epsilon in magnitude. Runs before
// CSV formation so a blocked CSV cannot receive a conditioner the same step.
void apply_significance_policy(Model& m, double epsilon);

// csv_id,target_id,n_obs,n_inc,n_ss,n_cc,nce  (one row per pair)
std::string nce_table_csv(const Model& m);

}  // namespace varsel
