#include "varsel/significance.hpp"

#include <cmath>
#include <sstream>

namespace varsel {

void update_counters(NceCounters& k, bool sources_satisfied, StateValue target_state) {
    if (target_state == StateValue::Unobserved) return;
    ++k.n_steps_observed;
    if (target_state == StateValue::Active) ++k.n_incidence;
    if (sources_satisfied) {
        ++k.n_ss;
        if (target_state == StateValue::Active) ++k.n_cc;
    }
}

std::optional<double> nce(const NceCounters& k) {
    if (k.n_steps_observed == 0 || k.n_ss == 0 || k.n_incidence == 0) return std::nullopt;
    double p_i = static_cast<double>(k.n_incidence) / static_cast<double>(k.n_steps_observed);
    double p_i_ss = static_cast<double>(k.n_cc) / static_cast<double>(k.n_ss);
    return (p_i_ss - p_i) / p_i;
}

void apply_significance_policy(Model& m, double epsilon) {
    for (auto& c : m.csvs_mutable()) {
        bool all_defined = !c.counters.empty();
        bool all_small = true;
        for (const auto& k : c.counters) {
            auto v = nce(k);
            if (!v.has_value()) {
                all_defined = false;
                break;
            }
            if (std::abs(*v) >= epsilon) all_small = false;
        }
        c.conditioner_formation_blocked = all_defined && all_small;
    }
}

std::string nce_table_csv(const Model& m) {
    std::ostringstream out;
    out << "csv_id,target_id,n_obs,n_inc,n_ss,n_cc,nce\n";
    for (const auto& c : m.csvs()) {
        for (std::size_t i = 0; i < c.targets.size(); ++i) {
            const auto& k = c.counters[i];
            out << c.name << "," << m.name_of(c.targets[i]) << "," << k.n_steps_observed << ","
                << k.n_incidence << "," << k.n_ss << "," << k.n_cc << ",";
            auto v = nce(k);
            if (v.has_value())
                out << *v;
            else
                out << "undefined";
            out << "\n";
        }
    }
    return out.str();
}

}  // namespace varsel
