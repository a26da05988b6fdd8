#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "varsel/model.hpp"

namespace varsel {

enum class CellState : std::uint8_t { Do, Dc, W, G, Sg1, Sg2, X, Empty };

const char* to_string(CellState s);
std::optional<CellState> cell_state_from_string(const std::string& s);

// A pre-cell pattern: a concrete state or Any.
struct CellPattern {
    bool any = false;
    CellState state = CellState::Empty;
    bool matches(CellState s) const { return any || s == state; }
};

// An outcome cell: a concrete state or Keep (cell unchanged).
struct OutcomeCell {
    bool keep = false;
    CellState state = CellState::Empty;
    CellState apply(CellState current) const { return keep ? current : state; }
};

struct Outcome {
    OutcomeCell cell1, cell2;
    double probability = 1.0;
};

struct Transition {
    CellPattern pre1, pre2;
    std::optional<int> action;   // nullopt = any action
    std::vector<Outcome> outcomes;
};

enum class Subtype { Rs, Sgs, Neg, Complete };

const char* to_string(Subtype s);

struct FsmSpec {
    Subtype subtype = Subtype::Complete;
    int n_actions = 20;
    bool random_variant = false;
    double random_activation_prob = 0.5;
    std::vector<Transition> transitions;
};

class SpecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Parses the textual spec format (see data/*.fsm). Validates probability
// sums, state names and duplicate (pre, action) keys; errors name the
// offending transition. Also checks that the goal state is reachable from
// the empty configuration.
FsmSpec load_spec(const std::string& document);
std::string spec_to_text(const FsmSpec& spec);

// Bundled reconstruction of the two-cell benchmark. `name` is one of
// "complete", "rs", "sgs", "neg".
FsmSpec builtin_spec(const std::string& name, bool random_variant = false);
std::string builtin_spec_text(const std::string& name);

bool goal_reachable(const FsmSpec& spec);

struct EnvStepResult {
    std::map<std::string, StateValue> observations;
    bool goal_reached = false;
    std::uint64_t episode_len = 0;
};

// Two-cell FSM with a goal-restart: reaching G in cell 1 ends the episode
// and the next action is applied from the empty configuration.
class FsmEnv {
public:
    explicit FsmEnv(FsmSpec spec);

    // BSV layout for model construction: 14 state BSVs, n_actions action
    // BSVs, plus two random BSVs in the random variant.
    std::vector<BsvSpec> bsv_layout() const;

    EnvStepResult reset(std::uint64_t seed);
    EnvStepResult step(int action);

    // Swaps in a different transition table (used at phase switches). Cells
    // and rng are kept; the layout must be unchanged.
    void switch_spec(FsmSpec spec);

    const FsmSpec& spec() const { return spec_; }
    CellState cell1() const { return cell1_; }
    CellState cell2() const { return cell2_; }
    std::uint64_t episode_len() const { return episode_len_; }

private:
    EnvStepResult make_result() const;
    void sample_random_bits();

    FsmSpec spec_;
    CellState cell1_ = CellState::Empty;
    CellState cell2_ = CellState::Empty;
    int last_action_ = -1;
    bool random_bit0_ = false, random_bit1_ = false;
    std::uint64_t episode_len_ = 0;
    std::mt19937_64 rng_;
};

// Deterministic helpers shared by env/policies; avoids distribution
// implementation differences across standard libraries.
inline std::uint64_t rand_below(std::mt19937_64& rng, std::uint64_t n) {
    return rng() % n;
}
inline double rand_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace varsel
