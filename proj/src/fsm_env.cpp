#include "varsel/fsm_env.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace varsel {

const char* to_string(CellState s) {
    switch (s) {
        case CellState::Do: return "DO";
        case CellState::Dc: return "DC";
        case CellState::W: return "W";
        case CellState::G: return "G";
        case CellState::Sg1: return "SG1";
        case CellState::Sg2: return "SG2";
        case CellState::X: return "X";
        case CellState::Empty: return "-";
    }
    return "?";
}

std::optional<CellState> cell_state_from_string(const std::string& s) {
    if (s == "DO") return CellState::Do;
    if (s == "DC") return CellState::Dc;
    if (s == "W") return CellState::W;
    if (s == "G") return CellState::G;
    if (s == "SG1") return CellState::Sg1;
    if (s == "SG2") return CellState::Sg2;
    if (s == "X") return CellState::X;
    if (s == "-") return CellState::Empty;
    return std::nullopt;
}

const char* to_string(Subtype s) {
    switch (s) {
        case Subtype::Rs: return "rs";
        case Subtype::Sgs: return "sgs";
        case Subtype::Neg: return "neg";
        case Subtype::Complete: return "complete";
    }
    return "?";
}

namespace {

constexpr std::array<CellState, 7> kNamedStates = {
    CellState::Do, CellState::Dc, CellState::W, CellState::G,
    CellState::Sg1, CellState::Sg2, CellState::X};

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == '#') break;
        if (std::isspace(static_cast<unsigned char>(ch)) || ch == '(' || ch == ')' || ch == ',') {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else if (ch == '|') {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
            out.push_back("|");
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

CellPattern parse_pre(const std::string& tok, const std::string& line) {
    if (tok == "*") return CellPattern{true, CellState::Empty};
    auto s = cell_state_from_string(tok);
    if (!s) throw SpecError("unknown state name '" + tok + "' in: " + line);
    return CellPattern{false, *s};
}

OutcomeCell parse_out(const std::string& tok, const std::string& line) {
    if (tok == "=") return OutcomeCell{true, CellState::Empty};
    auto s = cell_state_from_string(tok);
    if (!s) throw SpecError("unknown state name '" + tok + "' in: " + line);
    return OutcomeCell{false, *s};
}

std::string pre_key(const Transition& t) {
    std::string k;
    k += t.pre1.any ? "*" : to_string(t.pre1.state);
    k += "/";
    k += t.pre2.any ? "*" : to_string(t.pre2.state);
    k += "/";
    k += t.action.has_value() ? std::to_string(*t.action) : "*";
    return k;
}

}  // namespace

FsmSpec load_spec(const std::string& document) {
    FsmSpec spec;
    std::istringstream in(document);
    std::string line;
    std::set<std::string> keys;
    while (std::getline(in, line)) {
        auto toks = tokenize(line);
        if (toks.empty()) continue;
        if (toks.size() >= 3 && toks[1] == "=") {
            const std::string& key = toks[0];
            const std::string& val = toks[2];
            if (key == "subtype") {
                if (val == "rs") spec.subtype = Subtype::Rs;
                else if (val == "sgs") spec.subtype = Subtype::Sgs;
                else if (val == "neg") spec.subtype = Subtype::Neg;
                else if (val == "complete") spec.subtype = Subtype::Complete;
                else throw SpecError("unknown subtype: " + val);
            } else if (key == "actions") {
                spec.n_actions = std::stoi(val);
                if (spec.n_actions < 1) throw SpecError("actions must be positive");
            } else if (key == "random_variant") {
                spec.random_variant = (val == "true" || val == "1");
            } else if (key == "random_activation_prob") {
                spec.random_activation_prob = std::stod(val);
            } else {
                throw SpecError("unknown key: " + key);
            }
            continue;
        }
        // (pre1,pre2) action -> (o1,o2) p [| (o1,o2) p ...]
        if (toks.size() < 7) throw SpecError("malformed transition: " + line);
        Transition t;
        t.pre1 = parse_pre(toks[0], line);
        t.pre2 = parse_pre(toks[1], line);
        const std::string& act = toks[2];
        if (act == "*") {
            t.action = std::nullopt;
        } else {
            if (act.size() < 2 || act[0] != 'a')
                throw SpecError("malformed action '" + act + "' in: " + line);
            t.action = std::stoi(act.substr(1));
        }
        if (toks[3] != "->") throw SpecError("expected '->' in: " + line);
        std::size_t i = 4;
        while (i < toks.size()) {
            if (toks[i] == "|") {
                ++i;
                continue;
            }
            if (i + 2 >= toks.size()) throw SpecError("malformed outcome in: " + line);
            Outcome o;
            o.cell1 = parse_out(toks[i], line);
            o.cell2 = parse_out(toks[i + 1], line);
            o.probability = std::stod(toks[i + 2]);
            t.outcomes.push_back(o);
            i += 3;
        }
        double sum = 0;
        for (const auto& o : t.outcomes) sum += o.probability;
        if (std::abs(sum - 1.0) > 1e-9)
            throw SpecError("outcome probabilities sum to " + std::to_string(sum) + " in: " + line);
        if (!keys.insert(pre_key(t)).second)
            throw SpecError("duplicate (pre, action) key in: " + line);
        spec.transitions.push_back(std::move(t));
    }
    for (const auto& t : spec.transitions)
        if (t.action.has_value() && (*t.action < 0 || *t.action >= spec.n_actions))
            throw SpecError("action id out of range: a" + std::to_string(*t.action));
    if (!goal_reachable(spec))
        throw SpecError("goal state G in cell 1 is not reachable from the empty configuration");
    return spec;
}

std::string spec_to_text(const FsmSpec& spec) {
    std::ostringstream out;
    out << "subtype = " << to_string(spec.subtype) << "\n";
    out << "actions = " << spec.n_actions << "\n";
    out << "random_variant = " << (spec.random_variant ? "true" : "false") << "\n";
    out << "random_activation_prob = " << spec.random_activation_prob << "\n";
    for (const auto& t : spec.transitions) {
        out << "(" << (t.pre1.any ? "*" : to_string(t.pre1.state)) << ","
            << (t.pre2.any ? "*" : to_string(t.pre2.state)) << ") ";
        if (t.action.has_value())
            out << "a" << *t.action;
        else
            out << "*";
        out << " ->";
        bool first = true;
        for (const auto& o : t.outcomes) {
            if (!first) out << " |";
            first = false;
            out << " (" << (o.cell1.keep ? "=" : to_string(o.cell1.state)) << ","
                << (o.cell2.keep ? "=" : to_string(o.cell2.state)) << ") " << o.probability;
        }
        out << "\n";
    }
    return out.str();
}

bool goal_reachable(const FsmSpec& spec) {
    auto encode = [](CellState a, CellState b) {
        return static_cast<int>(a) * 8 + static_cast<int>(b);
    };
    std::set<int> seen;
    std::vector<std::pair<CellState, CellState>> frontier{{CellState::Empty, CellState::Empty}};
    seen.insert(encode(CellState::Empty, CellState::Empty));
    while (!frontier.empty()) {
        auto [c1, c2] = frontier.back();
        frontier.pop_back();
        if (c1 == CellState::G) return true;
        for (int a = 0; a < spec.n_actions; ++a) {
            for (const auto& t : spec.transitions) {
                if (!t.pre1.matches(c1) || !t.pre2.matches(c2)) continue;
                if (t.action.has_value() && *t.action != a) continue;
                for (const auto& o : t.outcomes) {
                    if (o.probability <= 0) continue;
                    CellState n1 = o.cell1.apply(c1);
                    CellState n2 = o.cell2.apply(c2);
                    if (seen.insert(encode(n1, n2)).second) frontier.push_back({n1, n2});
                }
                break;   // first matching transition wins
            }
        }
    }
    return false;
}

namespace {

// Shared portion present in every subtype file: the walled corridor and the
// guarded door every route sits behind.
const char* kBlackPortion =
    "(-,-)  a0 -> (-,W) 1.0\n"     // venture: the side wall rises
    "(-,W)  a1 -> (DC,W) 1.0\n"    // approach: a closed door appears
    "(DC,W) a2 -> (DO,W) 1.0\n"    // open the door
    "(DO,W) a3 -> (-,W) 0.5 | (DO,W) 0.5\n"     // it slams shut and vanishes; back to the corridor
    "(-,-)  a19 -> (-,-) 1.0\n";   // wait

const char* kRsPortion =
    "(DO,W) a4 -> (W,-) 0.6 | (DO,W) 0.4\n"   // squeeze through; the side wall crumbles
    "(W,-)  a5 -> (G,-) 1.0\n";               // cross the hall to the goal

const char* kSgsPortion =
    "(DO,W)  a7 -> (SG1,W) 0.65 | (W,SG1) 0.35\n"   // subgoal lands in either cell
    "(SG1,W) a9 -> (SG2,W) 1.0\n"
    "(W,SG1) a8 -> (SG2,W) 1.0\n"                   // attune from the far side
    "(SG2,W) a10 -> (G,W) 1.0\n";

const char* kNegPortion =
    "(DO,W) a11 -> (X,W) 0.55 | (X,X) 0.45\n"   // probing may contaminate the far cell
    "(X,X)  a14 -> (X,-) 1.0\n"               // purge the contamination
    "(X,W)  a13 -> (G,W) 1.0\n"
    "(X,-)  a13 -> (G,-) 1.0\n";

}  // namespace

std::string builtin_spec_text(const std::string& name) {
    std::string head = "subtype = " + name +
                       "\nactions = 20\nrandom_variant = false\nrandom_activation_prob = 0.5\n";
    if (name == "rs") return head + kBlackPortion + kRsPortion;
    if (name == "sgs") return head + kBlackPortion + kSgsPortion;
    if (name == "neg") return head + kBlackPortion + kNegPortion;
    if (name == "complete")
        return head + kBlackPortion + kRsPortion + kSgsPortion + kNegPortion;
    throw SpecError("unknown builtin spec: " + name);
}

FsmSpec builtin_spec(const std::string& name, bool random_variant) {
    FsmSpec spec = load_spec(builtin_spec_text(name));
    spec.random_variant = random_variant;
    return spec;
}

FsmEnv::FsmEnv(FsmSpec spec) : spec_(std::move(spec)) {}

std::vector<BsvSpec> FsmEnv::bsv_layout() const {
    std::vector<BsvSpec> out;
    for (int cell = 1; cell <= 2; ++cell)
        for (CellState s : kNamedStates)
            out.push_back(BsvSpec{std::to_string(cell) + to_string(s), false});
    for (int a = 0; a < spec_.n_actions; ++a)
        out.push_back(BsvSpec{"a" + std::to_string(a), true});
    if (spec_.random_variant) {
        out.push_back(BsvSpec{"r0", false});
        out.push_back(BsvSpec{"r1", false});
    }
    return out;
}

void FsmEnv::sample_random_bits() {
    if (!spec_.random_variant) return;
    random_bit0_ = rand_unit(rng_) < spec_.random_activation_prob;
    random_bit1_ = rand_unit(rng_) < spec_.random_activation_prob;
}

EnvStepResult FsmEnv::reset(std::uint64_t seed) {
    rng_.seed(seed);
    cell1_ = cell2_ = CellState::Empty;
    last_action_ = -1;
    episode_len_ = 0;
    sample_random_bits();
    return make_result();
}

void FsmEnv::switch_spec(FsmSpec spec) {
    if (spec.n_actions != spec_.n_actions || spec.random_variant != spec_.random_variant)
        throw SpecError("phase switch must preserve the BSV layout");
    spec_ = std::move(spec);
}

EnvStepResult FsmEnv::step(int action) {
    if (action < 0 || action >= spec_.n_actions)
        throw SpecError("action out of range: " + std::to_string(action));
    if (cell1_ == CellState::G) {
        // Episode restart: the next action applies from the empty
        // configuration. The model sees this as one transition.
        cell1_ = cell2_ = CellState::Empty;
        episode_len_ = 0;
    }
    for (const auto& t : spec_.transitions) {
        if (!t.pre1.matches(cell1_) || !t.pre2.matches(cell2_)) continue;
        if (t.action.has_value() && *t.action != action) continue;
        double roll = rand_unit(rng_);
        double acc = 0;
        const Outcome* chosen = &t.outcomes.back();
        for (const auto& o : t.outcomes) {
            acc += o.probability;
            if (roll < acc) {
                chosen = &o;
                break;
            }
        }
        CellState n1 = chosen->cell1.apply(cell1_);
        CellState n2 = chosen->cell2.apply(cell2_);
        cell1_ = n1;
        cell2_ = n2;
        break;   // first matching transition wins; unmatched pairs are no-ops
    }
    last_action_ = action;
    ++episode_len_;
    sample_random_bits();
    return make_result();
}

EnvStepResult FsmEnv::make_result() const {
    EnvStepResult r;
    for (int cell = 1; cell <= 2; ++cell) {
        CellState held = cell == 1 ? cell1_ : cell2_;
        for (CellState s : kNamedStates)
            r.observations[std::to_string(cell) + to_string(s)] =
                held == s ? StateValue::Active : StateValue::Inactive;
    }
    for (int a = 0; a < spec_.n_actions; ++a)
        r.observations["a" + std::to_string(a)] =
            a == last_action_ ? StateValue::Active : StateValue::Inactive;
    if (spec_.random_variant) {
        r.observations["r0"] = random_bit0_ ? StateValue::Active : StateValue::Inactive;
        r.observations["r1"] = random_bit1_ ? StateValue::Active : StateValue::Inactive;
    }
    r.goal_reached = cell1_ == CellState::G;
    r.episode_len = episode_len_;
    return r;
}

}  // namespace varsel
