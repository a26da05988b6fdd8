#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "varsel/model.hpp"

namespace varsel {

// Desired effect carried by an action-network node: activate, deactivate, be
// active, be nonactive. CSV nodes carry no tag.
enum class TargetTag : std::uint8_t { Activate = 0, Deactivate = 1, One = 2, Zero = 3 };

const char* to_string(TargetTag t);

// Fixed table: A -> Zero, D -> One, One -> A, Zero -> D.
TargetTag precondition_tag(TargetTag t);

struct GroupSv {
    SvId id = kNoSv;
    std::string name;
    std::vector<SvId> constituents;   // BSV ids, sorted
};

// Planner-time event reference: either another CSV, or a (BSV/GSV, A|D) pair.
struct EventRef {
    SvId sv = kNoSv;
    bool is_csv = false;
    TargetTag tag = TargetTag::Activate;   // meaningful when !is_csv
};

// Read-only overlay over a learned model: multi-BSV source sets and
// co-predicted event sets are grouped into GSVs and CSV links are rewired to
// them. The model itself is untouched.
class PlanView {
public:
    explicit PlanView(const Model& m);

    const Model& model() const { return *model_; }
    const std::vector<GroupSv>& gsvs() const { return gsvs_; }
    bool is_gsv(SvId id) const;
    const GroupSv& gsv(SvId id) const;
    const std::string& name_of(SvId id) const;

    struct CsvLinks {
        std::vector<SvId> pos;   // BSV, DSV or GSV ids
        std::vector<SvId> neg;
        std::vector<EventRef> targets;
    };
    const CsvLinks& links(SvId csv_id) const;

    // CSVs conditioning an event (base SV or GSV, A|D), in id order.
    const std::vector<SvId>& event_conditioners(SvId base, TargetTag tag) const;

    // GSVs a BSV belongs to; for a GSV, the GSVs sharing a constituent.
    const std::vector<SvId>& constituencies(SvId id) const;

    StateValue current(SvId id) const;    // GSV-aware
    StateValue previous(SvId id) const;

private:
    const Model* model_;
    std::vector<GroupSv> gsvs_;
    std::map<SvId, CsvLinks> links_;
    std::map<std::pair<SvId, std::uint8_t>, std::vector<SvId>> event_conditioners_;
    std::map<SvId, std::vector<SvId>> constituencies_;
};

PlanView build_gsvs(const Model& m);

enum class EdgeKind : std::uint8_t { Conditioning, Source, Precondition, Constituent, Constituency };

const char* to_string(EdgeKind k);

struct AnKey {
    SvId sv = kNoSv;
    int tag = -1;   // TargetTag value, -1 for CSV nodes
    auto operator<=>(const AnKey&) const = default;
};

struct ActionNetwork {
    struct Node {
        AnKey key;
        std::string label;
        bool satisfied_by_current = false;   // root
        bool dead_end = false;
    };
    struct Edge {
        int from = -1;   // predecessor (upstream)
        int to = -1;     // successor (toward the goal)
        EdgeKind kind = EdgeKind::Conditioning;
        auto operator<=>(const Edge&) const = default;
    };
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    std::map<AnKey, int> index;
    std::vector<int> goals;
    bool goal_reachable = false;

    int find(const AnKey& k) const {
        auto it = index.find(k);
        return it == index.end() ? -1 : it->second;
    }
};

class PlanError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

bool satisfied_by_current(const PlanView& view, SvId sv, TargetTag tag);

// (action, CSV) pairs that could fire on the next step given the current
// states; the basis of choose_action.
std::vector<std::pair<SvId, SvId>> candidate_actions(const ActionNetwork& net,
                                                     const PlanView& view);

// Backward unfolding from the goals to currently satisfied roots. Read-only
// over the model; deterministic for a given model and state.
ActionNetwork plan(const PlanView& view, const std::vector<std::pair<SvId, TargetTag>>& goals);

// Picks an action that can immediately activate some CSV of the network
// (all non-action sources of the CSV and of its conditioned CSV chain are
// actual now). Falls back to a uniform random action.
SvId choose_action(const ActionNetwork& net, const PlanView& view, std::mt19937_64& rng,
                   double exploration_rate);

}  // namespace varsel
