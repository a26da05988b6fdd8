#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "varsel/learner.hpp"
#include "varsel/model.hpp"

using namespace varsel;

namespace {

std::map<SvId, StateValue> all_inactive(const Model& m) {
    std::map<SvId, StateValue> obs;
    for (const auto& b : m.bsvs()) obs[b.id] = StateValue::Inactive;
    return obs;
}

Model basic_model() {
    return Model({{"P", false}, {"Q", false}, {"R", false}, {"act", true}});
}

}  // namespace

TEST_CASE("dsv states follow owner transitions") {
    Model m = basic_model();
    m.reset_states(all_inactive(m));
    SvId p = m.find("P");
    SvId p_a = m.find("P_A"), p_d = m.find("P_D");

    auto obs = all_inactive(m);
    obs[p] = StateValue::Active;   // P: I -> A
    m.compute_dsv_states(obs);
    CHECK(m.state_of(p_a) == StateValue::Active);
    CHECK(m.state_of(p_d) == StateValue::Unobserved);

    m.compute_dsv_states(obs);   // P: A -> A
    CHECK(m.state_of(p_a) == StateValue::Unobserved);
    CHECK(m.state_of(p_d) == StateValue::Inactive);

    obs[p] = StateValue::Inactive;   // P: A -> I
    m.compute_dsv_states(obs);
    CHECK(m.state_of(p_d) == StateValue::Active);
    CHECK(m.state_of(p_a) == StateValue::Unobserved);

    m.compute_dsv_states(obs);   // P: I -> I
    CHECK(m.state_of(p_a) == StateValue::Inactive);
    CHECK(m.state_of(p_d) == StateValue::Unobserved);
}

TEST_CASE("observation validation") {
    Model m = basic_model();
    m.reset_states(all_inactive(m));
    auto obs = all_inactive(m);
    obs[9999] = StateValue::Active;
    CHECK_THROWS_AS(m.compute_dsv_states(obs), ModelError);

    obs = all_inactive(m);
    obs[m.find("P")] = StateValue::Unobserved;
    CHECK_THROWS_AS(m.compute_dsv_states(obs), ModelError);

    obs = all_inactive(m);
    obs.erase(m.find("Q"));
    CHECK_THROWS_AS(m.compute_dsv_states(obs), ModelError);

    // Missing action observations are allowed and default to not taken.
    obs = all_inactive(m);
    obs.erase(m.find("act"));
    CHECK_NOTHROW(m.compute_dsv_states(obs));
    CHECK(m.state_of(m.find("act")) == StateValue::Inactive);
}

TEST_CASE("sources_satisfied reads the relevant step") {
    Model m = basic_model();
    m.reset_states(all_inactive(m));
    SvId p = m.find("P"), q = m.find("Q"), act = m.find("act");

    auto& c = m.create_csv({p, act}, {q}, {m.find("R_A")});

    // P was active previously; q inactive previously; action taken now.
    m.set_states_raw(p, StateValue::Inactive, StateValue::Active);
    m.set_states_raw(q, StateValue::Active, StateValue::Inactive);
    m.set_states_raw(act, StateValue::Active, StateValue::Inactive);
    CHECK(m.sources_satisfied(c));

    // An active negative source at the relevant step breaks satisfaction.
    m.set_states_raw(q, StateValue::Inactive, StateValue::Active);
    CHECK_FALSE(m.sources_satisfied(c));
}

TEST_CASE("separate_active_inactive_targets splits mixed targets") {
    Model m = Model({{"B1", false}, {"B2", false}, {"B3", false}, {"S", false}});
    m.reset_states(all_inactive(m));
    SvId d1 = m.find("B1_A"), d2 = m.find("B2_A"), d3 = m.find("B3_A");
    SvId s = m.find("S");
    auto& c = m.create_csv({s}, {}, {d1, d2, d3});
    SvId cid = c.id;

    m.set_states_raw(d1, StateValue::Active, StateValue::Unobserved);
    m.set_states_raw(d2, StateValue::Inactive, StateValue::Unobserved);
    m.set_states_raw(d3, StateValue::Unobserved, StateValue::Unobserved);

    SvId copy = m.separate_active_inactive_targets(cid);
    REQUIRE(copy != kNoSv);
    CHECK(m.csv(cid).targets == std::vector<SvId>{d1, d3});
    CHECK(m.csv(copy).targets == std::vector<SvId>{d2, d3});
    CHECK(m.csv(copy).pos_sources == m.csv(cid).pos_sources);

    // No split when targets do not mix active and inactive.
    m.set_states_raw(d2, StateValue::Unobserved, StateValue::Unobserved);
    CHECK(m.separate_active_inactive_targets(cid) == kNoSv);
}

TEST_CASE("computation order puts targets before their conditioners") {
    Model m = Model({{"B1", false}, {"B2", false}, {"S", false}});
    m.reset_states(all_inactive(m));
    SvId d = m.find("B2_A");
    auto& c0 = m.create_csv({m.find("B1")}, {}, {d});
    SvId c0_id = c0.id;
    auto& c1 = m.create_csv({m.find("S")}, {}, {c0_id});
    SvId c1_id = c1.id;

    auto order = m.computation_order();
    REQUIRE(order.size() == 2);
    CHECK(order[0] == c0_id);
    CHECK(order[1] == c1_id);

    SUBCASE("no CSVs means an empty order") {
        Model empty = basic_model();
        CHECK(empty.computation_order().empty());
    }

    SUBCASE("diamond resolves deterministically by id") {
        auto& c2 = m.create_csv({m.find("S")}, {}, {c0_id});
        auto& c3 = m.create_csv({m.find("B1")}, {}, {c0_id});
        SvId c2_id = c2.id, c3_id = c3.id;
        auto o = m.computation_order();
        REQUIRE(o.size() == 4);
        CHECK(o[0] == c0_id);
        // All conditioners of c0 come after it, ordered by id.
        CHECK(std::find(o.begin(), o.end(), c2_id) < std::find(o.begin(), o.end(), c3_id));
        for (SvId id : o) {
            const auto& c = m.csv(id);
            for (SvId t : c.targets) {
                if (m.kind_of(t) != SvKind::Csv) continue;
                CHECK(std::find(o.begin(), o.end(), t) < std::find(o.begin(), o.end(), id));
            }
        }
    }
}

TEST_CASE("csv state computation matches the brute-force evaluator") {
    // Exhaustive sweep over <=4 sources and <=2 targets, all ternary source
    // and target assignments.
    std::uint64_t checked = 0;
    for (int n_pos = 1; n_pos <= 4; ++n_pos) {
        for (int n_neg = 0; n_neg + n_pos <= 4; ++n_neg) {
            for (int n_tgt = 1; n_tgt <= 2; ++n_tgt) {
                int n_src = n_pos + n_neg;
                int src_combos = 1;
                for (int i = 0; i < n_src; ++i) src_combos *= 3;
                int tgt_combos = 1;
                for (int i = 0; i < n_tgt; ++i) tgt_combos *= 3;
                for (int sc = 0; sc < src_combos; ++sc) {
                    for (int tc = 0; tc < tgt_combos; ++tc) {
                        oracle::CsvInstance inst;
                        int rest = sc;
                        for (int i = 0; i < n_pos; ++i) {
                            inst.pos.push_back(static_cast<StateValue>(rest % 3));
                            rest /= 3;
                        }
                        for (int i = 0; i < n_neg; ++i) {
                            inst.neg.push_back(static_cast<StateValue>(rest % 3));
                            rest /= 3;
                        }
                        rest = tc;
                        for (int i = 0; i < n_tgt; ++i) {
                            inst.targets.push_back(static_cast<StateValue>(rest % 3));
                            rest /= 3;
                        }

                        // Build a model mirror of the instance: every source
                        // and target is a DSV so all three states occur.
                        std::vector<BsvSpec> specs;
                        for (int i = 0; i < n_src + n_tgt; ++i)
                            specs.push_back({"B" + std::to_string(i), false});
                        Model m(specs);
                        m.reset_states(all_inactive(m));
                        std::vector<SvId> pos, neg, tgt;
                        int bi = 0;
                        for (int i = 0; i < n_pos; ++i) {
                            SvId d = m.bsvs()[bi++].dsv_activation;
                            m.set_states_raw(d, StateValue::Unobserved, inst.pos[i]);
                            pos.push_back(d);
                        }
                        for (int i = 0; i < n_neg; ++i) {
                            SvId d = m.bsvs()[bi++].dsv_activation;
                            m.set_states_raw(d, StateValue::Unobserved, inst.neg[i]);
                            neg.push_back(d);
                        }
                        for (int i = 0; i < n_tgt; ++i) {
                            SvId d = m.bsvs()[bi++].dsv_activation;
                            m.set_states_raw(d, inst.targets[i], StateValue::Unobserved);
                            tgt.push_back(d);
                        }
                        auto& c = m.create_csv(pos, neg, tgt);
                        SvId cid = c.id;

                        auto expected = oracle::evaluate_csv(inst);
                        StepReport report;
                        StateValue got = compute_csv_state(m, cid, true, report);

                        if (expected.split) {
                            REQUIRE(report.duplications.size() == 1);
                            SvId copy = report.duplications[0].copy;
                            StateValue copy_state = compute_csv_state(m, copy, true, report);
                            // Active half keeps the original id.
                            const auto& half_a = expected.halves[0];
                            const auto& half_b = expected.halves[1];
                            CHECK(got == half_a.state);
                            CHECK(copy_state == half_b.state);
                            std::vector<SvId> exp_a, exp_b;
                            for (auto i : half_a.target_indices) exp_a.push_back(tgt[i]);
                            for (auto i : half_b.target_indices) exp_b.push_back(tgt[i]);
                            std::sort(exp_a.begin(), exp_a.end());
                            std::sort(exp_b.begin(), exp_b.end());
                            CHECK(m.csv(cid).targets == exp_a);
                            CHECK(m.csv(copy).targets == exp_b);
                            auto check_sources = [&](SvId id, const oracle::CsvHalf& h) {
                                std::vector<SvId> ep, en;
                                for (auto i : h.pos_kept) ep.push_back(pos[i]);
                                for (auto i : h.neg_kept) en.push_back(neg[i]);
                                std::sort(ep.begin(), ep.end());
                                std::sort(en.begin(), en.end());
                                CHECK(m.csv(id).pos_sources == ep);
                                CHECK(m.csv(id).neg_sources == en);
                            };
                            check_sources(cid, half_a);
                            check_sources(copy, half_b);
                        } else {
                            REQUIRE(report.duplications.empty());
                            const auto& half = expected.halves[0];
                            CHECK(got == half.state);
                            std::vector<SvId> ep, en;
                            for (auto i : half.pos_kept) ep.push_back(pos[i]);
                            for (auto i : half.neg_kept) en.push_back(neg[i]);
                            std::sort(ep.begin(), ep.end());
                            std::sort(en.begin(), en.end());
                            CHECK(m.csv(cid).pos_sources == ep);
                            CHECK(m.csv(cid).neg_sources == en);
                        }
                        ++checked;
                    }
                }
            }
        }
    }
    CHECK(checked > 5000);
}

TEST_CASE("monotone refinement and replay on random histories") {
    std::mt19937_64 rng(7);
    for (int history = 0; history < 200; ++history) {
        int n_pos = 1 + static_cast<int>(rng() % 4);
        int n_neg = static_cast<int>(rng() % 3);
        int n_tgt = 1 + static_cast<int>(rng() % 3);
        std::vector<BsvSpec> specs;
        for (int i = 0; i < n_pos + n_neg + n_tgt; ++i)
            specs.push_back({"B" + std::to_string(i), false});
        Model m(specs);
        m.reset_states(all_inactive(m));
        std::vector<SvId> pos, neg, tgt;
        int bi = 0;
        for (int i = 0; i < n_pos; ++i) pos.push_back(m.bsvs()[bi++].dsv_activation);
        for (int i = 0; i < n_neg; ++i) neg.push_back(m.bsvs()[bi++].dsv_activation);
        for (int i = 0; i < n_tgt; ++i) tgt.push_back(m.bsvs()[bi++].dsv_activation);
        auto& c = m.create_csv(pos, neg, tgt);
        SvId cid = c.id;
        // The replay property needs a fixed target set and no negative source
        // formation; formation is marked done up front.
        m.csv(cid).neg_connections_formed = true;

        struct Logged {
            std::map<SvId, StateValue> source_states;
            std::map<SvId, StateValue> target_states;
            StateValue state;
            bool covered;   // sources satisfied, or every positive source nonactive
        };
        std::vector<Logged> history_log;

        auto prev_pos = m.csv(cid).pos_sources;
        auto prev_neg = m.csv(cid).neg_sources;
        for (int step = 0; step < 30; ++step) {
            // Homogeneous target draws keep the target set fixed (mixed
            // active/inactive draws would duplicate).
            StateValue tval = static_cast<StateValue>(rng() % 3);
            Logged log;
            for (SvId s : pos) {
                StateValue v = static_cast<StateValue>(rng() % 3);
                m.set_states_raw(s, StateValue::Unobserved, v);
                log.source_states[s] = v;
            }
            for (SvId s : neg) {
                StateValue v = static_cast<StateValue>(rng() % 3);
                m.set_states_raw(s, StateValue::Unobserved, v);
                log.source_states[s] = v;
            }
            for (SvId t : tgt) {
                m.set_states_raw(t, tval, StateValue::Unobserved);
                log.target_states[t] = tval;
            }
            {
                const auto& cc = m.csv(cid);
                bool satisfied = m.sources_satisfied(cc);
                bool none_pos_active = true;
                for (SvId s : cc.pos_sources)
                    if (m.source_state(s) == StateValue::Active) none_pos_active = false;
                log.covered = satisfied || none_pos_active;
            }
            StepReport report;
            log.state = compute_csv_state(m, cid, true, report);
            REQUIRE(report.duplications.empty());
            history_log.push_back(log);

            // Monotone refinement.
            const auto& cc = m.csv(cid);
            for (SvId s : cc.pos_sources)
                CHECK(std::find(prev_pos.begin(), prev_pos.end(), s) != prev_pos.end());
            for (SvId s : cc.neg_sources)
                CHECK(std::find(prev_neg.begin(), prev_neg.end(), s) != prev_neg.end());
            prev_pos = cc.pos_sources;
            prev_neg = cc.neg_sources;

            // Replaying any earlier instance whose encounter the continuity
            // argument covers (sources fully satisfied, or no positive source
            // active) yields the recorded state. Partially satisfied
            // encounters sit outside the argument and may legitimately
            // resolve differently once sources are refined.
            for (const auto& old : history_log) {
                if (!old.covered) continue;
                for (const auto& [id, v] : old.source_states)
                    m.set_states_raw(id, StateValue::Unobserved, v);
                for (const auto& [id, v] : old.target_states)
                    m.set_states_raw(id, v, StateValue::Unobserved);
                CHECK(evaluate_csv_state(m, m.csv(cid)) == old.state);
            }
        }
    }
}

TEST_CASE("model json round-trip is lossless") {
    Model m = Model({{"B1", false}, {"B2", false}, {"act", true}});
    m.reset_states(all_inactive(m));
    auto& c0 = m.create_csv({m.find("B1"), m.find("act")}, {m.find("B2")}, {m.find("B2_A")});
    c0.counters[0] = NceCounters{10, 4, 5, 2};
    c0.flag = Flag::Conditional;
    c0.neg_connections_formed = true;
    SvId c0_id = c0.id;
    auto& c1 = m.create_csv({m.find("B2")}, {}, {c0_id});
    c1.conditioner_formation_blocked = true;
    m.set_step_counter(42);
    m.set_states_raw(m.find("B1"), StateValue::Active, StateValue::Inactive);

    std::string text = model_to_json(m);
    Model back = model_from_json(text);
    CHECK(model_to_json(back) == text);
    CHECK(back.structure_hash() == m.structure_hash());
    CHECK(back.step_counter() == 42);
    CHECK(back.csv(c0_id).counters[0] == NceCounters{10, 4, 5, 2});
    CHECK(back.conditioners_of(c0_id).size() == 1);
}

TEST_CASE("remove_csv keeps ids stable and cascades through the index") {
    Model m = Model({{"B1", false}, {"B2", false}});
    m.reset_states(all_inactive(m));
    SvId a = m.create_csv({m.find("B1")}, {}, {m.find("B2_A")}).id;
    SvId b = m.create_csv({m.find("B2")}, {}, {a}).id;
    CHECK(m.conditioners_of(a) == std::vector<SvId>{b});
    m.remove_csv(a);
    CHECK_FALSE(m.contains(a));
    CHECK(m.csv(b).targets.empty());
}
