#include <json.hpp>

#include "varsel/model.hpp"

namespace varsel {

namespace {

using nlohmann::json;

json counters_to_json(const NceCounters& k) {
    return json::array({k.n_steps_observed, k.n_incidence, k.n_ss, k.n_cc});
}

NceCounters counters_from_json(const json& j) {
    NceCounters k;
    k.n_steps_observed = j.at(0).get<std::uint64_t>();
    k.n_incidence = j.at(1).get<std::uint64_t>();
    k.n_ss = j.at(2).get<std::uint64_t>();
    k.n_cc = j.at(3).get<std::uint64_t>();
    return k;
}

}  // namespace

std::string model_to_json(const Model& m) {
    json j;
    j["schema"] = "varsel-model";
    j["version"] = 1;
    j["step"] = m.step_counter();
    json bsvs = json::array();
    for (const auto& b : m.bsvs()) {
        bsvs.push_back({{"id", b.id},
                        {"name", b.name},
                        {"is_action", b.is_action},
                        {"state", to_string(b.state)},
                        {"prev", to_string(b.prev_state)}});
    }
    j["bsvs"] = std::move(bsvs);
    json dsvs = json::array();
    for (const auto& d : m.dsvs()) {
        dsvs.push_back({{"id", d.id},
                        {"name", d.name},
                        {"owner", d.owner},
                        {"polarity", d.polarity == DsvPolarity::Activation ? "A" : "D"},
                        {"state", to_string(d.state)},
                        {"prev", to_string(d.prev_state)},
                        {"flag", to_string(d.flag)}});
    }
    j["dsvs"] = std::move(dsvs);
    json csvs = json::array();
    for (const auto& c : m.csvs()) {
        json counters = json::array();
        for (const auto& k : c.counters) counters.push_back(counters_to_json(k));
        csvs.push_back({{"id", c.id},
                        {"name", c.name},
                        {"pos", c.pos_sources},
                        {"neg", c.neg_sources},
                        {"targets", c.targets},
                        {"counters", std::move(counters)},
                        {"state", to_string(c.state)},
                        {"prev", to_string(c.prev_state)},
                        {"flag", to_string(c.flag)},
                        {"neg_formed", c.neg_connections_formed},
                        {"blocked", c.conditioner_formation_blocked}});
    }
    j["csvs"] = std::move(csvs);
    return j.dump(2);
}

Model model_from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.at("schema").get<std::string>() != "varsel-model")
        throw ModelError("not a model document");
    if (j.at("version").get<int>() != 1)
        throw ModelError("unsupported model version");

    std::vector<BsvSpec> specs;
    for (const auto& b : j.at("bsvs"))
        specs.push_back(BsvSpec{b.at("name").get<std::string>(), b.at("is_action").get<bool>()});
    Model m(specs);

    auto parse_state = [](const json& node, const char* key) {
        auto v = state_from_string(node.at(key).get<std::string>());
        if (!v) throw ModelError("bad state value in model document");
        return *v;
    };

    // Ids are creation-ordered; the document must agree with reconstruction.
    std::size_t bi = 0;
    for (const auto& b : j.at("bsvs")) {
        if (m.bsvs()[bi].id != b.at("id").get<SvId>())
            throw ModelError("BSV id mismatch in model document");
        m.set_states_raw(m.bsvs()[bi].id, parse_state(b, "state"), parse_state(b, "prev"));
        ++bi;
    }
    std::size_t di = 0;
    for (const auto& d : j.at("dsvs")) {
        SvId id = d.at("id").get<SvId>();
        if (m.dsvs()[di].id != id) throw ModelError("DSV id mismatch in model document");
        m.set_states_raw(id, parse_state(d, "state"), parse_state(d, "prev"));
        auto f = flag_from_string(d.at("flag").get<std::string>());
        if (!f) throw ModelError("bad flag in model document");
        m.set_flag(id, *f);
        ++di;
    }
    for (const auto& cj : j.at("csvs")) {
        ConditioningSv c;
        c.id = cj.at("id").get<SvId>();
        c.name = cj.at("name").get<std::string>();
        c.pos_sources = cj.at("pos").get<std::vector<SvId>>();
        c.neg_sources = cj.at("neg").get<std::vector<SvId>>();
        c.targets = cj.at("targets").get<std::vector<SvId>>();
        for (const auto& k : cj.at("counters")) c.counters.push_back(counters_from_json(k));
        if (c.counters.size() != c.targets.size())
            throw ModelError("counter/target length mismatch");
        c.state = *state_from_string(cj.at("state").get<std::string>());
        c.prev_state = *state_from_string(cj.at("prev").get<std::string>());
        auto f = flag_from_string(cj.at("flag").get<std::string>());
        if (!f) throw ModelError("bad flag in model document");
        c.flag = *f;
        c.neg_connections_formed = cj.at("neg_formed").get<bool>();
        c.conditioner_formation_blocked = cj.at("blocked").get<bool>();
        m.restore_csv(std::move(c));
    }
    m.rebuild_conditioner_index();
    m.set_step_counter(j.at("step").get<std::uint64_t>());
    return m;
}

}  // namespace varsel
