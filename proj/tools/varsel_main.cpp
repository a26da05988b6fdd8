#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "varsel/dot_export.hpp"
#include "varsel/encapsulation.hpp"
#include "varsel/experiments.hpp"
#include "varsel/planner.hpp"
#include "varsel/significance.hpp"

namespace {

using namespace varsel;

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void spill(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

Model load_model(const std::string& path) { return model_from_json(slurp(path)); }

// "1DC,2W" -> those BSVs Active, the rest Inactive; prev = current.
void apply_state(Model& m, const std::string& actives) {
    std::map<SvId, StateValue> obs;
    for (const auto& b : m.bsvs()) obs[b.id] = StateValue::Inactive;
    std::stringstream ss(actives);
    std::string name;
    while (std::getline(ss, name, ',')) {
        if (name.empty()) continue;
        SvId id = m.find(name);
        if (id == kNoSv || m.kind_of(id) != SvKind::Bsv)
            throw std::runtime_error("unknown BSV: " + name);
        obs[id] = StateValue::Active;
    }
    m.reset_states(obs);
}

std::pair<SvId, TargetTag> parse_goal(const Model& m, const std::string& text) {
    auto eq = text.find('=');
    std::string name = eq == std::string::npos ? text : text.substr(0, eq);
    std::string tag = eq == std::string::npos ? "1" : text.substr(eq + 1);
    SvId id = m.find(name);
    if (id == kNoSv) throw std::runtime_error("unknown SV: " + name);
    TargetTag t;
    if (tag == "1") t = TargetTag::One;
    else if (tag == "0") t = TargetTag::Zero;
    else if (tag == "A") t = TargetTag::Activate;
    else if (tag == "D") t = TargetTag::Deactivate;
    else throw std::runtime_error("goal tag must be one of 1, 0, A, D");
    return {id, t};
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
    if (path.empty()) return;
    nlohmann::json j = nlohmann::json::parse(slurp(path));
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("n_trials")) cfg.n_trials = j["n_trials"].get<int>();
    if (j.contains("phase_lengths")) cfg.phase_lengths = j["phase_lengths"].get<std::vector<int>>();
    if (j.contains("exploration_rate")) cfg.exploration_rate = j["exploration_rate"].get<double>();
    if (j.contains("env")) cfg.env = j["env"].get<std::string>();
    if (j.contains("random_variant")) cfg.random_variant = j["random_variant"].get<bool>();
    if (j.contains("significance_enabled"))
        cfg.significance_enabled = j["significance_enabled"].get<bool>();
    if (j.contains("epsilon")) cfg.epsilon = j["epsilon"].get<double>();
    if (j.contains("output_path")) cfg.output_path = j["output_path"].get<std::string>();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"varsel network: continual structure learning, planning and encapsulation"};
    app.require_subcommand(1);

    // learn
    auto* learn = app.add_subcommand("learn", "stream an environment into a model checkpoint");
    std::string learn_env = "complete", learn_out = "model.json", learn_log, learn_config;
    int learn_steps = 4000;
    std::uint64_t learn_seed = 1;
    bool learn_random = false, learn_sig = false;
    double learn_eps = 0.25;
    learn->add_option("--env", learn_env, "builtin name (complete|rs|sgs|neg) or spec file");
    learn->add_option("--steps", learn_steps, "random-action steps");
    learn->add_option("--seed", learn_seed, "rng seed");
    learn->add_option("--out", learn_out, "model checkpoint path");
    learn->add_option("--log-steps", learn_log, "JSON-lines step report log");
    learn->add_option("--config", learn_config, "JSON config file (unused keys ignored)");
    learn->add_flag("--random-variant", learn_random, "enable the two random BSVs");
    learn->add_flag("--significance", learn_sig, "enable NCE-based conditioner blocking");
    learn->add_option("--epsilon", learn_eps, "NCE cutoff");

    // plan
    auto* plan_cmd = app.add_subcommand("plan", "build an action network and emit DOT");
    std::string plan_model, plan_actives, plan_goal = "1G=1", plan_out = "-";
    std::uint64_t plan_seed = 1;
    plan_cmd->add_option("--model", plan_model, "model checkpoint")->required();
    plan_cmd->add_option("--actives", plan_actives, "comma-separated currently active BSVs");
    plan_cmd->add_option("--goal", plan_goal, "goal as SV=tag (tags 1,0,A,D)");
    plan_cmd->add_option("--out", plan_out, "DOT output path (- for stdout)");
    plan_cmd->add_option("--seed", plan_seed, "rng seed (unused; planning is deterministic)");

    // encapsulate
    auto* enc = app.add_subcommand("encapsulate", "plan, then encapsulate the network to an EAN");
    std::string enc_model, enc_actives, enc_goal = "1G=1", enc_out = "-";
    bool enc_nested = false;
    std::size_t enc_cap = 4096;
    enc->add_option("--model", enc_model, "model checkpoint")->required();
    enc->add_option("--actives", enc_actives, "comma-separated currently active BSVs");
    enc->add_option("--goal", enc_goal, "goal as SV=tag");
    enc->add_option("--out", enc_out, "DOT output path");
    enc->add_option("--max-alternatives", enc_cap, "cap on conditioning alternatives");
    enc->add_flag("--nested", enc_nested, "emit nested sub-EANs as clusters");

    // experiment
    auto* exp = app.add_subcommand("experiment", "run an experiment protocol");
    std::string exp_kind, exp_env = "complete", exp_out = "report", exp_config;
    ExperimentConfig cfg;
    exp->add_option("kind", exp_kind, "base|continual|readapt|random")->required();
    exp->add_option("--env", exp_env, "builtin name or spec file");
    exp->add_option("--seed", cfg.seed, "rng seed");
    exp->add_option("--trials", cfg.n_trials, "independent trials");
    exp->add_option("--phase-lengths", cfg.phase_lengths, "steps per phase");
    exp->add_option("--exploration", cfg.exploration_rate, "random-action probability");
    exp->add_option("--epsilon", cfg.epsilon, "NCE cutoff");
    exp->add_option("--out", exp_out, "report file prefix");
    exp->add_option("--config", exp_config, "JSON config file");
    bool exp_random = false, exp_sig = false, exp_serial = false;
    exp->add_flag("--random-variant", exp_random, "enable the two random BSVs");
    exp->add_flag("--significance", exp_sig, "enable NCE-based conditioner blocking");
    exp->add_flag("--serial", exp_serial, "run trials sequentially");

    // export model
    auto* exm = app.add_subcommand("export-model", "model graph to DOT");
    std::string exm_model, exm_mode = "full", exm_sv, exm_out = "-";
    exm->add_option("--model", exm_model, "model checkpoint")->required();
    exm->add_option("--mode", exm_mode, "full|reliable|pathway");
    exm->add_option("--sv", exm_sv, "SV name for pathway mode");
    exm->add_option("--out", exm_out, "DOT output path");

    // nce dump
    auto* nce_cmd = app.add_subcommand("nce", "dump the NCE table as CSV");
    std::string nce_model, nce_out = "-";
    nce_cmd->add_option("--model", nce_model, "model checkpoint")->required();
    nce_cmd->add_option("--out", nce_out, "CSV output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (learn->parsed()) {
            Model m = learn_model(learn_env, learn_random, learn_sig, learn_eps, learn_steps,
                                  learn_seed, learn_log);
            spill(learn_out, model_to_json(m));
            std::cerr << "learned " << m.csvs().size() << " CSVs over " << learn_steps
                      << " steps\n";
        } else if (plan_cmd->parsed()) {
            Model m = load_model(plan_model);
            if (!plan_actives.empty()) apply_state(m, plan_actives);
            PlanView view = build_gsvs(m);
            auto goal = parse_goal(m, plan_goal);
            ActionNetwork net = plan(view, {goal});
            spill(plan_out, export_an_dot(net));
            std::cerr << "network: " << net.nodes.size() << " nodes, " << net.edges.size()
                      << " edges, goal " << (net.goal_reachable ? "reachable" : "unreachable")
                      << "\n";
        } else if (enc->parsed()) {
            Model m = load_model(enc_model);
            if (!enc_actives.empty()) apply_state(m, enc_actives);
            PlanView view = build_gsvs(m);
            auto goal = parse_goal(m, enc_goal);
            ActionNetwork net = plan(view, {goal});
            Ean ean = encapsulate(net, enc_cap);
            spill(enc_out, export_ean_dot(ean, enc_nested));
        } else if (exp->parsed()) {
            apply_config_file(cfg, exp_config);
            cfg.env = exp_env;
            cfg.random_variant = cfg.random_variant || exp_random;
            cfg.significance_enabled = cfg.significance_enabled || exp_sig;
            cfg.parallel_trials = !exp_serial;
            cfg.output_path = exp_out;
            if (exp_kind == "base") cfg.protocol = Protocol::BasePlanning;
            else if (exp_kind == "continual") cfg.protocol = Protocol::Continual;
            else if (exp_kind == "readapt") cfg.protocol = Protocol::ContinualReadapt;
            else if (exp_kind == "random") cfg.protocol = Protocol::RandomBaseline;
            else throw std::runtime_error("experiment kind must be base|continual|readapt|random");
            ExperimentReport report = run_experiment(cfg);
            std::cout << report.phase_table_csv();
            std::cerr << "wrote " << exp_out << ".json, " << exp_out << ".csv, " << exp_out
                      << "_episodes.csv\n";
        } else if (exm->parsed()) {
            Model m = load_model(exm_model);
            ModelDotMode mode;
            SvId sv = kNoSv;
            if (exm_mode == "full") mode = ModelDotMode::Full;
            else if (exm_mode == "reliable") mode = ModelDotMode::ReliableOnly;
            else if (exm_mode == "pathway") {
                mode = ModelDotMode::PathwayOf;
                sv = m.find(exm_sv);
                if (sv == kNoSv) throw std::runtime_error("unknown SV: " + exm_sv);
            } else {
                throw std::runtime_error("mode must be full|reliable|pathway");
            }
            spill(exm_out, export_model_dot(m, mode, sv));
        } else if (nce_cmd->parsed()) {
            Model m = load_model(nce_model);
            spill(nce_out, nce_table_csv(m));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
