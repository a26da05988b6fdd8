#include "varsel/experiments.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "varsel/planner.hpp"
#include "varsel/significance.hpp"

namespace varsel {

const char* to_string(Protocol p) {
    switch (p) {
        case Protocol::BasePlanning: return "base_planning";
        case Protocol::Continual: return "continual";
        case Protocol::ContinualReadapt: return "continual_readapt";
        case Protocol::RandomBaseline: return "random_baseline";
    }
    return "?";
}

void ExperimentConfig::validate() const {
    if (n_trials < 1) throw SpecError("n_trials must be >= 1");
    for (int len : phase_lengths)
        if (len <= 0) throw SpecError("phase lengths must be positive");
    if (exploration_rate < 0 || exploration_rate > 1)
        throw SpecError("exploration_rate must be within [0, 1]");
    if (epsilon <= 0) throw SpecError("epsilon must be positive");
}

FsmSpec resolve_spec(const std::string& name_or_path, bool random_variant) {
    if (name_or_path == "complete" || name_or_path == "rs" || name_or_path == "sgs" ||
        name_or_path == "neg")
        return builtin_spec(name_or_path, random_variant);
    std::ifstream in(name_or_path);
    if (!in) throw SpecError("cannot open spec file: " + name_or_path);
    std::stringstream buf;
    buf << in.rdbuf();
    FsmSpec spec = load_spec(buf.str());
    if (random_variant) spec.random_variant = true;
    return spec;
}

namespace {

struct Phase {
    std::string label;
    std::string env;
    int length = 0;
    bool learning = true;
    bool planner = true;
};

std::vector<Phase> build_phases(const ExperimentConfig& c) {
    std::vector<int> lens = c.phase_lengths;
    auto len = [&](std::size_t i, int fallback) {
        return i < lens.size() ? lens[i] : fallback;
    };
    std::vector<Phase> out;
    switch (c.protocol) {
        case Protocol::BasePlanning:
            out.push_back({"no_goal", c.env, len(0, 4000), true, false});
            out.push_back({"with_goal", c.env, len(1, 4000), true, true});
            break;
        case Protocol::Continual:
            out.push_back({"RS-L", "rs", len(0, 1000), true, true});
            out.push_back({"SGS-L", "sgs", len(1, 1000), true, true});
            out.push_back({"NEG-L", "neg", len(2, 1000), true, true});
            out.push_back({"RS-NL", "rs", len(3, 1000), false, true});
            out.push_back({"SGS-NL", "sgs", len(4, 1000), false, true});
            break;
        case Protocol::ContinualReadapt:
            out.push_back({"RS-1", "rs", len(0, 500), true, true});
            out.push_back({"SGS-2", "sgs", len(1, 500), true, true});
            out.push_back({"NEG-3", "neg", len(2, 500), true, true});
            out.push_back({"RS-4", "rs", len(3, 500), true, true});
            out.push_back({"SGS-5", "sgs", len(4, 500), true, true});
            break;
        case Protocol::RandomBaseline:
            if (c.env == "complete" || c.env == "rs" || c.env == "sgs" || c.env == "neg") {
                if (c.env == "complete") {
                    out.push_back({"complete", "complete", len(0, 4000), false, false});
                } else {
                    out.push_back({c.env, c.env, len(0, 1000), false, false});
                }
            } else {
                out.push_back({"env", c.env, len(0, 4000), false, false});
            }
            if (c.protocol == Protocol::RandomBaseline && c.env == "continual-suite") {
                out.clear();
                out.push_back({"RS", "rs", len(0, 1000), false, false});
                out.push_back({"SGS", "sgs", len(1, 1000), false, false});
                out.push_back({"NEG", "neg", len(2, 1000), false, false});
                out.push_back({"RS-2", "rs", len(3, 1000), false, false});
                out.push_back({"SGS-2", "sgs", len(4, 1000), false, false});
            }
            break;
    }
    return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream) {
    std::uint64_t x = seed * 0x9E3779B97F4A7C15ull + trial * 0xBF58476D1CE4E5B9ull +
                      stream * 0x94D049BB133111EBull + 0x2545F4914F6CDD1Dull;
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

struct TrialOutput {
    std::vector<EpisodeLog> episodes;
    std::map<std::string, std::vector<std::uint64_t>> durations_by_phase;
    TrialDiagnostics diag;
};

std::map<SvId, StateValue> to_id_observations(const Model& m,
                                              const std::map<std::string, StateValue>& named) {
    std::map<SvId, StateValue> out;
    for (const auto& [name, v] : named) {
        SvId id = m.find(name);
        if (id == kNoSv) throw ModelError("environment observation for unknown BSV " + name);
        out[id] = v;
    }
    return out;
}

TrialOutput run_trial(const ExperimentConfig& config, int trial) {
    const bool uses_model = config.protocol != Protocol::RandomBaseline;
    std::vector<Phase> phases = build_phases(config);

    FsmEnv env(resolve_spec(phases.front().env, config.random_variant));
    std::mt19937_64 policy_rng(mix_seed(config.seed, static_cast<std::uint64_t>(trial), 1));
    EnvStepResult obs = env.reset(mix_seed(config.seed, static_cast<std::uint64_t>(trial), 2));

    Model model(env.bsv_layout());
    if (uses_model) model.reset_states(to_id_observations(model, obs.observations));

    std::vector<SvId> actions;
    for (const auto& b : model.bsvs())
        if (b.is_action) actions.push_back(b.id);
    SvId goal_sv = model.find("1G");
    std::vector<SvId> random_dsvs;
    for (const char* n : {"r0_A", "r0_D", "r1_A", "r1_D"}) {
        SvId id = model.find(n);
        if (id != kNoSv) random_dsvs.push_back(id);
    }
    auto targets_random_event = [&](const ConditioningSv& c) {
        for (SvId t : c.targets)
            for (SvId r : random_dsvs)
                if (t == r) return true;
        return false;
    };

    TrialOutput out;
    out.diag.trial = trial;
    std::uint64_t global_step = 0;
    std::uint64_t total_steps = 0;
    for (const auto& p : phases) total_steps += static_cast<std::uint64_t>(p.length);
    std::uint64_t late_window_start = total_steps > 1000 ? total_steps - 1000 : 0;

    for (const auto& phase : phases) {
        env.switch_spec(resolve_spec(phase.env, config.random_variant));
        LearnOptions opts;
        opts.learning_enabled = phase.learning;
        opts.significance_enabled = config.significance_enabled;
        opts.epsilon = config.epsilon;

        std::uint64_t hash_at_entry = uses_model ? model.structure_hash() : 0;
        int steps_in_phase = 0;
        int episode_index = 0;
        const std::uint64_t hard_cap = static_cast<std::uint64_t>(phase.length) * 100 + 100000;
        std::uint64_t guard = 0;

        // Run for the phase length, then wait for the episode in flight.
        while (true) {
            bool quota_done = steps_in_phase >= phase.length;
            bool at_boundary = env.episode_len() == 0 || obs.goal_reached;
            if (quota_done && at_boundary) break;
            if (++guard > hard_cap)
                throw ModelError("phase exceeded its hard step cap; environment likely stuck");

            SvId action_sv;
            if (phase.planner && uses_model) {
                PlanView view = build_gsvs(model);
                ActionNetwork net = plan(view, {{goal_sv, TargetTag::One}});
                action_sv = choose_action(net, view, policy_rng, config.exploration_rate);
            } else {
                action_sv = actions[rand_below(policy_rng, actions.size())];
            }
            int action = std::stoi(model.name_of(action_sv).substr(1));

            obs = env.step(action);
            ++global_step;
            ++steps_in_phase;

            if (uses_model) {
                StepReport report =
                    process_environment_step(model, to_id_observations(model, obs.observations), opts);
                if (!phase.learning && model.structure_hash() != hash_at_entry)
                    out.diag.nl_hash_constant = false;
                if (report.new_csv != kNoSv && model.contains(report.new_csv) &&
                    global_step >= late_window_start) {
                    for (SvId t : model.csv(report.new_csv).targets) {
                        if (model.contains(t) && model.kind_of(t) == SvKind::Csv &&
                            targets_random_event(model.csv(t)))
                            ++out.diag.late_random_conditioner_events;
                    }
                }
            }
            if (obs.goal_reached) {
                EpisodeLog log;
                log.trial = trial;
                log.phase = phase.label;
                log.episode_index = episode_index++;
                log.end_step = global_step;
                log.duration = obs.episode_len;
                log.n_csvs = uses_model ? model.csvs().size() : 0;
                out.durations_by_phase[phase.label].push_back(log.duration);
                out.episodes.push_back(std::move(log));
            }
        }
    }

    if (uses_model) {
        out.diag.final_n_csvs = model.csvs().size();
        for (const auto& c : model.csvs())
            if (targets_random_event(c) && !model.conditioners_of(c.id).empty())
                ++out.diag.final_random_conditioned_csvs;
    }
    return out;
}

ExperimentReport assemble(const ExperimentConfig& config, std::vector<TrialOutput> trials) {
    ExperimentReport report;
    report.protocol = config.protocol;
    report.seed = config.seed;
    report.n_trials = config.n_trials;

    std::vector<Phase> phases = build_phases(config);
    for (const auto& phase : phases) {
        PhaseStat stat;
        stat.phase = phase.label;
        for (const auto& t : trials) {
            auto it = t.durations_by_phase.find(phase.label);
            double mean = 0;
            if (it != t.durations_by_phase.end() && !it->second.empty()) {
                double sum = 0;
                for (auto d : it->second) sum += static_cast<double>(d);
                mean = sum / static_cast<double>(it->second.size());
            }
            stat.trial_means.push_back(mean);
        }
        double sum = 0;
        for (double v : stat.trial_means) sum += v;
        stat.mean = stat.trial_means.empty() ? 0 : sum / static_cast<double>(stat.trial_means.size());
        double ss = 0;
        for (double v : stat.trial_means) ss += (v - stat.mean) * (v - stat.mean);
        stat.stddev = stat.trial_means.size() > 1
                          ? std::sqrt(ss / static_cast<double>(stat.trial_means.size() - 1))
                          : 0;
        report.phases.push_back(std::move(stat));
    }
    for (auto& t : trials) {
        report.diagnostics.push_back(t.diag);
        for (auto& e : t.episodes) report.episodes.push_back(std::move(e));
    }
    return report;
}

ExperimentReport run(const ExperimentConfig& config) {
    config.validate();
    std::vector<TrialOutput> trials(static_cast<std::size_t>(config.n_trials));
    if (config.parallel_trials && config.n_trials > 1) {
        std::vector<std::thread> workers;
        std::vector<std::exception_ptr> errors(trials.size());
        for (int t = 0; t < config.n_trials; ++t) {
            workers.emplace_back([&, t] {
                try {
                    trials[static_cast<std::size_t>(t)] = run_trial(config, t);
                } catch (...) {
                    errors[static_cast<std::size_t>(t)] = std::current_exception();
                }
            });
        }
        for (auto& w : workers) w.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    } else {
        for (int t = 0; t < config.n_trials; ++t)
            trials[static_cast<std::size_t>(t)] = run_trial(config, t);
    }
    ExperimentReport report = assemble(config, std::move(trials));
    if (!config.output_path.empty()) write_report_files(report, config.output_path);
    return report;
}

}  // namespace

ExperimentReport run_base_planning(const ExperimentConfig& config) {
    ExperimentConfig c = config;
    c.protocol = Protocol::BasePlanning;
    return run(c);
}

ExperimentReport run_continual(const ExperimentConfig& config) {
    ExperimentConfig c = config;
    if (c.protocol != Protocol::ContinualReadapt) c.protocol = Protocol::Continual;
    return run(c);
}

ExperimentReport run_random_baseline(const ExperimentConfig& config) {
    ExperimentConfig c = config;
    c.protocol = Protocol::RandomBaseline;
    return run(c);
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
    switch (config.protocol) {
        case Protocol::BasePlanning: return run_base_planning(config);
        case Protocol::Continual:
        case Protocol::ContinualReadapt: return run_continual(config);
        case Protocol::RandomBaseline: return run_random_baseline(config);
    }
    throw SpecError("unknown protocol");
}

std::string ExperimentReport::to_json() const {
    nlohmann::json j;
    j["schema"] = "varsel-report";
    j["version"] = 1;
    j["protocol"] = varsel::to_string(protocol);
    j["seed"] = seed;
    j["n_trials"] = n_trials;
    nlohmann::json phases_j = nlohmann::json::array();
    for (const auto& p : phases)
        phases_j.push_back({{"phase", p.phase},
                            {"mean", p.mean},
                            {"stddev", p.stddev},
                            {"trial_means", p.trial_means}});
    j["phases"] = std::move(phases_j);
    nlohmann::json diag_j = nlohmann::json::array();
    for (const auto& d : diagnostics)
        diag_j.push_back({{"trial", d.trial},
                          {"nl_hash_constant", d.nl_hash_constant},
                          {"late_random_conditioner_events", d.late_random_conditioner_events},
                          {"final_random_conditioned_csvs", d.final_random_conditioned_csvs},
                          {"final_n_csvs", d.final_n_csvs}});
    j["diagnostics"] = std::move(diag_j);
    j["n_episodes"] = episodes.size();
    return j.dump(2);
}

std::string ExperimentReport::phase_table_csv() const {
    std::ostringstream out;
    out << "phase,mean,stddev";
    for (int t = 0; t < n_trials; ++t) out << ",trial" << t;
    out << "\n";
    for (const auto& p : phases) {
        out << p.phase << "," << p.mean << "," << p.stddev;
        for (double v : p.trial_means) out << "," << v;
        out << "\n";
    }
    return out.str();
}

std::string ExperimentReport::episodes_csv() const {
    std::ostringstream out;
    out << "trial,phase,episode_index,end_step,duration,n_csvs\n";
    for (const auto& e : episodes)
        out << e.trial << "," << e.phase << "," << e.episode_index << "," << e.end_step << ","
            << e.duration << "," << e.n_csvs << "\n";
    return out.str();
}

void write_report_files(const ExperimentReport& report, const std::string& prefix) {
    {
        std::ofstream f(prefix + ".json");
        f << report.to_json();
    }
    {
        std::ofstream f(prefix + ".csv");
        f << report.phase_table_csv();
    }
    {
        std::ofstream f(prefix + "_episodes.csv");
        f << report.episodes_csv();
    }
}

Model learn_model(const std::string& env_name, bool random_variant, bool significance_enabled,
                  double epsilon, int steps, std::uint64_t seed, const std::string& step_log_path) {
    FsmEnv env(resolve_spec(env_name, random_variant));
    std::mt19937_64 rng(mix_seed(seed, 0, 1));
    EnvStepResult obs = env.reset(mix_seed(seed, 0, 2));
    Model model(env.bsv_layout());
    model.reset_states(to_id_observations(model, obs.observations));

    std::ofstream log;
    if (!step_log_path.empty()) log.open(step_log_path);

    LearnOptions opts;
    opts.significance_enabled = significance_enabled;
    opts.epsilon = epsilon;
    for (int i = 0; i < steps; ++i) {
        int action = static_cast<int>(rand_below(rng, static_cast<std::uint64_t>(env.spec().n_actions)));
        obs = env.step(action);
        StepReport report =
            process_environment_step(model, to_id_observations(model, obs.observations), opts);
        if (log.is_open()) {
            nlohmann::json j;
            j["step"] = report.step;
            j["unexplained"] = report.unexplained;
            if (report.new_csv != kNoSv) j["new_csv"] = report.new_csv;
            nlohmann::json refs = nlohmann::json::array();
            for (const auto& r : report.refinements)
                refs.push_back({{"csv", r.csv},
                                {"removed_pos", r.removed_pos},
                                {"removed_neg", r.removed_neg}});
            j["refinements"] = std::move(refs);
            nlohmann::json dups = nlohmann::json::array();
            for (const auto& d : report.duplications)
                dups.push_back({{"original", d.original}, {"copy", d.copy}});
            j["duplications"] = std::move(dups);
            nlohmann::json flags = nlohmann::json::array();
            for (const auto& f : report.flags_changed)
                flags.push_back({{"sv", f.sv},
                                 {"from", varsel::to_string(f.from)},
                                 {"to", varsel::to_string(f.to)}});
            j["flags_changed"] = std::move(flags);
            log << j.dump() << "\n";
        }
    }
    return model;
}

}  // namespace varsel
