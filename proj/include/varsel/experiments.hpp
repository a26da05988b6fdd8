#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "varsel/fsm_env.hpp"
#include "varsel/learner.hpp"
#include "varsel/model.hpp"

namespace varsel {

enum class Protocol { BasePlanning, Continual, ContinualReadapt, RandomBaseline };

const char* to_string(Protocol p);

struct ExperimentConfig {
    Protocol protocol = Protocol::BasePlanning;
    std::uint64_t seed = 1;
    int n_trials = 5;
    std::vector<int> phase_lengths;   // defaulted per protocol when empty
    double exploration_rate = 0.1;
    std::string env = "complete";     // builtin name or path to a spec file
    bool random_variant = false;
    bool significance_enabled = false;
    double epsilon = 0.25;
    std::string output_path;          // file prefix; empty = no files written
    bool parallel_trials = true;

    void validate() const;
};

struct EpisodeLog {
    int trial = 0;
    std::string phase;
    int episode_index = 0;            // within the phase
    std::uint64_t end_step = 0;       // global step at which G was reached
    std::uint64_t duration = 0;       // steps, >= 1
    std::uint64_t n_csvs = 0;         // model size snapshot
};

struct PhaseStat {
    std::string phase;
    double mean = 0;
    double stddev = 0;
    std::vector<double> trial_means;
};

struct TrialDiagnostics {
    int trial = 0;
    bool nl_hash_constant = true;               // structure frozen through NL phases
    std::uint64_t late_random_conditioner_events = 0;   // final 1000 steps
    std::uint64_t final_random_conditioned_csvs = 0;
    std::uint64_t final_n_csvs = 0;
};

struct ExperimentReport {
    Protocol protocol = Protocol::BasePlanning;
    std::uint64_t seed = 0;
    int n_trials = 0;
    std::vector<PhaseStat> phases;
    std::vector<EpisodeLog> episodes;
    std::vector<TrialDiagnostics> diagnostics;

    std::string to_json() const;
    std::string phase_table_csv() const;
    std::string episodes_csv() const;
};

// 4000 random-action learning steps, then 4000 planning steps toward
// (1G, One) with exploration. Rows "no_goal" / "with_goal".
ExperimentReport run_base_planning(const ExperimentConfig& config);

// Phase schedule RS, SGS, NEG, RS, SGS with the goal defined from the start.
// Vanilla: learning disabled in the two revisit phases. Readapt: learning on
// throughout, 500-step phases by default.
ExperimentReport run_continual(const ExperimentConfig& config);

// Uniform random actions, no model. On "complete" a single phase; otherwise
// the continual subtype schedule.
ExperimentReport run_random_baseline(const ExperimentConfig& config);

ExperimentReport run_experiment(const ExperimentConfig& config);

// Writes <prefix>.json, <prefix>.csv and <prefix>_episodes.csv.
void write_report_files(const ExperimentReport& report, const std::string& prefix);

// Random-action learning stream used by the `learn` CLI command.
Model learn_model(const std::string& env_name, bool random_variant, bool significance_enabled,
                  double epsilon, int steps, std::uint64_t seed, const std::string& step_log_path);

FsmSpec resolve_spec(const std::string& name_or_path, bool random_variant);

}  // namespace varsel
