#pragma once

#include <cstdint>
#include <vector>

#include "cohem/mdp.hpp"
#include "cohem/scenario.hpp"

namespace cohem {

// Doubly stochastic mixing weights over the communication graph.
struct MixingMatrix {
    int size = 0;
    std::vector<double> weights;  // row-major

    double at(int i, int j) const { return weights[static_cast<std::size_t>(i) * size + j]; }
    double& at(int i, int j) { return weights[static_cast<std::size_t>(i) * size + j]; }

    // row/column sums 1 within 1e-12, entries nonzero only on graph edges
    void validate(const CommGraph& graph) const;

    // requires a symmetric matrix
    double second_largest_eigenvalue_magnitude() const;
};

// W[h][j] = 1/(1 + max(deg_h, deg_j)) on edges, self weight absorbs the rest.
// Requires a connected graph.
MixingMatrix metropolis_weights(const CommGraph& graph);

// Same weights without the connectivity requirement; disconnected components
// mix among themselves only.
MixingMatrix metropolis_weights_any(const CommGraph& graph);

// nu(t) = lambda(t) + step * (expected_load(t) + uncontrollable(t) - supply(t)/residence_count)
std::vector<double> local_subgradient(const std::vector<double>& lambda,
                                      const std::vector<double>& expected_load,
                                      const std::vector<double>& uncontrollable,
                                      const std::vector<double>& supply,
                                      int residence_count, double step);

struct ConsensusResult {
    std::vector<std::vector<double>> lambda;  // per residence, after projection
    double pre_mix_disagreement = 0.0;        // max pairwise spread of nu
    double post_mix_disagreement = 0.0;       // max pairwise spread before projection
    double pre_mix_deviation = 0.0;   // largest per-slot rms spread around the mean, times sqrt(H)
    double post_mix_deviation = 0.0;  // same after mixing; contracts by the spectral factor
    double mean_residual = 0.0;       // max per-slot mean drift before projection
};

// Applies the mixing matrix `repeats` times, then projects every entry onto
// [0, bounds(t)].
ConsensusResult consensus_round(const std::vector<std::vector<double>>& nu,
                                const MixingMatrix& mixing, int repeats,
                                const std::vector<double>& bounds);

// Projected subgradient step on the aggregate; the oracle the decentralized
// path is checked against.
std::vector<double> centralized_update(const std::vector<double>& lambda,
                                       const std::vector<double>& aggregate_expected_load,
                                       const std::vector<double>& net_supply, double step,
                                       const std::vector<double>& bounds);

struct StepSchedule {
    double numerator = 5.0;
    double offset = 5.0;
    double at(int n) const { return numerator / (n + offset); }
};

struct AlgorithmParams {
    int iterations = 200;
    int consensus_steps = 15;  // averaging repeats per outer iteration
    int mc_samples = 100;      // realizations behind each expected-load estimate
    int primal_eval_every = 10;  // 0 = only at the last iteration
    int primal_eval_samples = 100;
    StepSchedule step;
    std::uint64_t seed = 1;
    bool record_aggregate_loads = false;
};

struct IterationDiag {
    int iteration = 0;       // 1-based, after the dual update
    double dual_value = 0.0;  // sum of inner minima at the averaged multipliers
    double primal_value = 0.0;    // NaN when not evaluated this iteration
    double primal_std_error = 0.0;
    double normalized_gap = 0.0;  // (primal - dual) / dual, NaN when not evaluated
    double max_disagreement = 0.0;       // after projection
    double pre_mix_disagreement = 0.0;
    double post_mix_disagreement = 0.0;  // before projection
    double pre_mix_deviation = 0.0;      // norm-of-spread form, see ConsensusResult
    double post_mix_deviation = 0.0;
    double mean_residual = 0.0;
    double lambda_bound_excess = 0.0;    // distance outside [0, pi_s+pi_p], should be 0
    long long cumulative_messages = 0;
    long long cumulative_consensus_rounds = 0;
};

struct RunDiagnostics {
    std::vector<IterationDiag> iterations;
    int directed_edges = 0;  // one message per direction per consensus step
    int consensus_steps = 0;
    double mixing_lambda2 = 0.0;
    std::vector<std::vector<double>> aggregate_load_trace;  // per iteration, optional
};

struct ResidencePolicies {
    std::vector<PolicyTable> appliances;
};

struct AlgorithmResult {
    std::vector<ResidencePolicies> policies;  // rounded running averages; defectors selfish
    RunDiagnostics diagnostics;
    std::vector<std::vector<double>> lambda;  // final local multipliers
};

// The decentralized dual loop: per-residence inner scheduling under the local
// pseudo price, a local subgradient step, and repeated neighbor averaging.
AlgorithmResult run_algorithm1(const Neighborhood& scenario, const AlgorithmParams& params);

// Inner minimum of one residence at the given multipliers, including the
// residence's share of the supply term.
double residence_phi(const Residence& residence, const std::vector<double>& lambda,
                     const std::vector<double>& pi_s, const std::vector<double>& supply,
                     int residence_count);

double dual_objective_estimate(const std::vector<double>& phi_values);

struct PrimalEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

// Monte Carlo real-time cost of executing the given policies.
PrimalEstimate primal_cost_estimate(const std::vector<ResidencePolicies>& policies,
                                    const Neighborhood& scenario, int n_samples,
                                    std::uint64_t seed);

// Rounded running average of per-iteration decision actions; sums holds one
// accumulator per (slot, decision state) in PolicyTable layout.
PolicyTable running_average_policy(const ApplianceSpec& spec, int horizon,
                                   const std::vector<double>& action_sums, int n);

class PolicyAverager {
public:
    PolicyAverager() = default;
    PolicyAverager(const ApplianceSpec& spec, int horizon);
    void add(const PolicyTable& policy);
    PolicyTable average() const;
    int count() const { return n_; }

private:
    ApplianceSpec spec_;
    int horizon_ = 0;
    int n_ = 0;
    std::vector<double> sums_;
};

// ---------------------------------------------------------------------------
// Baselines and evaluation

std::vector<ResidencePolicies> selfish_policies(const Neighborhood& scenario);
std::vector<ResidencePolicies> immediate_policies(const Neighborhood& scenario);

struct EvaluationResult {
    double mean_deviation = 0.0;      // E sum_t |P - total load|
    double mean_realtime_cost = 0.0;  // E of the priced imbalance
    std::vector<double> mean_total_load;      // includes uncontrollable load
    std::vector<double> per_residence_bill;   // retail-priced mean usage
};

// Shared request realizations across policy sets evaluated with the same seed.
EvaluationResult evaluate_policies(const std::vector<ResidencePolicies>& policies,
                                   const Neighborhood& scenario, int n_samples,
                                   std::uint64_t seed);

Neighborhood with_defectors(const Neighborhood& scenario, int defector_count, std::uint64_t seed);
Neighborhood without_uncontrollable(Neighborhood scenario);

// ---------------------------------------------------------------------------
// Joint procurement

struct JointParams {
    AlgorithmParams base;
    double weight = 10.0;  // imbalance weight against the procurement cost
    int aggregator = 0;    // residence that solves the bid subproblem
};

struct JointResult {
    std::vector<ResidencePolicies> policies;
    RunDiagnostics diagnostics;
    std::vector<double> hourly_bids;  // aggregator's final bid
};

// Dual loop with the hourly bid re-optimized each iteration at the aggregator
// from its own multiplier copy; imbalance prices are scaled by the weight.
JointResult run_joint_algorithm(const Neighborhood& scenario, const JointParams& params);

struct JointEvaluation {
    double procurement_cost = 0.0;
    double expected_deviation = 0.0;  // E sum_t |B - total load|
    double total_cost = 0.0;          // weight * deviation + procurement
};

JointEvaluation evaluate_bid_schedule(const std::vector<double>& hourly_bids,
                                      const std::vector<ResidencePolicies>& policies,
                                      const Neighborhood& scenario, double weight,
                                      int n_samples, std::uint64_t seed);

}  // namespace cohem
