#include "cohem/coordinator.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "cohem/rng.hpp"
#include "cohem/sim.hpp"

namespace cohem {

namespace {

constexpr std::uint64_t kTagExpectedLoad = 101;
constexpr std::uint64_t kTagPrimalEval = 102;
constexpr std::uint64_t kTagDefectors = 103;

const double kNaN = std::numeric_limits<double>::quiet_NaN();

// max over slots of the largest pairwise spread across rows
double pairwise_spread(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return 0.0;
    double spread = 0.0;
    const std::size_t T = rows.front().size();
    for (std::size_t t = 0; t < T; ++t) {
        double lo = rows[0][t], hi = rows[0][t];
        for (const auto& row : rows) {
            lo = std::min(lo, row[t]);
            hi = std::max(hi, row[t]);
        }
        spread = std::max(spread, hi - lo);
    }
    return spread;
}

// max over slots of the euclidean spread around the per-slot mean; this is
// the quantity a doubly stochastic symmetric mix contracts by its second
// eigenvalue magnitude
double deviation_norm(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return 0.0;
    double worst = 0.0;
    const std::size_t T = rows.front().size();
    for (std::size_t t = 0; t < T; ++t) {
        double mean = 0.0;
        for (const auto& row : rows) mean += row[t];
        mean /= static_cast<double>(rows.size());
        double sq = 0.0;
        for (const auto& row : rows) sq += (row[t] - mean) * (row[t] - mean);
        worst = std::max(worst, std::sqrt(sq));
    }
    return worst;
}

}  // namespace

// ---------------------------------------------------------------------------
// Mixing

void MixingMatrix::validate(const CommGraph& graph) const {
    if (size != graph.node_count) throw InputError("mixing matrix: size mismatch with graph");
    if (static_cast<int>(weights.size()) != size * size)
        throw InputError("mixing matrix: bad storage size");
    const auto nbrs = graph.neighbor_sets();
    for (int i = 0; i < size; ++i) {
        double row = 0.0, col = 0.0;
        for (int j = 0; j < size; ++j) {
            const double w = at(i, j);
            if (w < 0.0) throw InputError("mixing matrix: negative weight");
            if (w > 0.0 && i != j &&
                !std::binary_search(nbrs[static_cast<std::size_t>(i)].begin(),
                                    nbrs[static_cast<std::size_t>(i)].end(), j))
                throw InputError("mixing matrix: weight on a non-edge");
            row += w;
            col += at(j, i);
        }
        if (std::abs(row - 1.0) > 1e-12 || std::abs(col - 1.0) > 1e-12)
            throw InputError("mixing matrix: rows and columns must sum to one");
    }
}

double MixingMatrix::second_largest_eigenvalue_magnitude() const {
    if (size <= 1) return 0.0;
    Eigen::MatrixXd m(size, size);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) m(i, j) = at(i, j);
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw InputError("mixing matrix: eigenvalue bound needs a symmetric matrix");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
    std::vector<double> mags(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) mags[static_cast<std::size_t>(i)] = std::abs(solver.eigenvalues()(i));
    std::sort(mags.begin(), mags.end(), std::greater<>());
    return mags[1];
}

MixingMatrix metropolis_weights_any(const CommGraph& graph) {
    graph.validate();
    MixingMatrix w;
    w.size = graph.node_count;
    w.weights.assign(static_cast<std::size_t>(w.size) * w.size, 0.0);
    const auto nbrs = graph.neighbor_sets();
    for (const auto& [a, b] : graph.edges) {
        const double v = 1.0 / (1.0 + std::max(nbrs[static_cast<std::size_t>(a)].size(),
                                               nbrs[static_cast<std::size_t>(b)].size()));
        w.at(a, b) = v;
        w.at(b, a) = v;
    }
    for (int i = 0; i < w.size; ++i) {
        double off = 0.0;
        for (int j = 0; j < w.size; ++j)
            if (j != i) off += w.at(i, j);
        w.at(i, i) = 1.0 - off;
    }
    return w;
}

MixingMatrix metropolis_weights(const CommGraph& graph) {
    graph.validate();
    if (!graph.connected()) throw InputError("metropolis_weights: graph is not connected");
    return metropolis_weights_any(graph);
}

// ---------------------------------------------------------------------------
// Dual updates

std::vector<double> local_subgradient(const std::vector<double>& lambda,
                                      const std::vector<double>& expected_load,
                                      const std::vector<double>& uncontrollable,
                                      const std::vector<double>& supply,
                                      int residence_count, double step) {
    const std::size_t T = lambda.size();
    if (expected_load.size() != T || uncontrollable.size() != T || supply.size() != T)
        throw InputError("local_subgradient: vector lengths must match");
    if (residence_count < 1) throw InputError("local_subgradient: residence count must be positive");
    if (!(step >= 0.0)) throw InputError("local_subgradient: step must be nonnegative");
    std::vector<double> nu(T, 0.0);
    for (std::size_t t = 0; t < T; ++t)
        nu[t] = lambda[t] + step * (expected_load[t] + uncontrollable[t] - supply[t] / residence_count);
    return nu;
}

ConsensusResult consensus_round(const std::vector<std::vector<double>>& nu,
                                const MixingMatrix& mixing, int repeats,
                                const std::vector<double>& bounds) {
    const int H = static_cast<int>(nu.size());
    if (H == 0) throw InputError("consensus_round: no residences");
    if (mixing.size != H) throw InputError("consensus_round: mixing matrix size mismatch");
    if (repeats < 1) throw InputError("consensus_round: needs at least one averaging step");
    const std::size_t T = nu.front().size();
    if (bounds.size() != T) throw InputError("consensus_round: bounds length mismatch");
    for (const auto& row : nu)
        if (row.size() != T) throw InputError("consensus_round: ragged input");

    ConsensusResult out;
    out.pre_mix_disagreement = pairwise_spread(nu);
    out.pre_mix_deviation = deviation_norm(nu);

    std::vector<double> mean_before(T, 0.0);
    for (const auto& row : nu)
        for (std::size_t t = 0; t < T; ++t) mean_before[t] += row[t];
    for (double& v : mean_before) v /= H;

    std::vector<std::vector<double>> x = nu;
    std::vector<std::vector<double>> next(static_cast<std::size_t>(H), std::vector<double>(T, 0.0));
    for (int rep = 0; rep < repeats; ++rep) {
        for (int i = 0; i < H; ++i) {
            auto& dst = next[static_cast<std::size_t>(i)];
            std::fill(dst.begin(), dst.end(), 0.0);
            for (int j = 0; j < H; ++j) {
                const double w = mixing.at(i, j);
                if (w == 0.0) continue;
                const auto& src = x[static_cast<std::size_t>(j)];
                for (std::size_t t = 0; t < T; ++t) dst[t] += w * src[t];
            }
        }
        std::swap(x, next);
    }

    out.post_mix_disagreement = pairwise_spread(x);
    out.post_mix_deviation = deviation_norm(x);
    double residual = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        double mean_after = 0.0;
        for (const auto& row : x) mean_after += row[t];
        mean_after /= H;
        residual = std::max(residual, std::abs(mean_after - mean_before[t]));
    }
    out.mean_residual = residual;

    for (auto& row : x)
        for (std::size_t t = 0; t < T; ++t) row[t] = std::clamp(row[t], 0.0, bounds[t]);
    out.lambda = std::move(x);
    return out;
}

std::vector<double> centralized_update(const std::vector<double>& lambda,
                                       const std::vector<double>& aggregate_expected_load,
                                       const std::vector<double>& net_supply, double step,
                                       const std::vector<double>& bounds) {
    const std::size_t T = lambda.size();
    if (aggregate_expected_load.size() != T || net_supply.size() != T || bounds.size() != T)
        throw InputError("centralized_update: vector lengths must match");
    std::vector<double> out(T, 0.0);
    for (std::size_t t = 0; t < T; ++t)
        out[t] = std::clamp(lambda[t] + step * (aggregate_expected_load[t] - net_supply[t]),
                            0.0, bounds[t]);
    return out;
}

// ---------------------------------------------------------------------------
// Dual and primal objective estimates

double residence_phi(const Residence& residence, const std::vector<double>& lambda,
                     const std::vector<double>& pi_s, const std::vector<double>& supply,
                     int residence_count) {
    const int T = static_cast<int>(lambda.size());
    if (static_cast<int>(pi_s.size()) != T || static_cast<int>(supply.size()) != T)
        throw InputError("residence_phi: vector lengths must match");
    std::vector<double> pseudo(static_cast<std::size_t>(T), 0.0);
    for (int t = 0; t < T; ++t)
        pseudo[static_cast<std::size_t>(t)] = lambda[static_cast<std::size_t>(t)] - pi_s[static_cast<std::size_t>(t)];
    double phi = 0.0;
    for (std::size_t i = 0; i < residence.appliances.size(); ++i)
        phi += solve_policy(residence.appliances[i], residence.requests[i], pseudo, T).expected_total_cost;
    for (int t = 0; t < T; ++t)
        phi += pseudo[static_cast<std::size_t>(t)] *
               (residence.uncontrollable[static_cast<std::size_t>(t)] -
                supply[static_cast<std::size_t>(t)] / residence_count);
    return phi;
}

double dual_objective_estimate(const std::vector<double>& phi_values) {
    double total = 0.0;
    for (double v : phi_values) {
        if (!std::isfinite(v)) throw InputError("dual_objective_estimate: non-finite inner value");
        total += v;
    }
    return total;
}

PrimalEstimate primal_cost_estimate(const std::vector<ResidencePolicies>& policies,
                                    const Neighborhood& nb, int n_samples, std::uint64_t seed) {
    if (static_cast<int>(policies.size()) != nb.residence_count())
        throw InputError("primal_cost_estimate: one policy set per residence required");
    if (n_samples < 1) throw InputError("primal_cost_estimate: need at least one sample");
    const int T = nb.horizon;
    const RngStream root(seed);
    double sum = 0.0, sum_sq = 0.0;
    std::vector<double> total(static_cast<std::size_t>(T), 0.0);
    for (int s = 0; s < n_samples; ++s) {
        std::fill(total.begin(), total.end(), 0.0);
        for (int h = 0; h < nb.residence_count(); ++h) {
            const auto& res = nb.residences[static_cast<std::size_t>(h)];
            for (int t = 0; t < T; ++t)
                total[static_cast<std::size_t>(t)] += res.uncontrollable[static_cast<std::size_t>(t)];
            for (std::size_t i = 0; i < res.appliances.size(); ++i) {
                RngStream stream = root.derive({static_cast<std::uint64_t>(s),
                                                static_cast<std::uint64_t>(h), i});
                const auto marks = sample_arrivals(res.requests[i], stream);
                const auto run = execute_policy(policies[static_cast<std::size_t>(h)].appliances[i],
                                                res.appliances[i], marks, T);
                for (int t = 0; t < T; ++t)
                    total[static_cast<std::size_t>(t)] += run.load[static_cast<std::size_t>(t)];
            }
        }
        const double cost = realtime_cost(nb.supply.supply, total, nb.prices.pi_s, nb.prices.pi_p);
        sum += cost;
        sum_sq += cost * cost;
    }
    PrimalEstimate est;
    est.value = sum / n_samples;
    const double var = std::max(0.0, sum_sq / n_samples - est.value * est.value);
    est.std_error = n_samples > 1 ? std::sqrt(var / (n_samples - 1)) : 0.0;
    return est;
}

// ---------------------------------------------------------------------------
// Running averages

PolicyTable running_average_policy(const ApplianceSpec& spec, int horizon,
                                   const std::vector<double>& action_sums, int n) {
    if (n < 1) throw InputError("running_average_policy: need at least one iterate");
    PolicyTable table(spec, horizon);
    if (action_sums.size() != static_cast<std::size_t>(horizon) * table.decision_count())
        throw InputError("running_average_policy: accumulator size mismatch");
    for (int t = 1; t <= horizon; ++t) {
        for (int d = 0; d < table.decision_count(); ++d) {
            const ApplianceState st = table.decision_state(d);
            const double avg =
                action_sums[static_cast<std::size_t>(t - 1) * table.decision_count() + d] / n;
            // candidates in preference order: start (lowest alternate first), then wait
            const auto feasible = feasible_actions(st, spec, t, horizon);
            Action best = Action::on(1);
            double best_dist = std::numeric_limits<double>::infinity();
            for (const Action& a : feasible) {
                if (a.is_wait()) continue;
                const double dist = std::abs(avg - a.value);
                if (dist < best_dist) {
                    best = a;
                    best_dist = dist;
                }
            }
            for (const Action& a : feasible) {
                if (!a.is_wait()) continue;
                if (std::abs(avg - a.value) < best_dist) best = a;
            }
            table.store(t, st, best);
        }
    }
    return table;
}

PolicyAverager::PolicyAverager(const ApplianceSpec& spec, int horizon)
    : spec_(spec), horizon_(horizon) {
    const PolicyTable proto(spec, horizon);
    sums_.assign(static_cast<std::size_t>(horizon) * proto.decision_count(), 0.0);
}

void PolicyAverager::add(const PolicyTable& policy) {
    if (policy.horizon() != horizon_) throw InputError("policy averager: horizon mismatch");
    std::size_t k = 0;
    for (int t = 1; t <= horizon_; ++t)
        for (int d = 0; d < policy.decision_count(); ++d)
            sums_[k++] += policy.stored(t, policy.decision_state(d)).value;
    ++n_;
}

PolicyTable PolicyAverager::average() const {
    return running_average_policy(spec_, horizon_, sums_, n_);
}

// ---------------------------------------------------------------------------
// Baselines, evaluation, scenario edits

std::vector<ResidencePolicies> selfish_policies(const Neighborhood& nb) {
    std::vector<ResidencePolicies> out(static_cast<std::size_t>(nb.residence_count()));
    for (int h = 0; h < nb.residence_count(); ++h) {
        const auto& res = nb.residences[static_cast<std::size_t>(h)];
        for (std::size_t i = 0; i < res.appliances.size(); ++i)
            out[static_cast<std::size_t>(h)].appliances.push_back(
                solve_policy(res.appliances[i], res.requests[i], nb.prices.pi_retail, nb.horizon).policy);
    }
    return out;
}

std::vector<ResidencePolicies> immediate_policies(const Neighborhood& nb) {
    std::vector<ResidencePolicies> out(static_cast<std::size_t>(nb.residence_count()));
    for (int h = 0; h < nb.residence_count(); ++h) {
        const auto& res = nb.residences[static_cast<std::size_t>(h)];
        for (const auto& spec : res.appliances)
            out[static_cast<std::size_t>(h)].appliances.push_back(immediate_policy(spec, nb.horizon));
    }
    return out;
}

EvaluationResult evaluate_policies(const std::vector<ResidencePolicies>& policies,
                                   const Neighborhood& nb, int n_samples, std::uint64_t seed) {
    if (static_cast<int>(policies.size()) != nb.residence_count())
        throw InputError("evaluate_policies: one policy set per residence required");
    if (n_samples < 1) throw InputError("evaluate_policies: need at least one sample");
    const int T = nb.horizon;
    const int H = nb.residence_count();
    const RngStream root(seed);

    EvaluationResult out;
    out.mean_total_load.assign(static_cast<std::size_t>(T), 0.0);
    out.per_residence_bill.assign(static_cast<std::size_t>(H), 0.0);

    std::vector<double> total(static_cast<std::size_t>(T), 0.0);
    std::vector<double> res_load(static_cast<std::size_t>(T), 0.0);
    for (int s = 0; s < n_samples; ++s) {
        std::fill(total.begin(), total.end(), 0.0);
        for (int h = 0; h < H; ++h) {
            const auto& res = nb.residences[static_cast<std::size_t>(h)];
            std::copy(res.uncontrollable.begin(), res.uncontrollable.end(), res_load.begin());
            for (std::size_t i = 0; i < res.appliances.size(); ++i) {
                RngStream stream = root.derive({static_cast<std::uint64_t>(s),
                                                static_cast<std::uint64_t>(h), i});
                const auto marks = sample_arrivals(res.requests[i], stream);
                const auto run = execute_policy(policies[static_cast<std::size_t>(h)].appliances[i],
                                                res.appliances[i], marks, T);
                for (int t = 0; t < T; ++t)
                    res_load[static_cast<std::size_t>(t)] += run.load[static_cast<std::size_t>(t)];
            }
            double bill = 0.0;
            for (int t = 0; t < T; ++t) {
                bill += nb.prices.pi_retail[static_cast<std::size_t>(t)] * res_load[static_cast<std::size_t>(t)];
                total[static_cast<std::size_t>(t)] += res_load[static_cast<std::size_t>(t)];
            }
            out.per_residence_bill[static_cast<std::size_t>(h)] += bill;
        }
        out.mean_deviation += deviation_cost(nb.supply.supply, total);
        out.mean_realtime_cost += realtime_cost(nb.supply.supply, total, nb.prices.pi_s, nb.prices.pi_p);
        for (int t = 0; t < T; ++t)
            out.mean_total_load[static_cast<std::size_t>(t)] += total[static_cast<std::size_t>(t)];
    }
    out.mean_deviation /= n_samples;
    out.mean_realtime_cost /= n_samples;
    for (double& v : out.mean_total_load) v /= n_samples;
    for (double& v : out.per_residence_bill) v /= n_samples;
    return out;
}

Neighborhood with_defectors(const Neighborhood& nb, int defector_count, std::uint64_t seed) {
    if (defector_count < 0 || defector_count > nb.residence_count())
        throw InputError("with_defectors: count out of range");
    Neighborhood out = nb;
    for (auto& res : out.residences) res.cooperative = true;
    std::vector<int> order(static_cast<std::size_t>(nb.residence_count()));
    std::iota(order.begin(), order.end(), 0);
    RngStream rng = RngStream(seed).derive({kTagDefectors});
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    for (int k = 0; k < defector_count; ++k)
        out.residences[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])].cooperative = false;
    return out;
}

Neighborhood without_uncontrollable(Neighborhood nb) {
    for (auto& res : nb.residences)
        std::fill(res.uncontrollable.begin(), res.uncontrollable.end(), 0.0);
    return nb;
}

// ---------------------------------------------------------------------------
// The decentralized dual loop

namespace {

struct CoopSetup {
    std::vector<int> members;  // residence index per cooperative slot
    CommGraph subgraph;
    MixingMatrix mixing;
};

CoopSetup cooperative_setup(const Neighborhood& nb) {
    CoopSetup setup;
    std::vector<int> slot(static_cast<std::size_t>(nb.residence_count()), -1);
    for (int h = 0; h < nb.residence_count(); ++h) {
        if (nb.residences[static_cast<std::size_t>(h)].cooperative) {
            slot[static_cast<std::size_t>(h)] = static_cast<int>(setup.members.size());
            setup.members.push_back(h);
        }
    }
    if (setup.members.empty()) throw InputError("algorithm: no cooperative residences");
    setup.subgraph.node_count = static_cast<int>(setup.members.size());
    for (const auto& [a, b] : nb.graph.edges) {
        const int sa = slot[static_cast<std::size_t>(a)], sb = slot[static_cast<std::size_t>(b)];
        if (sa >= 0 && sb >= 0) setup.subgraph.edges.emplace_back(std::min(sa, sb), std::max(sa, sb));
    }
    std::sort(setup.subgraph.edges.begin(), setup.subgraph.edges.end());
    setup.mixing = metropolis_weights_any(setup.subgraph);
    return setup;
}

double bound_excess(const std::vector<std::vector<double>>& rows, const std::vector<double>& bounds) {
    double excess = 0.0;
    for (const auto& row : rows)
        for (std::size_t t = 0; t < row.size(); ++t)
            excess = std::max(excess, std::max(-row[t], row[t] - bounds[t]));
    return std::max(excess, 0.0);
}

}  // namespace

AlgorithmResult run_algorithm1(const Neighborhood& nb, const AlgorithmParams& params) {
    nb.validate();
    if (params.iterations < 1) throw InputError("algorithm: needs at least one iteration");
    if (params.consensus_steps < 1) throw InputError("algorithm: needs at least one consensus step");
    const int T = nb.horizon;
    const int H = nb.residence_count();
    const auto& supply = nb.supply.supply;
    const auto& pi_s = nb.prices.pi_s;

    std::vector<double> bounds(static_cast<std::size_t>(T), 0.0);
    for (int t = 0; t < T; ++t)
        bounds[static_cast<std::size_t>(t)] = pi_s[static_cast<std::size_t>(t)] + nb.prices.pi_p[static_cast<std::size_t>(t)];

    const CoopSetup coop = cooperative_setup(nb);
    const int C = static_cast<int>(coop.members.size());

    AlgorithmResult result;
    result.policies.assign(static_cast<std::size_t>(H), {});
    const auto selfish = selfish_policies(nb);
    for (int h = 0; h < H; ++h)
        if (!nb.residences[static_cast<std::size_t>(h)].cooperative)
            result.policies[static_cast<std::size_t>(h)] = selfish[static_cast<std::size_t>(h)];

    result.lambda.assign(static_cast<std::size_t>(H), std::vector<double>(static_cast<std::size_t>(T), 0.0));
    for (auto& row : result.lambda)
        for (int t = 0; t < T; ++t) row[static_cast<std::size_t>(t)] = 0.5 * bounds[static_cast<std::size_t>(t)];
    auto& lambda = result.lambda;

    std::vector<std::vector<PolicyAverager>> averagers(static_cast<std::size_t>(H));
    for (int ci = 0; ci < C; ++ci) {
        const int h = coop.members[static_cast<std::size_t>(ci)];
        for (const auto& spec : nb.residences[static_cast<std::size_t>(h)].appliances)
            averagers[static_cast<std::size_t>(h)].emplace_back(spec, T);
    }

    auto current_policies = [&]() {
        std::vector<ResidencePolicies> all = result.policies;
        for (int ci = 0; ci < C; ++ci) {
            const int h = coop.members[static_cast<std::size_t>(ci)];
            all[static_cast<std::size_t>(h)].appliances.clear();
            for (const auto& avg : averagers[static_cast<std::size_t>(h)])
                all[static_cast<std::size_t>(h)].appliances.push_back(avg.average());
        }
        return all;
    };

    RunDiagnostics& diag = result.diagnostics;
    diag.consensus_steps = params.consensus_steps;
    diag.directed_edges = coop.subgraph.directed_edge_count();
    diag.mixing_lambda2 = coop.mixing.second_largest_eigenvalue_magnitude();

    const RngStream root(params.seed);
    long long messages = 0, rounds = 0;
    std::vector<std::vector<double>> nu(static_cast<std::size_t>(C));
    std::vector<std::vector<double>> coop_lambda(static_cast<std::size_t>(C));
    std::vector<double> pseudo(static_cast<std::size_t>(T), 0.0);

    for (int n = 0; n < params.iterations; ++n) {
        const double step = params.step.at(n);
        std::vector<double> aggregate(static_cast<std::size_t>(T), 0.0);

        for (int ci = 0; ci < C; ++ci) {
            const int h = coop.members[static_cast<std::size_t>(ci)];
            const auto& res = nb.residences[static_cast<std::size_t>(h)];
            for (int t = 0; t < T; ++t)
                pseudo[static_cast<std::size_t>(t)] =
                    lambda[static_cast<std::size_t>(h)][static_cast<std::size_t>(t)] - pi_s[static_cast<std::size_t>(t)];

            std::vector<PolicyTable> iterate;
            for (std::size_t i = 0; i < res.appliances.size(); ++i) {
                auto solved = solve_policy(res.appliances[i], res.requests[i], pseudo, T);
                averagers[static_cast<std::size_t>(h)][i].add(solved.policy);
                iterate.push_back(std::move(solved.policy));
            }
            const auto expected = estimate_expected_load(
                iterate, res.appliances, res.requests, params.mc_samples,
                root.derive({kTagExpectedLoad, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(h)}));
            for (int t = 0; t < T; ++t) aggregate[static_cast<std::size_t>(t)] += expected[static_cast<std::size_t>(t)];
            nu[static_cast<std::size_t>(ci)] =
                local_subgradient(lambda[static_cast<std::size_t>(h)], expected, res.uncontrollable,
                                  supply, H, step);
        }

        auto consensus = consensus_round(nu, coop.mixing, params.consensus_steps, bounds);
        for (int ci = 0; ci < C; ++ci) {
            lambda[static_cast<std::size_t>(coop.members[static_cast<std::size_t>(ci)])] =
                consensus.lambda[static_cast<std::size_t>(ci)];
            coop_lambda[static_cast<std::size_t>(ci)] = consensus.lambda[static_cast<std::size_t>(ci)];
        }
        rounds += params.consensus_steps;
        messages += static_cast<long long>(params.consensus_steps) * diag.directed_edges;

        IterationDiag row;
        row.iteration = n + 1;
        std::vector<double> lambda_bar(static_cast<std::size_t>(T), 0.0);
        for (int ci = 0; ci < C; ++ci)
            for (int t = 0; t < T; ++t)
                lambda_bar[static_cast<std::size_t>(t)] += coop_lambda[static_cast<std::size_t>(ci)][static_cast<std::size_t>(t)];
        for (double& v : lambda_bar) v /= C;
        std::vector<double> phis(static_cast<std::size_t>(C), 0.0);
        for (int ci = 0; ci < C; ++ci)
            phis[static_cast<std::size_t>(ci)] =
                residence_phi(nb.residences[static_cast<std::size_t>(coop.members[static_cast<std::size_t>(ci)])],
                              lambda_bar, pi_s, supply, H);
        row.dual_value = dual_objective_estimate(phis);
        row.max_disagreement = pairwise_spread(coop_lambda);
        row.pre_mix_disagreement = consensus.pre_mix_disagreement;
        row.post_mix_disagreement = consensus.post_mix_disagreement;
        row.pre_mix_deviation = consensus.pre_mix_deviation;
        row.post_mix_deviation = consensus.post_mix_deviation;
        row.mean_residual = consensus.mean_residual;
        row.lambda_bound_excess = bound_excess(coop_lambda, bounds);
        row.cumulative_messages = messages;
        row.cumulative_consensus_rounds = rounds;

        const bool last = n + 1 == params.iterations;
        const bool eval_now =
            last || (params.primal_eval_every > 0 && (n + 1) % params.primal_eval_every == 0);
        if (eval_now) {
            const auto est = primal_cost_estimate(
                current_policies(), nb, params.primal_eval_samples,
                root.derive({kTagPrimalEval, static_cast<std::uint64_t>(n)}).key());
            row.primal_value = est.value;
            row.primal_std_error = est.std_error;
            row.normalized_gap = row.dual_value != 0.0
                ? (est.value - row.dual_value) / std::abs(row.dual_value)
                : kNaN;
        } else {
            row.primal_value = kNaN;
            row.primal_std_error = kNaN;
            row.normalized_gap = kNaN;
        }
        diag.iterations.push_back(row);
        if (params.record_aggregate_loads) diag.aggregate_load_trace.push_back(aggregate);
    }

    for (int ci = 0; ci < C; ++ci) {
        const int h = coop.members[static_cast<std::size_t>(ci)];
        result.policies[static_cast<std::size_t>(h)].appliances.clear();
        for (const auto& avg : averagers[static_cast<std::size_t>(h)])
            result.policies[static_cast<std::size_t>(h)].appliances.push_back(avg.average());
    }
    return result;
}

// ---------------------------------------------------------------------------
// Joint procurement

JointResult run_joint_algorithm(const Neighborhood& nb, const JointParams& params) {
    nb.validate();
    if (!(params.weight > 0.0)) throw InputError("joint algorithm: weight must be positive");
    if (params.aggregator < 0 || params.aggregator >= nb.residence_count())
        throw InputError("joint algorithm: aggregator index out of range");
    const int T = nb.horizon;
    const int H = nb.residence_count();
    const int hours = static_cast<int>(nb.prices.pi_lmp.size());
    if (hours < 1 || T % hours != 0)
        throw InputError("joint algorithm: horizon must divide into day-ahead hours");
    const int spu = T / hours;

    // the weighted imbalance objective scales both balancing prices
    std::vector<double> pi_s_w(static_cast<std::size_t>(T), 0.0), bounds(static_cast<std::size_t>(T), 0.0);
    for (int t = 0; t < T; ++t) {
        pi_s_w[static_cast<std::size_t>(t)] = params.weight * nb.prices.pi_s[static_cast<std::size_t>(t)];
        bounds[static_cast<std::size_t>(t)] =
            params.weight *
            (nb.prices.pi_s[static_cast<std::size_t>(t)] + nb.prices.pi_p[static_cast<std::size_t>(t)]);
    }

    const CoopSetup coop = cooperative_setup(nb);
    const int C = static_cast<int>(coop.members.size());
    int agg = params.aggregator;  // the bid subproblem needs a cooperating node
    if (!nb.residences[static_cast<std::size_t>(agg)].cooperative) agg = coop.members[0];

    JointResult result;
    result.policies.assign(static_cast<std::size_t>(H), {});
    const auto selfish = selfish_policies(nb);
    for (int h = 0; h < H; ++h)
        if (!nb.residences[static_cast<std::size_t>(h)].cooperative)
            result.policies[static_cast<std::size_t>(h)] = selfish[static_cast<std::size_t>(h)];

    std::vector<std::vector<double>> lambda(static_cast<std::size_t>(H),
                                            std::vector<double>(static_cast<std::size_t>(T), 0.0));
    for (auto& row : lambda)
        for (int t = 0; t < T; ++t) row[static_cast<std::size_t>(t)] = 0.5 * bounds[static_cast<std::size_t>(t)];

    std::vector<std::vector<PolicyAverager>> averagers(static_cast<std::size_t>(H));
    for (int ci = 0; ci < C; ++ci) {
        const int h = coop.members[static_cast<std::size_t>(ci)];
        for (const auto& spec : nb.residences[static_cast<std::size_t>(h)].appliances)
            averagers[static_cast<std::size_t>(h)].emplace_back(spec, T);
    }

    RunDiagnostics& diag = result.diagnostics;
    diag.consensus_steps = params.base.consensus_steps;
    diag.directed_edges = coop.subgraph.directed_edge_count();
    diag.mixing_lambda2 = coop.mixing.second_largest_eigenvalue_magnitude();

    const RngStream root(params.base.seed);
    const std::vector<double> zero_supply(static_cast<std::size_t>(T), 0.0);
    long long messages = 0, rounds = 0;
    std::vector<std::vector<double>> nu(static_cast<std::size_t>(C));
    std::vector<std::vector<double>> coop_lambda(static_cast<std::size_t>(C));
    std::vector<double> pseudo(static_cast<std::size_t>(T), 0.0);

    auto psi_value = [&](const std::vector<double>& lam) {
        const auto bids = bid_minimizer(lam, pi_s_w, nb.prices.pi_lmp, spu);
        double v = 0.0;
        for (int l = 0; l < hours; ++l)
            v += bids[static_cast<std::size_t>(l)] * bids[static_cast<std::size_t>(l)] *
                 nb.prices.pi_lmp[static_cast<std::size_t>(l)];
        const auto p = expand_hourly(bids, T);
        for (int t = 0; t < T; ++t)
            v -= (lam[static_cast<std::size_t>(t)] - pi_s_w[static_cast<std::size_t>(t)]) * p[static_cast<std::size_t>(t)];
        return v;
    };

    for (int n = 0; n < params.base.iterations; ++n) {
        const double step = params.base.step.at(n);
        const auto bids = bid_minimizer(lambda[static_cast<std::size_t>(agg)], pi_s_w, nb.prices.pi_lmp, spu);
        const auto supply_n = expand_hourly(bids, T);

        for (int ci = 0; ci < C; ++ci) {
            const int h = coop.members[static_cast<std::size_t>(ci)];
            const auto& res = nb.residences[static_cast<std::size_t>(h)];
            for (int t = 0; t < T; ++t)
                pseudo[static_cast<std::size_t>(t)] =
                    lambda[static_cast<std::size_t>(h)][static_cast<std::size_t>(t)] - pi_s_w[static_cast<std::size_t>(t)];
            std::vector<PolicyTable> iterate;
            for (std::size_t i = 0; i < res.appliances.size(); ++i) {
                auto solved = solve_policy(res.appliances[i], res.requests[i], pseudo, T);
                averagers[static_cast<std::size_t>(h)][i].add(solved.policy);
                iterate.push_back(std::move(solved.policy));
            }
            const auto expected = estimate_expected_load(
                iterate, res.appliances, res.requests, params.base.mc_samples,
                root.derive({kTagExpectedLoad, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(h)}));
            nu[static_cast<std::size_t>(ci)] =
                local_subgradient(lambda[static_cast<std::size_t>(h)], expected, res.uncontrollable,
                                  supply_n, H, step);
        }

        auto consensus = consensus_round(nu, coop.mixing, params.base.consensus_steps, bounds);
        for (int ci = 0; ci < C; ++ci) {
            lambda[static_cast<std::size_t>(coop.members[static_cast<std::size_t>(ci)])] =
                consensus.lambda[static_cast<std::size_t>(ci)];
            coop_lambda[static_cast<std::size_t>(ci)] = consensus.lambda[static_cast<std::size_t>(ci)];
        }
        rounds += params.base.consensus_steps;
        messages += static_cast<long long>(params.base.consensus_steps) * diag.directed_edges;

        IterationDiag row;
        row.iteration = n + 1;
        std::vector<double> lambda_bar(static_cast<std::size_t>(T), 0.0);
        for (int ci = 0; ci < C; ++ci)
            for (int t = 0; t < T; ++t)
                lambda_bar[static_cast<std::size_t>(t)] += coop_lambda[static_cast<std::size_t>(ci)][static_cast<std::size_t>(t)];
        for (double& v : lambda_bar) v /= C;
        double dual = psi_value(lambda_bar);
        for (int ci = 0; ci < C; ++ci)
            dual += residence_phi(nb.residences[static_cast<std::size_t>(coop.members[static_cast<std::size_t>(ci)])],
                                  lambda_bar, pi_s_w, zero_supply, H);
        row.dual_value = dual;
        row.max_disagreement = pairwise_spread(coop_lambda);
        row.pre_mix_disagreement = consensus.pre_mix_disagreement;
        row.post_mix_disagreement = consensus.post_mix_disagreement;
        row.pre_mix_deviation = consensus.pre_mix_deviation;
        row.post_mix_deviation = consensus.post_mix_deviation;
        row.mean_residual = consensus.mean_residual;
        row.lambda_bound_excess = bound_excess(coop_lambda, bounds);
        row.cumulative_messages = messages;
        row.cumulative_consensus_rounds = rounds;
        row.primal_value = kNaN;
        row.primal_std_error = kNaN;
        row.normalized_gap = kNaN;

        const bool last = n + 1 == params.base.iterations;
        if (last || (params.base.primal_eval_every > 0 &&
                     (n + 1) % params.base.primal_eval_every == 0)) {
            std::vector<ResidencePolicies> current = result.policies;
            for (int ci = 0; ci < C; ++ci) {
                const int h = coop.members[static_cast<std::size_t>(ci)];
                current[static_cast<std::size_t>(h)].appliances.clear();
                for (const auto& avg : averagers[static_cast<std::size_t>(h)])
                    current[static_cast<std::size_t>(h)].appliances.push_back(avg.average());
            }
            const auto eval = evaluate_bid_schedule(
                bids, current, nb, params.weight, params.base.primal_eval_samples,
                root.derive({kTagPrimalEval, static_cast<std::uint64_t>(n)}).key());
            row.primal_value = eval.total_cost;
            row.normalized_gap = row.dual_value != 0.0
                ? (eval.total_cost - row.dual_value) / std::abs(row.dual_value)
                : kNaN;
        }
        diag.iterations.push_back(row);
    }

    for (int ci = 0; ci < C; ++ci) {
        const int h = coop.members[static_cast<std::size_t>(ci)];
        result.policies[static_cast<std::size_t>(h)].appliances.clear();
        for (const auto& avg : averagers[static_cast<std::size_t>(h)])
            result.policies[static_cast<std::size_t>(h)].appliances.push_back(avg.average());
    }
    result.hourly_bids = bid_minimizer(lambda[static_cast<std::size_t>(agg)], pi_s_w, nb.prices.pi_lmp, spu);
    return result;
}

JointEvaluation evaluate_bid_schedule(const std::vector<double>& hourly_bids,
                                      const std::vector<ResidencePolicies>& policies,
                                      const Neighborhood& nb, double weight,
                                      int n_samples, std::uint64_t seed) {
    if (static_cast<int>(policies.size()) != nb.residence_count())
        throw InputError("evaluate_bid_schedule: one policy set per residence required");
    if (n_samples < 1) throw InputError("evaluate_bid_schedule: need at least one sample");
    const int T = nb.horizon;
    const auto supply = expand_hourly(hourly_bids, T);
    const RngStream root(seed);

    double dev_sum = 0.0;
    std::vector<double> total(static_cast<std::size_t>(T), 0.0);
    for (int s = 0; s < n_samples; ++s) {
        std::fill(total.begin(), total.end(), 0.0);
        for (int h = 0; h < nb.residence_count(); ++h) {
            const auto& res = nb.residences[static_cast<std::size_t>(h)];
            for (int t = 0; t < T; ++t)
                total[static_cast<std::size_t>(t)] += res.uncontrollable[static_cast<std::size_t>(t)];
            for (std::size_t i = 0; i < res.appliances.size(); ++i) {
                RngStream stream = root.derive({static_cast<std::uint64_t>(s),
                                                static_cast<std::uint64_t>(h), i});
                const auto marks = sample_arrivals(res.requests[i], stream);
                const auto run = execute_policy(policies[static_cast<std::size_t>(h)].appliances[i],
                                                res.appliances[i], marks, T);
                for (int t = 0; t < T; ++t)
                    total[static_cast<std::size_t>(t)] += run.load[static_cast<std::size_t>(t)];
            }
        }
        dev_sum += deviation_cost(supply, total);
    }

    JointEvaluation out;
    out.expected_deviation = dev_sum / n_samples;
    for (std::size_t l = 0; l < hourly_bids.size(); ++l)
        out.procurement_cost += hourly_bids[l] * hourly_bids[l] * nb.prices.pi_lmp[l];
    out.total_cost = weight * out.expected_deviation + out.procurement_cost;
    return out;
}

}  // namespace cohem
