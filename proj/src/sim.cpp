#include "cohem/sim.hpp"

#include <fmt/format.h>

namespace cohem {

ArrivalMarks sample_arrivals(const RequestModel& req, RngStream& rng) {
    ArrivalMarks marks(req.p.size(), 0);
    for (std::size_t t = 0; t < req.p.size(); ++t) {
        if (req.p[t] > 0.0 && rng.bernoulli(req.p[t]))
            marks[t] = rng.categorical(req.gamma[t]) + 1;
    }
    return marks;
}

ExecutionResult execute_policy(const PolicyTable& policy, const ApplianceSpec& spec,
                               const ArrivalMarks& marks, int horizon) {
    spec.validate();
    if (policy.horizon() != horizon)
        throw InputError("execute_policy: policy horizon mismatch");
    if (static_cast<int>(marks.size()) != horizon)
        throw InputError("execute_policy: marks length must equal the horizon");

    ExecutionResult out;
    out.load.assign(static_cast<std::size_t>(horizon), 0.0);

    // Enter slot 1: an idle machine sees the first mark.
    ApplianceState state = transition(idle_state(), Action::wait(), marks[0], spec);
    if (state.pending()) out.admitted.push_back({1, state.mode});

    for (int t = 1; t <= horizon; ++t) {
        const Action a = policy_action(policy, t, state);
        out.load[static_cast<std::size_t>(t - 1)] += consumption(state, a, spec);
        if (state.pending() && !a.is_wait()) out.starts.push_back(t);

        const int next_mark = t < horizon ? marks[static_cast<std::size_t>(t)] : 0;
        const bool admits = arrival_consulted(state, a);
        state = transition(state, a, next_mark, spec);
        if (admits && next_mark != 0) out.admitted.push_back({t + 1, next_mark});
    }
    return out;
}

PolicyTable immediate_policy(const ApplianceSpec& spec, int horizon) {
    PolicyTable table(spec, horizon);
    for (int t = 1; t <= horizon; ++t)
        for (int i = 0; i < table.decision_count(); ++i)
            table.store(t, table.decision_state(i), Action::on(1));
    return table;
}

std::vector<double> estimate_expected_load(const std::vector<PolicyTable>& policies,
                                           const std::vector<ApplianceSpec>& specs,
                                           const std::vector<RequestModel>& reqs,
                                           int n_samples, const RngStream& base) {
    if (specs.size() != reqs.size() || specs.size() != policies.size())
        throw InputError("estimate_expected_load: specs, requests and policies must align");
    if (n_samples < 1) throw InputError("estimate_expected_load: need at least one sample");
    if (specs.empty()) throw InputError("estimate_expected_load: no appliances");

    const int horizon = policies.front().horizon();
    std::vector<double> sum(static_cast<std::size_t>(horizon), 0.0);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        for (int s = 0; s < n_samples; ++s) {
            RngStream stream = base.derive({static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(s)});
            const ArrivalMarks marks = sample_arrivals(reqs[i], stream);
            const ExecutionResult run = execute_policy(policies[i], specs[i], marks, horizon);
            for (int t = 0; t < horizon; ++t) sum[static_cast<std::size_t>(t)] += run.load[static_cast<std::size_t>(t)];
        }
    }
    for (double& v : sum) v /= n_samples;
    return sum;
}

}  // namespace cohem
