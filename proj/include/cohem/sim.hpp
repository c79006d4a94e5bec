#pragma once

#include <vector>

#include "cohem/mdp.hpp"
#include "cohem/rng.hpp"

namespace cohem {

// Raw request marks, one entry per slot: 0 = no request, m = requested mode.
using ArrivalMarks = std::vector<int>;

struct ArrivalEvent {
    int slot = 0;
    int mode = 0;
    friend bool operator==(const ArrivalEvent&, const ArrivalEvent&) = default;
};

// Requests actually admitted by the state machine, in slot order.
using ArrivalTrace = std::vector<ArrivalEvent>;

// Independent Bernoulli(p(t)) per slot; mode drawn from gamma(t, .) on success.
ArrivalMarks sample_arrivals(const RequestModel& req, RngStream& rng);

struct ExecutionResult {
    ArrivalTrace admitted;
    std::vector<int> starts;   // start slot s_k, aligned with admitted
    std::vector<double> load;  // scheduled consumption per slot, kW
};

// Walks the chain slot by slot under the policy, consulting marks only from
// admitting states. Every admitted job starts within its delay budget.
ExecutionResult execute_policy(const PolicyTable& policy, const ApplianceSpec& spec,
                               const ArrivalMarks& marks, int horizon);

// Policy that starts every admitted job on its arrival slot with alternate 1.
PolicyTable immediate_policy(const ApplianceSpec& spec, int horizon);

// Monte Carlo sample mean of the summed scheduled load of one residence's
// appliances. Streams are derived per (appliance, sample), so the result does
// not depend on evaluation order.
std::vector<double> estimate_expected_load(const std::vector<PolicyTable>& policies,
                                           const std::vector<ApplianceSpec>& specs,
                                           const std::vector<RequestModel>& reqs,
                                           int n_samples, const RngStream& base);

}  // namespace cohem
