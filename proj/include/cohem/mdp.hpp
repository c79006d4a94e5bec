#pragma once

#include <cstdint>
#include <vector>

#include "cohem/appliance.hpp"

namespace cohem {

// Dense index over the states reachable by one appliance:
// idle, then pending (mode, delay) blocks, then started (mode, alternate,
// remaining-work) blocks.
class StateIndexer {
public:
    StateIndexer() = default;
    explicit StateIndexer(const ApplianceSpec& spec);

    int count() const { return count_; }
    int index(const ApplianceState& state) const;
    ApplianceState state(int index) const;

private:
    struct ModeBlock {
        int pending_base = 0;
        int started_base = 0;
        int duration = 0;
        int deadline = 0;
        int alternates = 0;
    };
    std::vector<ModeBlock> modes_;
    int count_ = 0;
};

// Stored control decisions for the pending states that carry a real choice:
// every delay level for modes with several profile alternates, delay >= 1
// otherwise (a single-alternate job with no budget left is forced on).
// Everything else (idle, running, the forced single-alternate start) is
// recomputed from feasible_actions.
class PolicyTable {
public:
    PolicyTable() = default;
    PolicyTable(const ApplianceSpec& spec, int horizon);

    int horizon() const { return horizon_; }
    int decision_count() const { return decision_count_; }

    bool is_decision_state(const ApplianceState& state) const;
    int decision_index(const ApplianceState& state) const;
    ApplianceState decision_state(int index) const;

    Action stored(int t, const ApplianceState& state) const;
    void store(int t, const ApplianceState& state, Action action);

    int mode_duration(int mode) const;

    friend bool operator==(const PolicyTable&, const PolicyTable&) = default;

private:
    struct ModeEntry {
        int base = 0;
        int min_delay = 0;  // 0 for multi-alternate modes, 1 otherwise
        int deadline = 0;
        int duration = 0;
        int alternates = 0;
        friend bool operator==(const ModeEntry&, const ModeEntry&) = default;
    };
    int horizon_ = 0;
    int decision_count_ = 0;
    std::vector<ModeEntry> modes_;
    std::vector<std::int8_t> actions_;  // horizon_ x decision_count_
};

// Action for any consistent state at slot t; forced states are derived,
// decision states come from the table.
Action policy_action(const PolicyTable& policy, int t, const ApplianceState& state);

// Expected remaining cost J(t, state); t runs 1..horizon+1 with the terminal
// row identically zero.
class CostToGo {
public:
    CostToGo() = default;
    CostToGo(const ApplianceSpec& spec, int horizon);

    int horizon() const { return horizon_; }
    double at(int t, const ApplianceState& state) const;
    double idle_value(int t) const;

    double& slot(int t, int state_index);
    const StateIndexer& indexer() const { return indexer_; }

private:
    int horizon_ = 0;
    StateIndexer indexer_;
    std::vector<double> values_;
};

struct SolveResult {
    PolicyTable policy;
    CostToGo cost_to_go;
    // Expected optimal cost including a possible request in the first slot.
    double expected_total_cost = 0.0;
};

// Finite-horizon backward induction for one appliance under an arbitrary
// (possibly negative) per-slot price vector.
SolveResult solve_policy(const ApplianceSpec& spec, const RequestModel& req,
                         const std::vector<double>& price, int horizon);

// Exhaustive expectimax over the arrival/decision tree, no memoization; an
// independent check on solve_policy. Returns the optimal expected cost from
// an idle start at slot 1 (the same quantity as the solver's J(1, idle)).
// Refuses instances whose tree exceeds max_nodes.
double brute_force_policy(const ApplianceSpec& spec, const RequestModel& req,
                          const std::vector<double>& price, int horizon,
                          long long max_nodes = 100'000'000);

}  // namespace cohem
