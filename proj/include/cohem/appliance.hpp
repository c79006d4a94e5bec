#pragma once

#include <string>
#include <vector>

#include "cohem/errors.hpp"

namespace cohem {

// Per-slot power draw of one job, kW. Slot index is 1-based (1..duration).
struct LoadProfile {
    std::vector<double> samples;

    int duration() const { return static_cast<int>(samples.size()); }
    void validate() const;

    friend bool operator==(const LoadProfile&, const LoadProfile&) = default;
};

// Power drawn `elapsed` slots into the job (1-based); zero outside 1..duration.
double power_at(const LoadProfile& profile, int elapsed);

// One customer-selectable task: interchangeable profile alternates that share
// a duration, and the maximum start delay in slots (0 = start on arrival).
struct OperationMode {
    std::vector<LoadProfile> profiles;
    int deadline = 0;

    int duration() const { return profiles.front().duration(); }
    int alternates() const { return static_cast<int>(profiles.size()); }
    void validate() const;

    friend bool operator==(const OperationMode&, const OperationMode&) = default;
};

struct ApplianceSpec {
    std::string name;
    std::vector<OperationMode> modes;

    int mode_count() const { return static_cast<int>(modes.size()); }
    const OperationMode& mode(int m) const;  // m in 1..mode_count()
    int max_duration() const;
    int max_deadline() const;
    void validate() const;

    friend bool operator==(const ApplianceSpec&, const ApplianceSpec&) = default;
};

// Per-slot request probability p(t) and mode-selection distribution gamma(t, m).
struct RequestModel {
    std::vector<double> p;                   // length T
    std::vector<std::vector<double>> gamma;  // T rows, one weight per mode; rows sum to 1

    int horizon() const { return static_cast<int>(p.size()); }
    void validate(int mode_count) const;

    friend bool operator==(const RequestModel&, const RequestModel&) = default;
};

// (mode, profile, work, delay):
//   mode    - 0 when idle, else the requested mode
//   profile - chosen alternate, 0 until the job starts
//   work    - remaining job length in slots
//   delay   - remaining delay budget in slots
// A pending job has profile == 0, work == full duration; a started job has
// profile >= 1, work < duration, delay == 0.
struct ApplianceState {
    int mode = 0;
    int profile = 0;
    int work = 0;
    int delay = 0;

    bool idle() const { return mode == 0; }
    bool pending() const { return mode != 0 && profile == 0; }
    bool started() const { return profile != 0; }

    friend bool operator==(const ApplianceState&, const ApplianceState&) = default;
};

ApplianceState idle_state();
ApplianceState pending_state(const ApplianceSpec& spec, int mode, int delay);

// 0 = wait (or stay idle), r >= 1 = run profile alternate r this slot.
struct Action {
    int value = 0;

    bool is_wait() const { return value == 0; }
    static Action wait() { return {0}; }
    static Action on(int r) { return {r}; }

    friend bool operator==(const Action&, const Action&) = default;
};

bool state_consistent(const ApplianceState& state, const ApplianceSpec& spec);
void require_consistent(const ApplianceState& state, const ApplianceSpec& spec);

// Actions available at slot t (1-based) of a horizon-slot day, ascending by
// value. A pending job may wait only while delay budget remains and
// t < horizon - duration, so that every admitted job still finishes in time.
std::vector<Action> feasible_actions(const ApplianceState& state, const ApplianceSpec& spec,
                                     int t, int horizon);

// True when the state machine will consult the next-slot arrival: only from
// idle or when the action completes the last work slot. Arrivals during a
// pending or unfinished job are dropped.
bool arrival_consulted(const ApplianceState& state, Action action);

// One slot of the chain. `arrival` is the mode requested for the next slot
// (0 = none). Throws ContractError on structurally infeasible actions; the
// time-dependent forcing near the horizon is owned by feasible_actions.
ApplianceState transition(const ApplianceState& state, Action action, int arrival,
                          const ApplianceSpec& spec);

// Power consumed during the current slot when taking `action` from `state`.
double consumption(const ApplianceState& state, Action action, const ApplianceSpec& spec);

}  // namespace cohem
