#include "cohem/appliance.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace cohem {

void LoadProfile::validate() const {
    if (samples.empty()) throw InputError("load profile: needs at least one sample");
    for (double s : samples) {
        if (!(s >= 0.0)) throw InputError("load profile: negative or NaN sample");
    }
}

double power_at(const LoadProfile& profile, int elapsed) {
    if (elapsed < 1 || elapsed > profile.duration()) return 0.0;
    return profile.samples[static_cast<std::size_t>(elapsed - 1)];
}

void OperationMode::validate() const {
    if (profiles.empty()) throw InputError("operation mode: needs at least one profile");
    if (alternates() > 120) throw InputError("operation mode: too many profile alternates");
    for (const auto& p : profiles) p.validate();
    const int g = profiles.front().duration();
    for (const auto& p : profiles) {
        if (p.duration() != g)
            throw InputError("operation mode: profile alternates must share one duration");
    }
    if (deadline < 0) throw InputError("operation mode: negative deadline");
}

const OperationMode& ApplianceSpec::mode(int m) const {
    if (m < 1 || m > mode_count())
        throw ContractError(fmt::format("appliance '{}': mode {} out of range", name, m));
    return modes[static_cast<std::size_t>(m - 1)];
}

int ApplianceSpec::max_duration() const {
    int g = 0;
    for (const auto& m : modes) g = std::max(g, m.duration());
    return g;
}

int ApplianceSpec::max_deadline() const {
    int z = 0;
    for (const auto& m : modes) z = std::max(z, m.deadline);
    return z;
}

void ApplianceSpec::validate() const {
    if (modes.empty()) throw InputError(fmt::format("appliance '{}': needs at least one mode", name));
    for (const auto& m : modes) m.validate();
}

void RequestModel::validate(int mode_count) const {
    if (gamma.size() != p.size())
        throw InputError("request model: p and gamma must cover the same horizon");
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) throw InputError("request model: p outside [0,1]");
    }
    for (std::size_t t = 0; t < gamma.size(); ++t) {
        const auto& row = gamma[t];
        if (static_cast<int>(row.size()) != mode_count)
            throw InputError(fmt::format("request model: gamma row {} has wrong mode count", t + 1));
        double sum = 0.0;
        for (double v : row) {
            if (!(v >= 0.0 && v <= 1.0)) throw InputError("request model: gamma entry outside [0,1]");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw InputError(fmt::format("request model: gamma row {} sums to {}, expected 1", t + 1, sum));
    }
}

ApplianceState idle_state() { return {}; }

ApplianceState pending_state(const ApplianceSpec& spec, int mode, int delay) {
    const auto& m = spec.mode(mode);
    if (delay < 0 || delay > m.deadline) throw ContractError("pending_state: delay out of range");
    return {mode, 0, m.duration(), delay};
}

bool state_consistent(const ApplianceState& st, const ApplianceSpec& spec) {
    if (st.mode == 0) return st.profile == 0 && st.work == 0 && st.delay == 0;
    if (st.mode < 1 || st.mode > spec.mode_count()) return false;
    const auto& m = spec.modes[static_cast<std::size_t>(st.mode - 1)];
    if (st.profile == 0) {
        // pending: full job ahead, delay within the mode budget
        return st.work == m.duration() && st.delay >= 0 && st.delay <= m.deadline;
    }
    if (st.profile < 1 || st.profile > m.alternates()) return false;
    return st.delay == 0 && st.work >= 1 && st.work <= m.duration() - 1;
}

void require_consistent(const ApplianceState& st, const ApplianceSpec& spec) {
    if (!state_consistent(st, spec))
        throw ContractError(fmt::format("appliance '{}': inconsistent state ({},{},{},{})",
                                        spec.name, st.mode, st.profile, st.work, st.delay));
}

std::vector<Action> feasible_actions(const ApplianceState& st, const ApplianceSpec& spec,
                                     int t, int horizon) {
    require_consistent(st, spec);
    if (t < 1 || t > horizon) throw ContractError("feasible_actions: slot out of range");
    if (st.idle()) return {Action::wait()};
    const auto& m = spec.mode(st.mode);
    if (st.started()) return {Action::on(st.profile)};  // must run to completion
    std::vector<Action> out;
    const bool can_wait = st.delay >= 1 && t < horizon - m.duration();
    if (can_wait) out.push_back(Action::wait());
    for (int r = 1; r <= m.alternates(); ++r) out.push_back(Action::on(r));
    return out;
}

bool arrival_consulted(const ApplianceState& st, Action action) {
    if (st.idle()) return true;
    return st.work == 1 && !action.is_wait();
}

namespace {

ApplianceState admit(int arrival, const ApplianceSpec& spec) {
    if (arrival == 0) return idle_state();
    const auto& m = spec.mode(arrival);
    return {arrival, 0, m.duration(), m.deadline};
}

}  // namespace

ApplianceState transition(const ApplianceState& st, Action action, int arrival,
                          const ApplianceSpec& spec) {
    require_consistent(st, spec);
    if (arrival < 0 || arrival > spec.mode_count())
        throw ContractError("transition: arrival mode out of range");

    if (st.idle()) {
        if (!action.is_wait()) throw ContractError("transition: idle appliance cannot turn on");
        return admit(arrival, spec);
    }

    const auto& m = spec.mode(st.mode);
    if (st.pending()) {
        if (action.is_wait()) {
            if (st.delay < 1) throw ContractError("transition: delay budget exhausted, must start");
            return {st.mode, 0, st.work, st.delay - 1};  // arrival dropped
        }
        if (action.value < 1 || action.value > m.alternates())
            throw ContractError("transition: profile alternate out of range");
        if (m.duration() == 1) return admit(arrival, spec);  // one-slot job finishes now
        return {st.mode, action.value, m.duration() - 1, 0};
    }

    // started: forced to continue with the chosen alternate
    if (action.value != st.profile)
        throw ContractError("transition: running job must continue with its profile");
    if (st.work == 1) return admit(arrival, spec);
    return {st.mode, st.profile, st.work - 1, 0};
}

double consumption(const ApplianceState& st, Action action, const ApplianceSpec& spec) {
    if (action.is_wait()) return 0.0;
    const auto& m = spec.mode(st.mode);
    if (action.value < 1 || action.value > m.alternates())
        throw ContractError("consumption: profile alternate out of range");
    const auto& profile = m.profiles[static_cast<std::size_t>(action.value - 1)];
    return power_at(profile, m.duration() - st.work + 1);
}

}  // namespace cohem
