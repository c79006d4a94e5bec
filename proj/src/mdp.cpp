#include "cohem/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

namespace cohem {

// ---------------------------------------------------------------------------
// StateIndexer

StateIndexer::StateIndexer(const ApplianceSpec& spec) {
    spec.validate();
    int next = 1;  // 0 is idle
    modes_.reserve(spec.modes.size());
    for (const auto& m : spec.modes) {
        ModeBlock block;
        block.duration = m.duration();
        block.deadline = m.deadline;
        block.alternates = m.alternates();
        block.pending_base = next;
        next += m.deadline + 1;
        block.started_base = next;
        next += m.alternates() * (m.duration() - 1);
        modes_.push_back(block);
    }
    count_ = next;
}

int StateIndexer::index(const ApplianceState& st) const {
    if (st.idle()) return 0;
    if (st.mode < 1 || st.mode > static_cast<int>(modes_.size()))
        throw ContractError("state index: mode out of range");
    const auto& b = modes_[static_cast<std::size_t>(st.mode - 1)];
    if (st.pending()) {
        if (st.work != b.duration || st.delay < 0 || st.delay > b.deadline)
            throw ContractError("state index: inconsistent pending state");
        return b.pending_base + st.delay;
    }
    if (st.profile < 1 || st.profile > b.alternates || st.delay != 0 ||
        st.work < 1 || st.work > b.duration - 1)
        throw ContractError("state index: inconsistent started state");
    return b.started_base + (st.profile - 1) * (b.duration - 1) + (st.work - 1);
}

ApplianceState StateIndexer::state(int index) const {
    if (index == 0) return idle_state();
    for (std::size_t m = 0; m < modes_.size(); ++m) {
        const auto& b = modes_[m];
        if (index >= b.pending_base && index < b.pending_base + b.deadline + 1)
            return {static_cast<int>(m) + 1, 0, b.duration, index - b.pending_base};
        const int started_len = b.alternates * (b.duration - 1);
        if (index >= b.started_base && index < b.started_base + started_len) {
            const int off = index - b.started_base;
            return {static_cast<int>(m) + 1, off / (b.duration - 1) + 1, off % (b.duration - 1) + 1, 0};
        }
    }
    throw ContractError("state index: out of range");
}

// ---------------------------------------------------------------------------
// PolicyTable

PolicyTable::PolicyTable(const ApplianceSpec& spec, int horizon) : horizon_(horizon) {
    spec.validate();
    if (horizon < 1) throw InputError("policy table: horizon must be positive");
    int next = 0;
    for (const auto& m : spec.modes) {
        ModeEntry e;
        e.min_delay = m.alternates() > 1 ? 0 : 1;
        e.deadline = m.deadline;
        e.duration = m.duration();
        e.alternates = m.alternates();
        e.base = next;
        next += m.deadline - e.min_delay + 1;
        modes_.push_back(e);
    }
    decision_count_ = next;
    actions_.assign(static_cast<std::size_t>(horizon_) * decision_count_, 0);
}

bool PolicyTable::is_decision_state(const ApplianceState& st) const {
    if (!st.pending()) return false;
    if (st.mode < 1 || st.mode > static_cast<int>(modes_.size())) return false;
    const auto& e = modes_[static_cast<std::size_t>(st.mode - 1)];
    return st.delay >= e.min_delay && st.delay <= e.deadline;
}

int PolicyTable::decision_index(const ApplianceState& st) const {
    if (!is_decision_state(st)) throw ContractError("policy table: not a decision state");
    const auto& e = modes_[static_cast<std::size_t>(st.mode - 1)];
    return e.base + (st.delay - e.min_delay);
}

ApplianceState PolicyTable::decision_state(int index) const {
    for (std::size_t m = 0; m < modes_.size(); ++m) {
        const auto& e = modes_[m];
        const int len = e.deadline - e.min_delay + 1;
        if (index >= e.base && index < e.base + len)
            return {static_cast<int>(m) + 1, 0, e.duration, e.min_delay + (index - e.base)};
    }
    throw ContractError("policy table: decision index out of range");
}

Action PolicyTable::stored(int t, const ApplianceState& st) const {
    if (t < 1 || t > horizon_) throw ContractError("policy table: slot out of range");
    return {actions_[static_cast<std::size_t>(t - 1) * decision_count_ + decision_index(st)]};
}

void PolicyTable::store(int t, const ApplianceState& st, Action action) {
    if (t < 1 || t > horizon_) throw ContractError("policy table: slot out of range");
    actions_[static_cast<std::size_t>(t - 1) * decision_count_ + decision_index(st)] =
        static_cast<std::int8_t>(action.value);
}

int PolicyTable::mode_duration(int mode) const {
    if (mode < 1 || mode > static_cast<int>(modes_.size()))
        throw ContractError("policy table: mode out of range");
    return modes_[static_cast<std::size_t>(mode - 1)].duration;
}

Action policy_action(const PolicyTable& policy, int t, const ApplianceState& st) {
    if (t < 1 || t > policy.horizon()) throw ContractError("policy_action: slot out of range");
    if (st.idle()) return Action::wait();
    if (st.started()) return Action::on(st.profile);
    if (!policy.is_decision_state(st)) {
        if (st.delay != 0) throw ContractError("policy_action: state outside the policy domain");
        return Action::on(1);  // single-alternate job with no budget left
    }
    Action a = policy.stored(t, st);
    const bool wait_allowed =
        st.delay >= 1 && t < policy.horizon() - policy.mode_duration(st.mode);
    if (a.is_wait() && !wait_allowed)
        throw ContractError("policy_action: stored wait at a forced start");
    return a;
}

// ---------------------------------------------------------------------------
// CostToGo

CostToGo::CostToGo(const ApplianceSpec& spec, int horizon)
    : horizon_(horizon), indexer_(spec) {
    if (horizon < 1) throw InputError("cost-to-go: horizon must be positive");
    values_.assign(static_cast<std::size_t>(horizon_ + 1) * indexer_.count(), 0.0);
}

double CostToGo::at(int t, const ApplianceState& st) const {
    if (t < 1 || t > horizon_ + 1) throw ContractError("cost-to-go: slot out of range");
    return values_[static_cast<std::size_t>(t - 1) * indexer_.count() + indexer_.index(st)];
}

double CostToGo::idle_value(int t) const { return at(t, idle_state()); }

double& CostToGo::slot(int t, int state_index) {
    return values_[static_cast<std::size_t>(t - 1) * indexer_.count() + state_index];
}

// ---------------------------------------------------------------------------
// Backward induction

SolveResult solve_policy(const ApplianceSpec& spec, const RequestModel& req,
                         const std::vector<double>& price, int horizon) {
    spec.validate();
    req.validate(spec.mode_count());
    if (horizon < 1) throw InputError("solve_policy: horizon must be positive");
    if (static_cast<int>(price.size()) != horizon)
        throw InputError(fmt::format("solve_policy: price length {} != horizon {}", price.size(), horizon));
    if (req.horizon() != horizon)
        throw InputError(fmt::format("solve_policy: request model length {} != horizon {}",
                                     req.horizon(), horizon));

    const int M = spec.mode_count();
    SolveResult result;
    result.policy = PolicyTable(spec, horizon);
    result.cost_to_go = CostToGo(spec, horizon);
    auto& J = result.cost_to_go;
    const auto& ix = J.indexer();

    // Expected continuation from a free slot: the next-slot request draw.
    auto arrival_expectation = [&](int t) {
        const double pa = t < horizon ? req.p[static_cast<std::size_t>(t)] : 0.0;
        double v = (1.0 - pa) * J.slot(t + 1, ix.index(idle_state()));
        if (pa > 0.0) {
            for (int m = 1; m <= M; ++m) {
                const double gm = req.gamma[static_cast<std::size_t>(t)][static_cast<std::size_t>(m - 1)];
                if (gm == 0.0) continue;
                const auto& mode = spec.modes[static_cast<std::size_t>(m - 1)];
                v += pa * gm * J.slot(t + 1, ix.index(pending_state(spec, m, mode.deadline)));
            }
        }
        return v;
    };

    for (int t = horizon; t >= 1; --t) {
        const double cont = arrival_expectation(t);
        J.slot(t, ix.index(idle_state())) = cont;

        for (int m = 1; m <= M; ++m) {
            const auto& mode = spec.modes[static_cast<std::size_t>(m - 1)];
            const int G = mode.duration();
            const int R = mode.alternates();

            // started jobs run out deterministically
            for (int r = 1; r <= R; ++r) {
                const auto& g = mode.profiles[static_cast<std::size_t>(r - 1)];
                for (int w = 1; w <= G - 1; ++w) {
                    const double step = price[static_cast<std::size_t>(t - 1)] * power_at(g, G - w + 1);
                    const double next = w >= 2
                        ? J.slot(t + 1, ix.index({m, r, w - 1, 0}))
                        : cont;
                    J.slot(t, ix.index({m, r, w, 0})) = step + next;
                }
            }

            // pending jobs: start now with some alternate, or keep waiting
            const bool horizon_forced = t >= horizon - G;
            for (int q = 0; q <= mode.deadline; ++q) {
                const ApplianceState st{m, 0, G, q};
                double best = std::numeric_limits<double>::infinity();
                Action best_action = Action::on(1);
                for (int r = 1; r <= R; ++r) {
                    const auto& g = mode.profiles[static_cast<std::size_t>(r - 1)];
                    const double next = G >= 2 ? J.slot(t + 1, ix.index({m, r, G - 1, 0})) : cont;
                    const double v = price[static_cast<std::size_t>(t - 1)] * power_at(g, 1) + next;
                    if (v < best) {
                        best = v;
                        best_action = Action::on(r);
                    }
                }
                if (q >= 1 && !horizon_forced) {
                    const double v = J.slot(t + 1, ix.index({m, 0, G, q - 1}));
                    if (v < best) {
                        best = v;
                        best_action = Action::wait();
                    }
                }
                J.slot(t, ix.index(st)) = best;
                if (result.policy.is_decision_state(st)) result.policy.store(t, st, best_action);
            }
        }
    }

    // Mix over a possible request in the first slot.
    const double p1 = req.p[0];
    double total = (1.0 - p1) * J.idle_value(1);
    if (p1 > 0.0) {
        for (int m = 1; m <= M; ++m) {
            const double gm = req.gamma[0][static_cast<std::size_t>(m - 1)];
            if (gm == 0.0) continue;
            total += p1 * gm * J.at(1, pending_state(spec, m, spec.modes[static_cast<std::size_t>(m - 1)].deadline));
        }
    }
    result.expected_total_cost = total;
    return result;
}

// ---------------------------------------------------------------------------
// Exhaustive oracle
//
// Deliberately separate from the solver and the appliance transition code:
// a plain recursion over (mode, delay, slot) with closed-form handling of the
// busy span of a started job.

namespace {

struct BruteForceCtx {
    const ApplianceSpec* spec;
    const RequestModel* req;
    const std::vector<double>* price;
    int horizon;
    long long nodes = 0;
    long long max_nodes = 0;

    double idle_value(int t);
    double pending_value(int mode, int delay, int t);
    double request_mix(int t);
    void count_node();
};

void BruteForceCtx::count_node() {
    if (++nodes > max_nodes)
        throw SizeLimitError(fmt::format("brute_force_policy: tree exceeds {} nodes", max_nodes));
}

// Expected value across the request draw entering slot t.
double BruteForceCtx::request_mix(int t) {
    if (t > horizon) return 0.0;
    const double pa = (*req).p[static_cast<std::size_t>(t - 1)];
    double v = (1.0 - pa) * idle_value(t);
    if (pa > 0.0) {
        for (int m = 1; m <= spec->mode_count(); ++m) {
            const double gm = (*req).gamma[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(m - 1)];
            if (gm == 0.0) continue;
            v += pa * gm * pending_value(m, spec->modes[static_cast<std::size_t>(m - 1)].deadline, t);
        }
    }
    return v;
}

double BruteForceCtx::idle_value(int t) {
    if (t >= horizon) return 0.0;
    count_node();
    return request_mix(t + 1);
}

double BruteForceCtx::pending_value(int mode, int delay, int t) {
    count_node();
    const auto& m = spec->modes[static_cast<std::size_t>(mode - 1)];
    const int G = m.duration();
    double best = std::numeric_limits<double>::infinity();
    for (const auto& g : m.profiles) {
        double run_cost = 0.0;
        for (int j = 0; j < G && t + j <= horizon; ++j)
            run_cost += (*price)[static_cast<std::size_t>(t + j - 1)] * g.samples[static_cast<std::size_t>(j)];
        best = std::min(best, run_cost + request_mix(t + G));
    }
    if (delay >= 1 && t < horizon - G)
        best = std::min(best, pending_value(mode, delay - 1, t + 1));
    return best;
}

}  // namespace

double brute_force_policy(const ApplianceSpec& spec, const RequestModel& req,
                          const std::vector<double>& price, int horizon, long long max_nodes) {
    spec.validate();
    req.validate(spec.mode_count());
    if (horizon < 1 || horizon > 14)
        throw InputError("brute_force_policy: horizon must be in 1..14");
    if (static_cast<int>(price.size()) != horizon || req.horizon() != horizon)
        throw InputError("brute_force_policy: vector lengths must equal the horizon");
    BruteForceCtx ctx{&spec, &req, &price, horizon, 0, max_nodes};
    return ctx.idle_value(1);
}

}  // namespace cohem
