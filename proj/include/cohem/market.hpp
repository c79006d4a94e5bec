#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "cohem/errors.hpp"

namespace cohem {

// Per-slot balancing prices plus the retail price used by uncoordinated
// households and the hourly day-ahead energy price.
struct PriceSet {
    std::vector<double> pi_s;       // absorb price, may be negative
    std::vector<double> pi_p;       // buy price
    std::vector<double> pi_retail;  // dynamic retail price
    std::vector<double> pi_lmp;     // hourly day-ahead price

    void validate(int horizon) const;  // requires pi_s + pi_p >= 0 per slot

    friend bool operator==(const PriceSet&, const PriceSet&) = default;
};

// Committed supply. `supply` is the slot-level profile; `hourly_bids` is kept
// only when the profile is constant within each hour.
struct SupplyPlan {
    std::vector<double> supply;       // P(t), kW per slot
    std::vector<double> hourly_bids;  // B(l), kW per hour; empty when undefined

    bool has_hourly_bids() const { return !hourly_bids.empty(); }
    void validate(int horizon, int slots_per_hour = 4) const;

    friend bool operator==(const SupplyPlan&, const SupplyPlan&) = default;
};

// Convex nondecreasing scalar cost with a declared search bound. Linear and
// quadratic forms get closed-form subproblem minimizers; anything else is
// minimized by golden-section search on [0, bound].
class ConvexCostFn {
public:
    static ConvexCostFn linear(double slope);
    static ConvexCostFn quadratic(double coeff);
    // Shape is spot-checked (midpoint convexity, monotonicity) at construction.
    static ConvexCostFn custom(std::function<double(double)> fn, double search_bound);

    double operator()(double x) const;
    double search_bound() const { return bound_; }

    // argmin_{x >= 0} cost(x) - multiplier * x. Throws InputError when the
    // objective is unbounded below.
    double argmin_minus_linear(double multiplier) const;

private:
    enum class Kind { linear, quadratic, custom };
    Kind kind_ = Kind::linear;
    double coeff_ = 0.0;
    double bound_ = 0.0;
    std::function<double(double)> fn_;
};

// Sum over slots of absorb cost for oversupply plus buy cost for shortfall.
double realtime_cost(const std::vector<double>& supply, const std::vector<double>& total_load,
                     const std::vector<double>& pi_s, const std::vector<double>& pi_p);

// Total absolute supply/load mismatch, kW.
double deviation_cost(const std::vector<double>& supply, const std::vector<double>& total_load);

// Day-ahead supply from the expected unscheduled deferrable load: 16-slot
// block averages plus the known uncontrollable total. Requires a 96-slot day.
SupplyPlan generate_day_ahead_bid(const std::vector<double>& expected_unscheduled_deferrable,
                                  const std::vector<double>& uncontrollable_total);

// Separable hourly bid minimizer for quadratic bid cost B^2 * pi_lmp:
// B(l) = max(0, sum_{t in hour l}(lambda(t) - pi_s(t)) / (2 pi_lmp(l))).
std::vector<double> bid_minimizer(const std::vector<double>& lambda,
                                  const std::vector<double>& pi_s,
                                  const std::vector<double>& pi_lmp,
                                  int slots_per_hour = 4);

// Same subproblem for arbitrary convex bid costs, solved to 1e-8.
std::vector<double> bid_minimizer(const std::vector<double>& lambda,
                                  const std::vector<double>& pi_s,
                                  const std::vector<ConvexCostFn>& bid_costs,
                                  int slots_per_hour = 4);

// Weighted imbalance cost of an hourly bid against an expected load profile
// plus the quadratic procurement cost. Slots per hour inferred from lengths.
double joint_total_cost(const std::vector<double>& hourly_bids,
                        const std::vector<double>& expected_total_load,
                        const std::vector<double>& pi_s, const std::vector<double>& pi_p,
                        const std::vector<double>& pi_lmp, double weight);

// Aggregator step of the general convex cost extension: per slot,
// z(t) = argmin_{z>=0} buy_cost[z] - lambda(t) z and
// y(t) = argmin_{y>=0} absorb_cost[y] - rho(t) y.
std::pair<std::vector<double>, std::vector<double>>
general_cost_aggregator_step(const std::vector<double>& lambda, const std::vector<double>& rho,
                             const std::vector<ConvexCostFn>& buy_costs,
                             const std::vector<ConvexCostFn>& absorb_costs);

// Hourly bid minimizing weight * sum_t |B - target(t)| + B^2 * pi_lmp(l);
// the pre-committed bid of the bid-then-schedule baseline.
std::vector<double> minimize_weighted_bid(const std::vector<double>& target_load,
                                          const std::vector<double>& pi_lmp,
                                          double weight, int slots_per_hour = 4);

// Slot-level expansion of an hourly profile.
std::vector<double> expand_hourly(const std::vector<double>& hourly, int horizon);

}  // namespace cohem
