#include "cohem/market.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "cohem/rng.hpp"

namespace cohem {

namespace {

void require_length(const std::vector<double>& v, int n, const char* what) {
    if (static_cast<int>(v.size()) != n)
        throw InputError(fmt::format("{}: length {} != expected {}", what, v.size(), n));
}

// Golden-section minimum of a unimodal function on [lo, hi].
double golden_min(const std::function<double(double)>& f, double lo, double hi, double tol) {
    constexpr double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

void PriceSet::validate(int horizon) const {
    require_length(pi_s, horizon, "pi_s");
    require_length(pi_p, horizon, "pi_p");
    require_length(pi_retail, horizon, "pi_retail");
    if (pi_lmp.empty()) throw InputError("pi_lmp: empty");
    for (int t = 0; t < horizon; ++t) {
        if (pi_s[static_cast<std::size_t>(t)] + pi_p[static_cast<std::size_t>(t)] < 0.0)
            throw InputError(fmt::format("prices: pi_s + pi_p negative at slot {}", t + 1));
    }
}

void SupplyPlan::validate(int horizon, int slots_per_hour) const {
    require_length(supply, horizon, "supply");
    if (!has_hourly_bids()) return;
    if (static_cast<int>(hourly_bids.size()) * slots_per_hour != horizon)
        throw InputError("supply plan: hourly bids do not cover the horizon");
    for (double b : hourly_bids)
        if (!(b >= 0.0)) throw InputError("supply plan: negative hourly bid");
    for (int t = 0; t < horizon; ++t) {
        if (std::abs(supply[static_cast<std::size_t>(t)] -
                     hourly_bids[static_cast<std::size_t>(t / slots_per_hour)]) > 1e-9)
            throw InputError(fmt::format("supply plan: slot {} disagrees with its hourly bid", t + 1));
    }
}

// ---------------------------------------------------------------------------
// ConvexCostFn

ConvexCostFn ConvexCostFn::linear(double slope) {
    if (slope < 0.0) throw InputError("linear cost: negative slope");
    ConvexCostFn c;
    c.kind_ = Kind::linear;
    c.coeff_ = slope;
    c.bound_ = 0.0;
    return c;
}

ConvexCostFn ConvexCostFn::quadratic(double coeff) {
    if (coeff <= 0.0) throw InputError("quadratic cost: coefficient must be positive");
    ConvexCostFn c;
    c.kind_ = Kind::quadratic;
    c.coeff_ = coeff;
    c.bound_ = 0.0;
    return c;
}

ConvexCostFn ConvexCostFn::custom(std::function<double(double)> fn, double search_bound) {
    if (!fn) throw InputError("custom cost: empty function");
    if (!(search_bound > 0.0)) throw InputError("custom cost: search bound must be positive");
    RngStream rng(0x5eedc0de);
    for (int i = 0; i < 64; ++i) {
        const double x = rng.next_double() * search_bound;
        const double y = rng.next_double() * search_bound;
        const double mid = fn(0.5 * (x + y));
        if (mid > 0.5 * (fn(x) + fn(y)) + 1e-9 * (1.0 + std::abs(mid)))
            throw InputError("custom cost: midpoint convexity check failed");
        if (fn(std::max(x, y)) < fn(std::min(x, y)) - 1e-9)
            throw InputError("custom cost: not nondecreasing");
    }
    ConvexCostFn c;
    c.kind_ = Kind::custom;
    c.bound_ = search_bound;
    c.fn_ = std::move(fn);
    return c;
}

double ConvexCostFn::operator()(double x) const {
    switch (kind_) {
        case Kind::linear: return coeff_ * x;
        case Kind::quadratic: return coeff_ * x * x;
        case Kind::custom: return fn_(x);
    }
    return 0.0;
}

double ConvexCostFn::argmin_minus_linear(double multiplier) const {
    if (multiplier <= 0.0) return 0.0;  // nondecreasing cost, minimum at zero
    switch (kind_) {
        case Kind::linear:
            if (multiplier > coeff_)
                throw InputError(fmt::format(
                    "cost subproblem unbounded: multiplier {} exceeds linear slope {}", multiplier, coeff_));
            return 0.0;
        case Kind::quadratic:
            return multiplier / (2.0 * coeff_);
        case Kind::custom: {
            auto obj = [&](double x) { return fn_(x) - multiplier * x; };
            const double x = golden_min(obj, 0.0, bound_, 1e-8);
            if (x > bound_ * (1.0 - 1e-6))
                throw InputError(fmt::format(
                    "cost subproblem unbounded: multiplier {} exceeds the slope at bound {}", multiplier, bound_));
            return x;
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------

double realtime_cost(const std::vector<double>& supply, const std::vector<double>& total_load,
                     const std::vector<double>& pi_s, const std::vector<double>& pi_p) {
    const int n = static_cast<int>(supply.size());
    require_length(total_load, n, "total_load");
    require_length(pi_s, n, "pi_s");
    require_length(pi_p, n, "pi_p");
    double cost = 0.0;
    for (int t = 0; t < n; ++t) {
        const double gap = supply[static_cast<std::size_t>(t)] - total_load[static_cast<std::size_t>(t)];
        cost += pi_s[static_cast<std::size_t>(t)] * std::max(gap, 0.0) +
                pi_p[static_cast<std::size_t>(t)] * std::max(-gap, 0.0);
    }
    return cost;
}

double deviation_cost(const std::vector<double>& supply, const std::vector<double>& total_load) {
    const int n = static_cast<int>(supply.size());
    require_length(total_load, n, "total_load");
    double cost = 0.0;
    for (int t = 0; t < n; ++t)
        cost += std::abs(supply[static_cast<std::size_t>(t)] - total_load[static_cast<std::size_t>(t)]);
    return cost;
}

SupplyPlan generate_day_ahead_bid(const std::vector<double>& expected_unscheduled_deferrable,
                                  const std::vector<double>& uncontrollable_total) {
    constexpr int kDay = 96;
    constexpr int kBlock = 16;
    if (static_cast<int>(expected_unscheduled_deferrable.size()) != kDay)
        throw InputError("day-ahead bid: expects a 96-slot day");
    require_length(uncontrollable_total, kDay, "uncontrollable_total");

    SupplyPlan plan;
    plan.supply.assign(kDay, 0.0);
    for (int block = 0; block < kDay / kBlock; ++block) {
        double mean = 0.0;
        for (int j = 0; j < kBlock; ++j)
            mean += expected_unscheduled_deferrable[static_cast<std::size_t>(block * kBlock + j)];
        mean /= kBlock;
        for (int j = 0; j < kBlock; ++j)
            plan.supply[static_cast<std::size_t>(block * kBlock + j)] =
                mean + uncontrollable_total[static_cast<std::size_t>(block * kBlock + j)];
    }

    // Keep hourly bids only when the profile really is hourly-constant.
    std::vector<double> bids(kDay / 4, 0.0);
    bool consistent = true;
    for (int h = 0; h < kDay / 4 && consistent; ++h) {
        const double v = plan.supply[static_cast<std::size_t>(4 * h)];
        for (int j = 1; j < 4; ++j)
            if (std::abs(plan.supply[static_cast<std::size_t>(4 * h + j)] - v) > 1e-12) consistent = false;
        bids[static_cast<std::size_t>(h)] = v;
        if (v < 0.0) consistent = false;
    }
    if (consistent) plan.hourly_bids = std::move(bids);
    return plan;
}

std::vector<double> bid_minimizer(const std::vector<double>& lambda,
                                  const std::vector<double>& pi_s,
                                  const std::vector<double>& pi_lmp,
                                  int slots_per_hour) {
    const int n = static_cast<int>(lambda.size());
    require_length(pi_s, n, "pi_s");
    if (slots_per_hour < 1 || n % slots_per_hour != 0)
        throw InputError("bid_minimizer: horizon not divisible into hours");
    const int hours = n / slots_per_hour;
    require_length(pi_lmp, hours, "pi_lmp");
    std::vector<double> bids(static_cast<std::size_t>(hours), 0.0);
    for (int h = 0; h < hours; ++h) {
        if (!(pi_lmp[static_cast<std::size_t>(h)] > 0.0))
            throw InputError(fmt::format("bid_minimizer: nonpositive day-ahead price at hour {}", h + 1));
        double a = 0.0;
        for (int j = 0; j < slots_per_hour; ++j) {
            const std::size_t t = static_cast<std::size_t>(h * slots_per_hour + j);
            a += lambda[t] - pi_s[t];
        }
        bids[static_cast<std::size_t>(h)] = std::max(0.0, a / (2.0 * pi_lmp[static_cast<std::size_t>(h)]));
    }
    return bids;
}

std::vector<double> bid_minimizer(const std::vector<double>& lambda,
                                  const std::vector<double>& pi_s,
                                  const std::vector<ConvexCostFn>& bid_costs,
                                  int slots_per_hour) {
    const int n = static_cast<int>(lambda.size());
    require_length(pi_s, n, "pi_s");
    if (slots_per_hour < 1 || n % slots_per_hour != 0)
        throw InputError("bid_minimizer: horizon not divisible into hours");
    const int hours = n / slots_per_hour;
    if (static_cast<int>(bid_costs.size()) != hours)
        throw InputError("bid_minimizer: one cost function per hour required");
    std::vector<double> bids(static_cast<std::size_t>(hours), 0.0);
    for (int h = 0; h < hours; ++h) {
        double a = 0.0;
        for (int j = 0; j < slots_per_hour; ++j) {
            const std::size_t t = static_cast<std::size_t>(h * slots_per_hour + j);
            a += lambda[t] - pi_s[t];
        }
        try {
            bids[static_cast<std::size_t>(h)] = bid_costs[static_cast<std::size_t>(h)].argmin_minus_linear(a);
        } catch (const InputError& e) {
            throw InputError(fmt::format("bid_minimizer: hour {}: {}", h + 1, e.what()));
        }
    }
    return bids;
}

double joint_total_cost(const std::vector<double>& hourly_bids,
                        const std::vector<double>& expected_total_load,
                        const std::vector<double>& pi_s, const std::vector<double>& pi_p,
                        const std::vector<double>& pi_lmp, double weight) {
    const int n = static_cast<int>(expected_total_load.size());
    const int hours = static_cast<int>(hourly_bids.size());
    if (hours < 1 || n % hours != 0)
        throw InputError("joint_total_cost: load length must be a multiple of the bid length");
    require_length(pi_s, n, "pi_s");
    require_length(pi_p, n, "pi_p");
    require_length(pi_lmp, hours, "pi_lmp");
    if (!(weight > 0.0)) throw InputError("joint_total_cost: weight must be positive");
    const int spu = n / hours;

    std::vector<double> supply(static_cast<std::size_t>(n), 0.0);
    for (int t = 0; t < n; ++t)
        supply[static_cast<std::size_t>(t)] = hourly_bids[static_cast<std::size_t>(t / spu)];
    double cost = weight * realtime_cost(supply, expected_total_load, pi_s, pi_p);
    for (int h = 0; h < hours; ++h)
        cost += hourly_bids[static_cast<std::size_t>(h)] * hourly_bids[static_cast<std::size_t>(h)] *
                pi_lmp[static_cast<std::size_t>(h)];
    return cost;
}

std::pair<std::vector<double>, std::vector<double>>
general_cost_aggregator_step(const std::vector<double>& lambda, const std::vector<double>& rho,
                             const std::vector<ConvexCostFn>& buy_costs,
                             const std::vector<ConvexCostFn>& absorb_costs) {
    const int n = static_cast<int>(lambda.size());
    require_length(rho, n, "rho");
    if (static_cast<int>(buy_costs.size()) != n || static_cast<int>(absorb_costs.size()) != n)
        throw InputError("general_cost_aggregator_step: one cost per slot required");
    for (int t = 0; t < n; ++t) {
        if (lambda[static_cast<std::size_t>(t)] < 0.0 || rho[static_cast<std::size_t>(t)] < 0.0)
            throw InputError("general_cost_aggregator_step: multipliers must be nonnegative");
    }
    std::vector<double> z(static_cast<std::size_t>(n), 0.0), y(static_cast<std::size_t>(n), 0.0);
    for (int t = 0; t < n; ++t) {
        try {
            z[static_cast<std::size_t>(t)] =
                buy_costs[static_cast<std::size_t>(t)].argmin_minus_linear(lambda[static_cast<std::size_t>(t)]);
            y[static_cast<std::size_t>(t)] =
                absorb_costs[static_cast<std::size_t>(t)].argmin_minus_linear(rho[static_cast<std::size_t>(t)]);
        } catch (const InputError& e) {
            throw InputError(fmt::format("general_cost_aggregator_step: slot {}: {}", t + 1, e.what()));
        }
    }
    return {std::move(z), std::move(y)};
}

std::vector<double> expand_hourly(const std::vector<double>& hourly, int horizon) {
    const int hours = static_cast<int>(hourly.size());
    if (hours < 1 || horizon % hours != 0)
        throw InputError("expand_hourly: horizon not divisible by the hourly profile");
    const int spu = horizon / hours;
    std::vector<double> out(static_cast<std::size_t>(horizon), 0.0);
    for (int t = 0; t < horizon; ++t) out[static_cast<std::size_t>(t)] = hourly[static_cast<std::size_t>(t / spu)];
    return out;
}

std::vector<double> minimize_weighted_bid(const std::vector<double>& target_load,
                                          const std::vector<double>& pi_lmp,
                                          double weight, int slots_per_hour) {
    const int n = static_cast<int>(target_load.size());
    if (slots_per_hour < 1 || n % slots_per_hour != 0)
        throw InputError("minimize_weighted_bid: horizon not divisible into hours");
    const int hours = n / slots_per_hour;
    require_length(pi_lmp, hours, "pi_lmp");
    if (!(weight > 0.0)) throw InputError("minimize_weighted_bid: weight must be positive");

    double peak = 0.0;
    for (double v : target_load) peak = std::max(peak, v);
    const double hi = peak + 1.0;

    std::vector<double> bids(static_cast<std::size_t>(hours), 0.0);
    for (int h = 0; h < hours; ++h) {
        if (!(pi_lmp[static_cast<std::size_t>(h)] > 0.0))
            throw InputError(fmt::format("minimize_weighted_bid: nonpositive day-ahead price at hour {}", h + 1));
        auto obj = [&](double b) {
            double c = b * b * pi_lmp[static_cast<std::size_t>(h)];
            for (int j = 0; j < slots_per_hour; ++j)
                c += weight * std::abs(b - target_load[static_cast<std::size_t>(h * slots_per_hour + j)]);
            return c;
        };
        bids[static_cast<std::size_t>(h)] = golden_min(obj, 0.0, hi, 1e-9);
    }
    return bids;
}

}  // namespace cohem
