#include "doctest.h"

#include <cmath>

#include "cohem/sim.hpp"
#include "support/instances.hpp"

using namespace cohem;

namespace {

ApplianceSpec single_mode_spec(std::vector<double> profile, int deadline) {
    ApplianceSpec spec;
    spec.name = "test";
    spec.modes = {OperationMode{{LoadProfile{std::move(profile)}}, deadline}};
    return spec;
}

RequestModel zero_request(int horizon) {
    RequestModel req;
    req.p.assign(static_cast<std::size_t>(horizon), 0.0);
    req.gamma.assign(static_cast<std::size_t>(horizon), {1.0});
    return req;
}

RequestModel request_at(int horizon, int slot, double p) {
    RequestModel req = zero_request(horizon);
    req.p[static_cast<std::size_t>(slot - 1)] = p;
    return req;
}

}  // namespace

TEST_CASE("sampling follows the request model") {
    const int T = 20;
    SUBCASE("never requested gives an empty trace") {
        auto req = zero_request(T);
        RngStream rng(1);
        const auto marks = sample_arrivals(req, rng);
        for (int m : marks) CHECK(m == 0);
    }
    SUBCASE("always requested marks every slot") {
        RequestModel req;
        req.p.assign(T, 1.0);
        req.gamma.assign(T, {1.0});
        RngStream rng(2);
        const auto marks = sample_arrivals(req, rng);
        for (int m : marks) CHECK(m == 1);
    }
    SUBCASE("a fixed seed replays the identical trace") {
        RequestModel req;
        req.p.assign(T, 0.4);
        req.gamma.assign(T, {0.3, 0.7});
        RngStream a(77), b(77);
        CHECK(sample_arrivals(req, a) == sample_arrivals(req, b));
    }
}

TEST_CASE("execution basics") {
    const int T = 12;
    const auto spec = single_mode_spec({2.0, 1.0}, 2);
    const auto policy = immediate_policy(spec, T);

    SUBCASE("no marks, no load") {
        const auto run = execute_policy(policy, spec, ArrivalMarks(T, 0), T);
        CHECK(run.admitted.empty());
        CHECK(run.starts.empty());
        for (double v : run.load) CHECK(v == 0.0);
    }
    SUBCASE("zero deadline starts on the arrival slot") {
        auto quick = single_mode_spec({2.0, 1.0}, 0);
        ArrivalMarks marks(T, 0);
        marks[4] = 1;  // slot 5
        const auto run = execute_policy(immediate_policy(quick, T), quick, marks, T);
        REQUIRE(run.admitted.size() == 1);
        CHECK(run.admitted[0] == ArrivalEvent{5, 1});
        CHECK(run.starts == std::vector<int>{5});
        CHECK(run.load[4] == 2.0);
        CHECK(run.load[5] == 1.0);
    }
    SUBCASE("an arrival near the end is forced to start at once") {
        auto lazy = single_mode_spec({2.0, 1.0}, 2);
        // waiting would be allowed by the budget but not by the horizon
        ArrivalMarks marks(T, 0);
        marks[T - 2] = 1;  // slot T-1, job length 2
        const auto run = execute_policy(immediate_policy(lazy, T), lazy, marks, T);
        CHECK(run.starts == std::vector<int>{T - 1});
        CHECK(run.load[static_cast<std::size_t>(T - 2)] == 2.0);
        CHECK(run.load[static_cast<std::size_t>(T - 1)] == 1.0);
    }
    SUBCASE("marks during a running job are dropped") {
        ArrivalMarks marks(T, 0);
        marks[2] = 1;  // slot 3, runs slots 3-4 under the immediate policy
        marks[3] = 1;  // slot 4: machine is mid-job, dropped
        marks[4] = 1;  // slot 5: final work slot was slot 4, admitted
        const auto run = execute_policy(policy, spec, marks, T);
        REQUIRE(run.admitted.size() == 2);
        CHECK(run.admitted[0] == ArrivalEvent{3, 1});
        CHECK(run.admitted[1] == ArrivalEvent{5, 1});
    }
    SUBCASE("a slot-1 mark is admitted") {
        ArrivalMarks marks(T, 0);
        marks[0] = 1;
        const auto run = execute_policy(policy, spec, marks, T);
        REQUIRE(run.admitted.size() == 1);
        CHECK(run.admitted[0] == ArrivalEvent{1, 1});
        CHECK(run.starts == std::vector<int>{1});
    }
}

TEST_CASE("feasibility: policies never violate deadlines or the horizon") {
    RngStream rng(99);
    const int pairs = 10000;
    for (int rep = 0; rep < pairs; ++rep) {
        const auto inst = cohem::testing::random_instance(rng);
        const auto solved = solve_policy(inst.spec, inst.req, inst.price, inst.horizon);
        RngStream sampler = rng.derive({static_cast<std::uint64_t>(rep)});
        const auto marks = sample_arrivals(inst.req, sampler);
        const auto run = execute_policy(solved.policy, inst.spec, marks, inst.horizon);
        REQUIRE(run.starts.size() == run.admitted.size());
        for (std::size_t k = 0; k < run.admitted.size(); ++k) {
            const auto& ev = run.admitted[k];
            const int deadline = inst.spec.mode(ev.mode).deadline;
            CHECK(run.starts[k] >= ev.slot);
            CHECK(run.starts[k] <= ev.slot + deadline);
            // jobs that could finish in time must do so
            const int duration = inst.spec.mode(ev.mode).duration();
            if (ev.slot <= inst.horizon - duration)
                CHECK(run.starts[k] + duration - 1 <= inst.horizon);
        }
    }
}

TEST_CASE("expected load estimation") {
    const int T = 16;
    SUBCASE("never requested is exactly zero") {
        const auto spec = single_mode_spec({2.0}, 1);
        const auto req = zero_request(T);
        const auto policy = immediate_policy(spec, T);
        const auto load = estimate_expected_load({policy}, {spec}, {req}, 50, RngStream(5));
        for (double v : load) CHECK(v == 0.0);
    }
    SUBCASE("deterministic arrival with zero deadline is exact with one sample") {
        const auto spec = single_mode_spec({2.0, 0.5}, 0);
        const auto req = request_at(T, 6, 1.0);
        const auto policy = immediate_policy(spec, T);
        const auto load = estimate_expected_load({policy}, {spec}, {req}, 1, RngStream(5));
        CHECK(load[5] == 2.0);
        CHECK(load[6] == 0.5);
        CHECK(load[0] == 0.0);
    }
    SUBCASE("Bernoulli arrival converges to p * g") {
        const auto spec = single_mode_spec({2.0}, 0);
        const auto req = request_at(T, 9, 0.5);
        const auto policy = immediate_policy(spec, T);
        const int n = 100000;
        const auto load = estimate_expected_load({policy}, {spec}, {req}, n, RngStream(6));
        // binomial std dev of the mean: 2 * sqrt(p(1-p)/n)
        const double sigma = 2.0 * std::sqrt(0.25 / n);
        CHECK(std::abs(load[8] - 1.0) <= 3.0 * sigma);
    }
    SUBCASE("identical seeds give identical estimates") {
        const auto spec = single_mode_spec({1.0, 1.0}, 2);
        RequestModel req;
        req.p.assign(T, 0.3);
        req.gamma.assign(T, {1.0});
        const auto policy = immediate_policy(spec, T);
        const auto a = estimate_expected_load({policy}, {spec}, {req}, 200, RngStream(11));
        const auto b = estimate_expected_load({policy}, {spec}, {req}, 200, RngStream(11));
        CHECK(a == b);
    }
}

TEST_CASE("unbiasedness at the 1/sqrt(n) rate") {
    // single Bernoulli arrival, zero deadline: closed-form expectation p*g per slot
    const int T = 10;
    const auto spec = single_mode_spec({3.0, 1.0}, 0);
    const auto req = request_at(T, 4, 0.3);
    const auto policy = immediate_policy(spec, T);
    const int n = 10000;
    const auto load = estimate_expected_load({policy}, {spec}, {req}, n, RngStream(21));
    const double sigma4 = 3.0 * std::sqrt(0.3 * 0.7 / n);
    const double sigma5 = 1.0 * std::sqrt(0.3 * 0.7 / n);
    CHECK(std::abs(load[3] - 0.9) <= 4.0 * sigma4);
    CHECK(std::abs(load[4] - 0.3) <= 4.0 * sigma5);
}
