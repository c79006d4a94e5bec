#pragma once

#include <vector>

#include "cohem/appliance.hpp"
#include "cohem/rng.hpp"

namespace cohem::testing {

struct RandomInstance {
    ApplianceSpec spec;
    RequestModel req;
    std::vector<double> price;
    int horizon = 0;
};

// Small randomized appliance instance: horizon 6..max_horizon, up to two
// modes with up to two profile alternates, deadlines up to 3, durations up
// to 4, prices possibly negative.
inline RandomInstance random_instance(RngStream& rng, int max_horizon = 12,
                                      bool allow_negative_price = true) {
    RandomInstance inst;
    inst.horizon = rng.uniform_int(6, max_horizon);
    const int modes = rng.uniform_int(1, 2);
    for (int m = 0; m < modes; ++m) {
        OperationMode mode;
        mode.deadline = rng.uniform_int(0, 3);
        const int duration = rng.uniform_int(1, 4);
        const int alternates = rng.uniform_int(1, 2);
        for (int r = 0; r < alternates; ++r) {
            LoadProfile p;
            for (int j = 0; j < duration; ++j)
                p.samples.push_back(0.25 * rng.uniform_int(0, 16));
            mode.profiles.push_back(p);
        }
        inst.spec.modes.push_back(mode);
    }
    inst.spec.name = "random";

    for (int t = 0; t < inst.horizon; ++t) {
        inst.req.p.push_back(0.6 * rng.next_double());
        std::vector<double> row(static_cast<std::size_t>(modes), 0.0);
        double total = 0.0;
        for (double& g : row) {
            g = 0.05 + rng.next_double();
            total += g;
        }
        for (double& g : row) g /= total;
        // keep rows exactly normalized
        double sum = 0.0;
        for (std::size_t i = 0; i + 1 < row.size(); ++i) sum += row[i];
        row.back() = 1.0 - sum;
        inst.req.gamma.push_back(row);
    }

    for (int t = 0; t < inst.horizon; ++t) {
        const double lo = allow_negative_price ? -1.0 : 0.0;
        inst.price.push_back(lo + (1.5 - lo) * rng.next_double());
    }
    return inst;
}

}  // namespace cohem::testing
