#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cohem/appliance.hpp"
#include "cohem/market.hpp"

namespace cohem {

// Undirected communication graph over the residences.
struct CommGraph {
    int node_count = 0;
    std::vector<std::pair<int, int>> edges;  // i < j, no self loops

    std::vector<std::vector<int>> neighbor_sets() const;
    bool connected() const;
    int directed_edge_count() const { return 2 * static_cast<int>(edges.size()); }
    void validate() const;

    friend bool operator==(const CommGraph&, const CommGraph&) = default;
};

struct Residence {
    std::vector<ApplianceSpec> appliances;
    std::vector<RequestModel> requests;
    std::vector<double> uncontrollable;  // kW per slot, assumed known exactly
    bool cooperative = true;

    friend bool operator==(const Residence&, const Residence&) = default;
};

struct Neighborhood {
    int horizon = 0;
    std::vector<Residence> residences;
    CommGraph graph;
    PriceSet prices;
    SupplyPlan supply;
    std::string config_echo;  // generator parameters, free-form

    int residence_count() const { return static_cast<int>(residences.size()); }
    void validate() const;

    friend bool operator==(const Neighborhood&, const Neighborhood&) = default;
};

enum class GraphFamily { complete, ring, random_geometric };
enum class SupplyMode { block_bid, flat, explicit_profile };

// One appliance class used by the synthesizer. Fixed-shape classes keep their
// profile as given; constant-power classes replicate `profile_shape[0]` for a
// drawn duration.
struct ApplianceTemplate {
    std::string name;
    std::vector<double> profile_shape;
    int duration_min = 0;  // 0 = fixed by profile_shape
    int duration_max = 0;
    int deadline_min = 1;
    int deadline_max = 1;
    std::vector<double> request_probability;  // per-slot pattern, resized to the horizon
    bool windowed_requests = false;           // requests at slots drawn from windows instead
    double window_probability = 0.8;
    std::vector<std::pair<int, int>> request_windows;  // inclusive slot ranges, 1-based
};

struct ScenarioConfig {
    int residence_count = 20;
    int horizon = 96;
    GraphFamily graph_family = GraphFamily::random_geometric;
    int target_degree = 4;
    std::vector<ApplianceTemplate> appliance_templates;

    double pi_s_value = 1.0;
    double pi_p_value = 1.0;
    std::vector<double> pi_lmp;  // one entry per hour

    // uncontrollable load: base + morning/evening bumps, scaled per residence
    double u_base = 0.3;
    double u_morning = 0.4;
    double u_evening = 0.7;
    double u_noise = 0.05;

    SupplyMode supply_mode = SupplyMode::block_bid;
    double flat_supply = 1.0;
    std::vector<double> explicit_supply;
    int bid_realizations = 50;

    void validate() const;
};

// Washer, dishwasher, dryer and a constant-power electric vehicle charger,
// with the deadline and duration spans of the reference setup.
ScenarioConfig paper_preset(int residence_count, std::uint64_t seed_hint = 0);

// Deterministic synthetic neighborhood. The same (config, seed) always yields
// the same neighborhood.
Neighborhood synthesize(const ScenarioConfig& config, std::uint64_t seed);

// Retail price inversely proportional to the committed supply.
std::vector<double> selfish_price(const std::vector<double>& supply);

Neighborhood load_scenario(const std::string& path);
void save_scenario(const Neighborhood& neighborhood, const std::string& path);

}  // namespace cohem
