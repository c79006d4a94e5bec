#include "cohem/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "cohem/rng.hpp"
#include "cohem/sim.hpp"

namespace cohem {

using nlohmann::json;

// ---------------------------------------------------------------------------
// CommGraph

std::vector<std::vector<int>> CommGraph::neighbor_sets() const {
    std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(node_count));
    for (const auto& [a, b] : edges) {
        nbrs[static_cast<std::size_t>(a)].push_back(b);
        nbrs[static_cast<std::size_t>(b)].push_back(a);
    }
    for (auto& v : nbrs) std::sort(v.begin(), v.end());
    return nbrs;
}

bool CommGraph::connected() const {
    if (node_count <= 1) return true;
    const auto nbrs = neighbor_sets();
    std::vector<bool> seen(static_cast<std::size_t>(node_count), false);
    std::vector<int> stack{0};
    seen[0] = true;
    int visited = 1;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int w : nbrs[static_cast<std::size_t>(v)]) {
            if (!seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = true;
                ++visited;
                stack.push_back(w);
            }
        }
    }
    return visited == node_count;
}

void CommGraph::validate() const {
    if (node_count < 1) throw InputError("graph: needs at least one node");
    for (const auto& [a, b] : edges) {
        if (a < 0 || b < 0 || a >= node_count || b >= node_count)
            throw InputError("graph: edge endpoint out of range");
        if (a == b) throw InputError("graph: self loops are not allowed");
        if (a > b) throw InputError("graph: edges must be stored as (low, high)");
    }
}

void Neighborhood::validate() const {
    if (horizon < 1) throw InputError("neighborhood: horizon must be positive");
    if (residences.empty()) throw InputError("neighborhood: needs at least one residence");
    graph.validate();
    if (graph.node_count != residence_count())
        throw InputError("neighborhood: graph size must match the residence count");
    prices.validate(horizon);
    supply.validate(horizon);
    for (std::size_t h = 0; h < residences.size(); ++h) {
        const auto& res = residences[h];
        if (res.appliances.size() != res.requests.size())
            throw InputError(fmt::format("residence {}: appliances and request models must align", h));
        if (static_cast<int>(res.uncontrollable.size()) != horizon)
            throw InputError(fmt::format("residence {}: uncontrollable load length mismatch", h));
        for (std::size_t i = 0; i < res.appliances.size(); ++i) {
            res.appliances[i].validate();
            res.requests[i].validate(res.appliances[i].mode_count());
            if (res.requests[i].horizon() != horizon)
                throw InputError(fmt::format("residence {}: request model horizon mismatch", h));
        }
    }
}

// ---------------------------------------------------------------------------
// Synthesis

void ScenarioConfig::validate() const {
    if (residence_count < 1) throw InputError("config: residence count must be positive");
    if (horizon < 1) throw InputError("config: horizon must be positive");
    if (appliance_templates.empty()) throw InputError("config: no appliance templates");
    if (pi_s_value + pi_p_value < 0.0) throw InputError("config: pi_s + pi_p must be nonnegative");
    for (const auto& tmpl : appliance_templates) {
        if (tmpl.profile_shape.empty())
            throw InputError(fmt::format("template '{}': empty profile", tmpl.name));
        if (tmpl.deadline_min < 0 || tmpl.deadline_max < tmpl.deadline_min)
            throw InputError(fmt::format("template '{}': bad deadline range", tmpl.name));
        if (tmpl.duration_min < 0 || tmpl.duration_max < tmpl.duration_min)
            throw InputError(fmt::format("template '{}': bad duration range", tmpl.name));
        if (tmpl.windowed_requests) {
            if (tmpl.request_windows.empty())
                throw InputError(fmt::format("template '{}': windowed requests need windows", tmpl.name));
            for (const auto& [lo, hi] : tmpl.request_windows) {
                if (lo < 1 || hi < lo || hi > horizon)
                    throw InputError(fmt::format("template '{}': window outside the horizon", tmpl.name));
            }
            if (!(tmpl.window_probability >= 0.0 && tmpl.window_probability <= 1.0))
                throw InputError(fmt::format("template '{}': window probability outside [0,1]", tmpl.name));
        } else if (tmpl.request_probability.empty()) {
            throw InputError(fmt::format("template '{}': no request pattern", tmpl.name));
        }
    }
    if (supply_mode == SupplyMode::block_bid && horizon != 96)
        throw InputError("config: block bid supply requires a 96-slot day");
    if (supply_mode == SupplyMode::flat && !(flat_supply > 0.0))
        throw InputError("config: flat supply must be positive");
    if (supply_mode == SupplyMode::explicit_profile &&
        static_cast<int>(explicit_supply.size()) != horizon)
        throw InputError("config: explicit supply length mismatch");
}

namespace {

std::vector<double> pattern_over_day(int horizon, double base,
                                     std::initializer_list<std::tuple<double, double, double>> bumps) {
    // bumps: (start fraction of day, end fraction, added value)
    std::vector<double> v(static_cast<std::size_t>(horizon), base);
    for (int t = 0; t < horizon; ++t) {
        const double frac = (t + 0.5) / horizon;
        for (const auto& [lo, hi, add] : bumps) {
            if (frac >= lo && frac < hi) v[static_cast<std::size_t>(t)] += add;
        }
    }
    return v;
}

constexpr std::uint64_t kTagAppliance = 1;
constexpr std::uint64_t kTagUncontrollable = 2;
constexpr std::uint64_t kTagGraph = 3;
constexpr std::uint64_t kTagBid = 4;

CommGraph build_graph(const ScenarioConfig& cfg, RngStream stream) {
    CommGraph g;
    g.node_count = cfg.residence_count;
    const int H = cfg.residence_count;
    switch (cfg.graph_family) {
        case GraphFamily::complete:
            for (int a = 0; a < H; ++a)
                for (int b = a + 1; b < H; ++b) g.edges.emplace_back(a, b);
            break;
        case GraphFamily::ring:
            if (H == 2) {
                g.edges.emplace_back(0, 1);
            } else if (H > 2) {
                for (int a = 0; a + 1 < H; ++a) g.edges.emplace_back(a, a + 1);
                g.edges.emplace_back(0, H - 1);
            }
            break;
        case GraphFamily::random_geometric: {
            std::vector<std::pair<double, double>> pts(static_cast<std::size_t>(H));
            for (auto& p : pts) p = {stream.next_double(), stream.next_double()};
            const double target = std::min<double>(cfg.target_degree, H - 1);
            const double radius = H > 1 ? std::sqrt(target / (3.14159265358979323846 * (H - 1))) : 0.0;
            auto dist2 = [&](int a, int b) {
                const double dx = pts[static_cast<std::size_t>(a)].first - pts[static_cast<std::size_t>(b)].first;
                const double dy = pts[static_cast<std::size_t>(a)].second - pts[static_cast<std::size_t>(b)].second;
                return dx * dx + dy * dy;
            };
            for (int a = 0; a < H; ++a)
                for (int b = a + 1; b < H; ++b)
                    if (dist2(a, b) <= radius * radius) g.edges.emplace_back(a, b);
            // bridge components with their closest cross pair until connected
            std::vector<int> comp(static_cast<std::size_t>(H));
            auto recolor = [&]() {
                std::iota(comp.begin(), comp.end(), 0);
                const auto nbrs = g.neighbor_sets();
                for (int round = 0; round < H; ++round) {
                    bool changed = false;
                    for (int v = 0; v < H; ++v)
                        for (int w : nbrs[static_cast<std::size_t>(v)])
                            if (comp[static_cast<std::size_t>(w)] < comp[static_cast<std::size_t>(v)]) {
                                comp[static_cast<std::size_t>(v)] = comp[static_cast<std::size_t>(w)];
                                changed = true;
                            }
                    if (!changed) break;
                }
            };
            recolor();
            while (true) {
                bool single = true;
                for (int v = 0; v < H; ++v)
                    if (comp[static_cast<std::size_t>(v)] != comp[0]) single = false;
                if (single) break;
                double best = 1e300;
                std::pair<int, int> pick{-1, -1};
                for (int a = 0; a < H; ++a)
                    for (int b = a + 1; b < H; ++b)
                        if (comp[static_cast<std::size_t>(a)] != comp[static_cast<std::size_t>(b)] &&
                            dist2(a, b) < best) {
                            best = dist2(a, b);
                            pick = {a, b};
                        }
                g.edges.push_back(pick);
                recolor();
            }
            std::sort(g.edges.begin(), g.edges.end());
            break;
        }
    }
    return g;
}

}  // namespace

ScenarioConfig paper_preset(int residence_count, std::uint64_t) {
    ScenarioConfig cfg;
    cfg.residence_count = residence_count;
    cfg.horizon = 96;
    cfg.graph_family = GraphFamily::random_geometric;
    cfg.target_degree = 4;

    ApplianceTemplate washer;
    washer.name = "washer";
    washer.profile_shape = {2.0, 0.3, 2.5};
    washer.deadline_min = 1;
    washer.deadline_max = 8;
    washer.request_probability =
        pattern_over_day(96, 0.002, {{7.0 / 24, 11.0 / 24, 0.028}, {18.0 / 24, 22.0 / 24, 0.033}});

    ApplianceTemplate dishwasher;
    dishwasher.name = "dishwasher";
    dishwasher.profile_shape = {1.8, 0.6, 0.2, 1.2};
    dishwasher.deadline_min = 1;
    dishwasher.deadline_max = 8;
    dishwasher.request_probability =
        pattern_over_day(96, 0.003, {{12.0 / 24, 14.0 / 24, 0.027}, {19.0 / 24, 23.0 / 24, 0.032}});

    ApplianceTemplate dryer;
    dryer.name = "dryer";
    dryer.profile_shape = {3.0, 2.5, 1.5, 0.8};
    dryer.deadline_min = 1;
    dryer.deadline_max = 12;
    dryer.request_probability =
        pattern_over_day(96, 0.002, {{8.0 / 24, 11.0 / 24, 0.023}, {19.0 / 24, 23.0 / 24, 0.028}});

    ApplianceTemplate ev;
    ev.name = "ev_charger";
    ev.profile_shape = {3.0};  // constant draw, duration drawn per residence
    ev.duration_min = 4;
    ev.duration_max = 24;
    ev.deadline_min = 1;
    ev.deadline_max = 12;
    ev.windowed_requests = true;
    ev.window_probability = 0.8;
    ev.request_windows = {{33, 48}, {69, 96}, {1, 8}};  // 8am-12pm, 5pm-12am, 12am-2am

    cfg.appliance_templates = {washer, dishwasher, dryer, ev};

    cfg.pi_lmp = {0.022, 0.020, 0.019, 0.018, 0.018, 0.019, 0.022, 0.026,
                  0.030, 0.033, 0.034, 0.035, 0.036, 0.036, 0.035, 0.034,
                  0.033, 0.035, 0.036, 0.036, 0.032, 0.028, 0.025, 0.023};
    return cfg;
}

Neighborhood synthesize(const ScenarioConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const int T = cfg.horizon;
    const int H = cfg.residence_count;
    const RngStream root(seed);

    Neighborhood nb;
    nb.horizon = T;
    nb.residences.resize(static_cast<std::size_t>(H));

    for (int h = 0; h < H; ++h) {
        Residence& res = nb.residences[static_cast<std::size_t>(h)];
        for (std::size_t c = 0; c < cfg.appliance_templates.size(); ++c) {
            const auto& tmpl = cfg.appliance_templates[c];
            RngStream draw = root.derive({kTagAppliance, static_cast<std::uint64_t>(h), c});

            ApplianceSpec spec;
            spec.name = tmpl.name;
            OperationMode mode;
            mode.deadline = draw.uniform_int(tmpl.deadline_min, tmpl.deadline_max);
            if (tmpl.duration_min >= 1) {
                const int g = draw.uniform_int(tmpl.duration_min, tmpl.duration_max);
                mode.profiles = {LoadProfile{std::vector<double>(static_cast<std::size_t>(g),
                                                                 tmpl.profile_shape.front())}};
            } else {
                mode.profiles = {LoadProfile{tmpl.profile_shape}};
            }
            spec.modes = {mode};

            RequestModel req;
            req.p.assign(static_cast<std::size_t>(T), 0.0);
            req.gamma.assign(static_cast<std::size_t>(T), {1.0});
            if (tmpl.windowed_requests) {
                for (const auto& [lo, hi] : tmpl.request_windows) {
                    const int slot = draw.uniform_int(lo, hi);
                    req.p[static_cast<std::size_t>(slot - 1)] = tmpl.window_probability;
                }
            } else {
                const double scale = 0.8 + 0.4 * draw.next_double();
                for (int t = 0; t < T; ++t) {
                    const std::size_t src = tmpl.request_probability.size() == static_cast<std::size_t>(T)
                        ? static_cast<std::size_t>(t)
                        : static_cast<std::size_t>(t) % tmpl.request_probability.size();
                    req.p[static_cast<std::size_t>(t)] =
                        std::clamp(tmpl.request_probability[src] * scale, 0.0, 1.0);
                }
            }
            res.appliances.push_back(std::move(spec));
            res.requests.push_back(std::move(req));
        }

        RngStream u_draw = root.derive({kTagUncontrollable, static_cast<std::uint64_t>(h)});
        const double scale = 0.9 + 0.2 * u_draw.next_double();
        res.uncontrollable = pattern_over_day(
            T, cfg.u_base, {{7.0 / 24, 9.0 / 24, cfg.u_morning}, {18.0 / 24, 22.0 / 24, cfg.u_evening}});
        for (double& u : res.uncontrollable) u = u * scale + cfg.u_noise * u_draw.next_double();
    }

    nb.graph = build_graph(cfg, root.derive({kTagGraph}));

    nb.prices.pi_s.assign(static_cast<std::size_t>(T), cfg.pi_s_value);
    nb.prices.pi_p.assign(static_cast<std::size_t>(T), cfg.pi_p_value);
    if (!cfg.pi_lmp.empty()) {
        nb.prices.pi_lmp = cfg.pi_lmp;
    } else {
        nb.prices.pi_lmp.assign(static_cast<std::size_t>(T % 4 == 0 ? T / 4 : 1), 0.02);
    }

    std::vector<double> u_total(static_cast<std::size_t>(T), 0.0);
    for (const auto& res : nb.residences)
        for (int t = 0; t < T; ++t) u_total[static_cast<std::size_t>(t)] += res.uncontrollable[static_cast<std::size_t>(t)];

    switch (cfg.supply_mode) {
        case SupplyMode::flat:
            nb.supply.supply.assign(static_cast<std::size_t>(T), cfg.flat_supply);
            break;
        case SupplyMode::explicit_profile:
            nb.supply.supply = cfg.explicit_supply;
            break;
        case SupplyMode::block_bid: {
            // expected unscheduled deferrable load, estimated once per scenario
            std::vector<double> mean(static_cast<std::size_t>(T), 0.0);
            for (int rep = 0; rep < cfg.bid_realizations; ++rep) {
                for (int h = 0; h < H; ++h) {
                    const auto& res = nb.residences[static_cast<std::size_t>(h)];
                    for (std::size_t i = 0; i < res.appliances.size(); ++i) {
                        RngStream s = root.derive({kTagBid, static_cast<std::uint64_t>(rep),
                                                   static_cast<std::uint64_t>(h), i});
                        const auto marks = sample_arrivals(res.requests[i], s);
                        const auto run = execute_policy(immediate_policy(res.appliances[i], T),
                                                        res.appliances[i], marks, T);
                        for (int t = 0; t < T; ++t) mean[static_cast<std::size_t>(t)] += run.load[static_cast<std::size_t>(t)];
                    }
                }
            }
            for (double& v : mean) v /= cfg.bid_realizations;
            nb.supply = generate_day_ahead_bid(mean, u_total);
            break;
        }
    }
    nb.prices.pi_retail = selfish_price(nb.supply.supply);

    nb.config_echo = fmt::format(
        "residences={} horizon={} graph={} degree={} templates={} supply_mode={} seed={}",
        H, T,
        cfg.graph_family == GraphFamily::complete ? "complete"
            : cfg.graph_family == GraphFamily::ring ? "ring" : "geometric",
        cfg.target_degree, cfg.appliance_templates.size(),
        cfg.supply_mode == SupplyMode::block_bid ? "block_bid"
            : cfg.supply_mode == SupplyMode::flat ? "flat" : "explicit",
        seed);
    nb.validate();
    return nb;
}

std::vector<double> selfish_price(const std::vector<double>& supply) {
    std::vector<double> price(supply.size(), 0.0);
    for (std::size_t t = 0; t < supply.size(); ++t) {
        if (!(supply[t] > 0.0))
            throw InputError(fmt::format("selfish_price: supply must be positive at slot {}", t + 1));
        price[t] = 1.0 / supply[t];
    }
    return price;
}

// ---------------------------------------------------------------------------
// File format

namespace {

constexpr int kSchemaVersion = 1;

const json& field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object())
        throw ParseError(fmt::format("scenario: {} is not an object", where));
    auto it = obj.find(key);
    if (it == obj.end())
        throw ParseError(fmt::format("scenario: missing field '{}' in {}", key, where));
    return *it;
}

std::vector<double> number_list(const json& arr, const std::string& where) {
    if (!arr.is_array()) throw ParseError(fmt::format("scenario: {} must be an array", where));
    std::vector<double> out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number()) throw ParseError(fmt::format("scenario: {} holds a non-number", where));
        out.push_back(v.get<double>());
    }
    return out;
}

json to_json(const Neighborhood& nb) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["horizon"] = nb.horizon;
    j["config"] = nb.config_echo;
    j["prices"] = {{"pi_s", nb.prices.pi_s},
                   {"pi_p", nb.prices.pi_p},
                   {"pi_retail", nb.prices.pi_retail},
                   {"pi_lmp", nb.prices.pi_lmp}};
    j["supply"] = {{"P", nb.supply.supply}};
    if (nb.supply.has_hourly_bids()) j["supply"]["hourly_bids"] = nb.supply.hourly_bids;
    json edges = json::array();
    for (const auto& [a, b] : nb.graph.edges) edges.push_back(json::array({a, b}));
    j["graph"] = {{"nodes", nb.graph.node_count}, {"edges", edges}};
    json residences = json::array();
    for (const auto& res : nb.residences) {
        json jr;
        jr["cooperative"] = res.cooperative;
        jr["uncontrollable"] = res.uncontrollable;
        json appliances = json::array();
        for (std::size_t i = 0; i < res.appliances.size(); ++i) {
            const auto& spec = res.appliances[i];
            json ja;
            ja["name"] = spec.name;
            json modes = json::array();
            for (const auto& m : spec.modes) {
                json jm;
                jm["deadline"] = m.deadline;
                json profiles = json::array();
                for (const auto& p : m.profiles) profiles.push_back(p.samples);
                jm["profiles"] = profiles;
                modes.push_back(jm);
            }
            ja["modes"] = modes;
            ja["request_p"] = res.requests[i].p;
            ja["gamma"] = res.requests[i].gamma;
            appliances.push_back(ja);
        }
        jr["appliances"] = appliances;
        residences.push_back(jr);
    }
    j["residences"] = residences;
    return j;
}

Neighborhood from_json(const json& j) {
    const auto& version = field(j, "schema_version", "document");
    if (!version.is_number_integer() || version.get<int>() != kSchemaVersion)
        throw ParseError(fmt::format("scenario: unsupported schema version '{}'", version.dump()));

    Neighborhood nb;
    nb.horizon = field(j, "horizon", "document").get<int>();
    nb.config_echo = field(j, "config", "document").get<std::string>();

    const auto& prices = field(j, "prices", "document");
    nb.prices.pi_s = number_list(field(prices, "pi_s", "prices"), "prices.pi_s");
    nb.prices.pi_p = number_list(field(prices, "pi_p", "prices"), "prices.pi_p");
    nb.prices.pi_retail = number_list(field(prices, "pi_retail", "prices"), "prices.pi_retail");
    nb.prices.pi_lmp = number_list(field(prices, "pi_lmp", "prices"), "prices.pi_lmp");

    const auto& supply = field(j, "supply", "document");
    nb.supply.supply = number_list(field(supply, "P", "supply"), "supply.P");
    if (supply.contains("hourly_bids"))
        nb.supply.hourly_bids = number_list(supply["hourly_bids"], "supply.hourly_bids");

    const auto& graph = field(j, "graph", "document");
    nb.graph.node_count = field(graph, "nodes", "graph").get<int>();
    for (const auto& e : field(graph, "edges", "graph")) {
        if (!e.is_array() || e.size() != 2)
            throw ParseError("scenario: graph.edges entries must be index pairs");
        nb.graph.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }

    const auto& residences = field(j, "residences", "document");
    if (!residences.is_array()) throw ParseError("scenario: residences must be an array");
    for (std::size_t h = 0; h < residences.size(); ++h) {
        const std::string where = fmt::format("residences[{}]", h);
        const auto& jr = residences[h];
        Residence res;
        res.cooperative = field(jr, "cooperative", where).get<bool>();
        res.uncontrollable = number_list(field(jr, "uncontrollable", where), where + ".uncontrollable");
        const auto& appliances = field(jr, "appliances", where);
        for (std::size_t i = 0; i < appliances.size(); ++i) {
            const std::string aw = fmt::format("{}.appliances[{}]", where, i);
            const auto& ja = appliances[i];
            ApplianceSpec spec;
            spec.name = field(ja, "name", aw).get<std::string>();
            for (const auto& jm : field(ja, "modes", aw)) {
                OperationMode mode;
                mode.deadline = field(jm, "deadline", aw + ".modes").get<int>();
                for (const auto& jp : field(jm, "profiles", aw + ".modes"))
                    mode.profiles.push_back(LoadProfile{number_list(jp, aw + ".profiles")});
                spec.modes.push_back(std::move(mode));
            }
            RequestModel req;
            req.p = number_list(field(ja, "request_p", aw), aw + ".request_p");
            for (const auto& row : field(ja, "gamma", aw))
                req.gamma.push_back(number_list(row, aw + ".gamma"));
            res.appliances.push_back(std::move(spec));
            res.requests.push_back(std::move(req));
        }
        nb.residences.push_back(std::move(res));
    }

    try {
        nb.validate();
    } catch (const InputError& e) {
        throw ParseError(fmt::format("scenario: invalid content: {}", e.what()));
    }
    return nb;
}

}  // namespace

Neighborhood load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("scenario: cannot open '{}'", path));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(fmt::format("scenario: '{}': {}", path, e.what()));
    }
    return from_json(j);
}

void save_scenario(const Neighborhood& nb, const std::string& path) {
    nb.validate();
    std::ofstream out(path);
    if (!out) throw InputError(fmt::format("scenario: cannot write '{}'", path));
    out << to_json(nb).dump(1) << '\n';
}

}  // namespace cohem
