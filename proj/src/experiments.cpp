#include "spinnet/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "spinnet/fairness.hpp"
#include "spinnet/productform.hpp"
#include "spinnet/rng.hpp"

namespace spinnet {

namespace {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
    return CounterRng(root).split(a).split(b).next_u64();
}

void require_counts(const ExperimentSpec& spec) {
    if (spec.n.size() != spec.model.topology.route_count())
        throw ConfigError("doc counts must have one entry per route");
    if ((spec.n.array() < 0.0).any()) throw ConfigError("doc counts must be nonnegative");
}

VecI floor_counts(const Vec& n, int scale = 1) {
    VecI out(n.size());
    for (int i = 0; i < n.size(); ++i)
        out[i] = static_cast<int>(std::floor(scale * n[i] + 1e-12));
    return out;
}

std::string incidence_label(const NetworkModel& model, int k) {
    const auto [j, i] = model.topology.incidences[k];
    return model.queue_names[static_cast<std::size_t>(j)] + ":" +
           model.route_names[static_cast<std::size_t>(i)];
}

void add_row(ResultTable& table, std::vector<Cell> cells) {
    table.rows.push_back(std::move(cells));
}

void check_increasing(const std::vector<int>& list, const char* what) {
    if (list.empty()) throw ConfigError(std::string(what) + " list must be nonempty");
    for (std::size_t k = 0; k < list.size(); ++k) {
        if (list[k] <= 0) throw ConfigError(std::string(what) + " values must be positive");
        if (k > 0 && list[k] <= list[k - 1])
            throw ConfigError(std::string(what) + " values must be strictly increasing");
    }
}

SimConfig base_config(const ExperimentSpec& spec, std::uint64_t purpose,
                      std::uint64_t index) {
    SimConfig config;
    config.horizon = spec.horizon;
    config.seed = derive_seed(spec.seed, purpose, index);
    return config;
}

// Exact doc-count pmf over a box, backed by one normalizing table.
struct ExactDocPmf {
    const Topology* topo;
    const TrafficProfile* traffic;
    NormalizingTable table;

    ExactDocPmf(const Topology& t, const TrafficProfile& tr, const VecI& box)
        : topo(&t), traffic(&tr), table(build_normalizing_table(t, box)) {}

    double operator()(const VecI& s) const { return doc_pmf(*topo, *traffic, s, &table); }
};

std::function<double(const VecI&)> pmf_of(const Trajectory& trajectory) {
    return [&trajectory](const VecI& s) {
        std::vector<int> key(s.data(), s.data() + s.size());
        const auto it = trajectory.pmf.find(key);
        return it != trajectory.pmf.end() ? it->second : 0.0;
    };
}

}  // namespace

// ---- model ingestion ------------------------------------------------------

NetworkModel parse_network(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& err) {
        throw ConfigError(std::string("network description: ") + err.what());
    }
    if (!doc.is_object() || !doc.contains("queues") || !doc.contains("routes"))
        throw ConfigError("network description needs 'queues' and 'routes'");

    NetworkModel model;
    model.source_text = json_text;
    std::map<std::string, int> queue_index;
    std::vector<double> capacities;
    for (const auto& q : doc["queues"]) {
        if (!q.contains("name") || !q.contains("capacity"))
            throw ConfigError("every queue needs 'name' and 'capacity'");
        const std::string name = q["name"].get<std::string>();
        if (!queue_index.emplace(name, static_cast<int>(capacities.size())).second)
            throw ConfigError("duplicate queue name '" + name + "'");
        model.queue_names.push_back(name);
        capacities.push_back(q["capacity"].get<double>());
    }

    std::map<std::string, int> route_index;
    std::vector<std::vector<int>> routes;
    for (const auto& r : doc["routes"]) {
        if (!r.contains("name") || !r.contains("queues"))
            throw ConfigError("every route needs 'name' and 'queues'");
        const std::string name = r["name"].get<std::string>();
        if (!route_index.emplace(name, static_cast<int>(routes.size())).second)
            throw ConfigError("duplicate route name '" + name + "'");
        model.route_names.push_back(name);
        std::vector<int> path;
        for (const auto& qn : r["queues"]) {
            const auto it = queue_index.find(qn.get<std::string>());
            if (it == queue_index.end())
                throw ConfigError("route '" + name + "' uses unknown queue '" +
                                  qn.get<std::string>() + "'");
            path.push_back(it->second);
        }
        routes.push_back(std::move(path));
    }

    Vec cap_vec = Eigen::Map<Vec>(capacities.data(), static_cast<int>(capacities.size()));
    model.topology = make_topology(cap_vec, routes);

    const int route_count = model.topology.route_count();
    Vec nu = Vec::Zero(route_count);
    Vec mu = Vec::Ones(route_count);
    std::vector<SizeDist> dists(static_cast<std::size_t>(route_count));
    if (doc.contains("traffic")) {
        for (const auto& t : doc["traffic"]) {
            if (!t.contains("route"))
                throw ConfigError("every traffic entry needs 'route'");
            const std::string name = t["route"].get<std::string>();
            const auto it = route_index.find(name);
            if (it == route_index.end())
                throw ConfigError("traffic references unknown route '" + name + "'");
            const int i = it->second;
            if (t.contains("nu")) nu[i] = t["nu"].get<double>();
            if (t.contains("mu")) mu[i] = t["mu"].get<double>();
            if (t.contains("size_dist")) {
                const auto& sd = t["size_dist"];
                const std::string kind = sd.value("kind", "exponential");
                SizeDist dist;
                if (kind == "exponential") {
                    dist.kind = SizeDist::Kind::Exponential;
                } else if (kind == "deterministic") {
                    dist.kind = SizeDist::Kind::Deterministic;
                } else if (kind == "geometric") {
                    dist.kind = SizeDist::Kind::GeometricScaled;
                    dist.geometric_scale = sd.value("scale", 1);
                } else if (kind == "hyperexponential") {
                    dist.kind = SizeDist::Kind::Hyperexponential;
                    dist.weights = sd.value("weights", std::vector<double>{});
                    dist.rate_scale = sd.value("rate_scale", std::vector<double>{});
                } else {
                    throw ConfigError("unknown size_dist kind '" + kind + "'");
                }
                dists[static_cast<std::size_t>(i)] = dist;
            }
        }
    }
    model.traffic = make_traffic(nu, mu, dists);
    return model;
}

NetworkModel load_network(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open network description '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_network(buffer.str());
}

// ---- table emission -------------------------------------------------------

namespace {

std::string render_cell(const Cell& cell) {
    if (const auto* text = std::get_if<std::string>(&cell)) {
        if (text->find_first_of(",\"\r\n") == std::string::npos) return *text;
        std::string quoted = "\"";
        for (char ch : *text) {
            if (ch == '"') quoted += '"';
            quoted += ch;
        }
        quoted += '"';
        return quoted;
    }
    char buffer[40];
    if (const auto* real = std::get_if<double>(&cell)) {
        std::snprintf(buffer, sizeof buffer, "%.17g", *real);
    } else {
        std::snprintf(buffer, sizeof buffer, "%lld",
                      static_cast<long long>(std::get<std::int64_t>(cell)));
    }
    return buffer;
}

}  // namespace

std::string to_csv(const ResultTable& table) {
    std::string out;
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        if (c > 0) out += ',';
        out += render_cell(table.columns[c]);
    }
    out += "\r\n";
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) out += ',';
            out += render_cell(row[c]);
        }
        out += "\r\n";
    }
    return out;
}

std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t hash = 14695981039346656037ull;
    for (unsigned char ch : text) {
        hash ^= ch;
        hash *= 1099511628211ull;
    }
    return hash;
}

void write_outputs(const ResultTable& table, const ExperimentSpec& spec,
                   const std::string& experiment, const std::string& out_dir,
                   const std::string& stem) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    {
        std::ofstream csv(dir / (stem + ".csv"), std::ios::binary);
        csv << to_csv(table);
    }
    char hash_hex[20];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(spec.model.source_text)));
    json meta;
    meta["build"] = kBuildId;
    meta["experiment"] = experiment;
    meta["config_hash"] = hash_hex;
    meta["seed"] = spec.seed;
    meta["params"]["n"] = std::vector<double>(spec.n.data(), spec.n.data() + spec.n.size());
    meta["params"]["h"] = spec.h_list;
    meta["params"]["c"] = spec.c_list;
    meta["params"]["epsilon"] = spec.epsilon;
    meta["params"]["horizon"] = spec.horizon;
    meta["params"]["replicas"] = spec.replicas;
    meta["params"]["samples"] = spec.samples;
    meta["params"]["source"] =
        spec.source == AllocationSource::Spinning ? "spinning" : "pf";
    std::ofstream out(dir / (stem + ".meta.json"), std::ios::binary);
    out << meta.dump(2) << "\n";
}

// ---- drivers --------------------------------------------------------------

ResultTable run_exact(const ExperimentSpec& spec) {
    require_counts(spec);
    const Topology& topo = spec.model.topology;
    const VecI n = floor_counts(spec.n);

    ResultTable table;
    table.columns = {"quantity", "index", "value"};
    const NormalizingTable norm = build_normalizing_table(topo, n.cwiseMax(1));
    add_row(table, {std::string("normalizer"), std::string(""),
                    std::exp(norm.log_value(n))});

    const Allocation sn = spinning_allocation(topo, n, norm);
    for (int i = 0; i < topo.route_count(); ++i)
        add_row(table, {std::string("spinning_rate"),
                        spec.model.route_names[static_cast<std::size_t>(i)], sn.lambda[i]});

    const FeasibilityReport feas = check_feasibility(topo, sn);
    for (int j = 0; j < topo.queue_count(); ++j)
        add_row(table, {std::string("slack"),
                        spec.model.queue_names[static_cast<std::size_t>(j)],
                        feas.slacks[j]});

    const StabilityReport stab = stability_report(topo, spec.model.traffic);
    for (int j = 0; j < topo.queue_count(); ++j)
        add_row(table, {std::string("load"),
                        spec.model.queue_names[static_cast<std::size_t>(j)],
                        stab.loads[j]});
    if (stab.stable) {
        add_row(table, {std::string("open_normalizer"), std::string(""),
                        open_normalizer(topo, spec.model.traffic)});
        add_row(table, {std::string("doc_pmf"), std::string(""),
                        doc_pmf(topo, spec.model.traffic, n, &norm)});
    }

    const Vec mean = conditional_mean_packets(topo, n);
    const Vec little = little_law_residuals(topo, n, &norm);
    for (int k = 0; k < topo.incidence_count(); ++k) {
        add_row(table, {std::string("mean_packets"), incidence_label(spec.model, k), mean[k]});
        add_row(table,
                {std::string("little_residual"), incidence_label(spec.model, k), little[k]});
    }
    return table;
}

ResultTable run_pf(const ExperimentSpec& spec) {
    require_counts(spec);
    const Topology& topo = spec.model.topology;
    const PFSolution pf = solve_pf(topo, spec.n);

    ResultTable table;
    table.columns = {"quantity", "index", "value"};
    for (int i = 0; i < topo.route_count(); ++i)
        add_row(table, {std::string("pf_rate"),
                        spec.model.route_names[static_cast<std::size_t>(i)], pf.lambda[i]});
    for (int j = 0; j < topo.queue_count(); ++j)
        add_row(table, {std::string("price"),
                        spec.model.queue_names[static_cast<std::size_t>(j)],
                        pf.queue_prices[j]});
    add_row(table, {std::string("objective"), std::string(""), pf.objective});
    add_row(table, {std::string("kkt_residual"), std::string(""), pf.kkt_residual});
    add_row(table, {std::string("iterations"), std::string(""),
                    static_cast<std::int64_t>(pf.iterations)});
    return table;
}

ResultTable run_rates(const ExperimentSpec& spec) {
    require_counts(spec);
    const Topology& topo = spec.model.topology;
    const Vec rho = spec.model.traffic.rho();
    for (int i = 0; i < topo.route_count(); ++i)
        if (spec.n[i] > 0.0 && rho[i] <= 0.0)
            throw ConfigError("rates need positive traffic on every populated route");

    const PFSolution pf = solve_pf(topo, spec.n);
    const double dual = doc_count_rate_dual(topo, rho, spec.n, &pf);
    const PrimalRate primal = doc_count_rate_primal(topo, rho, spec.n, &pf);
    const KLDecomposition kl = kl_decompose(topo, rho, primal.minimizer);

    ResultTable table;
    table.columns = {"quantity", "index", "value"};
    add_row(table, {std::string("rate_dual"), std::string(""), dual});
    add_row(table, {std::string("rate_primal"), std::string(""), primal.value});
    add_row(table, {std::string("duality_gap"), std::string(""),
                    std::abs(primal.value - dual)});
    for (int k = 0; k < topo.incidence_count(); ++k)
        add_row(table,
                {std::string("minimizer"), incidence_label(spec.model, k), primal.minimizer[k]});
    for (int j = 0; j < topo.queue_count(); ++j) {
        add_row(table, {std::string("kl_term"),
                        spec.model.queue_names[static_cast<std::size_t>(j)], kl.kl_terms[j]});
        add_row(table, {std::string("kl_offset"),
                        spec.model.queue_names[static_cast<std::size_t>(j)],
                        kl.offset_terms[j]});
    }
    add_row(table, {std::string("kl_total_error"), std::string(""),
                    std::abs(kl.total() - packet_state_rate(topo, rho, primal.minimizer))});
    for (int j : saturated_queues(topo, pf))
        add_row(table, {std::string("saturated"),
                        spec.model.queue_names[static_cast<std::size_t>(j)],
                        static_cast<std::int64_t>(1)});
    return table;
}

ResultTable run_converge(const ExperimentSpec& spec) {
    require_counts(spec);
    check_increasing(spec.h_list, "h");
    const Topology& topo = spec.model.topology;
    const int max_h = spec.h_list.back();

    VecI n_max = floor_counts(spec.n, max_h);
    NormalizingTable norm = [&] {
        try {
            return build_normalizing_table(topo, n_max);
        } catch (const TableTooLargeError&) {
            int feasible = 0;
            for (int h = max_h; h >= 1; --h) {
                double entries = 1.0;
                const VecI nh = floor_counts(spec.n, h);
                for (int i = 0; i < nh.size(); ++i)
                    entries *= static_cast<double>(nh[i] + 1);
                if (entries <= static_cast<double>(kDefaultTableCap)) {
                    feasible = h;
                    break;
                }
            }
            throw TableTooLargeError("table for h=" + std::to_string(max_h) +
                                     " exceeds the cap; largest feasible h is " +
                                     std::to_string(feasible));
        }
    }();

    const PFSolution pf = solve_pf(topo, spec.n);

    ResultTable table;
    table.columns = {"h"};
    for (const auto& name : spec.model.route_names) table.columns.push_back("sn_" + name);
    for (const auto& name : spec.model.route_names) table.columns.push_back("pf_" + name);
    table.columns.push_back("sup_error");

    for (int h : spec.h_list) {
        const VecI nh = floor_counts(spec.n, h);
        const Allocation sn = spinning_allocation(topo, nh, norm);
        std::vector<Cell> row{static_cast<std::int64_t>(h)};
        for (int i = 0; i < topo.route_count(); ++i) row.push_back(sn.lambda[i]);
        for (int i = 0; i < topo.route_count(); ++i) row.push_back(pf.lambda[i]);
        row.push_back((sn.lambda - pf.lambda).cwiseAbs().maxCoeff());
        add_row(table, std::move(row));
    }
    return table;
}

ResultTable run_collapse(const ExperimentSpec& spec) {
    require_counts(spec);
    check_increasing(spec.h_list, "h");
    const Topology& topo = spec.model.topology;
    constexpr std::int64_t kExactCap = 200000;

    ResultTable table;
    table.columns = {"h", "mode", "exceed_prob"};
    for (int k = 0; k < topo.incidence_count(); ++k)
        table.columns.push_back("gap_" + incidence_label(spec.model, k));
    table.columns.push_back("gap_max");

    for (int h : spec.h_list) {
        const VecI nh = floor_counts(spec.n, h);
        const Vec nh_scaled = nh.cast<double>() / static_cast<double>(h);
        const PFSolution pf = solve_pf(topo, nh_scaled);

        double exceed = 0.0;
        Vec gap = Vec::Zero(topo.incidence_count());
        std::string mode;
        const auto tally = [&](const VecI& m, double weight) {
            const Vec m_scaled = m.cast<double>() / static_cast<double>(h);
            const double dist = manifold_distance(topo, nh_scaled, m_scaled, &pf);
            if (dist >= spec.epsilon) exceed += weight;
            const VecI mq = queue_totals(topo, m);
            for (int k = 0; k < topo.incidence_count(); ++k) {
                const auto [j, i] = topo.incidences[k];
                gap[k] += weight *
                          std::abs(static_cast<double>(m[k]) * topo.capacities[j] -
                                   static_cast<double>(mq[j]) * pf.lambda[i]) /
                          static_cast<double>(h);
            }
        };

        if (state_space_size(topo, nh) <= static_cast<double>(kExactCap)) {
            mode = "exact";
            const double log_bn = log_normalizing_constant_direct(topo, nh);
            for_each_state(topo, nh, [&](const VecI& m) {
                tally(m, std::exp(log_closed_weight(topo, m) - log_bn));
            });
        } else {
            mode = "sample";
            const auto samples = sample_conditional_states(
                topo, nh, spec.samples,
                derive_seed(spec.seed, 0xC0 + static_cast<std::uint64_t>(h)));
            const double weight = 1.0 / static_cast<double>(samples.size());
            for (const VecI& m : samples) tally(m, weight);
        }

        std::vector<Cell> row{static_cast<std::int64_t>(h), mode, exceed};
        for (int k = 0; k < topo.incidence_count(); ++k) row.push_back(gap[k]);
        row.push_back(gap.maxCoeff());
        add_row(table, std::move(row));
    }
    return table;
}

ResultTable run_scaling(const ExperimentSpec& spec) {
    check_increasing(spec.c_list, "c");
    const Topology& topo = spec.model.topology;
    const TrafficProfile& traffic = spec.model.traffic;
    const VecI box = VecI::Constant(topo.route_count(), kDefaultBox);
    const ExactDocPmf exact(topo, traffic, box);

    ResultTable table;
    table.columns = {"kind", "c", "tv_exact_upper", "tv_exact_lower", "tv_flow_upper",
                     "post_events"};
    for (const auto& name : spec.model.route_names)
        table.columns.push_back("sojourn_" + name);

    SimConfig flow_config = base_config(spec, 0xF1, 0);
    const Trajectory flow = simulate_flow_level(topo, traffic, AllocationSource::Spinning,
                                                flow_config);
    const auto flow_pmf = pmf_of(flow);

    const auto sojourns = [&](const Trajectory& t) {
        std::vector<Cell> cells;
        for (int i = 0; i < topo.route_count(); ++i) {
            const auto departed = t.departures[static_cast<std::size_t>(i)];
            cells.push_back(departed > 0 ? t.time_average[i] * t.post_warmup_time /
                                               static_cast<double>(departed)
                                         : 0.0);
        }
        return cells;
    };

    {
        const TVReport tv = empirical_tv_distance(flow, exact, box);
        std::vector<Cell> row{std::string("flow"), static_cast<std::int64_t>(0),
                              tv.upper_bound(), tv.lower_bound(), 0.0,
                              flow.post_warmup_events};
        for (Cell& cell : sojourns(flow)) row.push_back(cell);
        add_row(table, std::move(row));
    }

    for (std::size_t idx = 0; idx < spec.c_list.size(); ++idx) {
        const int c = spec.c_list[idx];
        SimConfig config = base_config(spec, 0xF2, idx);
        config.scale_c = c;
        const Trajectory packet = simulate_open_packet(topo, traffic, config);
        const TVReport tv = empirical_tv_distance(packet, exact, box);
        const TVReport tv_flow = empirical_tv_distance(packet, flow_pmf, box);
        std::vector<Cell> row{std::string("packet"), static_cast<std::int64_t>(c),
                              tv.upper_bound(), tv.lower_bound(), tv_flow.upper_bound(),
                              packet.post_warmup_events};
        for (Cell& cell : sojourns(packet)) row.push_back(cell);
        add_row(table, std::move(row));
    }
    return table;
}

ResultTable run_insensitivity(const ExperimentSpec& spec) {
    const Topology& topo = spec.model.topology;
    const TrafficProfile& traffic = spec.model.traffic;
    const VecI box = VecI::Constant(topo.route_count(), kDefaultBox);
    const ExactDocPmf exact(topo, traffic, box);

    ResultTable table;
    table.columns = {"size_dist", "tv_upper", "tv_lower", "post_events"};

    const auto run_variant = [&](const std::string& label, const TrafficProfile& variant,
                                 std::uint64_t tag) {
        SimConfig config = base_config(spec, 0x15, tag);
        const Trajectory t = simulate_flow_level_general_sizes(
            topo, variant, AllocationSource::Spinning, config);
        const TVReport tv = empirical_tv_distance(t, exact, box);
        add_row(table, {label, tv.upper_bound(), tv.lower_bound(), t.post_warmup_events});
    };

    run_variant("exponential", traffic, 1);

    {
        TrafficProfile variant = traffic;
        for (auto& dist : variant.size_dist) dist = SizeDist{SizeDist::Kind::Deterministic};
        run_variant("deterministic", variant, 2);
    }
    {
        TrafficProfile variant = traffic;
        SizeDist hyper;
        hyper.kind = SizeDist::Kind::Hyperexponential;
        hyper.weights = {0.5, 0.5};
        hyper.rate_scale = {2.0, 2.0 / 3.0};
        for (auto& dist : variant.size_dist) dist = hyper;
        run_variant("hyperexponential", variant, 3);
    }
    {
        TrafficProfile control = make_traffic(traffic.nu, traffic.mu / 2.0);
        run_variant("exponential_halved_mu", control, 4);
    }
    return table;
}

ResultTable run_simulate(const ExperimentSpec& spec) {
    if (spec.replicas < 1) throw ConfigError("replicas must be positive");
    const Topology& topo = spec.model.topology;

    ResultTable table;
    table.columns = {"replica", "seed", "events", "post_events", "outside_mass"};
    for (const auto& name : spec.model.route_names)
        table.columns.push_back("mean_" + name);
    for (const auto& name : spec.model.route_names)
        table.columns.push_back("departures_" + name);

    for (int r = 0; r < spec.replicas; ++r) {
        SimConfig config = base_config(spec, 0x51, static_cast<std::uint64_t>(r));
        const Trajectory t =
            simulate_flow_level(topo, spec.model.traffic, spec.source, config);
        std::vector<Cell> row{static_cast<std::int64_t>(r),
                              std::to_string(config.seed), t.event_count,
                              t.post_warmup_events, t.outside_mass};
        for (int i = 0; i < topo.route_count(); ++i) row.push_back(t.time_average[i]);
        for (int i = 0; i < topo.route_count(); ++i)
            row.push_back(t.departures[static_cast<std::size_t>(i)]);
        add_row(table, std::move(row));
    }
    return table;
}

}  // namespace spinnet
