// Command line front end. Every analysis subcommand reads a network
// description, runs one experiment driver, and writes <name>.csv plus
// <name>.meta.json into the output directory.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "spinnet/experiments.hpp"
#include "spinnet/fairness.hpp"
#include "spinnet/productform.hpp"
#include "spinnet/types.hpp"

namespace {

struct CliOptions {
    std::string config;
    std::string out_dir = "out";
    std::string format = "csv";
    std::string source = "spinning";
    std::uint64_t seed = 1;
    std::vector<double> n;
    std::vector<int> h_list;
    std::vector<int> c_list;
    double epsilon = 0.1;
    double horizon = 20000.0;
    int replicas = 1;
    int samples = 4000;
};

void print_pretty(const spinnet::ResultTable& table) {
    const auto text = [](const spinnet::Cell& cell) {
        if (const auto* s = std::get_if<std::string>(&cell)) return *s;
        char buffer[40];
        if (const auto* d = std::get_if<double>(&cell))
            std::snprintf(buffer, sizeof buffer, "%.10g", *d);
        else
            std::snprintf(buffer, sizeof buffer, "%lld",
                          static_cast<long long>(std::get<std::int64_t>(cell)));
        return std::string(buffer);
    };
    std::vector<std::size_t> widths(table.columns.size(), 0);
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        widths[c] = table.columns[c].size();
    for (const auto& row : table.rows)
        for (std::size_t c = 0; c < row.size(); ++c)
            widths[c] = std::max(widths[c], text(row[c]).size());
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        std::printf("%s%-*s", c ? "  " : "", static_cast<int>(widths[c]),
                    table.columns[c].c_str());
    std::printf("\n");
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c)
            std::printf("%s%-*s", c ? "  " : "", static_cast<int>(widths[c]),
                        text(row[c]).c_str());
        std::printf("\n");
    }
}

spinnet::ExperimentSpec build_spec(const CliOptions& opt) {
    spinnet::ExperimentSpec spec;
    spec.model = spinnet::load_network(opt.config);
    spec.seed = opt.seed;
    spec.epsilon = opt.epsilon;
    spec.horizon = opt.horizon;
    spec.replicas = opt.replicas;
    spec.samples = opt.samples;
    if (!opt.n.empty()) {
        spec.n = Eigen::Map<const spinnet::Vec>(opt.n.data(),
                                                static_cast<int>(opt.n.size()));
    } else {
        spec.n = spinnet::Vec::Ones(spec.model.topology.route_count());
    }
    if (!opt.h_list.empty()) spec.h_list = opt.h_list;
    if (!opt.c_list.empty()) spec.c_list = opt.c_list;
    if (opt.source == "spinning") {
        spec.source = spinnet::AllocationSource::Spinning;
    } else if (opt.source == "pf") {
        spec.source = spinnet::AllocationSource::ProportionalFairness;
    } else {
        throw spinnet::ConfigError("unknown allocation source '" + opt.source + "'");
    }
    return spec;
}

int run_validate(const CliOptions& opt) {
    const spinnet::NetworkModel model = spinnet::load_network(opt.config);
    const auto& topo = model.topology;
    std::printf("queues: %d, routes: %d\n", topo.queue_count(), topo.route_count());
    for (int i = 0; i < topo.route_count(); ++i) {
        std::printf("  route %s:", model.route_names[static_cast<std::size_t>(i)].c_str());
        for (int j : topo.routes[static_cast<std::size_t>(i)])
            std::printf(" %s", model.queue_names[static_cast<std::size_t>(j)].c_str());
        std::printf("\n");
    }
    const auto report = spinnet::stability_report(topo, model.traffic);
    for (int j = 0; j < topo.queue_count(); ++j)
        std::printf("  queue %s: capacity %g, load %g\n",
                    model.queue_names[static_cast<std::size_t>(j)].c_str(),
                    topo.capacities[j], report.loads[j]);
    std::printf("stable: %s\n", report.stable ? "yes" : "no");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"exact and asymptotic analysis of bandwidth sharing networks"};
    app.require_subcommand(1);
    CliOptions opt;

    const auto add_common = [&](CLI::App* cmd, bool needs_counts, bool needs_sim) {
        cmd->add_option("--config", opt.config, "network description (JSON)")
            ->required();
        cmd->add_option("--out", opt.out_dir, "output directory");
        cmd->add_option("--format", opt.format, "csv or pretty")
            ->check(CLI::IsMember({"csv", "pretty"}));
        if (needs_counts)
            cmd->add_option("--n", opt.n, "document counts, one value per route");
        if (needs_sim) {
            cmd->add_option("--seed", opt.seed, "root seed");
            cmd->add_option("--horizon", opt.horizon, "simulated time per run");
        }
        return cmd;
    };

    auto* validate = app.add_subcommand("validate", "check a network description");
    validate->add_option("--config", opt.config, "network description (JSON)")->required();

    auto* exact = add_common(app.add_subcommand("exact", "normalizing constant, rates, residuals"),
                             true, false);
    auto* pf = add_common(app.add_subcommand("pf", "proportionally fair rates and prices"),
                          true, false);
    auto* rates = add_common(app.add_subcommand("rates", "rate functions and their minimizers"),
                             true, false);
    auto* converge = add_common(
        app.add_subcommand("converge", "spinning rates against fair rates along a scaling"),
        true, false);
    converge->set_help_flag("--help", "print help");
    converge->add_option("--h", opt.h_list, "scaling levels");
    auto* collapse =
        add_common(app.add_subcommand("collapse", "conditioned packet counts near the manifold"),
                   true, false);
    collapse->set_help_flag("--help", "print help");
    collapse->add_option("--h", opt.h_list, "scaling levels");
    collapse->add_option("--epsilon", opt.epsilon, "distance threshold");
    collapse->add_option("--seed", opt.seed, "root seed");
    collapse->add_option("--samples", opt.samples, "samples per level in sampling mode");
    auto* scaling = add_common(
        app.add_subcommand("scaling", "packet level simulation against the product form"),
        false, true);
    scaling->add_option("--c", opt.c_list, "packet rate scales");
    auto* insensitivity = add_common(
        app.add_subcommand("insensitivity", "document size distributions against the product form"),
        false, true);
    auto* simulate = add_common(app.add_subcommand("simulate", "flow level sample paths"),
                                false, true);
    simulate->add_option("--replicas", opt.replicas, "independent runs");
    simulate->add_option("--source", opt.source, "spinning or pf")
        ->check(CLI::IsMember({"spinning", "pf"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (validate->parsed()) return run_validate(opt);

        const spinnet::ExperimentSpec spec = build_spec(opt);
        std::string name;
        spinnet::ResultTable table;
        if (exact->parsed()) {
            name = "exact";
            table = spinnet::run_exact(spec);
        } else if (pf->parsed()) {
            name = "pf";
            table = spinnet::run_pf(spec);
        } else if (rates->parsed()) {
            name = "rates";
            table = spinnet::run_rates(spec);
        } else if (converge->parsed()) {
            name = "converge";
            table = spinnet::run_converge(spec);
        } else if (collapse->parsed()) {
            name = "collapse";
            table = spinnet::run_collapse(spec);
        } else if (scaling->parsed()) {
            name = "scaling";
            table = spinnet::run_scaling(spec);
        } else if (insensitivity->parsed()) {
            name = "insensitivity";
            table = spinnet::run_insensitivity(spec);
        } else if (simulate->parsed()) {
            name = "simulate";
            table = spinnet::run_simulate(spec);
        }
        if (opt.format == "pretty") {
            print_pretty(table);
        } else {
            spinnet::write_outputs(table, spec, name, opt.out_dir, name);
            std::printf("%s: %zu rows -> %s/%s.csv\n", name.c_str(), table.rows.size(),
                        opt.out_dir.c_str(), name.c_str());
        }
        return 0;
    } catch (const spinnet::ConfigError& err) {
        std::fprintf(stderr, "configuration error: %s\n", err.what());
        return 2;
    } catch (const spinnet::NumericError& err) {
        std::fprintf(stderr, "numeric failure: %s\n", err.what());
        return 3;
    } catch (const spinnet::ResourceError& err) {
        std::fprintf(stderr, "resource limit: %s\n", err.what());
        return 4;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    }
}
