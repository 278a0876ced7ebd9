#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "spinnet/experiments.hpp"

using namespace spinnet;

namespace {

const char* kLinearJson = R"({
  "queues": [
    {"name": "left", "capacity": 1.0},
    {"name": "right", "capacity": 1.0}
  ],
  "routes": [
    {"name": "through", "queues": ["left", "right"]},
    {"name": "left-only", "queues": ["left"]},
    {"name": "right-only", "queues": ["right"]}
  ],
  "traffic": [
    {"route": "through", "nu": 0.15, "mu": 1.0},
    {"route": "left-only", "nu": 0.25, "mu": 1.0},
    {"route": "right-only", "nu": 0.25, "mu": 1.0}
  ]
})";

ExperimentSpec linear_spec() {
    ExperimentSpec spec;
    spec.model = parse_network(kLinearJson);
    spec.n = Vec::Ones(3);
    return spec;
}

double value_of(const ResultTable& table, const std::string& quantity,
                const std::string& index) {
    for (const auto& row : table.rows) {
        if (std::get<std::string>(row[0]) == quantity &&
            std::get<std::string>(row[1]) == index)
            return std::get<double>(row[2]);
    }
    FAIL("missing row ", quantity, "/", index);
    return 0.0;
}

int count_rows(const ResultTable& table, const std::string& quantity) {
    int found = 0;
    for (const auto& row : table.rows)
        found += std::get<std::string>(row[0]) == quantity;
    return found;
}

int column_of(const ResultTable& table, const std::string& name) {
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        if (table.columns[c] == name) return static_cast<int>(c);
    FAIL("missing column ", name);
    return -1;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("network parsing") {
    const NetworkModel model = parse_network(kLinearJson);
    CHECK(model.queue_names == std::vector<std::string>{"left", "right"});
    CHECK(model.route_names == std::vector<std::string>{"through", "left-only", "right-only"});
    CHECK(model.topology.capacities.size() == 2);
    CHECK(model.topology.capacities[0] == 1.0);
    REQUIRE(model.topology.routes.size() == 3);
    CHECK(model.topology.routes[0] == std::vector<int>{0, 1});
    CHECK(model.topology.routes[1] == std::vector<int>{0});
    CHECK(model.traffic.nu[0] == 0.15);
    CHECK(model.traffic.nu[2] == 0.25);
    CHECK(model.traffic.mu[1] == 1.0);
    CHECK(model.source_text == kLinearJson);

    // traffic entries are optional and default to no arrivals
    const NetworkModel quiet = parse_network(R"({
      "queues": [{"name": "q", "capacity": 2.0}],
      "routes": [{"name": "r", "queues": ["q"]}]
    })");
    CHECK(quiet.traffic.nu[0] == 0.0);
    CHECK(quiet.traffic.mu[0] == 1.0);
    CHECK(quiet.traffic.size_dist[0].kind == SizeDist::Kind::Exponential);

    CHECK_THROWS_AS(parse_network("not json"), ConfigError);
    CHECK_THROWS_AS(parse_network(R"({"queues": []})"), ConfigError);
    CHECK_THROWS_AS(parse_network(R"({
      "queues": [{"name": "q", "capacity": 1.0}, {"name": "q", "capacity": 2.0}],
      "routes": [{"name": "r", "queues": ["q"]}]
    })"),
                    ConfigError);
    CHECK_THROWS_AS(parse_network(R"({
      "queues": [{"name": "q", "capacity": 1.0}],
      "routes": [{"name": "r", "queues": ["missing"]}]
    })"),
                    ConfigError);
    CHECK_THROWS_AS(parse_network(R"({
      "queues": [{"name": "q", "capacity": 1.0}],
      "routes": [{"name": "r", "queues": ["q"]}, {"name": "r", "queues": ["q"]}]
    })"),
                    ConfigError);
    CHECK_THROWS_AS(parse_network(R"({
      "queues": [{"name": "q", "capacity": 1.0}],
      "routes": [{"name": "r", "queues": ["q"]}],
      "traffic": [{"route": "ghost", "nu": 0.1}]
    })"),
                    ConfigError);
    CHECK_THROWS_AS(parse_network(R"({
      "queues": [{"name": "q", "capacity": 1.0}],
      "routes": [{"name": "r", "queues": ["q"]}],
      "traffic": [{"route": "r", "size_dist": {"kind": "cauchy"}}]
    })"),
                    ConfigError);
}

TEST_CASE("csv rendering") {
    ResultTable table;
    table.columns = {"label", "value", "count"};
    table.rows.push_back({std::string("plain"), 0.1, static_cast<std::int64_t>(42)});
    table.rows.push_back({std::string("a,b"), 2.0, static_cast<std::int64_t>(-7)});
    table.rows.push_back({std::string("say \"hi\""), 0.5, static_cast<std::int64_t>(0)});
    CHECK(to_csv(table) ==
          "label,value,count\r\n"
          "plain,0.10000000000000001,42\r\n"
          "\"a,b\",2,-7\r\n"
          "\"say \"\"hi\"\"\",0.5,0\r\n");
}

TEST_CASE("content hashing") {
    CHECK(fnv1a_hash("") == 14695981039346656037ull);
    CHECK(fnv1a_hash("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a_hash("ab") != fnv1a_hash("ba"));
}

TEST_CASE("output files") {
    const std::filesystem::path dir = "/tmp/spinnet_test_out";
    std::filesystem::remove_all(dir);

    ExperimentSpec spec = linear_spec();
    const ResultTable table = run_exact(spec);
    write_outputs(table, spec, "exact", dir.string(), "probe");
    REQUIRE(std::filesystem::exists(dir / "probe.csv"));
    REQUIRE(std::filesystem::exists(dir / "probe.meta.json"));

    const std::string csv_once = slurp(dir / "probe.csv");
    CHECK(csv_once == to_csv(table));

    const std::string meta_once = slurp(dir / "probe.meta.json");
    CHECK(meta_once.find("\"experiment\": \"exact\"") != std::string::npos);
    char expected_hash[20];
    std::snprintf(expected_hash, sizeof expected_hash, "%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(spec.model.source_text)));
    CHECK(meta_once.find(expected_hash) != std::string::npos);

    // rewriting the same results is byte identical
    write_outputs(table, spec, "exact", dir.string(), "probe");
    CHECK(slurp(dir / "probe.csv") == csv_once);
    CHECK(slurp(dir / "probe.meta.json") == meta_once);
    std::filesystem::remove_all(dir);
}

TEST_CASE("exact driver") {
    const ResultTable table = run_exact(linear_spec());
    CHECK(value_of(table, "normalizer", "") == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(value_of(table, "spinning_rate", "through") == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(value_of(table, "spinning_rate", "left-only") == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(value_of(table, "spinning_rate", "right-only") == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(value_of(table, "slack", "left") == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    CHECK(value_of(table, "load", "left") == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(value_of(table, "open_normalizer", "") == doctest::Approx(1.0 / 0.36).epsilon(1e-12));
    CHECK(value_of(table, "doc_pmf", "") == doctest::Approx(0.0135).epsilon(1e-12));
    CHECK(std::abs(value_of(table, "little_residual", "left:through")) <= 1e-9);
    CHECK(count_rows(table, "mean_packets") == 4);

    ExperimentSpec bad = linear_spec();
    bad.n = Vec::Ones(2);
    CHECK_THROWS_AS(run_exact(bad), ConfigError);
    bad.n = Vec::Constant(3, -1.0);
    CHECK_THROWS_AS(run_exact(bad), ConfigError);
}

TEST_CASE("pf driver") {
    const ResultTable table = run_pf(linear_spec());
    CHECK(value_of(table, "pf_rate", "through") == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    CHECK(value_of(table, "pf_rate", "left-only") == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
    CHECK(value_of(table, "price", "left") == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(value_of(table, "price", "right") == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(value_of(table, "kkt_residual", "") <= 1e-8);
}

TEST_CASE("rates driver") {
    const ResultTable table = run_rates(linear_spec());
    const double expected =
        std::log((1.0 / 3.0) / 0.15) + 2.0 * std::log((2.0 / 3.0) / 0.25);
    CHECK(value_of(table, "rate_dual", "") == doctest::Approx(expected).epsilon(1e-6));
    CHECK(value_of(table, "duality_gap", "") <= 1e-6);
    CHECK(value_of(table, "minimizer", "left:through") == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(value_of(table, "minimizer", "left:left-only") == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(value_of(table, "minimizer", "right:through") == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(value_of(table, "kl_total_error", "") <= 1e-10);
    CHECK(count_rows(table, "saturated") == 2);

    // populated routes with no traffic have no rate function
    ExperimentSpec no_traffic = linear_spec();
    no_traffic.model = parse_network(R"({
      "queues": [{"name": "q", "capacity": 1.0}],
      "routes": [{"name": "r", "queues": ["q"]}]
    })");
    no_traffic.n = Vec::Ones(1);
    CHECK_THROWS_AS(run_rates(no_traffic), ConfigError);
}

TEST_CASE("converge driver") {
    ExperimentSpec spec = linear_spec();
    spec.h_list = {1, 2};
    const ResultTable table = run_converge(spec);
    REQUIRE(table.rows.size() == 2);
    const int sup = column_of(table, "sup_error");
    const int sn_through = column_of(table, "sn_through");
    const int pf_through = column_of(table, "pf_through");
    CHECK(std::get<std::int64_t>(table.rows[0][0]) == 1);
    CHECK(std::get<double>(table.rows[0][sn_through]) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(std::get<double>(table.rows[0][pf_through]) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    CHECK(std::get<double>(table.rows[0][sup]) == doctest::Approx(1.0 / 12.0).epsilon(1e-6));
    CHECK(std::get<double>(table.rows[1][sn_through]) ==
          doctest::Approx(2.0 / 7.0).epsilon(1e-12));
    CHECK(std::get<double>(table.rows[1][sup]) == doctest::Approx(1.0 / 21.0).epsilon(1e-6));

    // an oversized request names the largest workable scale
    ExperimentSpec big = linear_spec();
    big.h_list = {1, 272};
    try {
        run_converge(big);
        FAIL("expected a table size error");
    } catch (const TableTooLargeError& err) {
        CHECK(std::string(err.what()).find("largest feasible h is 270") != std::string::npos);
    }

    ExperimentSpec unsorted = linear_spec();
    unsorted.h_list = {2, 1};
    CHECK_THROWS_AS(run_converge(unsorted), ConfigError);
}

TEST_CASE("collapse driver") {
    ExperimentSpec spec = linear_spec();
    spec.h_list = {1};
    spec.epsilon = 0.1;
    const ResultTable table = run_collapse(spec);
    REQUIRE(table.rows.size() == 1);
    const auto& row = table.rows[0];
    CHECK(std::get<std::int64_t>(row[0]) == 1);
    CHECK(std::get<std::string>(row[1]) == "exact");
    CHECK(std::get<double>(row[2]) == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 0; k < 4; ++k)
        CHECK(std::get<double>(row[3 + static_cast<std::size_t>(k)]) ==
              doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    CHECK(std::get<double>(row[7]) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("simulation drivers") {
    ExperimentSpec spec = linear_spec();
    spec.horizon = 300.0;
    spec.replicas = 2;

    const ResultTable sim = run_simulate(spec);
    REQUIRE(sim.rows.size() == 2);
    CHECK(sim.columns.size() == 5 + 3 + 3);
    CHECK(std::get<std::int64_t>(sim.rows[0][2]) > 0);
    CHECK(std::get<std::string>(sim.rows[0][1]) != std::get<std::string>(sim.rows[1][1]));
    CHECK(to_csv(run_simulate(spec)) == to_csv(sim));

    spec.c_list = {1, 2};
    const ResultTable scaling = run_scaling(spec);
    REQUIRE(scaling.rows.size() == 3);
    CHECK(std::get<std::string>(scaling.rows[0][0]) == "flow");
    CHECK(std::get<std::string>(scaling.rows[1][0]) == "packet");
    CHECK(std::get<std::int64_t>(scaling.rows[2][1]) == 2);
    CHECK(to_csv(run_scaling(spec)) == to_csv(scaling));

    const ResultTable insens = run_insensitivity(spec);
    REQUIRE(insens.rows.size() == 4);
    CHECK(std::get<std::string>(insens.rows[0][0]) == "exponential");
    CHECK(std::get<std::string>(insens.rows[1][0]) == "deterministic");
    CHECK(std::get<std::string>(insens.rows[2][0]) == "hyperexponential");
    CHECK(std::get<std::string>(insens.rows[3][0]) == "exponential_halved_mu");
    for (const auto& row : insens.rows) {
        CHECK(std::get<double>(row[1]) >= std::get<double>(row[2]));
        CHECK(std::get<std::int64_t>(row[3]) > 0);
    }
    CHECK(to_csv(run_insensitivity(spec)) == to_csv(insens));
}
