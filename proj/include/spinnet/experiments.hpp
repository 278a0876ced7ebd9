#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "spinnet/simulate.hpp"
#include "spinnet/topology.hpp"
#include "spinnet/types.hpp"

namespace spinnet {

// A parsed network description: named queues and routes plus traffic, with
// the raw text kept for provenance hashing.
struct NetworkModel {
    Topology topology;
    TrafficProfile traffic;
    std::vector<std::string> queue_names;
    std::vector<std::string> route_names;
    std::string source_text;
};

NetworkModel parse_network(const std::string& json_text);
NetworkModel load_network(const std::string& path);

using Cell = std::variant<std::string, double, std::int64_t>;

struct ResultTable {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

// RFC-4180 text: one header row, CRLF endings, 17 significant digits.
std::string to_csv(const ResultTable& table);

std::uint64_t fnv1a_hash(const std::string& text);

constexpr const char* kBuildId = "spinnet 0.1.0";

struct ExperimentSpec {
    NetworkModel model;
    Vec n;                                 // doc counts; floored where integers are needed
    std::vector<int> h_list = {1, 2, 4, 8, 16, 32, 64};
    std::vector<int> c_list = {1, 4, 16};
    double epsilon = 0.1;
    std::uint64_t seed = 1;
    double horizon = 20000.0;
    int replicas = 1;
    int samples = 4000;
    AllocationSource source = AllocationSource::Spinning;
};

// Writes <stem>.csv and <stem>.meta.json into out_dir.
void write_outputs(const ResultTable& table, const ExperimentSpec& spec,
                   const std::string& experiment, const std::string& out_dir,
                   const std::string& stem);

ResultTable run_exact(const ExperimentSpec& spec);
ResultTable run_pf(const ExperimentSpec& spec);
ResultTable run_rates(const ExperimentSpec& spec);
ResultTable run_converge(const ExperimentSpec& spec);
ResultTable run_collapse(const ExperimentSpec& spec);
ResultTable run_scaling(const ExperimentSpec& spec);
ResultTable run_insensitivity(const ExperimentSpec& spec);
ResultTable run_simulate(const ExperimentSpec& spec);

}  // namespace spinnet
