#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "spinnet/productform.hpp"
#include "spinnet/topology.hpp"
#include "spinnet/types.hpp"

namespace spinnet {

struct SimConfig {
    double horizon = 1e4;          // simulated time
    double warmup_fraction = 0.2;  // occupancy before this fraction is discarded
    std::uint64_t seed = 1;
    int scale_c = 1;               // packet-level service speedup
    VecI box;                      // pmf truncation per route; empty means 50 each
    VecI initial_state;            // doc counts at t=0; empty means zeros
};

constexpr int kDefaultBox = 50;

// Per-state tallies for checking empirical transition rates against the
// generator. Held only for states inside the box.
struct StateStats {
    double hold = 0.0;  // post-warmup occupancy time
    std::int64_t visits = 0;
    std::vector<std::int64_t> up;    // arrivals seen from this state, per route
    std::vector<std::int64_t> down;  // departures seen from this state, per route
};

struct Trajectory {
    // Time-weighted post-warmup distribution of doc counts, normalized
    // together with outside_mass.
    std::map<std::vector<int>, double> pmf;
    double outside_mass = 0.0;
    double post_warmup_time = 0.0;
    std::int64_t event_count = 0;
    std::int64_t post_warmup_events = 0;
    Vec time_average;                      // mean doc counts, post-warmup
    std::vector<std::int64_t> departures;  // per route, post-warmup completions
    std::vector<int> final_state;
    bool drift_warning = false;  // most of the mass ended up outside the box
    std::map<std::vector<int>, StateStats> visit_stats;
};

enum class AllocationSource { Spinning, ProportionalFairness };

// Exact-jump simulation of the doc-count Markov chain: arrivals at rate nu_i,
// departures at rate mu_i * lambda_i(n).
Trajectory simulate_flow_level(const Topology& topo, const TrafficProfile& traffic,
                               AllocationSource source, const SimConfig& config);

// Same drift but documents carry explicit sizes from traffic.size_dist; each
// route-i document drains at rate lambda_i(n)/n_i. Completions are
// deterministic given the current allocation, so this is event-driven rather
// than a jump chain.
Trajectory simulate_flow_level_general_sizes(const Topology& topo,
                                             const TrafficProfile& traffic,
                                             AllocationSource source,
                                             const SimConfig& config);

// Packet-level open network sped up by scale_c: queue j completes a uniformly
// chosen resident packet at rate scale_c * C_j; a packet clearing its route's
// last queue ends its document with probability mu_i/scale_c, else spins back
// to the first queue. Trajectory is recorded over doc counts.
Trajectory simulate_open_packet(const Topology& topo, const TrafficProfile& traffic,
                                const SimConfig& config);

struct ThroughputEstimate {
    Vec rate;        // per route, passes of the final queue per unit time
    Vec half_width;  // 95% CLT interval from batch means
    VecI passes;
    double post_warmup_time = 0.0;
};

// Closed network with doc counts pinned at n: packets spin forever, the
// estimate is the stationary rate of route completions.
ThroughputEstimate simulate_closed_network(const Topology& topo, const VecI& n,
                                           const SimConfig& config);

// Total variation between an empirical trajectory pmf and an exact pmf,
// split into the in-box sum and the masses either side leaves outside.
struct TVReport {
    double tv_in_box = 0.0;
    double outside_empirical = 0.0;
    double outside_exact = 0.0;
    // True TV lies in [lower_bound, upper_bound].
    double upper_bound() const {
        return tv_in_box + 0.5 * (outside_empirical + outside_exact);
    }
    double lower_bound() const {
        return tv_in_box + 0.5 * std::abs(outside_empirical - outside_exact);
    }
};

TVReport empirical_tv_distance(const Trajectory& trajectory,
                               const std::function<double(const VecI&)>& exact_pmf,
                               const VecI& box, std::int64_t cap = 5'000'000);

// Draws from the conditional packet law given doc counts n: categorical over
// the enumerated fiber when it is small, otherwise states of the closed
// packet chain sampled along one long run.
std::vector<VecI> sample_conditional_states(const Topology& topo, const VecI& n,
                                            int count, std::uint64_t seed,
                                            std::int64_t enumeration_cap = 200000);

}  // namespace spinnet
