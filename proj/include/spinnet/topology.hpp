#pragma once

#include "spinnet/types.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace spinnet {

/// Network of single-server queues shared by a set of routes.
///
/// Routes are ordered sequences of distinct queue indices. The incidence
/// list holds every (queue, route) pair induced by the routes, sorted by
/// (queue, route); packet-state vectors are laid out in that order.
struct Topology {
    Vec capacities;                             // C_j, length J
    std::vector<std::vector<int>> routes;       // queue indices in route order
    std::vector<std::pair<int, int>> incidences;  // (queue, route), sorted

    int queue_count() const { return static_cast<int>(capacities.size()); }
    int route_count() const { return static_cast<int>(routes.size()); }
    int incidence_count() const { return static_cast<int>(incidences.size()); }

    // routes visiting queue j, ascending
    const std::vector<int>& routes_at_queue(int j) const { return routes_at_queue_[j]; }
    // flat index of (j, i) in the incidence layout; -1 if j not on route i
    int incidence_index(int j, int i) const;

    // filled by make_topology
    std::vector<std::vector<int>> routes_at_queue_;
    std::vector<std::vector<int>> incidence_by_route_;  // flat indices along each route, in route order
};

enum class ValidationCode {
    EmptyRoute,
    DuplicateQueueInRoute,
    UnknownQueueIndex,
    NoRoutes,
    NonPositiveCapacity,
};

struct ValidationIssue {
    ValidationCode code;
    std::string message;
};

struct ValidationResult {
    std::optional<Topology> topology;  // set iff issues is empty
    std::vector<ValidationIssue> issues;
};

ValidationResult validate_topology(const Vec& capacities,
                                   const std::vector<std::vector<int>>& routes);

/// Throwing form of validate_topology; raises the first issue found.
Topology make_topology(const Vec& capacities, const std::vector<std::vector<int>>& routes);

/// Per-route document size distribution. Means are always 1/mu of the
/// owning traffic profile; the kind only changes the shape.
struct SizeDist {
    enum class Kind { Exponential, GeometricScaled, Deterministic, Hyperexponential };
    Kind kind = Kind::Exponential;
    int geometric_scale = 1;  // GeometricScaled: size = Y/scale, Y ~ Geom(mu/scale)
    // Hyperexponential: phase k is Exponential with rate mu * rate_scale[k];
    // weights sum to 1 and sum of weights[k]/rate_scale[k] must be 1.
    std::vector<double> weights;
    std::vector<double> rate_scale;
};

struct TrafficProfile {
    Vec nu;  // arrival rates, documents/time
    Vec mu;  // inverse mean document sizes
    std::vector<SizeDist> size_dist;

    Vec rho() const { return nu.cwiseQuotient(mu); }
};

TrafficProfile make_traffic(const Vec& nu, const Vec& mu);
TrafficProfile make_traffic(const Vec& nu, const Vec& mu, std::vector<SizeDist> size_dist);

// ---- packet-state helpers -------------------------------------------------

/// Per-queue totals m_j of a packet vector laid out per Topology::incidences.
Vec queue_totals(const Topology& topo, const Vec& m);
VecI queue_totals(const Topology& topo, const VecI& m);

/// Per-route totals (the document counts induced by a packet state).
Vec route_totals(const Topology& topo, const Vec& m);
VecI route_totals(const Topology& topo, const VecI& m);

/// Per-queue sums of a per-route quantity (rates, loads) over resident routes.
Vec queue_loads(const Topology& topo, const Vec& per_route);

// ---- state space ----------------------------------------------------------

/// Number of packet states with the given per-route document counts,
/// computed as a product of weak-composition counts. Returned as double
/// so oversized spaces are still reportable.
double state_space_size(const Topology& topo, const VecI& n);

constexpr std::int64_t kDefaultStateCap = 10'000'000;

/// All packet states m with route_totals(m) == n, in deterministic order:
/// route-major, each route's composition ascending lexicographically.
std::vector<VecI> enumerate_states(const Topology& topo, const VecI& n,
                                   std::int64_t cap = kDefaultStateCap);

// ---- stability ------------------------------------------------------------

struct StabilityReport {
    Vec loads;  // per-queue sum of rho over routes through the queue
    bool stable = false;
};

StabilityReport stability_report(const Topology& topo, const TrafficProfile& traffic);

}  // namespace spinnet
