#include "spinnet/topology.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace spinnet {

int Topology::incidence_index(int j, int i) const {
    auto it = std::lower_bound(incidences.begin(), incidences.end(), std::make_pair(j, i));
    if (it == incidences.end() || *it != std::make_pair(j, i)) return -1;
    return static_cast<int>(it - incidences.begin());
}

ValidationResult validate_topology(const Vec& capacities,
                                   const std::vector<std::vector<int>>& routes) {
    ValidationResult result;
    const int J = static_cast<int>(capacities.size());

    if (J < 1) {
        result.issues.push_back({ValidationCode::UnknownQueueIndex, "network has no queues"});
    }
    for (int j = 0; j < J; ++j) {
        if (!(capacities[j] > 0.0)) {
            result.issues.push_back({ValidationCode::NonPositiveCapacity,
                                     "queue " + std::to_string(j) + " has non-positive capacity"});
        }
    }
    if (routes.empty()) {
        result.issues.push_back({ValidationCode::NoRoutes, "network has no routes"});
    }
    for (std::size_t i = 0; i < routes.size(); ++i) {
        const auto& route = routes[i];
        if (route.empty()) {
            result.issues.push_back({ValidationCode::EmptyRoute,
                                     "route " + std::to_string(i) + " is empty"});
            continue;
        }
        std::set<int> seen;
        for (int j : route) {
            if (j < 0 || j >= J) {
                result.issues.push_back({ValidationCode::UnknownQueueIndex,
                                         "route " + std::to_string(i) + " references queue " +
                                             std::to_string(j)});
            } else if (!seen.insert(j).second) {
                result.issues.push_back({ValidationCode::DuplicateQueueInRoute,
                                         "route " + std::to_string(i) + " visits queue " +
                                             std::to_string(j) + " twice"});
            }
        }
    }
    if (!result.issues.empty()) return result;

    Topology topo;
    topo.capacities = capacities;
    topo.routes = routes;
    for (int i = 0; i < static_cast<int>(routes.size()); ++i)
        for (int j : routes[i]) topo.incidences.emplace_back(j, i);
    std::sort(topo.incidences.begin(), topo.incidences.end());

    topo.routes_at_queue_.assign(J, {});
    for (const auto& [j, i] : topo.incidences) topo.routes_at_queue_[j].push_back(i);

    topo.incidence_by_route_.assign(routes.size(), {});
    for (int i = 0; i < static_cast<int>(routes.size()); ++i)
        for (int j : routes[i]) topo.incidence_by_route_[i].push_back(topo.incidence_index(j, i));

    result.topology = std::move(topo);
    return result;
}

Topology make_topology(const Vec& capacities, const std::vector<std::vector<int>>& routes) {
    ValidationResult result = validate_topology(capacities, routes);
    if (result.topology) return *std::move(result.topology);
    const auto& issue = result.issues.front();
    switch (issue.code) {
        case ValidationCode::EmptyRoute:
            throw EmptyRouteError(issue.message);
        case ValidationCode::DuplicateQueueInRoute:
            throw DuplicateQueueInRouteError(issue.message);
        case ValidationCode::NoRoutes:
            throw NoRoutesError(issue.message);
        case ValidationCode::UnknownQueueIndex:
            throw UnknownQueueIndexError(issue.message);
        default:
            throw ConfigError(issue.message);
    }
}

TrafficProfile make_traffic(const Vec& nu, const Vec& mu) {
    return make_traffic(nu, mu, std::vector<SizeDist>(nu.size()));
}

TrafficProfile make_traffic(const Vec& nu, const Vec& mu, std::vector<SizeDist> size_dist) {
    if (nu.size() != mu.size() || static_cast<std::size_t>(nu.size()) != size_dist.size())
        throw ConfigError("traffic vectors must share the route count");
    if ((nu.array() < 0.0).any() || (mu.array() <= 0.0).any())
        throw ConfigError("arrival rates must be nonnegative and inverse mean sizes positive");
    for (const auto& dist : size_dist) {
        if (dist.kind == SizeDist::Kind::Hyperexponential) {
            if (dist.weights.size() != dist.rate_scale.size() || dist.weights.empty())
                throw ConfigError("hyperexponential phases need matching weights and rate scales");
            double wsum = 0.0, msum = 0.0;
            for (std::size_t k = 0; k < dist.weights.size(); ++k) {
                if (dist.weights[k] <= 0.0 || dist.rate_scale[k] <= 0.0)
                    throw ConfigError("hyperexponential weights and rate scales must be positive");
                wsum += dist.weights[k];
                msum += dist.weights[k] / dist.rate_scale[k];
            }
            if (std::abs(wsum - 1.0) > 1e-9 || std::abs(msum - 1.0) > 1e-9)
                throw ConfigError(
                    "hyperexponential weights must sum to 1 and preserve the mean "
                    "(sum of weight/rate_scale must be 1)");
        } else if (dist.kind == SizeDist::Kind::GeometricScaled && dist.geometric_scale < 1) {
            throw ConfigError("geometric size scale must be a positive integer");
        }
    }
    TrafficProfile traffic;
    traffic.nu = nu;
    traffic.mu = mu;
    traffic.size_dist = std::move(size_dist);
    return traffic;
}

Vec queue_totals(const Topology& topo, const Vec& m) {
    Vec totals = Vec::Zero(topo.queue_count());
    for (int k = 0; k < topo.incidence_count(); ++k) totals[topo.incidences[k].first] += m[k];
    return totals;
}

VecI queue_totals(const Topology& topo, const VecI& m) {
    VecI totals = VecI::Zero(topo.queue_count());
    for (int k = 0; k < topo.incidence_count(); ++k) totals[topo.incidences[k].first] += m[k];
    return totals;
}

Vec route_totals(const Topology& topo, const Vec& m) {
    Vec totals = Vec::Zero(topo.route_count());
    for (int k = 0; k < topo.incidence_count(); ++k) totals[topo.incidences[k].second] += m[k];
    return totals;
}

VecI route_totals(const Topology& topo, const VecI& m) {
    VecI totals = VecI::Zero(topo.route_count());
    for (int k = 0; k < topo.incidence_count(); ++k) totals[topo.incidences[k].second] += m[k];
    return totals;
}

Vec queue_loads(const Topology& topo, const Vec& per_route) {
    Vec loads = Vec::Zero(topo.queue_count());
    for (int k = 0; k < topo.incidence_count(); ++k)
        loads[topo.incidences[k].first] += per_route[topo.incidences[k].second];
    return loads;
}

double state_space_size(const Topology& topo, const VecI& n) {
    double size = 1.0;
    for (int i = 0; i < topo.route_count(); ++i) {
        const int parts = static_cast<int>(topo.routes[i].size());
        // weak compositions of n_i into `parts` parts
        double count = 1.0;
        for (int t = 1; t < parts; ++t) count *= static_cast<double>(n[i] + t) / t;
        size *= count;
    }
    return size;
}

namespace {

// Appends every weak composition of `total` over the route's slots,
// ascending lexicographically, recursing route by route.
void emit_states(const Topology& topo, const VecI& n, int route, VecI& scratch,
                 std::vector<VecI>& out) {
    if (route == topo.route_count()) {
        out.push_back(scratch);
        return;
    }
    const auto& slots = topo.incidence_by_route_[route];
    const int parts = static_cast<int>(slots.size());
    VecI comp = VecI::Zero(parts);

    auto place = [&](auto&& self, int pos, int remaining) -> void {
        if (pos == parts - 1) {
            comp[pos] = remaining;
            for (int t = 0; t < parts; ++t) scratch[slots[t]] = comp[t];
            emit_states(topo, n, route + 1, scratch, out);
            return;
        }
        for (int c = 0; c <= remaining; ++c) {
            comp[pos] = c;
            self(self, pos + 1, remaining - c);
        }
    };
    place(place, 0, n[route]);
}

}  // namespace

std::vector<VecI> enumerate_states(const Topology& topo, const VecI& n, std::int64_t cap) {
    if (n.size() != topo.route_count()) throw ConfigError("document counts must match route count");
    if ((n.array() < 0).any()) throw ConfigError("document counts must be nonnegative");
    const double size = state_space_size(topo, n);
    if (size > static_cast<double>(cap))
        throw StateSpaceTooLargeError("state space has " + std::to_string(size) +
                                      " states, cap is " + std::to_string(cap));
    std::vector<VecI> out;
    out.reserve(static_cast<std::size_t>(size));
    VecI scratch = VecI::Zero(topo.incidence_count());
    emit_states(topo, n, 0, scratch, out);
    return out;
}

StabilityReport stability_report(const Topology& topo, const TrafficProfile& traffic) {
    const Vec rho = traffic.rho();
    StabilityReport report;
    report.loads = Vec::Zero(topo.queue_count());
    for (int k = 0; k < topo.incidence_count(); ++k)
        report.loads[topo.incidences[k].first] += rho[topo.incidences[k].second];
    report.stable = (report.loads.array() < topo.capacities.array()).all();
    return report;
}

}  // namespace spinnet
