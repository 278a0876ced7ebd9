#pragma once

#include "spinnet/topology.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace spinnet {

struct Allocation {
    Vec lambda;  // per-route transfer rates, nonnegative
};

struct FeasibilityReport {
    Vec slacks;  // C_j minus per-queue allocation sum
    bool feasible = false;
};

/// Table of closed-network normalizing constants over the box [0, n_max].
///
/// Entries are stored as value * 2^-scale_exp with one shared exponent so
/// that multinomial growth does not overflow; ratios of neighbouring
/// entries (all any consumer of throughputs needs) cancel the exponent.
class NormalizingTable {
  public:
    NormalizingTable() = default;

    bool covers(const VecI& n) const;
    const VecI& n_max() const { return n_max_; }

    /// log of the table entry at n.
    double log_value(const VecI& n) const;
    /// Entry at n-e_i divided by entry at n; requires n_i > 0.
    double ratio_down(const VecI& n, int route) const;

  private:
    friend NormalizingTable build_normalizing_table(const Topology&, const VecI&, std::int64_t);

    std::int64_t flat_index(const VecI& n) const;

    VecI n_max_;
    std::vector<std::int64_t> strides_;
    std::vector<double> scaled_;
    std::int64_t scale_exp_ = 0;
};

constexpr std::int64_t kDefaultTableCap = 20'000'000;

/// Builds the table by convolving per-queue geometric weight series:
/// processing queues in index order, each pass applies
/// G_k(n) = G_{k-1}(n) + sum over routes i through queue k of
/// G_k(n - e_i) / C_k, starting from the indicator of n = 0.
NormalizingTable build_normalizing_table(const Topology& topo, const VecI& n_max,
                                         std::int64_t cap = kDefaultTableCap);

/// Visits every packet state consistent with n (same order as
/// enumerate_states) without materializing the state list.
void for_each_state(const Topology& topo, const VecI& n,
                    const std::function<void(const VecI&)>& visit,
                    std::int64_t cap = kDefaultStateCap);

/// log of the closed-network weight of state m: per-queue multinomial
/// coefficients times capacity factors (1/C_j)^{m_ji}.
double log_closed_weight(const Topology& topo, const VecI& m);

/// Direct summation of closed-network weights over all states with
/// document counts n. Oracle-grade; cost is linear in the state count.
double normalizing_constant_direct(const Topology& topo, const VecI& n,
                                   std::int64_t cap = kDefaultStateCap);
double log_normalizing_constant_direct(const Topology& topo, const VecI& n,
                                       std::int64_t cap = kDefaultStateCap);

/// Open-network normalizer: product over queues of C_j / (C_j - load_j).
/// Throws UnstableNetworkError when some queue load reaches capacity.
double open_normalizer(const Topology& topo, const TrafficProfile& traffic);

/// Stationary probability of packet state m in the open network.
double open_packet_pmf(const Topology& topo, const TrafficProfile& traffic, const VecI& m);

/// Stationary probability of document counts n in the open network.
double doc_pmf(const Topology& topo, const TrafficProfile& traffic, const VecI& n,
               const NormalizingTable* table = nullptr);

/// Probability of packet state m in the closed network with n documents.
double closed_conditional_pmf(const Topology& topo, const VecI& n, const VecI& m,
                              const NormalizingTable* table = nullptr);

/// Closed-network stationary throughput per route: the ratio of
/// normalizing constants one document down, zero on empty routes.
Allocation spinning_allocation(const Topology& topo, const VecI& n,
                               const NormalizingTable& table);
/// One-off form that builds the table it needs.
Allocation spinning_allocation(const Topology& topo, const VecI& n);

FeasibilityReport check_feasibility(const Topology& topo, const Allocation& alloc,
                                    double tol = 1e-9);

/// Expected packet counts per incidence under the closed-network
/// stationary distribution, by direct enumeration.
Vec conditional_mean_packets(const Topology& topo, const VecI& n,
                             std::int64_t cap = kDefaultStateCap);

/// Per-incidence residual of the closed-network Little identity:
/// throughput times expected sojourn minus expected packet count.
/// Exactly zero in exact arithmetic for every incidence.
Vec little_law_residuals(const Topology& topo, const VecI& n,
                         const NormalizingTable* table = nullptr,
                         std::int64_t cap = kDefaultStateCap);

}  // namespace spinnet
