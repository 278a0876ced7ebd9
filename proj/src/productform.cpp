#include "spinnet/productform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spinnet {

namespace {

constexpr double kLn2 = 0.6931471805599453094;

// Online log-sum-exp accumulator for sums of positive weights.
class LogSum {
  public:
    void add(double log_term) {
        if (log_term == -std::numeric_limits<double>::infinity()) return;
        if (log_term > max_) {
            sum_ = sum_ * std::exp(max_ - log_term) + 1.0;
            max_ = log_term;
        } else {
            sum_ += std::exp(log_term - max_);
        }
    }
    double log() const {
        if (sum_ == 0.0) return -std::numeric_limits<double>::infinity();
        return max_ + std::log(sum_);
    }

  private:
    double max_ = -std::numeric_limits<double>::infinity();
    double sum_ = 0.0;
};

double require_stable(const Topology& topo, const TrafficProfile& traffic) {
    StabilityReport report = stability_report(topo, traffic);
    if (!report.stable)
        throw UnstableNetworkError("some queue load reaches its capacity");
    double log_b = 0.0;
    for (int j = 0; j < topo.queue_count(); ++j)
        log_b += std::log(topo.capacities[j] / (topo.capacities[j] - report.loads[j]));
    return log_b;  // log of the open normalizer
}

}  // namespace

// ---- NormalizingTable -----------------------------------------------------

std::int64_t NormalizingTable::flat_index(const VecI& n) const {
    std::int64_t idx = 0;
    for (int i = 0; i < n.size(); ++i) idx += static_cast<std::int64_t>(n[i]) * strides_[i];
    return idx;
}

bool NormalizingTable::covers(const VecI& n) const {
    if (n.size() != n_max_.size()) return false;
    return (n.array() >= 0).all() && (n.array() <= n_max_.array()).all();
}

double NormalizingTable::log_value(const VecI& n) const {
    if (!covers(n)) throw TableMissError("document counts outside the tabulated box");
    return std::log(scaled_[flat_index(n)]) + static_cast<double>(scale_exp_) * kLn2;
}

double NormalizingTable::ratio_down(const VecI& n, int route) const {
    if (!covers(n)) throw TableMissError("document counts outside the tabulated box");
    if (n[route] <= 0) throw TableMissError("ratio_down needs a document on the route");
    const std::int64_t idx = flat_index(n);
    return scaled_[idx - strides_[route]] / scaled_[idx];
}

NormalizingTable build_normalizing_table(const Topology& topo, const VecI& n_max,
                                         std::int64_t cap) {
    if (n_max.size() != topo.route_count())
        throw ConfigError("table bound must match route count");
    if ((n_max.array() < 0).any()) throw ConfigError("table bound must be nonnegative");

    NormalizingTable table;
    table.n_max_ = n_max;
    const int routes = topo.route_count();
    table.strides_.assign(routes, 1);
    double entries_d = 1.0;
    for (int i = routes - 1; i >= 0; --i) {
        if (i + 1 < routes)
            table.strides_[i] = table.strides_[i + 1] * (n_max[i + 1] + 1);
        entries_d *= static_cast<double>(n_max[i] + 1);
    }
    if (entries_d > static_cast<double>(cap))
        throw TableTooLargeError("table would hold " + std::to_string(entries_d) +
                                 " entries, cap is " + std::to_string(cap));
    const std::int64_t entries = static_cast<std::int64_t>(entries_d);

    table.scaled_.assign(static_cast<std::size_t>(entries), 0.0);
    table.scaled_[0] = 1.0;
    table.scale_exp_ = 0;

    for (int j = 0; j < topo.queue_count(); ++j) {
        const auto& at_queue = topo.routes_at_queue(j);
        if (at_queue.empty()) continue;
        const long double inv_c = 1.0L / static_cast<long double>(topo.capacities[j]);

        // Extremes of the positive entries, maintained through the pass so a
        // recentering shift can prove it strands nothing outside double range.
        double max_v = 0.0;
        double min_pos = std::numeric_limits<double>::infinity();
        for (double v : table.scaled_) {
            max_v = std::max(max_v, v);
            if (v > 0.0) min_pos = std::min(min_pos, v);
        }

        // In-place convolution; ascending flat order guarantees the
        // already-updated entry at n - e_i is available. Sums run in extended
        // precision and the whole table is shifted by a power of two whenever
        // an entry drifts too far from 1; the recursion is linear, so a
        // common shift is exact.
        VecI n = VecI::Zero(routes);
        for (std::int64_t idx = 0; idx < entries; ++idx) {
            long double acc = table.scaled_[idx];
            for (int i : at_queue)
                if (n[i] > 0)
                    acc += static_cast<long double>(table.scaled_[idx - table.strides_[i]]) *
                           inv_c;
            if (acc > 0.0L) {
                const int magnitude = std::ilogbl(acc);
                if (magnitude > 1000 || magnitude < -1000) {
                    // About to leave double range: shift the whole table so
                    // its occupied span sits centered around 2^0. A span
                    // wider than the representable window is unrecoverable.
                    double lo = magnitude;
                    double hi = magnitude;
                    if (max_v > 0.0) hi = std::max(hi, std::log2(max_v));
                    if (min_pos < std::numeric_limits<double>::infinity())
                        lo = std::min(lo, std::log2(min_pos));
                    if (hi - lo > 1900.0)
                        throw NumericError(
                            "normalizing constants span too wide a dynamic range");
                    const int shift = static_cast<int>(std::llround(0.5 * (hi + lo)));
                    for (double& v : table.scaled_) v = std::ldexp(v, -shift);
                    max_v = std::ldexp(max_v, -shift);
                    if (min_pos < std::numeric_limits<double>::infinity())
                        min_pos = std::ldexp(min_pos, -shift);
                    acc = ldexpl(acc, -shift);
                    table.scale_exp_ += shift;
                }
            }
            const double stored = static_cast<double>(acc);
            table.scaled_[idx] = stored;
            if (stored > 0.0) {
                max_v = std::max(max_v, stored);
                min_pos = std::min(min_pos, stored);
            }
            for (int i = routes - 1; i >= 0; --i) {
                if (++n[i] <= n_max[i]) break;
                n[i] = 0;
            }
        }
    }
    return table;
}

// ---- state visiting -------------------------------------------------------

namespace {

void visit_states(const Topology& topo, const VecI& n, int route, VecI& scratch,
                  const std::function<void(const VecI&)>& visit) {
    if (route == topo.route_count()) {
        visit(scratch);
        return;
    }
    const auto& slots = topo.incidence_by_route_[route];
    const int parts = static_cast<int>(slots.size());

    auto place = [&](auto&& self, int pos, int remaining) -> void {
        if (pos == parts - 1) {
            scratch[slots[pos]] = remaining;
            visit_states(topo, n, route + 1, scratch, visit);
            scratch[slots[pos]] = 0;
            return;
        }
        for (int c = 0; c <= remaining; ++c) {
            scratch[slots[pos]] = c;
            self(self, pos + 1, remaining - c);
        }
        scratch[slots[pos]] = 0;
    };
    place(place, 0, n[route]);
}

}  // namespace

void for_each_state(const Topology& topo, const VecI& n,
                    const std::function<void(const VecI&)>& visit, std::int64_t cap) {
    if (n.size() != topo.route_count()) throw ConfigError("document counts must match route count");
    if ((n.array() < 0).any()) throw ConfigError("document counts must be nonnegative");
    const double size = state_space_size(topo, n);
    if (size > static_cast<double>(cap))
        throw StateSpaceTooLargeError("state space has " + std::to_string(size) +
                                      " states, cap is " + std::to_string(cap));
    VecI scratch = VecI::Zero(topo.incidence_count());
    visit_states(topo, n, 0, scratch, visit);
}

// ---- weights and normalizers ----------------------------------------------

double log_closed_weight(const Topology& topo, const VecI& m) {
    double log_w = 0.0;
    VecI totals = queue_totals(topo, m);
    for (int j = 0; j < topo.queue_count(); ++j)
        log_w += std::lgamma(static_cast<double>(totals[j]) + 1.0);
    for (int k = 0; k < topo.incidence_count(); ++k) {
        const int j = topo.incidences[k].first;
        log_w -= std::lgamma(static_cast<double>(m[k]) + 1.0);
        log_w -= static_cast<double>(m[k]) * std::log(topo.capacities[j]);
    }
    return log_w;
}

double log_normalizing_constant_direct(const Topology& topo, const VecI& n, std::int64_t cap) {
    LogSum acc;
    for_each_state(
        topo, n, [&](const VecI& m) { acc.add(log_closed_weight(topo, m)); }, cap);
    return acc.log();
}

double normalizing_constant_direct(const Topology& topo, const VecI& n, std::int64_t cap) {
    return std::exp(log_normalizing_constant_direct(topo, n, cap));
}

double open_normalizer(const Topology& topo, const TrafficProfile& traffic) {
    return std::exp(require_stable(topo, traffic));
}

double open_packet_pmf(const Topology& topo, const TrafficProfile& traffic, const VecI& m) {
    if (m.size() != topo.incidence_count())
        throw ConfigError("packet state must match incidence count");
    if ((m.array() < 0).any()) throw ConfigError("packet counts must be nonnegative");
    const double log_b = require_stable(topo, traffic);
    const Vec rho = traffic.rho();
    double log_w = log_closed_weight(topo, m);
    for (int k = 0; k < topo.incidence_count(); ++k)
        log_w += static_cast<double>(m[k]) * std::log(rho[topo.incidences[k].second]);
    return std::exp(log_w - log_b);
}

double doc_pmf(const Topology& topo, const TrafficProfile& traffic, const VecI& n,
               const NormalizingTable* table) {
    const double log_b = require_stable(topo, traffic);
    const double log_bn =
        table ? table->log_value(n) : log_normalizing_constant_direct(topo, n);
    const Vec rho = traffic.rho();
    double log_p = log_bn - log_b;
    for (int i = 0; i < topo.route_count(); ++i)
        log_p += static_cast<double>(n[i]) * std::log(rho[i]);
    return std::exp(log_p);
}

double closed_conditional_pmf(const Topology& topo, const VecI& n, const VecI& m,
                              const NormalizingTable* table) {
    if (m.size() != topo.incidence_count() || (m.array() < 0).any() ||
        (route_totals(topo, m).array() != n.array()).any())
        throw StateNotInSnError("packet state does not project to the given document counts");
    const double log_bn =
        table ? table->log_value(n) : log_normalizing_constant_direct(topo, n);
    return std::exp(log_closed_weight(topo, m) - log_bn);
}

Allocation spinning_allocation(const Topology& topo, const VecI& n,
                               const NormalizingTable& table) {
    if (!table.covers(n)) throw TableMissError("document counts outside the tabulated box");
    Allocation alloc;
    alloc.lambda = Vec::Zero(topo.route_count());
    for (int i = 0; i < topo.route_count(); ++i)
        if (n[i] > 0) alloc.lambda[i] = table.ratio_down(n, i);
    return alloc;
}

Allocation spinning_allocation(const Topology& topo, const VecI& n) {
    return spinning_allocation(topo, n, build_normalizing_table(topo, n));
}

FeasibilityReport check_feasibility(const Topology& topo, const Allocation& alloc, double tol) {
    FeasibilityReport report;
    report.slacks = topo.capacities - queue_loads(topo, alloc.lambda);
    report.feasible = (report.slacks.array() >= -tol).all();
    return report;
}

Vec conditional_mean_packets(const Topology& topo, const VecI& n, std::int64_t cap) {
    const double log_bn = log_normalizing_constant_direct(topo, n, cap);
    Vec mean = Vec::Zero(topo.incidence_count());
    for_each_state(
        topo, n,
        [&](const VecI& m) {
            const double p = std::exp(log_closed_weight(topo, m) - log_bn);
            mean += p * m.cast<double>();
        },
        cap);
    return mean;
}

Vec little_law_residuals(const Topology& topo, const VecI& n, const NormalizingTable* table,
                         std::int64_t cap) {
    Vec residuals = Vec::Zero(topo.incidence_count());
    const Vec mean_here = conditional_mean_packets(topo, n, cap);
    const double log_bn =
        table && table->covers(n) ? table->log_value(n) : log_normalizing_constant_direct(topo, n, cap);
    for (int i = 0; i < topo.route_count(); ++i) {
        if (n[i] <= 0) continue;
        VecI down = n;
        down[i] -= 1;
        const double log_bn_down = table && table->covers(down)
                                       ? table->log_value(down)
                                       : log_normalizing_constant_direct(topo, down, cap);
        const double lambda = std::exp(log_bn_down - log_bn);
        const Vec mean_down = conditional_mean_packets(topo, down, cap);
        const Vec queue_down = queue_totals(topo, mean_down);
        for (std::size_t t = 0; t < topo.routes[i].size(); ++t) {
            const int j = topo.routes[i][t];
            const int k = topo.incidence_by_route_[i][t];
            residuals[k] = lambda * (queue_down[j] + 1.0) / topo.capacities[j] - mean_here[k];
        }
    }
    return residuals;
}

}  // namespace spinnet
