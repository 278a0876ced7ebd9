#include "spinnet/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <queue>

#include "spinnet/fairness.hpp"
#include "spinnet/rng.hpp"

namespace spinnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream tags; each simulator draws different random purposes from
// non-overlapping streams of the one seed.
constexpr std::uint64_t kStreamHolding = 1;
constexpr std::uint64_t kStreamChoice = 2;
constexpr std::uint64_t kStreamSizes = 3;
constexpr std::uint64_t kStreamSampling = 4;

void validate_config(const SimConfig& config) {
    if (config.horizon <= 0.0) throw ConfigError("horizon must be positive");
    if (config.warmup_fraction < 0.0 || config.warmup_fraction >= 1.0)
        throw ConfigError("warmup fraction must lie in [0,1)");
    if (config.scale_c < 1) throw ConfigError("scale_c must be a positive integer");
}

void validate_traffic_shape(const Topology& topo, const TrafficProfile& traffic) {
    if (traffic.nu.size() != topo.route_count())
        throw ConfigError("traffic must cover every route");
}

VecI effective_box(const Topology& topo, const SimConfig& config) {
    if (config.box.size() == 0)
        return VecI::Constant(topo.route_count(), kDefaultBox);
    if (config.box.size() != topo.route_count())
        throw ConfigError("box must have one bound per route");
    if ((config.box.array() < 0).any()) throw ConfigError("box bounds must be nonnegative");
    return config.box;
}

VecI effective_initial(const Topology& topo, const SimConfig& config) {
    if (config.initial_state.size() == 0) return VecI::Zero(topo.route_count());
    if (config.initial_state.size() != topo.route_count())
        throw ConfigError("initial state must have one count per route");
    if ((config.initial_state.array() < 0).any())
        throw ConfigError("initial counts must be nonnegative");
    return config.initial_state;
}

std::vector<int> key_of(const VecI& n) {
    return std::vector<int>(n.data(), n.data() + n.size());
}

// Accumulates post-warmup occupancy and per-state transition tallies.
class Recorder {
  public:
    Recorder(const Topology& topo, const SimConfig& config, const VecI& box,
             bool keep_stats)
        : box_(box),
          warmup_(config.horizon * config.warmup_fraction),
          keep_stats_(keep_stats),
          routes_(topo.route_count()),
          time_avg_(Vec::Zero(topo.route_count())),
          departures_(static_cast<std::size_t>(topo.route_count()), 0) {}

    double warmup_time() const { return warmup_; }

    bool inside(const VecI& n) const { return (n.array() <= box_.array()).all(); }

    void occupy(const VecI& n, double from, double to) {
        const double lo = std::max(from, warmup_);
        if (to <= lo) return;
        const double mass = to - lo;
        post_time_ += mass;
        time_avg_ += mass * n.cast<double>();
        if (inside(n)) {
            pmf_[key_of(n)] += mass;
            if (keep_stats_) stats_entry(n).hold += mass;
        } else {
            outside_ += mass;
        }
    }

    // A jump out of state n at time when; route transition bookkeeping.
    void jump(const VecI& n, double when, bool is_departure, int route) {
        ++events_;
        if (when < warmup_) return;
        ++post_events_;
        if (is_departure) ++departures_[static_cast<std::size_t>(route)];
        if (keep_stats_ && inside(n)) {
            StateStats& s = stats_entry(n);
            ++s.visits;
            auto& counts = is_departure ? s.down : s.up;
            ++counts[static_cast<std::size_t>(route)];
        }
    }

    void finalize(Trajectory& out, const VecI& final_state) {
        const double total = post_time_;
        if (total > 0.0) {
            for (auto& [key, mass] : pmf_) mass /= total;
            outside_ /= total;
            time_avg_ /= total;
        }
        out.pmf = std::move(pmf_);
        out.outside_mass = outside_;
        out.post_warmup_time = total;
        out.event_count = events_;
        out.post_warmup_events = post_events_;
        out.time_average = time_avg_;
        out.departures = departures_;
        out.final_state = key_of(final_state);
        out.drift_warning = outside_ > 0.5;
        out.visit_stats = std::move(stats_);
    }

  private:
    StateStats& stats_entry(const VecI& n) {
        StateStats& s = stats_[key_of(n)];
        if (s.up.empty()) {
            s.up.assign(static_cast<std::size_t>(routes_), 0);
            s.down.assign(static_cast<std::size_t>(routes_), 0);
        }
        return s;
    }

    VecI box_;
    double warmup_;
    bool keep_stats_;
    int routes_;
    std::map<std::vector<int>, double> pmf_;
    std::map<std::vector<int>, StateStats> stats_;
    double outside_ = 0.0;
    double post_time_ = 0.0;
    Vec time_avg_;
    std::vector<std::int64_t> departures_;
    std::int64_t events_ = 0;
    std::int64_t post_events_ = 0;
};

class AllocationProvider {
  public:
    virtual ~AllocationProvider() = default;
    virtual Vec at(const VecI& n) = 0;
};

// Ratio-of-normalizers allocation; the table grows geometrically whenever the
// walk leaves the tabulated box.
class SpinningProvider : public AllocationProvider {
  public:
    SpinningProvider(const Topology& topo, const VecI& initial) : topo_(topo) {
        VecI start = initial.cwiseMax(8);
        table_ = build_normalizing_table(topo_, start);
        n_max_ = start;
    }

    Vec at(const VecI& n) override {
        if (!table_.covers(n)) {
            for (int i = 0; i < n_max_.size(); ++i)
                n_max_[i] = std::max(n_max_[i], 2 * std::max(n[i], n_max_[i]));
            table_ = build_normalizing_table(topo_, n_max_);
        }
        return spinning_allocation(topo_, n, table_).lambda;
    }

  private:
    const Topology& topo_;
    NormalizingTable table_;
    VecI n_max_;
};

class PFProvider : public AllocationProvider {
  public:
    explicit PFProvider(const Topology& topo) : topo_(topo) {}

    Vec at(const VecI& n) override {
        auto it = memo_.find(key_of(n));
        if (it != memo_.end()) return it->second;
        Vec lambda = solve_pf(topo_, n.cast<double>()).lambda;
        memo_.emplace(key_of(n), lambda);
        return lambda;
    }

  private:
    const Topology& topo_;
    std::map<std::vector<int>, Vec> memo_;
};

std::unique_ptr<AllocationProvider> make_provider(const Topology& topo,
                                                  AllocationSource source,
                                                  const VecI& initial) {
    if (source == AllocationSource::Spinning)
        return std::make_unique<SpinningProvider>(topo, initial);
    return std::make_unique<PFProvider>(topo);
}

double draw_size(const SizeDist& dist, double mu, CounterRng& rng) {
    switch (dist.kind) {
        case SizeDist::Kind::Exponential:
            return rng.next_exponential(mu);
        case SizeDist::Kind::Deterministic:
            return 1.0 / mu;
        case SizeDist::Kind::GeometricScaled: {
            // K parts of size 1/(mu*scale), K geometric with mean scale.
            const double p = 1.0 / static_cast<double>(dist.geometric_scale);
            std::int64_t parts = 1;
            if (p < 1.0) {
                const double u = rng.next_uniform();
                parts = 1 + static_cast<std::int64_t>(std::floor(std::log1p(-u) /
                                                                 std::log1p(-p)));
            }
            return static_cast<double>(parts) /
                   (mu * static_cast<double>(dist.geometric_scale));
        }
        case SizeDist::Kind::Hyperexponential: {
            const double u = rng.next_uniform();
            double acc = 0.0;
            std::size_t phase = dist.weights.size() - 1;
            for (std::size_t k = 0; k < dist.weights.size(); ++k) {
                acc += dist.weights[k];
                if (u < acc) {
                    phase = k;
                    break;
                }
            }
            return rng.next_exponential(mu * dist.rate_scale[phase]);
        }
    }
    throw ConfigError("unhandled size distribution");
}

}  // namespace

// ---- flow level -----------------------------------------------------------

Trajectory simulate_flow_level(const Topology& topo, const TrafficProfile& traffic,
                               AllocationSource source, const SimConfig& config) {
    validate_config(config);
    validate_traffic_shape(topo, traffic);
    const VecI box = effective_box(topo, config);
    VecI n = effective_initial(topo, config);
    auto provider = make_provider(topo, source, n);

    CounterRng root(config.seed);
    CounterRng hold_rng = root.split(kStreamHolding);
    CounterRng choice_rng = root.split(kStreamChoice);
    Recorder rec(topo, config, box, true);

    const int routes = topo.route_count();
    double t = 0.0;
    while (t < config.horizon) {
        const Vec lambda = provider->at(n);
        double total = traffic.nu.sum();
        Vec down(routes);
        for (int i = 0; i < routes; ++i) {
            down[i] = traffic.mu[i] * lambda[i];
            total += down[i];
        }
        if (total <= 0.0) {
            rec.occupy(n, t, config.horizon);
            t = config.horizon;
            break;
        }
        const double te = t + hold_rng.next_exponential(total);
        if (te >= config.horizon) {
            rec.occupy(n, t, config.horizon);
            t = config.horizon;
            break;
        }
        rec.occupy(n, t, te);

        double u = choice_rng.next_uniform() * total;
        int route = -1;
        bool departure = false;
        for (int i = 0; i < routes && route < 0; ++i) {
            if (u < traffic.nu[i]) route = i;
            u -= traffic.nu[i];
        }
        if (route < 0) {
            departure = true;
            for (int i = 0; i < routes && route < 0; ++i) {
                if (u < down[i]) route = i;
                u -= down[i];
            }
            if (route < 0) route = routes - 1;  // guard against roundoff spill
        }
        rec.jump(n, te, departure, route);
        n[route] += departure ? -1 : 1;
        t = te;
    }

    Trajectory out;
    rec.finalize(out, n);
    return out;
}

Trajectory simulate_flow_level_general_sizes(const Topology& topo,
                                             const TrafficProfile& traffic,
                                             AllocationSource source,
                                             const SimConfig& config) {
    validate_config(config);
    validate_traffic_shape(topo, traffic);
    const VecI box = effective_box(topo, config);
    VecI n = effective_initial(topo, config);
    auto provider = make_provider(topo, source, n);

    CounterRng root(config.seed);
    CounterRng hold_rng = root.split(kStreamHolding);
    CounterRng choice_rng = root.split(kStreamChoice);
    CounterRng size_rng = root.split(kStreamSizes);
    Recorder rec(topo, config, box, false);

    const int routes = topo.route_count();
    using MinHeap = std::priority_queue<double, std::vector<double>, std::greater<double>>;
    std::vector<MinHeap> pending(static_cast<std::size_t>(routes));
    Vec drained = Vec::Zero(routes);
    for (int i = 0; i < routes; ++i)
        for (int d = 0; d < n[i]; ++d)
            pending[i].push(draw_size(traffic.size_dist[i], traffic.mu[i], size_rng));

    const double total_nu = traffic.nu.sum();
    double t = 0.0;
    double next_arrival = total_nu > 0.0 ? hold_rng.next_exponential(total_nu) : kInf;

    while (t < config.horizon) {
        const Vec lambda = provider->at(n);
        Vec per_doc = Vec::Zero(routes);
        double dt_completion = kInf;
        int completing = -1;
        for (int i = 0; i < routes; ++i) {
            if (n[i] <= 0) continue;
            per_doc[i] = lambda[i] / static_cast<double>(n[i]);
            if (per_doc[i] <= 0.0) continue;
            const double dt = (pending[i].top() - drained[i]) / per_doc[i];
            if (dt < dt_completion) {
                dt_completion = dt;
                completing = i;
            }
        }
        const double dt_arrival = next_arrival - t;
        const double dt = std::min(std::max(dt_completion, 0.0), dt_arrival);
        const double te = t + dt;
        if (te >= config.horizon) {
            rec.occupy(n, t, config.horizon);
            drained += per_doc * (config.horizon - t);
            t = config.horizon;
            break;
        }
        rec.occupy(n, t, te);
        drained += per_doc * dt;

        if (dt_arrival <= dt_completion) {
            double u = choice_rng.next_uniform() * total_nu;
            int route = routes - 1;
            for (int i = 0; i < routes; ++i) {
                if (u < traffic.nu[i]) {
                    route = i;
                    break;
                }
                u -= traffic.nu[i];
            }
            pending[route].push(drained[route] +
                                draw_size(traffic.size_dist[route], traffic.mu[route],
                                          size_rng));
            rec.jump(n, te, false, route);
            n[route] += 1;
            next_arrival = te + hold_rng.next_exponential(total_nu);
        } else {
            pending[completing].pop();
            rec.jump(n, te, true, completing);
            n[completing] -= 1;
        }
        t = te;
    }

    Trajectory out;
    rec.finalize(out, n);
    return out;
}

// ---- packet level ---------------------------------------------------------

Trajectory simulate_open_packet(const Topology& topo, const TrafficProfile& traffic,
                                const SimConfig& config) {
    validate_config(config);
    validate_traffic_shape(topo, traffic);
    const double c = static_cast<double>(config.scale_c);
    for (int i = 0; i < topo.route_count(); ++i)
        if (traffic.mu[i] > c)
            throw ConfigError("scale_c must dominate every completion rate");

    const VecI box = effective_box(topo, config);
    CounterRng root(config.seed);
    CounterRng hold_rng = root.split(kStreamHolding);
    CounterRng choice_rng = root.split(kStreamChoice);
    Recorder rec(topo, config, box, false);

    const int routes = topo.route_count();
    const int queues = topo.queue_count();
    VecI m = VecI::Zero(topo.incidence_count());
    VecI mq = VecI::Zero(queues);
    VecI n = effective_initial(topo, config);
    for (int i = 0; i < routes; ++i) {
        const int k = topo.incidence_by_route_[i].front();
        m[k] = n[i];
        mq[topo.routes[i].front()] += n[i];
    }

    const double total_nu = traffic.nu.sum();
    double t = 0.0;
    while (t < config.horizon) {
        double total = total_nu;
        for (int j = 0; j < queues; ++j)
            if (mq[j] > 0) total += c * topo.capacities[j];
        if (total <= 0.0) {
            rec.occupy(n, t, config.horizon);
            t = config.horizon;
            break;
        }
        const double te = t + hold_rng.next_exponential(total);
        if (te >= config.horizon) {
            rec.occupy(n, t, config.horizon);
            t = config.horizon;
            break;
        }
        rec.occupy(n, t, te);

        double u = choice_rng.next_uniform() * total;
        int arrival_route = -1;
        for (int i = 0; i < routes && arrival_route < 0; ++i) {
            if (u < traffic.nu[i]) arrival_route = i;
            u -= traffic.nu[i];
        }
        if (arrival_route >= 0) {
            const int k = topo.incidence_by_route_[arrival_route].front();
            m[k] += 1;
            mq[topo.routes[arrival_route].front()] += 1;
            rec.jump(n, te, false, arrival_route);
            n[arrival_route] += 1;
        } else {
            int fired = -1;
            for (int j = 0; j < queues && fired < 0; ++j) {
                if (mq[j] <= 0) continue;
                if (u < c * topo.capacities[j]) fired = j;
                u -= c * topo.capacities[j];
            }
            if (fired < 0)
                for (int j = queues - 1; j >= 0; --j)
                    if (mq[j] > 0) {
                        fired = j;
                        break;
                    }

            // uniform resident packet: route share m_ji / m_j
            double pick = choice_rng.next_uniform() * static_cast<double>(mq[fired]);
            int route = -1;
            for (int i : topo.routes_at_queue(fired)) {
                const int k = topo.incidence_index(fired, i);
                if (pick < static_cast<double>(m[k])) {
                    route = i;
                    break;
                }
                pick -= static_cast<double>(m[k]);
            }
            if (route < 0) {
                const auto& at_queue = topo.routes_at_queue(fired);
                for (auto it = at_queue.rbegin(); it != at_queue.rend(); ++it)
                    if (m[topo.incidence_index(fired, *it)] > 0) {
                        route = *it;
                        break;
                    }
            }

            const int k = topo.incidence_index(fired, route);
            const auto& path = topo.routes[route];
            const auto pos = static_cast<std::size_t>(
                std::find(path.begin(), path.end(), fired) - path.begin());
            m[k] -= 1;
            mq[fired] -= 1;
            if (pos + 1 < path.size()) {
                const int k_next = topo.incidence_by_route_[route][pos + 1];
                m[k_next] += 1;
                mq[path[pos + 1]] += 1;
            } else if (choice_rng.next_uniform() < traffic.mu[route] / c) {
                rec.jump(n, te, true, route);
                n[route] -= 1;
            } else {
                const int k_first = topo.incidence_by_route_[route].front();
                m[k_first] += 1;
                mq[path.front()] += 1;
            }
        }
        t = te;
    }

    Trajectory out;
    rec.finalize(out, n);
    return out;
}

ThroughputEstimate simulate_closed_network(const Topology& topo, const VecI& n,
                                           const SimConfig& config) {
    validate_config(config);
    if (n.size() != topo.route_count()) throw ConfigError("document counts must match route count");
    if ((n.array() < 0).any()) throw ConfigError("document counts must be nonnegative");

    CounterRng root(config.seed);
    CounterRng hold_rng = root.split(kStreamHolding);
    CounterRng choice_rng = root.split(kStreamChoice);

    const int routes = topo.route_count();
    const int queues = topo.queue_count();
    VecI m = VecI::Zero(topo.incidence_count());
    VecI mq = VecI::Zero(queues);
    for (int i = 0; i < routes; ++i) {
        m[topo.incidence_by_route_[i].front()] = n[i];
        mq[topo.routes[i].front()] += n[i];
    }

    const double warmup = config.horizon * config.warmup_fraction;
    constexpr int kBatches = 32;
    const double batch_len = (config.horizon - warmup) / kBatches;
    Mat batch_passes = Mat::Zero(kBatches, routes);
    VecI passes = VecI::Zero(routes);

    double t = 0.0;
    while (t < config.horizon) {
        double total = 0.0;
        for (int j = 0; j < queues; ++j)
            if (mq[j] > 0) total += topo.capacities[j];
        if (total <= 0.0) break;
        const double te = t + hold_rng.next_exponential(total);
        if (te >= config.horizon) break;

        double u = choice_rng.next_uniform() * total;
        int fired = -1;
        for (int j = 0; j < queues && fired < 0; ++j) {
            if (mq[j] <= 0) continue;
            if (u < topo.capacities[j]) fired = j;
            u -= topo.capacities[j];
        }
        if (fired < 0)
            for (int j = queues - 1; j >= 0; --j)
                if (mq[j] > 0) {
                    fired = j;
                    break;
                }

        double pick = choice_rng.next_uniform() * static_cast<double>(mq[fired]);
        int route = -1;
        for (int i : topo.routes_at_queue(fired)) {
            const int k = topo.incidence_index(fired, i);
            if (pick < static_cast<double>(m[k])) {
                route = i;
                break;
            }
            pick -= static_cast<double>(m[k]);
        }
        if (route < 0) {
            const auto& at_queue = topo.routes_at_queue(fired);
            for (auto it = at_queue.rbegin(); it != at_queue.rend(); ++it)
                if (m[topo.incidence_index(fired, *it)] > 0) {
                    route = *it;
                    break;
                }
        }

        const auto& path = topo.routes[route];
        const auto pos = static_cast<std::size_t>(
            std::find(path.begin(), path.end(), fired) - path.begin());
        const std::size_t next = (pos + 1) % path.size();
        m[topo.incidence_index(fired, route)] -= 1;
        mq[fired] -= 1;
        m[topo.incidence_by_route_[route][next]] += 1;
        mq[path[next]] += 1;
        if (pos + 1 == path.size() && te >= warmup) {
            passes[route] += 1;
            const int b = std::min(kBatches - 1,
                                   static_cast<int>((te - warmup) / batch_len));
            batch_passes(b, route) += 1.0;
        }
        t = te;
    }

    ThroughputEstimate est;
    est.rate = Vec::Zero(routes);
    est.half_width = Vec::Zero(routes);
    est.passes = passes;
    est.post_warmup_time = config.horizon - warmup;
    for (int i = 0; i < routes; ++i) {
        const Vec rates = batch_passes.col(i) / batch_len;
        const double mean = rates.mean();
        const double var = (rates.array() - mean).square().sum() / (kBatches - 1);
        est.rate[i] = mean;
        est.half_width[i] = 1.96 * std::sqrt(var / kBatches);
    }
    return est;
}

// ---- comparison helpers ---------------------------------------------------

TVReport empirical_tv_distance(const Trajectory& trajectory,
                               const std::function<double(const VecI&)>& exact_pmf,
                               const VecI& box, std::int64_t cap) {
    double states = 1.0;
    for (int i = 0; i < box.size(); ++i) states *= static_cast<double>(box[i] + 1);
    if (states > static_cast<double>(cap))
        throw StateSpaceTooLargeError("comparison box has " + std::to_string(states) +
                                      " states");

    TVReport report;
    double covered_empirical = 0.0;
    double covered_exact = 0.0;
    double abs_diff = 0.0;
    VecI state = VecI::Zero(box.size());
    for (;;) {
        const double q = exact_pmf(state);
        const auto it = trajectory.pmf.find(key_of(state));
        const double p = it != trajectory.pmf.end() ? it->second : 0.0;
        abs_diff += std::abs(p - q);
        covered_empirical += p;
        covered_exact += q;
        int pos = static_cast<int>(box.size()) - 1;
        for (; pos >= 0; --pos) {
            if (++state[pos] <= box[pos]) break;
            state[pos] = 0;
        }
        if (pos < 0) break;
    }
    report.tv_in_box = 0.5 * abs_diff;
    report.outside_empirical = std::max(0.0, 1.0 - covered_empirical);
    report.outside_exact = std::max(0.0, 1.0 - covered_exact);
    return report;
}

std::vector<VecI> sample_conditional_states(const Topology& topo, const VecI& n,
                                            int count, std::uint64_t seed,
                                            std::int64_t enumeration_cap) {
    std::vector<VecI> samples;
    samples.reserve(static_cast<std::size_t>(count));
    CounterRng rng = CounterRng(seed).split(kStreamSampling);

    if (state_space_size(topo, n) <= static_cast<double>(enumeration_cap)) {
        const std::vector<VecI> states = enumerate_states(topo, n, enumeration_cap);
        std::vector<double> weights(states.size());
        double top = -kInf;
        for (std::size_t s = 0; s < states.size(); ++s) {
            weights[s] = log_closed_weight(topo, states[s]);
            top = std::max(top, weights[s]);
        }
        double total = 0.0;
        for (double& w : weights) {
            w = std::exp(w - top);
            total += w;
        }
        std::vector<double> cumulative(weights.size());
        double acc = 0.0;
        for (std::size_t s = 0; s < weights.size(); ++s) {
            acc += weights[s] / total;
            cumulative[s] = acc;
        }
        for (int d = 0; d < count; ++d) {
            const double u = rng.next_uniform();
            const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
            const std::size_t s = std::min(
                static_cast<std::size_t>(it - cumulative.begin()), states.size() - 1);
            samples.push_back(states[s]);
        }
        return samples;
    }

    // Fiber too big to enumerate: sample the closed packet chain on a time
    // grid after a burn-in. Correlated but fine for trend estimates.
    const int routes = topo.route_count();
    VecI m = VecI::Zero(topo.incidence_count());
    VecI mq = VecI::Zero(topo.queue_count());
    for (int i = 0; i < routes; ++i) {
        m[topo.incidence_by_route_[i].front()] = n[i];
        mq[topo.routes[i].front()] += n[i];
    }
    double rate_floor = kInf;
    for (int j = 0; j < topo.queue_count(); ++j)
        rate_floor = std::min(rate_floor, topo.capacities[j]);
    const double docs = static_cast<double>(n.sum());
    const double spacing = 5.0 * docs / rate_floor;
    const double burn_in = 40.0 * spacing;

    double t = 0.0;
    double next_sample = burn_in;
    while (static_cast<int>(samples.size()) < count) {
        double total = 0.0;
        for (int j = 0; j < topo.queue_count(); ++j)
            if (mq[j] > 0) total += topo.capacities[j];
        if (total <= 0.0) {
            samples.assign(static_cast<std::size_t>(count), m);
            break;
        }
        const double te = t + rng.next_exponential(total);
        while (next_sample < te && static_cast<int>(samples.size()) < count) {
            samples.push_back(m);
            next_sample += spacing;
        }

        double u = rng.next_uniform() * total;
        int fired = -1;
        for (int j = 0; j < topo.queue_count() && fired < 0; ++j) {
            if (mq[j] <= 0) continue;
            if (u < topo.capacities[j]) fired = j;
            u -= topo.capacities[j];
        }
        if (fired < 0)
            for (int j = topo.queue_count() - 1; j >= 0; --j)
                if (mq[j] > 0) {
                    fired = j;
                    break;
                }
        double pick = rng.next_uniform() * static_cast<double>(mq[fired]);
        int route = -1;
        for (int i : topo.routes_at_queue(fired)) {
            const int k = topo.incidence_index(fired, i);
            if (pick < static_cast<double>(m[k])) {
                route = i;
                break;
            }
            pick -= static_cast<double>(m[k]);
        }
        if (route < 0) {
            const auto& at_queue = topo.routes_at_queue(fired);
            for (auto it = at_queue.rbegin(); it != at_queue.rend(); ++it)
                if (m[topo.incidence_index(fired, *it)] > 0) {
                    route = *it;
                    break;
                }
        }
        const auto& path = topo.routes[route];
        const auto pos = static_cast<std::size_t>(
            std::find(path.begin(), path.end(), fired) - path.begin());
        const std::size_t next = (pos + 1) % path.size();
        m[topo.incidence_index(fired, route)] -= 1;
        mq[fired] -= 1;
        m[topo.incidence_by_route_[route][next]] += 1;
        mq[path[next]] += 1;
        t = te;
    }
    return samples;
}

}  // namespace spinnet
