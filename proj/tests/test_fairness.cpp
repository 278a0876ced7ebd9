#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "generators.hpp"
#include "spinnet/fairness.hpp"
#include "spinnet/productform.hpp"

using namespace spinnet;

namespace {

Topology linear_network() {
    Vec capacities(2);
    capacities << 1.0, 1.0;
    return make_topology(capacities, {{0, 1}, {0}, {1}});
}

Vec vec(std::initializer_list<double> values) {
    Vec out(static_cast<int>(values.size()));
    int k = 0;
    for (double v : values) out[k++] = v;
    return out;
}

// Independent minimizer of sum_i p_i log(p_i C / r_i) over the simplex:
// exponentiated gradient with a decaying step, no closed form used.
double simplex_min_numeric(double capacity, const Vec& rates) {
    const int dim = static_cast<int>(rates.size());
    Vec p = Vec::Constant(dim, 1.0 / dim);
    for (int iter = 0; iter < 4000; ++iter) {
        const double eta = 0.5 / (1.0 + iter / 200.0);
        Vec next(dim);
        for (int i = 0; i < dim; ++i)
            next[i] = p[i] * std::exp(-eta * std::log(p[i] * capacity / rates[i]));
        p = next / next.sum();
    }
    double value = 0.0;
    for (int i = 0; i < dim; ++i)
        if (p[i] > 0.0) value += p[i] * std::log(p[i] * capacity / rates[i]);
    return value;
}

}  // namespace

TEST_CASE("fair shares of the linear network") {
    const Topology topo = linear_network();
    const PFSolution pf = solve_pf(topo, vec({1, 1, 1}));
    CHECK(pf.lambda[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-8));
    CHECK(pf.lambda[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-8));
    CHECK(pf.lambda[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-8));
    CHECK(pf.queue_prices[0] == doctest::Approx(1.5).epsilon(1e-8));
    CHECK(pf.queue_prices[1] == doctest::Approx(1.5).epsilon(1e-8));
    CHECK(pf.kkt_residual <= 1e-8);

    const KKTReport report = kkt_residuals(topo, vec({1, 1, 1}), pf.lambda, pf.queue_prices);
    CHECK(report.max_residual() <= 1e-8);
}

TEST_CASE("single queue shares are proportional to counts") {
    Vec cap(1);
    cap << 3.0;
    const Topology queue = make_topology(cap, {{0}, {0}, {0}});
    const Vec n = vec({2.0, 0.5, 1.5});
    const PFSolution pf = solve_pf(queue, n);
    for (int i = 0; i < 3; ++i)
        CHECK(pf.lambda[i] == doctest::Approx(3.0 * n[i] / n.sum()).epsilon(1e-9));
    CHECK(pf.queue_prices[0] == doctest::Approx(n.sum() / 3.0).epsilon(1e-9));
}

TEST_CASE("inactive constraints get zero price") {
    Vec caps(2);
    caps << 1.0, 2.0;
    const Topology topo = make_topology(caps, {{0}, {0, 1}});
    const PFSolution pf = solve_pf(topo, vec({1, 1}));
    CHECK(pf.lambda[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(pf.lambda[1] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(pf.queue_prices[0] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(pf.queue_prices[1] == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(saturated_queues(topo, pf) == std::vector<int>{0});
}

TEST_CASE("empty routes stay at zero") {
    const Topology topo = linear_network();
    const PFSolution pf = solve_pf(topo, vec({0, 2, 0}));
    CHECK(pf.lambda[0] == 0.0);
    CHECK(pf.lambda[1] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(pf.lambda[2] == 0.0);
}

TEST_CASE("solver properties on random instances") {
    CounterRng rng(90);
    for (int trial = 0; trial < 60; ++trial) {
        CounterRng stream = rng.split(trial);
        const Topology topo = testgen::random_topology(stream, 4, 5);
        const Vec n = testgen::random_positive_counts(stream, topo.route_count(), 5.0);
        const PFSolution pf = solve_pf(topo, n);
        CHECK(pf.kkt_residual <= 1e-8);

        // feasibility is enforced through the exit residual, so overshoot is
        // bounded by the solver tolerance rather than machine precision
        const Vec loads = queue_loads(topo, pf.lambda);
        CHECK((topo.capacities - loads).minCoeff() >= -2e-8);
        CHECK(pf.queue_prices.minCoeff() >= 0.0);

        // scale invariance
        for (double h : {2.0, 7.0, 100.0}) {
            const PFSolution scaled = solve_pf(topo, h * n);
            CHECK((scaled.lambda - pf.lambda).cwiseAbs().maxCoeff() <= 1e-8);
        }
    }
}

TEST_CASE("iteration starvation is reported") {
    PFOptions opts;
    opts.max_iters = 1;
    opts.tol = 1e-12;
    CHECK_THROWS_AS(solve_pf(linear_network(), vec({1, 1, 1}), opts), DidNotConvergeError);
}

TEST_CASE("packet rate value and gradient") {
    const Topology topo = linear_network();
    const Vec w = vec({0.15, 0.25, 0.25});
    const Vec m = vec({0.5, 1.0, 0.5, 1.0});

    // direct evaluation of sum m_ji log(m_ji C_j / (m_j w_i))
    double expected = 0.0;
    expected += 0.5 * std::log(0.5 / (1.5 * 0.15));
    expected += 1.0 * std::log(1.0 / (1.5 * 0.25));
    expected += 0.5 * std::log(0.5 / (1.5 * 0.15));
    expected += 1.0 * std::log(1.0 / (1.5 * 0.25));
    CHECK(packet_state_rate(topo, w, m) == doctest::Approx(expected).epsilon(1e-12));

    // zero entries contribute nothing
    CHECK(packet_state_rate(topo, w, vec({0, 1, 0, 1}))
          == doctest::Approx(2.0 * std::log(1.0 / 0.25)).epsilon(1e-12));

    const Vec grad = packet_state_rate_gradient(topo, w, m);
    for (int k = 0; k < 4; ++k) {
        Vec up = m, down = m;
        up[k] += 1e-6;
        down[k] -= 1e-6;
        const double numeric =
            (packet_state_rate(topo, w, up) - packet_state_rate(topo, w, down)) / 2e-6;
        CHECK(grad[k] == doctest::Approx(numeric).epsilon(1e-5));
    }
}

TEST_CASE("packet rate is convex") {
    CounterRng rng(91);
    int triples = 0;
    while (triples < 10000) {
        CounterRng stream = rng.split(triples);
        const Topology topo = testgen::random_topology(stream, 3, 4);
        Vec w(topo.route_count());
        for (int i = 0; i < w.size(); ++i) w[i] = 0.2 + stream.next_uniform();
        for (int rep = 0; rep < 20 && triples < 10000; ++rep, ++triples) {
            Vec a(topo.incidence_count()), b(topo.incidence_count());
            for (int k = 0; k < a.size(); ++k) {
                a[k] = 0.01 + 4.0 * stream.next_uniform();
                b[k] = 0.01 + 4.0 * stream.next_uniform();
            }
            const double mid = packet_state_rate(topo, w, 0.5 * (a + b));
            const double chord =
                0.5 * (packet_state_rate(topo, w, a) + packet_state_rate(topo, w, b));
            CHECK(mid <= chord + 1e-10);
        }
    }
}

TEST_CASE("queue term closed forms") {
    const Vec weights = vec({0.3, 0.7});
    const Vec slice = vec({2.0, 1.0});
    const double direct = 2.0 * std::log(2.0 * 1.5 / (3.0 * 0.3)) +
                          1.0 * std::log(1.0 * 1.5 / (3.0 * 0.7));
    CHECK(rate_queue_term(1.5, weights, slice) == doctest::Approx(direct).epsilon(1e-12));

    CounterRng rng(92);
    for (int trial = 0; trial < 50; ++trial) {
        CounterRng stream = rng.split(trial);
        const int dim = 2 + static_cast<int>(stream.next_below(3));
        const double capacity = 0.5 + 2.0 * stream.next_uniform();
        Vec rates(dim);
        for (int i = 0; i < dim; ++i) rates[i] = 0.1 + stream.next_uniform();

        const SplitOptimum opt = rate_min_split(capacity, rates);
        CHECK(opt.value == doctest::Approx(std::log(capacity / rates.sum())).epsilon(1e-12));
        CHECK(opt.split.sum() == doctest::Approx(1.0).epsilon(1e-12));
        // optimal split follows the rates
        for (int i = 0; i < dim; ++i)
            CHECK(opt.split[i] == doctest::Approx(rates[i] / rates.sum()).epsilon(1e-12));
        // and the value agrees with an independent numeric minimization
        CHECK(simplex_min_numeric(capacity, rates) == doctest::Approx(opt.value).epsilon(1e-8));
        // which is also what the queue term gives at the optimal split
        CHECK(rate_queue_term(capacity, rates, opt.split) ==
              doctest::Approx(opt.value).epsilon(1e-10));
    }
}

TEST_CASE("kl decomposition matches the packet rate") {
    CounterRng rng(93);
    for (int trial = 0; trial < 60; ++trial) {
        CounterRng stream = rng.split(trial);
        const Topology topo = testgen::random_topology(stream, 3, 4);
        Vec w(topo.route_count()), m(topo.incidence_count());
        for (int i = 0; i < w.size(); ++i) w[i] = 0.2 + stream.next_uniform();
        for (int k = 0; k < m.size(); ++k) m[k] = 0.05 + 3.0 * stream.next_uniform();
        const KLDecomposition kl = kl_decompose(topo, w, m);
        CHECK(kl.total() == doctest::Approx(packet_state_rate(topo, w, m)).epsilon(1e-10));
        CHECK(kl.kl_terms.minCoeff() >= -1e-12);  // KL terms are nonnegative
    }
}

TEST_CASE("duality of the document rate") {
    const Topology topo = linear_network();
    const Vec w = vec({0.15, 0.25, 0.25});
    const Vec n = vec({1, 1, 1});
    const double dual = doc_count_rate_dual(topo, w, n);
    double expected = std::log((1.0 / 3.0) / 0.15) + 2.0 * std::log((2.0 / 3.0) / 0.25);
    CHECK(dual == doctest::Approx(expected).epsilon(1e-8));

    const PrimalRate primal = doc_count_rate_primal(topo, w, n);
    CHECK(primal.value == doctest::Approx(dual).epsilon(1e-6));
    CHECK(primal.minimizer[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(primal.minimizer[1] == doctest::Approx(1.0).epsilon(1e-6));

    CounterRng rng(94);
    for (int trial = 0; trial < 40; ++trial) {
        CounterRng stream = rng.split(trial);
        const Topology random = testgen::random_topology(stream, 4, 5);
        const Vec counts = testgen::random_positive_counts(stream, random.route_count(), 5.0);
        const TrafficProfile traffic = testgen::random_stable_traffic(stream, random);
        const double d = doc_count_rate_dual(random, traffic.rho(), counts);
        const PrimalRate p = doc_count_rate_primal(random, traffic.rho(), counts);
        CHECK(std::abs(p.value - d) <= 1e-6);
        // the minimizer lies in the fiber
        const Vec sums = route_totals(random, p.minimizer);
        CHECK((sums - counts).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("manifold point of the linear network") {
    const Topology topo = linear_network();
    const ManifoldPoint point = manifold_point(topo, vec({1, 1, 1}));
    CHECK(point.packets[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(point.packets[1] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(point.packets[2] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(point.packets[3] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(point.saturated == std::vector<int>{0, 1});

    CHECK(manifold_distance(topo, vec({1, 1, 1}), point.packets) <= 1e-8);
    CHECK(manifold_distance(topo, vec({1, 1, 1}), vec({1, 1, 0, 1})) ==
          doctest::Approx(0.5).epsilon(1e-6));
    CHECK(manifold_distance(topo, vec({1, 1, 1}), vec({0, 1, 1, 1})) ==
          doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("manifold membership on random instances") {
    CounterRng rng(95);
    for (int trial = 0; trial < 40; ++trial) {
        CounterRng stream = rng.split(trial);
        const Topology topo = testgen::random_topology(stream, 3, 4);
        const Vec n = testgen::random_positive_counts(stream, topo.route_count(), 4.0);
        const ManifoldPoint point = manifold_point(topo, n);
        CHECK(point.packets.minCoeff() >= -1e-9);
        const Vec sums = route_totals(topo, point.packets);
        CHECK((sums - n).cwiseAbs().maxCoeff() <= 1e-7);
        CHECK(manifold_distance(topo, n, point.packets) <= 1e-7);

        // the manifold scales linearly with the counts
        const ManifoldPoint doubled = manifold_point(topo, 2.0 * n);
        CHECK((doubled.packets - 2.0 * point.packets).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("collapse margin against a line scan") {
    const Topology topo = linear_network();
    const Vec w = vec({0.15, 0.25, 0.25});
    const Vec n = vec({1, 1, 1});

    CHECK(collapse_margin(topo, w, n, 0.0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::isinf(collapse_margin(topo, w, n, 0.75)));

    // the fiber is one-dimensional: m(t) = (t, 1, 1-t, 1), distance |t - 1/2|
    const auto beta_at = [&](double t) {
        return packet_state_rate(topo, w, vec({t, 1.0, 1.0 - t, 1.0}));
    };
    for (double eps : {0.1, 0.25, 0.4}) {
        double best_feasible = std::numeric_limits<double>::infinity();
        double best_any = std::numeric_limits<double>::infinity();
        for (int g = 0; g <= 100000; ++g) {
            const double t = static_cast<double>(g) / 100000.0;
            const double value = beta_at(t);
            best_any = std::min(best_any, value);
            if (std::abs(t - 0.5) >= eps) best_feasible = std::min(best_feasible, value);
        }
        const double margin = collapse_margin(topo, w, n, eps);
        CHECK(margin == doctest::Approx(best_feasible - best_any).epsilon(1e-4));
    }
}
