#include <gtest/gtest.h>

#include "cases.hpp"

using namespace capopt;

namespace {

CapacitorCatalog catalog_with_srfs(const std::vector<double>& srfs) {
    CapacitorCatalog cat;
    for (std::size_t i = 0; i < srfs.size(); ++i) {
        CatalogEntry e;
        e.name = "K" + std::to_string(i);
        e.srf = srfs[i];
        cat.entries.push_back(e);
    }
    return cat;
}

PortInductanceReport report(const std::vector<std::pair<std::string, double>>& ls) {
    PortInductanceReport r;
    for (const auto& [label, l] : ls) r.entries.push_back({label, l, 1e8});
    std::sort(r.entries.begin(), r.entries.end(), [](auto& a, auto& b) { return a.inductance < b.inductance; });
    return r;
}

/// Smooth bowl with its minimum at a known feasible vector.
double bowl(const QuantityVector& q, const QuantityVector& target) {
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += (q[i] - target[i]) * (q[i] - target[i]) * double(i + 1);
    return 1.0 + s;
}

}  // namespace

TEST(Config, DefaultsFromTypeCount) {
    const auto c = GAConfig{}.resolved(7);
    EXPECT_EQ(c.max_generations, 70);
    EXPECT_EQ(c.population_size, 70);
    EXPECT_EQ(c.elite_count, 2);
    const auto big = GAConfig{}.resolved(15);
    EXPECT_EQ(big.max_generations, 100);
    EXPECT_EQ(big.population_size, 100);
    EXPECT_EQ(big.elite_count, 3);
    const auto small = GAConfig{}.resolved(2);
    EXPECT_EQ(small.max_generations, 20);
    EXPECT_EQ(small.population_size, 40);
    GAConfig bad;
    bad.crossover_fraction = 1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = GAConfig{};
    bad.population_size = 4;
    bad.elite_count = 4;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Feasibility, RepairAndRandomDraws) {
    // Ties go to the lower index.
    QuantityVector q{5, 5, 2};
    detail::repair(q, 7);
    EXPECT_EQ(q, (QuantityVector{2, 3, 2}));
    std::mt19937_64 rng(1);
    std::map<QuantityVector, int> seen;
    for (int k = 0; k < 20000; ++k) {
        const auto v = detail::random_feasible(2, 3, rng);
        ASSERT_LE(total_count(v), 3);
        for (int x : v) ASSERT_GE(x, 0);
        ++seen[v];
    }
    // All 10 vectors with two entries summing to at most 3, roughly uniform.
    EXPECT_EQ(seen.size(), cases::feasible_count(2, 3));
    for (const auto& [v, n] : seen) EXPECT_NEAR(n, 2000, 250);
}

TEST(InitialGuess, SingleTypeAndSymmetricSplit) {
    const TargetImpedanceCurve curve({{1e6, 1e-3}, {1e7, 1e-3}});
    EXPECT_EQ(initial_guess(catalog_with_srfs({3e6}), curve, 9), QuantityVector{9});
    const auto q = initial_guess(catalog_with_srfs({1e6, 1e7}), curve, 10);
    EXPECT_EQ(q, (QuantityVector{5, 5}));
    const auto odd = initial_guess(catalog_with_srfs({1e6, 1e7}), curve, 11);
    EXPECT_EQ(total_count(odd), 11);
    EXPECT_LE(std::abs(odd[0] - odd[1]), 1);
}

TEST(InitialGuess, VotingWalk) {
    // 100 kHz..100 MHz at 100 steps per decade: 301 points. Boundaries sit
    // at the log midpoints sqrt(1*10) MHz and sqrt(10*40) MHz.
    const TargetImpedanceCurve curve({{1e5, 1e-3}, {1e8, 1e-3}});
    const auto cat = catalog_with_srfs({1e6, 10e6, 40e6});
    std::vector<int> votes(3, 0);
    for (int k = 0; k <= 300; ++k) {
        const double lf = 5.0 + 3.0 * k / 300.0;
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (std::abs(std::log10(cat[std::size_t(i)].srf) - lf) < std::abs(std::log10(cat[std::size_t(best)].srf) - lf))
                best = i;
        ++votes[std::size_t(best)];
    }
    const auto q = initial_guess(cat, curve, 301);
    EXPECT_EQ(q, (QuantityVector{votes[0], votes[1], votes[2]}));
}

TEST(Assign, HighSrfToLowInductance) {
    const auto cat = catalog_with_srfs({1e6, 30e6});
    const auto r = report({{"A", 2e-9}, {"B", 1e-9}, {"C", 3e-9}});
    const auto a = assign_ports({1, 1}, cat, r);
    ASSERT_EQ(a.pairs.size(), 2u);
    EXPECT_EQ(a.pairs[0], (std::pair<std::string, std::string>{"B", "K1"}));
    EXPECT_EQ(a.pairs[1], (std::pair<std::string, std::string>{"A", "K0"}));
    EXPECT_EQ(a.unpopulated, std::vector<std::string>{"C"});
    const auto hi = assign_ports({1, 1}, cat, r, AttachOrder::HighSrfToHighL);
    EXPECT_EQ(hi.pairs[0].first, "C");
    const auto none = assign_ports({0, 0}, cat, r);
    EXPECT_TRUE(none.pairs.empty());
    EXPECT_EQ(none.unpopulated.size(), 3u);
    EXPECT_THROW(assign_ports({2, 2}, cat, r), ModelError);
    EXPECT_THROW(assign_ports({1}, cat, r), ModelError);
}

TEST(Assign, FailedPortsLastAndFileRoundTrip) {
    auto r = report({{"A", 2e-9}});
    r.failures.push_back({"Z9", "x"});
    r.failures.push_back({"Z1", "x"});
    const auto a = assign_ports({3}, catalog_with_srfs({1e6}), r);
    EXPECT_EQ(a.pairs[1].first, "Z1");
    EXPECT_EQ(a.pairs[2].first, "Z9");
    std::istringstream in(format_assignment(assign_ports({1}, catalog_with_srfs({1e6}), r)));
    const auto back = parse_assignment(in);
    EXPECT_EQ(back.pairs.size(), 1u);
    EXPECT_EQ(back.unpopulated, (std::vector<std::string>{"Z1", "Z9"}));
    std::istringstream dup("A\tK0\nUNPOPULATED\nA\n");
    EXPECT_THROW(parse_assignment(dup), ParseError);
}

TEST(Optimize, FindsBowlMinimumAndLogsMonotone) {
    const QuantityVector target{3, 0, 5, 1};
    GAConfig cfg;
    cfg.rng_seed = 11;
    const auto r = optimize([&](const QuantityVector& q) { return bowl(q, target); }, 4, 12, {3, 3, 3, 3}, cfg);
    EXPECT_EQ(r.best, target);
    EXPECT_EQ(r.best_score, 1.0);
    EXPECT_EQ(r.log.front().generation, 0);
    for (std::size_t k = 1; k < r.log.size(); ++k) EXPECT_LE(r.log[k].best_score, r.log[k - 1].best_score);
    EXPECT_LE(int(r.log.size()), GAConfig{}.resolved(4).max_generations + 1);
}

TEST(Optimize, SeedDeterminesRunRegardlessOfThreads) {
    const QuantityVector target{2, 2, 2};
    auto obj = [&](const QuantityVector& q) { return bowl(q, target) + 0.01 * q[0] * q[1]; };
    GAConfig a;
    a.rng_seed = 5;
    GAConfig b = a;
    b.jobs = 4;
    const auto ra = optimize(obj, 3, 9, {0, 0, 0}, a);
    const auto rb = optimize(obj, 3, 9, {0, 0, 0}, b);
    EXPECT_EQ(format_convergence_csv(ra.log), format_convergence_csv(rb.log));
    EXPECT_EQ(ra.evaluations, rb.evaluations);
}

TEST(Optimize, StopsOnStall) {
    GAConfig cfg;
    cfg.stall_generations = 5;
    const auto r = optimize([](const QuantityVector&) { return 1.0; }, 3, 5, {1, 1, 1}, cfg);
    EXPECT_EQ(r.log.size(), 6u);
}

TEST(Optimize, ObjectiveErrorsPropagate) {
    GAConfig cfg;
    cfg.jobs = 2;
    EXPECT_THROW(optimize([](const QuantityVector&) -> double { throw ModelError("boom"); }, 2, 3, {0, 0}, cfg),
                 ModelError);
    EXPECT_THROW(optimize([](const QuantityVector&) { return 0.0; }, 2, 3, {0}, cfg), ModelError);
}

TEST(Optimize, InitialVectorIsRepairedAndUsed) {
    std::vector<QuantityVector> calls;
    std::mutex mu;
    GAConfig cfg;
    cfg.max_generations = 1;
    optimize(
        [&](const QuantityVector& q) {
            std::lock_guard lock(mu);
            calls.push_back(q);
            return 0.0;
        },
        2, 4, {5, 1}, cfg);
    EXPECT_EQ(calls.front(), (QuantityVector{3, 1}));
}

TEST(ConvergenceLog, CsvRoundTrip) {
    ConvergenceLog log{{0, 2.5, 3.25, {1, 2}}, {1, 0.1 + 0.2, 1.0 / 3.0, {0, 4}}};
    const std::string text = format_convergence_csv(log);
    EXPECT_EQ(text.substr(0, text.find('\n')), "generation,best_score,mean_score,best_quantities");
    std::istringstream in(text);
    const auto back = parse_convergence_csv(in);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].best_score, log[1].best_score);
    EXPECT_EQ(back[1].mean_score, log[1].mean_score);
    EXPECT_EQ(back[1].best, log[1].best);
}

TEST(Optimize, SmallInstanceGlobalOptimum) {
    ScoreWeights w;
    w.flatness_q = 0.5;
    const auto ctx = cases::small_instance(6, 4, {"C22U", "C1U", "C100N"}, w);
    double best = std::numeric_limits<double>::infinity();
    std::size_t n = 0;
    cases::enumerate_feasible(3, ctx.port_capacity(), [&](const QuantityVector& q) {
        best = std::min(best, attach_and_score(ctx, q));
        ++n;
    });
    EXPECT_EQ(n, cases::feasible_count(3, 6));
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        GAConfig cfg;
        cfg.rng_seed = seed;
        const auto r = run_optimization(ctx, cfg);
        hits += r.ga.best_score <= best * (1.0 + 1e-12);
    }
    EXPECT_GE(hits, 9);
}
