#pragma once

// Integer-coded genetic algorithm over capacitor quantities, the SRF voting
// initial guess, and the SRF-to-inductance port assignment.

#include <atomic>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "capopt/analysis.hpp"
#include "capopt/scoring.hpp"

namespace capopt {

/// Count of each capacitor type, in catalog order.
using QuantityVector = std::vector<int>;

inline int total_count(const QuantityVector& q) {
    int s = 0;
    for (int v : q) s += v;
    return s;
}

inline std::string format_quantities(const QuantityVector& q, char sep = ' ') {
    std::string s;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (i) s += sep;
        s += std::to_string(q[i]);
    }
    return s;
}

enum class AttachOrder { HighSrfToLowL, HighSrfToHighL };

struct GAConfig {
    // Zero means "derive from the number of capacitor types".
    int max_generations = 0;
    int population_size = 0;
    double crossover_fraction = 0.75;
    int elite_count = 0;
    double function_tolerance = 1e-3;
    int stall_generations = 15;
    std::uint64_t rng_seed = 1;
    AttachOrder attach_order = AttachOrder::HighSrfToLowL;
    int jobs = 1;

    /// Copy with the type-count dependent defaults filled in:
    /// generations min(10T, 100), population min(max(10T, 40), 100),
    /// elites max(floor(0.2T), 2).
    GAConfig resolved(std::size_t n_types) const {
        GAConfig c = *this;
        const int t = int(n_types);
        if (c.max_generations <= 0) c.max_generations = std::min(10 * t, 100);
        if (c.population_size <= 0) c.population_size = std::min(std::max(10 * t, 40), 100);
        if (c.elite_count <= 0) c.elite_count = std::max(int(std::floor(0.2 * t)), 2);
        if (c.jobs <= 0) c.jobs = 1;
        return c;
    }

    void validate() const {
        if (!(crossover_fraction > 0.0 && crossover_fraction < 1.0))
            throw ConfigError("crossover_fraction must be in (0, 1)");
        if (!(function_tolerance > 0.0)) throw ConfigError("function_tolerance must be positive");
        if (stall_generations < 1) throw ConfigError("stall_generations must be at least 1");
        if (population_size > 0 && elite_count >= population_size)
            throw ConfigError("elite_count must be smaller than population_size");
        if (population_size > 0 && population_size < 2) throw ConfigError("population_size must be at least 2");
    }
};

// ---------------------------------------------------------------------------
// Assignment

struct Assignment {
    std::vector<std::pair<std::string, std::string>> pairs;  ///< (port, capacitor)
    std::vector<std::string> unpopulated;
};

/// "port<TAB>capacitor" lines, then "UNPOPULATED" and one port per line.
inline std::string format_assignment(const Assignment& a) {
    std::string out;
    for (const auto& [port, cap] : a.pairs) out += port + '\t' + cap + '\n';
    out += "UNPOPULATED\n";
    for (const auto& p : a.unpopulated) out += p + '\n';
    return out;
}

inline Assignment parse_assignment(std::istream& in) {
    Assignment a;
    std::string raw;
    std::size_t line = 0;
    bool unpop = false;
    std::set<std::string> seen;
    while (std::getline(in, raw)) {
        ++line;
        std::string_view s = trim(raw);
        if (s.empty() || s.front() == '#') continue;
        if (s == "UNPOPULATED") {
            unpop = true;
            continue;
        }
        const auto tok = split_ws(s);
        std::string port;
        if (unpop) {
            if (tok.size() != 1) throw ParseError("expected a single port label", line);
            port = std::string(tok[0]);
            a.unpopulated.push_back(port);
        } else {
            if (tok.size() != 2) throw ParseError("expected 'port<TAB>capacitor'", line);
            port = std::string(tok[0]);
            a.pairs.emplace_back(port, std::string(tok[1]));
        }
        if (!seen.insert(port).second) throw ParseError("port '" + port + "' listed twice", line);
    }
    return a;
}

inline Assignment read_assignment_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open assignment file '" + path.string() + "'");
    try {
        return parse_assignment(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

/// Capacitor instances (highest SRF first, ties in catalog order) paired
/// with ports in inductance order: ascending by default, descending for
/// HighSrfToHighL. Ports whose inductance could not be measured are used
/// last in either order.
inline Assignment assign_ports(const QuantityVector& q, const CapacitorCatalog& catalog,
                               const PortInductanceReport& inductance,
                               AttachOrder order = AttachOrder::HighSrfToLowL) {
    if (q.size() != catalog.size())
        throw ModelError("quantity vector has " + std::to_string(q.size()) + " entries for " +
                         std::to_string(catalog.size()) + " capacitor types");
    for (int v : q)
        if (v < 0) throw ModelError("negative capacitor quantity");
    std::vector<std::string> ports;
    for (const auto& e : inductance.entries) ports.push_back(e.label);
    if (order == AttachOrder::HighSrfToHighL) std::reverse(ports.begin(), ports.end());
    std::vector<std::string> failed;
    for (const auto& f : inductance.failures) failed.push_back(f.label);
    std::sort(failed.begin(), failed.end());
    ports.insert(ports.end(), failed.begin(), failed.end());

    const int total = total_count(q);
    if (std::size_t(total) > ports.size())
        throw ModelError("quantities sum to " + std::to_string(total) + " but only " + std::to_string(ports.size()) +
                         " capacitor ports exist");

    std::vector<std::size_t> types(catalog.size());
    for (std::size_t i = 0; i < types.size(); ++i) types[i] = i;
    std::stable_sort(types.begin(), types.end(),
                     [&](std::size_t a, std::size_t b) { return catalog[a].srf > catalog[b].srf; });
    Assignment a;
    std::size_t next = 0;
    for (auto t : types)
        for (int k = 0; k < q[t]; ++k) a.pairs.emplace_back(ports[next++], catalog[t].name);
    for (; next < ports.size(); ++next) a.unpopulated.push_back(ports[next]);
    return a;
}

// ---------------------------------------------------------------------------
// Initial guess

/// Walks the target band at 100 log steps per decade, giving each step's vote
/// to the capacitor whose SRF is nearest in log frequency, then splits
/// n_ports in proportion to the votes (largest remainder).
inline QuantityVector initial_guess(const CapacitorCatalog& catalog, const TargetImpedanceCurve& curve, int n_ports) {
    if (catalog.empty()) throw ModelError("initial_guess: empty capacitor catalog");
    if (n_ports < 1) throw ModelError("initial_guess: need at least one port");
    const double f0 = curve.f_min(), f1 = curve.f_max();
    const double decades = std::log10(f1 / f0);
    const auto steps = std::size_t(std::max(1.0, std::round(decades * 100.0)));
    std::vector<std::size_t> votes(catalog.size(), 0);
    for (std::size_t k = 0; k <= steps; ++k) {
        const double lf = std::log10(f0) + decades * double(k) / double(steps);
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < catalog.size(); ++i) {
            const double d = std::abs(std::log10(catalog[i].srf) - lf);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        ++votes[best];
    }
    const double total = double(steps + 1);
    QuantityVector q(catalog.size(), 0);
    std::vector<std::pair<double, std::size_t>> rem;
    int assigned = 0;
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        const double exact = double(votes[i]) * n_ports / total;
        q[i] = int(std::floor(exact));
        assigned += q[i];
        rem.emplace_back(exact - q[i], i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n_ports; ++k, ++assigned) ++q[rem[k % rem.size()].second];
    return q;
}

// ---------------------------------------------------------------------------
// Genetic algorithm

struct GenerationRecord {
    int generation = 0;
    double best_score = 0.0;
    double mean_score = 0.0;
    QuantityVector best;
};

using ConvergenceLog = std::vector<GenerationRecord>;

/// CSV "generation,best_score,mean_score,best_quantities" with the
/// quantities separated by ';'.
inline std::string format_convergence_csv(const ConvergenceLog& log) {
    std::string out = "generation,best_score,mean_score,best_quantities\n";
    for (const auto& r : log)
        out += std::to_string(r.generation) + ',' + format_exact(r.best_score) + ',' + format_exact(r.mean_score) +
               ',' + format_quantities(r.best, ';') + '\n';
    return out;
}

inline ConvergenceLog parse_convergence_csv(std::istream& in) {
    ConvergenceLog log;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (line == 1 || trim(raw).empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(raw);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 4) throw ParseError("expected 4 fields", line);
        GenerationRecord r;
        r.generation = std::stoi(f[0]);
        if (!parse_double(f[1], r.best_score) || !parse_double(f[2], r.mean_score))
            throw ParseError("invalid score", line);
        std::stringstream qs(f[3]);
        for (std::string cell; std::getline(qs, cell, ';');) r.best.push_back(std::stoi(cell));
        log.push_back(std::move(r));
    }
    return log;
}

using Objective = std::function<double(const QuantityVector&)>;

struct OptimizeResult {
    QuantityVector best;
    double best_score = 0.0;
    ConvergenceLog log;
    std::size_t evaluations = 0;  ///< distinct vectors scored
};

namespace detail {

/// Decrements the largest count (lowest index on ties) until the total fits.
inline void repair(QuantityVector& q, int capacity) {
    int total = total_count(q);
    while (total > capacity) {
        auto it = std::max_element(q.begin(), q.end());
        --*it;
        --total;
    }
}

/// Uniform draw from all vectors with Σ q ≤ capacity (stars and bars).
inline QuantityVector random_feasible(std::size_t n, int capacity, std::mt19937_64& rng) {
    std::vector<int> slots(std::size_t(capacity) + n);
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = int(i);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, slots.size() - 1);
        std::swap(slots[i], slots[pick(rng)]);
    }
    std::vector<int> bars(slots.begin(), slots.begin() + std::ptrdiff_t(n));
    std::sort(bars.begin(), bars.end());
    QuantityVector q(n);
    int prev = -1;
    for (std::size_t i = 0; i < n; ++i) {
        q[i] = bars[i] - prev - 1;
        prev = bars[i];
    }
    return q;
}

}  // namespace detail

/// Minimizes `objective` over quantity vectors with Σ q ≤ capacity.
///
/// Each generation keeps the elites, fills crossover_fraction of the rest
/// with uniform-crossover children of tournament winners and the remainder
/// with mutated copies (each gene reset with probability 1/N, at least one
/// gene per child). Children are repaired to feasibility, and a child that
/// duplicates a member of the new generation is mutated again. Scores are
/// memoized and evaluated on `jobs` threads; results are gathered by index
/// so the run depends only on the seed.
inline OptimizeResult optimize(const Objective& objective, std::size_t n_types, int capacity,
                               const QuantityVector& seed_vector, const GAConfig& config_in,
                               const std::function<void(const GenerationRecord&)>& progress = {}) {
    if (n_types == 0) throw ModelError("optimize: no capacitor types");
    if (capacity < 0) throw ModelError("optimize: negative port capacity");
    config_in.validate();
    const GAConfig cfg = config_in.resolved(n_types);
    cfg.validate();
    std::mt19937_64 rng(cfg.rng_seed);

    std::map<QuantityVector, double> memo;
    OptimizeResult result;

    auto evaluate = [&](const std::vector<QuantityVector>& pop) {
        std::vector<QuantityVector> pending;
        std::set<QuantityVector> queued;
        for (const auto& q : pop)
            if (!memo.count(q) && queued.insert(q).second) pending.push_back(q);
        std::vector<double> scores(pending.size());
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(pending.size());
        auto worker = [&] {
            for (std::size_t i; (i = next.fetch_add(1)) < pending.size();) {
                try {
                    scores[i] = objective(pending[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        const int threads = std::min<int>(cfg.jobs, int(pending.size()));
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        for (std::size_t i = 0; i < pending.size(); ++i) {
            if (errors[i]) std::rethrow_exception(errors[i]);
            memo.emplace(pending[i], scores[i]);
        }
        result.evaluations += pending.size();
        std::vector<double> out;
        out.reserve(pop.size());
        for (const auto& q : pop) out.push_back(memo.at(q));
        return out;
    };

    QuantityVector start = seed_vector;
    if (start.size() != n_types) throw ModelError("optimize: initial vector has the wrong length");
    detail::repair(start, capacity);
    std::vector<QuantityVector> pop{start};
    while (int(pop.size()) < cfg.population_size) pop.push_back(detail::random_feasible(n_types, capacity, rng));

    auto record = [&](int gen, const std::vector<double>& scores) {
        std::size_t best = 0;
        double sum = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            sum += scores[i];
            if (scores[i] < scores[best]) best = i;
        }
        GenerationRecord r{gen, scores[best], sum / double(scores.size()), pop[best]};
        if (!result.log.empty() && !(r.best_score < result.log.back().best_score)) {
            r.best_score = result.log.back().best_score;
            r.best = result.log.back().best;
        }
        result.log.push_back(r);
        if (progress) progress(r);
    };

    std::vector<double> scores = evaluate(pop);
    record(0, scores);

    const auto n_pop = std::size_t(cfg.population_size);
    const auto n_elite = std::size_t(cfg.elite_count);
    const auto n_cross = std::size_t(std::lround(cfg.crossover_fraction * double(n_pop - n_elite)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> gene_dist(0, n_types - 1);
    std::uniform_int_distribution<std::size_t> member(0, n_pop - 1);

    for (int gen = 1; gen <= cfg.max_generations; ++gen) {
        std::vector<std::size_t> rank(pop.size());
        for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = i;
        std::stable_sort(rank.begin(), rank.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
        auto tournament = [&]() -> const QuantityVector& {
            const std::size_t a = member(rng), b = member(rng);
            return scores[b] < scores[a] || (scores[b] == scores[a] && b < a) ? pop[b] : pop[a];
        };

        // A reset gene draws uniformly from the counts that keep the child
        // feasible given its other genes.
        auto mutate = [&](QuantityVector& child) {
            auto reset = [&](std::size_t g) {
                const int room = capacity - (total_count(child) - child[g]);
                child[g] = std::uniform_int_distribution<int>(0, std::max(room, 0))(rng);
            };
            bool changed = false;
            for (std::size_t g = 0; g < n_types; ++g) {
                if (unit(rng) < 1.0 / double(n_types)) {
                    reset(g);
                    changed = true;
                }
            }
            if (!changed) reset(gene_dist(rng));
            detail::repair(child, capacity);
        };
        // Children already present in the new generation are mutated again
        // (a bounded number of times) so the population keeps its spread.
        std::vector<QuantityVector> next;
        std::set<QuantityVector> present;
        next.reserve(n_pop);
        auto admit = [&](QuantityVector child) {
            for (int attempt = 0; attempt < 8 && present.count(child); ++attempt) mutate(child);
            present.insert(child);
            next.push_back(std::move(child));
        };
        for (std::size_t i = 0; i < n_elite; ++i) {
            present.insert(pop[rank[i]]);
            next.push_back(pop[rank[i]]);
        }
        for (std::size_t i = 0; i < n_cross; ++i) {
            const QuantityVector& p1 = tournament();
            const QuantityVector& p2 = tournament();
            QuantityVector child(n_types);
            for (std::size_t g = 0; g < n_types; ++g) child[g] = unit(rng) < 0.5 ? p1[g] : p2[g];
            detail::repair(child, capacity);
            admit(std::move(child));
        }
        while (next.size() < n_pop) {
            QuantityVector child = tournament();
            mutate(child);
            admit(std::move(child));
        }
        pop = std::move(next);
        scores = evaluate(pop);
        record(gen, scores);

        const auto w = std::size_t(cfg.stall_generations);
        if (result.log.size() > w) {
            const double before = result.log[result.log.size() - 1 - w].best_score;
            const double now = result.log.back().best_score;
            const double rel = (before - now) / std::max(std::abs(before), 1e-300);
            if (rel < cfg.function_tolerance) break;
        }
    }

    result.best = result.log.back().best;
    result.best_score = result.log.back().best_score;
    return result;
}

}  // namespace capopt
