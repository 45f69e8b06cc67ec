#pragma once

// Randomized circuits and reference solutions shared by the unit and
// acceptance tests.

#include <regex>

#include "capopt/capopt.hpp"
#include "nodal_oracle.hpp"

namespace cases {

using namespace capopt;

// ---------------------------------------------------------------------------
// Network algebra against nodal analysis

/// Builds a random RLC network (2..6 nodes, 2..4 ports), applies a random
/// sequence of attach / attach_many / short / open / merge operations to its
/// S model and returns the largest relative Frobenius error of the remaining
/// Z matrix against direct nodal analysis.
inline double network_case_error(std::uint64_t seed, std::string* trace = nullptr) {
    std::mt19937_64 rng(seed);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    const int n_ports = pick(2, 4);
    const int n_nodes = pick(std::max(n_ports, 2), 6);

    oracle::Circuit ref(n_nodes);
    LumpedBoard board;
    for (int i = 0; i < n_nodes; ++i) board.add_node();
    auto branch = [&](int a, int b, oracle::Rlc e) {
        ref.add_branch(a, b, e);
        board.add(a + 1, b + 1, e.r, e.l, e.c);
    };
    // Every node reaches ground through a spanning tree and node 0's R+L leg.
    branch(0, -1, oracle::random_rlc(rng, false));
    for (int i = 1; i < n_nodes; ++i) branch(i, pick(0, i - 1), oracle::random_rlc(rng, true));
    for (int k = pick(0, n_nodes); k > 0; --k) {
        const int a = pick(0, n_nodes - 1);
        const int b = pick(-1, n_nodes - 1);
        if (a != b) branch(a, b, oracle::random_rlc(rng, true));
    }
    std::vector<int> nodes(static_cast<std::size_t>(n_nodes));
    std::iota(nodes.begin(), nodes.end(), 0);
    std::shuffle(nodes.begin(), nodes.end(), rng);
    for (int p = 0; p < n_ports; ++p) {
        const std::string label = "P" + std::to_string(p + 1);
        ref.add_port(label, nodes[std::size_t(p)]);
        board.add_port(label, nodes[std::size_t(p)] + 1);
    }

    const FrequencyGrid grid = FrequencyGrid::log_spaced(1e3, 1e9, 10);
    NetworkModel s = board_to_network(board, grid);
    auto element = [&](const oracle::Rlc& e) {
        return lumped_to_shunt(
            LumpedRLC{e.r, e.l, e.c, e.c > 0.0 ? RlcTopology::SeriesRlcShunt : RlcTopology::SeriesRlShunt}, grid);
    };
    auto label_at = [&](std::size_t i) { return ref.ports()[i].first; };

    int merges = 0;
    while (ref.ports().size() > 1) {
        const int live = int(ref.ports().size());
        const int op = pick(0, live >= 3 ? 5 : 4);
        if (op == 5 && live >= 3) {
            std::vector<std::size_t> idx(static_cast<std::size_t>(live));
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), rng);
            const auto e1 = oracle::random_rlc(rng, true), e2 = oracle::random_rlc(rng, true);
            const std::string a = label_at(idx[0]), b = label_at(idx[1]);
            s = attach_many(s, {{b, element(e2)}, {a, element(e1)}});
            ref.attach(a, e1);
            ref.attach(b, e2);
            if (trace) *trace += "attach_many " + a + "," + b + "; ";
        } else if (op == 4) {
            std::vector<std::size_t> idx(static_cast<std::size_t>(live));
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), rng);
            const int k = pick(2, live);
            std::vector<std::string> labels;
            for (int j = 0; j < k; ++j) labels.push_back(label_at(idx[std::size_t(j)]));
            const std::string merged = "M" + std::to_string(++merges);
            s = merge_ports(s, labels, merged);
            ref.merge(labels, merged);
            if (trace) *trace += "merge " + std::to_string(k) + "; ";
        } else {
            const std::string l = label_at(std::size_t(pick(0, live - 1)));
            if (op <= 1) {
                const auto e = oracle::random_rlc(rng, true);
                s = attach_shunt(s, s.port_index(l), element(e));
                ref.attach(l, e);
                if (trace) *trace += "attach " + l + "; ";
            } else if (op == 2) {
                s = short_port(s, l);
                ref.short_to_ground(l);
                if (trace) *trace += "short " + l + "; ";
            } else {
                s = open_port(s, l);
                ref.open(l);
                if (trace) *trace += "open " + l + "; ";
            }
        }
        if (pick(0, 3) == 0) break;
    }

    // Port order must agree before comparing matrices.
    std::vector<std::string> ref_labels;
    for (const auto& p : ref.ports()) ref_labels.push_back(p.first);
    if (ref_labels != s.port_labels()) return std::numeric_limits<double>::infinity();

    const NetworkModel z = to_z(s);
    double worst = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const Eigen::MatrixXcd zr = ref.z_matrix(grid[k]);
        worst = std::max(worst, (z.at(k) - zr).norm() / zr.norm());
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Loop inductance on tree boards

struct InductanceCase {
    NetworkModel pdn;
    std::vector<std::string> candidates;
    std::map<std::string, double> truth;  ///< series L from each port to the observation node
};

/// Observation node O with a regulator leg to ground; hubs hang off O and
/// ports off hubs (or O directly). Every path is series R+L, so shorting O
/// leaves Z_kk = ΣR + jωΣL exactly. Resistances are drawn from [0, 1] Ω with
/// both ends included.
inline InductanceCase inductance_case(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto resistance = [&] {
        const int k = pick(0, 5);
        return k == 0 ? 0.0 : k == 1 ? 1.0 : u(rng);
    };
    auto inductance = [&] { return 0.1e-9 * std::pow(50.0, u(rng)); };

    InductanceCase c;
    LumpedBoard b;
    const int obs = b.add_node();
    b.add(obs, 0, 1e-3, 1e-9);
    b.add_port("OBS", obs);
    std::vector<std::pair<int, double>> hubs{{obs, 0.0}};
    for (int h = pick(0, 3); h > 0; --h) {
        const int node = b.add_node();
        const double l = inductance();
        b.add(node, obs, resistance(), l);
        hubs.emplace_back(node, l);
    }
    const int n = pick(3, 12);
    for (int p = 0; p < n; ++p) {
        const auto& [hub, hub_l] = hubs[std::size_t(pick(0, int(hubs.size()) - 1))];
        const int node = b.add_node();
        const double l = inductance();
        b.add(node, hub, resistance(), l);
        const std::string label = "S" + std::to_string(p + 1);
        b.add_port(label, node);
        c.candidates.push_back(label);
        c.truth[label] = hub_l + l;
    }
    c.pdn = board_to_network(b, FrequencyGrid::log_spaced(1e5, 5e8, 30));
    return c;
}

// ---------------------------------------------------------------------------
// PDN-like one-port impedances for the transient tests

/// Regulator R+L in parallel with bulk and ceramic series-RLC branches, seen
/// through a package R+L and shunted by a lumped die R+C.
inline std::vector<Complex> pdn_impedance(const std::vector<double>& freqs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto log_uniform = [&](double lo, double hi) { return lo * std::pow(hi / lo, u(rng)); };
    const double vr_r = log_uniform(2e-3, 10e-3), vr_l = log_uniform(1e-9, 10e-9);
    std::vector<CapacitorSpec> caps;
    const int n_caps = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int k = 0; k < n_caps; ++k)
        caps.push_back({"", log_uniform(1e-6, 100e-6), log_uniform(1e-3, 30e-3), log_uniform(0.2e-9, 2e-9)});
    const double pkg_r = log_uniform(0.1e-3, 2e-3), pkg_l = log_uniform(10e-12, 200e-12);
    const double die_r = log_uniform(0.1e-3, 2e-3), die_c = log_uniform(50e-9, 1e-6);

    std::vector<Complex> z;
    for (double f : freqs) {
        const Complex s(0.0, kTwoPi * f);
        Complex y = 1.0 / (vr_r + s * vr_l);
        if (f > 0.0)
            for (const auto& c : caps) y += 1.0 / (c.esr + s * c.esl + 1.0 / (s * c.c));
        const Complex board = 1.0 / y + pkg_r + s * pkg_l;
        Complex ydie = f > 0.0 ? 1.0 / (die_r + 1.0 / (s * die_c)) : Complex(0.0);
        z.push_back(1.0 / (1.0 / board + ydie));
    }
    return z;
}

inline std::vector<double> transient_grid() { return FrequencyGrid::log_spaced(1e3, 1e9, 30, true).points(); }

// ---------------------------------------------------------------------------
// PWL simulation oracle

/// (time, amperes) breakpoints parsed from a SPICE PWL source line.
inline std::vector<std::pair<double, double>> parse_pwl(const std::string& line) {
    static const std::regex body(R"(PWL\(([^)]*)\))");
    std::smatch m;
    if (!std::regex_search(line, m, body)) throw std::runtime_error("no PWL(...) in line");
    std::istringstream in(m[1].str());
    std::vector<std::pair<double, double>> pts;
    double t, i;
    while (in >> t >> i) pts.emplace_back(t, i);
    return pts;
}

/// Drives the rational model with the piecewise-linear current and returns
/// the extreme voltages. Each pole state x' = p x + r i(t) is advanced
/// exactly over linear current segments; the sample grid is the union of the
/// breakpoints and a uniform grid of spacing `dt`. At breakpoints both
/// one-sided values of the e·di/dt term are considered. The current before
/// the first breakpoint and after the last one is held constant; the run
/// continues `tail` seconds past the last breakpoint.
inline std::pair<double, double> simulate_pwl(const RationalModel& m, const std::vector<std::pair<double, double>>& pwl,
                                              double dt, double tail) {
    const std::size_t np = m.poles.size();
    std::vector<Complex> x(np);
    // Start at steady state for the initial current.
    const double i0 = pwl.front().second;
    for (std::size_t k = 0; k < np; ++k) x[k] = -m.residues[k] * i0 / m.poles[k];

    std::vector<double> times;
    for (const auto& p : pwl) times.push_back(p.first);
    const double t_end = pwl.back().first + tail;
    for (double t = pwl.front().first; t < t_end; t += dt) times.push_back(t);
    times.push_back(t_end);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());

    std::size_t seg = 0;  // pwl[seg] .. pwl[seg+1] holds the current time
    auto current = [&](double t, std::size_t s) {
        if (s + 1 >= pwl.size()) return std::pair{pwl.back().second, 0.0};
        const auto& [ta, ia] = pwl[s];
        const auto& [tb, ib] = pwl[s + 1];
        const double slope = (ib - ia) / (tb - ta);
        return std::pair{ia + slope * (t - ta), slope};
    };
    double v_max = -std::numeric_limits<double>::infinity(), v_min = -v_max;
    auto observe = [&](double i, double slope) {
        Complex v(m.d * i + m.e * slope, 0.0);
        for (std::size_t k = 0; k < np; ++k) v += x[k];
        v_max = std::max(v_max, v.real());
        v_min = std::min(v_min, v.real());
    };
    observe(i0, 0.0);
    double t_prev = times.front();
    for (std::size_t n = 1; n < times.size(); ++n) {
        const double t = times[n];
        while (seg + 1 < pwl.size() && pwl[seg + 1].first <= t_prev) ++seg;
        const auto [ia, slope] = current(t_prev, seg);
        const double h = t - t_prev;
        for (std::size_t k = 0; k < np; ++k) {
            const Complex p = m.poles[k], ph = p * h, e = std::exp(ph);
            // ∫0^h e^{p(h-τ)} (ia + slope τ) dτ
            const Complex phi1 = std::abs(ph) < 1e-6 ? h * (1.0 + ph / 2.0) : (e - 1.0) / p;
            const Complex phi2 =
                std::abs(ph) < 1e-4 ? h * h * (0.5 + ph / 6.0) : (e - 1.0 - ph) / (p * p);
            x[k] = e * x[k] + m.residues[k] * (ia * phi1 + slope * phi2);
        }
        const double i_now = ia + slope * h;
        observe(i_now, slope);
        std::size_t next = seg;
        while (next + 1 < pwl.size() && pwl[next + 1].first <= t) ++next;
        if (next != seg) observe(i_now, current(t, next).second);
        t_prev = t;
    }
    return {v_max, v_min};
}

/// Fits a circuit, runs the reverse pulse and re-simulates the exported
/// train. Returns (reverse-pulse vpp, simulated vpp).
struct PulseCheck {
    RationalModel model;
    WorstCaseResult worst;
    double simulated_vpp = 0.0;
};

inline PulseCheck pulse_check(const RationalModel& m, double rise_time) {
    PulseCheck c;
    c.model = m;
    const StepResponse sr = step_response(m, rise_time);
    c.worst = reverse_pulse(sr);
    double fastest = rise_time;
    for (const auto& p : m.poles)
        if (p.imag() > 0.0) fastest = std::min(fastest, kTwoPi / p.imag());
    const auto pwl = parse_pwl(export_pwl(c.worst));
    const auto [hi, lo] = simulate_pwl(m, pwl, fastest / 64.0, sr.horizon);
    c.simulated_vpp = hi - lo;
    return c;
}

// ---------------------------------------------------------------------------
// Small optimization instances

/// Number of vectors with n nonnegative entries summing to at most capacity.
inline std::size_t feasible_count(std::size_t n, int capacity) {
    double c = 1.0;
    for (std::size_t k = 1; k <= n; ++k) c = c * double(capacity + int(k)) / double(k);
    return std::size_t(std::llround(c));
}

inline void enumerate_feasible(std::size_t n, int capacity, const std::function<void(const QuantityVector&)>& fn) {
    QuantityVector q(n, 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
        if (i == n) {
            fn(q);
            return;
        }
        for (int v = 0; v <= left; ++v) {
            q[i] = v;
            rec(i + 1, left - v);
        }
        q[i] = 0;
    };
    rec(0, capacity);
}

/// Evaluation context on a small random board with a subset of the demo
/// capacitor catalog.
inline EvaluationContext small_instance(int sites, std::uint64_t board_seed, const std::vector<std::string>& caps,
                                        const ScoreWeights& weights) {
    const DemoSetup demo = demo36_setup();
    const DemoBoard board = random_board(sites, board_seed);
    BoardInputs in;
    in.pdn = board_to_network(board.board, demo.grid);
    in.observation = board.die_ports;
    in.vr = RegulatorModel{board.vr_port, lumped_to_shunt(demo.vr, demo.grid, "regulator"), 0.0};
    in.die = lumped_to_shunt(demo.die, demo.grid, "die");
    for (const auto& name : caps)
        for (const auto& c : demo.catalog)
            if (c.name == name) in.capacitors.push_back(capacitor_element(c, demo.grid));
    in.target = demo.target;
    in.weights = weights;
    return prepare(in);
}

}  // namespace cases
