#pragma once

// Lumped RLC boards solved by nodal analysis, for generating synthetic
// multiport PDN models, and the bundled demonstration boards.

#include <random>

#include "capopt/pipeline.hpp"

namespace capopt {

/// Series R-L-C branch between two nodes (node 0 is ground). c = 0 means
/// no capacitor in the branch.
struct Branch {
    int a = 0;
    int b = 0;
    double r = 0.0;
    double l = 0.0;
    double c = 0.0;

    Complex admittance(double f) const {
        const double w = kTwoPi * f;
        if (c > 0.0 && f == 0.0) return {0.0, 0.0};
        Complex z(r, w * l);
        if (c > 0.0) z += 1.0 / Complex(0.0, w * c);
        if (std::abs(z) == 0.0) throw ModelError("lumped branch with zero impedance");
        return 1.0 / z;
    }
};

struct LumpedBoard {
    int nodes = 0;  ///< non-ground nodes, numbered 1..nodes
    std::vector<Branch> branches;
    std::vector<std::pair<std::string, int>> ports;  ///< (label, node), referenced to ground

    int add_node() { return ++nodes; }
    void add(int a, int b, double r, double l, double c = 0.0) { branches.push_back({a, b, r, l, c}); }
    void add_port(std::string label, int node) { ports.emplace_back(std::move(label), node); }

    Eigen::MatrixXcd nodal_admittance(double f) const {
        Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(nodes, nodes);
        for (const auto& br : branches) {
            const Complex v = br.admittance(f);
            const int a = br.a - 1, b = br.b - 1;
            if (a >= 0) y(a, a) += v;
            if (b >= 0) y(b, b) += v;
            if (a >= 0 && b >= 0) {
                y(a, b) -= v;
                y(b, a) -= v;
            }
        }
        return y;
    }
};

/// S-parameters of the board's ports: with every port terminated in z0,
/// S = (2/z0) P (Y + P^T P / z0)^-1 P^T - I.
inline NetworkModel board_to_network(const LumpedBoard& board, const FrequencyGrid& grid,
                                     double z0 = kWorkingReference) {
    const auto np = Eigen::Index(board.ports.size());
    std::vector<std::string> labels;
    for (const auto& p : board.ports) labels.push_back(p.first);
    Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(np, board.nodes);
    for (Eigen::Index i = 0; i < np; ++i) p(i, board.ports[std::size_t(i)].second - 1) = 1.0;
    std::vector<Matrix> data;
    data.reserve(grid.size());
    for (double f : grid) {
        Eigen::MatrixXcd y = board.nodal_admittance(f) + p.transpose() * p / z0;
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y);
        Matrix s = (2.0 / z0) * p * lu.solve(Eigen::MatrixXcd(p.transpose())) - Matrix::Identity(np, np);
        data.push_back(std::move(s));
    }
    return NetworkModel(grid, std::move(data), ParamKind::S, z0, std::move(labels));
}

/// A capacitor as a series RLC shunt element.
struct CapacitorSpec {
    std::string name;
    double c;
    double esr;
    double esl;
};

inline ShuntElementModel capacitor_element(const CapacitorSpec& spec, const FrequencyGrid& grid) {
    return lumped_to_shunt(LumpedRLC{spec.esr, spec.esl, spec.c, RlcTopology::SeriesRlcShunt}, grid, spec.name);
}

/// Demonstration board: a 6x6 power-plane mesh with one capacitor site per
/// mesh node, a regulator port at a corner and a package path to four die
/// bumps. Site mounting inductance grows with distance from the package.
struct DemoBoard {
    LumpedBoard board;
    std::vector<std::string> die_ports;
    std::string vr_port = "VR";
    std::vector<std::string> site_ports;
};

inline DemoBoard demo_board_36() {
    DemoBoard d;
    auto& b = d.board;
    constexpr int n = 6;
    int plane[n][n];
    for (auto& row : plane)
        for (int& node : row) node = b.add_node();
    const double seg_r = 0.1e-3, seg_l = 10e-12;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i + 1 < n) b.add(plane[i][j], plane[i + 1][j], seg_r, seg_l);
            if (j + 1 < n) b.add(plane[i][j], plane[i][j + 1], seg_r, seg_l);
        }
    // Regulator at corner (0,0).
    const int vr = b.add_node();
    b.add(vr, plane[0][0], 0.3e-3, 0.5e-9);
    b.add_port(d.vr_port, vr);
    // Package from the mesh center to the die.
    const int ball = b.add_node();
    b.add(ball, plane[2][2], 0.2e-3, 15e-12);
    b.add(ball, plane[3][3], 0.2e-3, 15e-12);
    b.add(ball, plane[2][3], 0.2e-3, 15e-12);
    b.add(ball, plane[3][2], 0.2e-3, 15e-12);
    for (int k = 0; k < 4; ++k) {
        const int bump = b.add_node();
        b.add(ball, bump, 0.8e-3, 280e-12);
        d.die_ports.push_back("DIE" + std::to_string(k + 1));
        b.add_port(d.die_ports.back(), bump);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double dist = std::hypot(i - 2.5, j - 2.5);
            const int site = b.add_node();
            b.add(site, plane[i][j], 0.1e-3, 120e-12 + 60e-12 * dist);
            char label[8];
            std::snprintf(label, sizeof label, "C%02d", i * n + j + 1);
            d.site_ports.emplace_back(label);
            b.add_port(label, site);
        }
    return d;
}

/// Large randomized board for throughput checks: a square plane mesh with
/// capacitor sites on the first n_sites mesh nodes, a regulator and a single
/// die port (n_sites + 2 ports in total).
inline DemoBoard random_board(int n_sites, std::uint64_t seed) {
    if (n_sites < 1) throw ModelError("random_board: need at least one site");
    const int n = int(std::ceil(std::sqrt(double(n_sites))));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(0.8, 1.25);
    DemoBoard d;
    auto& b = d.board;
    std::vector<int> plane(std::size_t(n * n));
    for (int& node : plane) node = b.add_node();
    auto at = [&](int i, int j) { return plane[std::size_t(i * n + j)]; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i + 1 < n) b.add(at(i, j), at(i + 1, j), 0.1e-3 * jitter(rng), 10e-12 * jitter(rng));
            if (j + 1 < n) b.add(at(i, j), at(i, j + 1), 0.1e-3 * jitter(rng), 10e-12 * jitter(rng));
        }
    const int vr = b.add_node();
    b.add(vr, at(0, 0), 0.3e-3, 0.5e-9);
    b.add_port(d.vr_port, vr);
    const int die = b.add_node();
    b.add(die, at(n / 2, n / 2), 0.2e-3, 60e-12);
    d.die_ports.push_back("DIE");
    b.add_port("DIE", die);
    for (int k = 0; k < n_sites; ++k) {
        const int i = k / n, j = k % n;
        const int site = b.add_node();
        b.add(site, at(i, j), 0.1e-3, (100e-12 + 20e-12 * std::hypot(i - n / 2, j - n / 2)) * jitter(rng));
        d.site_ports.push_back("S" + std::to_string(k + 1));
        b.add_port(d.site_ports.back(), site);
    }
    return d;
}

/// Everything needed to run the 36-site demonstration: board, grid
/// (DC plus 1 kHz to 500 MHz at 30 points per decade), capacitor catalog,
/// regulator (10 mOhm + 10 nH), die capacitance and target.
struct DemoSetup {
    DemoBoard board;
    FrequencyGrid grid;
    std::vector<CapacitorSpec> catalog;
    LumpedRLC vr;
    LumpedRLC die;
    TargetImpedanceCurve target;
};

inline DemoSetup demo36_setup() {
    DemoSetup s;
    s.board = demo_board_36();
    s.grid = FrequencyGrid::log_spaced(1e3, 5e8, 30, true);
    s.catalog = {
        {"C100U", 100e-6, 3e-3, 1.0e-9},     {"C22U", 22e-6, 2e-3, 0.45e-9},   {"C10U", 10e-6, 2e-3, 0.35e-9},
        {"C4U7R", 4.7e-6, 30e-3, 0.35e-9},   {"C1U", 1e-6, 5e-3, 0.3e-9},      {"C470NR", 470e-9, 60e-3, 0.3e-9},
        {"C100N", 100e-9, 15e-3, 0.25e-9},
    };
    s.vr = LumpedRLC{10e-3, 10e-9, 0.0, RlcTopology::SeriesRlShunt};
    s.die = LumpedRLC{0.2e-3, 0.0, 200e-9, RlcTopology::SeriesRlcShunt};
    s.target = TargetImpedanceCurve({{1e4, 2e-3}, {2e7, 2e-3}, {1e8, 10e-3}});
    return s;
}

inline BoardInputs demo36_inputs(const DemoSetup& s, const ScoreWeights& weights) {
    BoardInputs in;
    in.pdn = board_to_network(s.board.board, s.grid);
    in.observation = s.board.die_ports;
    in.vr = RegulatorModel{s.board.vr_port, lumped_to_shunt(s.vr, s.grid, "regulator"), 0.0};
    in.die = lumped_to_shunt(s.die, s.grid, "die");
    for (const auto& c : s.catalog) in.capacitors.push_back(capacitor_element(c, s.grid));
    in.target = s.target;
    in.weights = weights;
    return in;
}

}  // namespace capopt
