#include <gtest/gtest.h>

#include "cases.hpp"

using namespace capopt;

namespace {

ShuntElementModel constant(const FrequencyGrid& g, Complex z) {
    return ShuntElementModel(g, std::vector<Complex>(g.size(), z), "const");
}

/// Two-port series element z between port 1 and port 2.
NetworkModel series_two_port(const FrequencyGrid& g, double r, double l) {
    LumpedBoard b;
    const int a = b.add_node(), c = b.add_node();
    b.add(a, c, r, l);
    b.add(a, 0, 1e6, 0.0);  // keeps the nodal matrix regular
    b.add_port("P1", a);
    b.add_port("P2", c);
    return board_to_network(b, g);
}

}  // namespace

TEST(Lumped, CapacitorReactance) {
    const FrequencyGrid g({159.155e3});
    const auto e = lumped_to_shunt({0.0, 0.0, 1e-6}, g);
    EXPECT_NEAR(e.z[0].real(), 0.0, 1e-15);
    EXPECT_NEAR(e.z[0].imag(), -1.0, 1e-5);
}

TEST(Lumped, RegulatorNearDc) {
    const FrequencyGrid g({0.0, 1.0});
    const auto e = lumped_to_shunt({10e-3, 10e-9, 0.0, RlcTopology::SeriesRlShunt}, g);
    EXPECT_NEAR(std::abs(e.z[1]), 10e-3, 1e-9);
    EXPECT_EQ(e.z[0], Complex(10e-3, 0.0));
    const auto c = lumped_to_shunt({1e-3, 1e-9, 1e-6}, g);
    EXPECT_EQ(c.z[0].real(), kOpenCircuitOhms);
    EXPECT_THROW(lumped_to_shunt({0.0, 0.0, 0.0}, g), ModelError);
    EXPECT_THROW(lumped_to_shunt({-1.0, 0.0, 0.0}, g), ModelError);
}

TEST(Lumped, SeriesResonanceIsMinimum) {
    const auto g = FrequencyGrid::log_spaced(1e5, 1e8, 300);
    const auto e = lumped_to_shunt({10e-3, 1e-9, 1e-6}, g);
    std::size_t best = 0;
    for (std::size_t k = 0; k < g.size(); ++k)
        if (std::abs(e.z[k]) < std::abs(e.z[best])) best = k;
    EXPECT_NEAR(g[best], 1.0 / (kTwoPi * std::sqrt(1e-15)), 0.02 * g[best]);
}

TEST(AlignGrid, PassThroughAndInterpolation) {
    const FrequencyGrid src({1e3, 1e4, 1e5});
    const ShuntElementModel e(src, {Complex(1, 0), Complex(2, 0), Complex(3, 0)}, "x");
    const auto same = align_grid(e, FrequencyGrid({1e3, 1e5}));
    EXPECT_EQ(same.z[0], Complex(1, 0));
    EXPECT_EQ(same.z[1], Complex(3, 0));
    const auto mid = align_grid(e, FrequencyGrid({std::sqrt(1e7)}));
    EXPECT_NEAR(mid.z[0].real(), 1.5, 1e-12);
    EXPECT_THROW(align_grid(e, FrequencyGrid({1e6})), ModelError);
}

TEST(Reduction, IdealCapacitorOnePort) {
    const FrequencyGrid g({1e3});
    const auto s = shunt_to_one_port(lumped_to_shunt({0.0, 0.0, 1e-6}, g), 50.0);
    const auto z = reduce_capacitor_to_shunt(s, "c");
    EXPECT_NEAR(z.z[0].imag(), -159.15494, 1e-4);
}

TEST(Reduction, ShuntThroughOneOhm) {
    const FrequencyGrid g({1e6});
    const auto fixture = shunt_to_two_port(constant(g, Complex(1.0, 0.0)), 50.0);
    EXPECT_NEAR(std::abs(fixture.at(0)(1, 0) - 2.0 / 52.0), 0.0, 1e-15);
    const auto z = reduce_capacitor_to_shunt(fixture, "r");
    EXPECT_NEAR(z.z[0].real(), 1.0, 1e-12);
    EXPECT_NEAR(z.z[0].imag(), 0.0, 1e-12);
}

TEST(Reduction, VendorSeriesRlcRoundTrip) {
    const auto g = FrequencyGrid::log_spaced(1e3, 1e9, 20);
    const auto ref = lumped_to_shunt({10e-3, 0.5e-9, 10e-6}, g);
    const auto back = reduce_capacitor_to_shunt(shunt_to_two_port(ref, 50.0), "c");
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_LT(std::abs(back.z[k] - ref.z[k]) / std::abs(ref.z[k]), 1e-6);
}

TEST(Reduction, Port1ConventionAndClamp) {
    const FrequencyGrid g({1e6});
    Matrix s(2, 2);
    s << reflection(Complex(-1e-3, 2.0), 50.0), 0.0, 0.0, 0.0;
    const NetworkModel m(g, {s}, ParamKind::S, 50.0, {"A", "B"});
    std::vector<std::string> warnings;
    ScopedWarningHandler h([&](const std::string& w) { warnings.push_back(w); });
    const auto z = reduce_capacitor_to_shunt(m, "c", TwoPortConvention::Port1);
    EXPECT_EQ(z.z[0].real(), 0.0);
    EXPECT_NEAR(z.z[0].imag(), 2.0, 1e-12);
    EXPECT_EQ(warnings.size(), 1u);
}

TEST(Attach, ParallelResistors) {
    // Observation port and attachment port tied together through a two-port
    // split of a 10 ohm one-port: the 10 ohm shunt halves the impedance.
    const FrequencyGrid g({1e6});
    LumpedBoard b;
    const int n = b.add_node();
    b.add(n, 0, 10.0, 0.0);
    b.add_port("OBS", n);
    b.add_port("CAP", n);
    // Two ports on one node: S for the pair via nodal solve.
    const auto s = board_to_network(b, g);
    const auto out = attach_shunt(s, 1, constant(g, Complex(10.0, 0.0)));
    EXPECT_NEAR(one_port_impedance(out)[0].real(), 5.0, 1e-12);
}

TEST(Attach, ThroughIsTransparent) {
    const FrequencyGrid g({1e6, 1e8});
    Matrix thru(2, 2);
    thru << 0.0, 1.0, 1.0, 0.0;
    const NetworkModel s(g, {thru, thru}, ParamKind::S, kWorkingReference, {"P1", "P2"});
    const Complex zc(0.02, 0.3);
    const auto out = attach_shunt(s, 1, constant(g, zc));
    for (const auto& z : one_port_impedance(out)) EXPECT_LT(std::abs(z - zc), 1e-14);
}

TEST(Attach, ManyIsOrderIndependentAndEmptyIsIdentity) {
    const auto demo = demo36_setup();
    const auto s = board_to_network(demo.board.board, demo.grid);
    EXPECT_EQ((attach_many(s, {}).at(3) - s.at(3)).norm(), 0.0);
    std::vector<std::pair<std::string, ShuntElementModel>> a;
    for (int k = 0; k < 6; ++k)
        a.emplace_back(demo.board.site_ports[std::size_t(k * 5)],
                       capacitor_element(demo.catalog[std::size_t(k) % demo.catalog.size()], demo.grid));
    auto b = a;
    std::reverse(b.begin(), b.end());
    const auto x = attach_many(s, a), y = attach_many(s, b);
    ASSERT_EQ(x.port_labels(), y.port_labels());
    const auto zx = to_z(x), zy = to_z(y);
    for (std::size_t k = 0; k < x.frequencies(); ++k)
        EXPECT_LT((zx.at(k) - zy.at(k)).norm() / zx.at(k).norm(), 1e-10);
    a.push_back(a.front());
    EXPECT_THROW(attach_many(s, a), ModelError);
}

TEST(Attach, FullDemoBoardMatchesNodalSolve) {
    // Every site populated: compare the observed die impedance against a
    // nodal solve with the capacitors built into the circuit.
    const auto demo = demo36_setup();
    auto s = board_to_network(demo.board.board, demo.grid);
    std::vector<std::pair<std::string, ShuntElementModel>> a;
    LumpedBoard full = demo.board.board;
    full.ports.clear();
    for (std::size_t k = 0; k < demo.board.site_ports.size(); ++k) {
        const auto& cap = demo.catalog[k % demo.catalog.size()];
        a.emplace_back(demo.board.site_ports[k], capacitor_element(cap, demo.grid));
        const int node = demo.board.board.ports[std::size_t(demo.board.board.ports.size() - 36 + k)].second;
        full.add(node, 0, cap.esr, cap.esl, cap.c);
    }
    for (const auto& p : demo.board.board.ports)
        if (p.first == "DIE1" || p.first == "VR") full.add_port(p.first, p.second);
    for (auto& [label, node] : demo.board.board.ports)
        if (label != "DIE1" && label != "VR" && label.rfind("C", 0) != 0) s = open_port(s, label);
    s = attach_many(s, a);
    const auto ours = to_z(s);
    const auto grid = FrequencyGrid(std::vector<double>(demo.grid.begin() + 1, demo.grid.end()));
    const auto ref = to_z(board_to_network(full, grid));
    for (std::size_t k = 0; k < grid.size(); ++k)
        EXPECT_LT((ours.at(k + 1) - ref.at(k)).norm() / ref.at(k).norm(), 1e-7) << grid[k];
}

TEST(Short, SeriesInductorAndResistor) {
    const auto g = FrequencyGrid::log_spaced(1e3, 1e9, 5);
    const auto l = one_port_impedance(short_port(series_two_port(g, 0.0, 1e-9), "P2"));
    const auto r = one_port_impedance(short_port(series_two_port(g, 1.0, 0.0), "P2"));
    for (std::size_t k = 0; k < g.size(); ++k) {
        const Complex zl(0.0, kTwoPi * g[k] * 1e-9);
        // The 1 Mohm regularizing leg sits in parallel.
        EXPECT_LT(std::abs(l[k] - zl * 1e6 / (zl + 1e6)), 1e-9 * std::abs(zl));
        EXPECT_NEAR(r[k].real(), 1e6 / (1e6 + 1.0), 1e-9);
    }
}

TEST(Merge, ParallelBranches) {
    const FrequencyGrid g({1e6});
    LumpedBoard b;
    const int x = b.add_node(), y = b.add_node();
    b.add(x, 0, 50.0, 0.0);
    b.add(y, 0, 50.0, 0.0);
    b.add_port("A", x);
    b.add_port("B", y);
    const auto m = merge_ports(board_to_network(b, g), {"A", "B"}, "AB");
    EXPECT_EQ(m.port_labels(), std::vector<std::string>{"AB"});
    EXPECT_NEAR(one_port_impedance(m)[0].real(), 25.0, 1e-10);
    EXPECT_THROW(merge_ports(board_to_network(b, g), {"A"}, "X"), ModelError);
    EXPECT_THROW(merge_ports(board_to_network(b, g), {"A", "A"}, "X"), ModelError);
}

TEST(Oracle, RandomNetworkSequences) {
    for (std::uint64_t seed = 1000; seed < 1020; ++seed) {
        std::string trace;
        const double err = cases::network_case_error(seed, &trace);
        EXPECT_LT(err, 1e-7) << "seed " << seed << ": " << trace;
    }
}
