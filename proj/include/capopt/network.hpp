#pragma once

// Multiport composition: shunt elements, port reduction, shorting and
// paralleling ports, lumped-element synthesis and grid alignment.
//
// Every composition works on S-parameters with one common real reference
// impedance. The optimizer keeps its working models at kWorkingReference
// so that milliohm-scale PDN data stays well conditioned.

#include "capopt/touchstone.hpp"

namespace capopt {

inline constexpr double kWorkingReference = 0.1;
inline constexpr double kOpenCircuitOhms = 1e12;

/// Two-terminal element connected from a port terminal to its reference.
struct ShuntElementModel {
    FrequencyGrid grid;
    std::vector<Complex> z;
    std::string label;

    ShuntElementModel() = default;
    ShuntElementModel(FrequencyGrid g, std::vector<Complex> impedance, std::string name)
        : grid(std::move(g)), z(std::move(impedance)), label(std::move(name)) {
        if (z.size() != grid.size()) throw ModelError("shunt element '" + label + "': impedance count != grid size");
    }
};

enum class RlcTopology { SeriesRlcShunt, SeriesRlShunt };

struct LumpedRLC {
    double r = 0.0;
    double l = 0.0;
    double c = 0.0;
    RlcTopology topology = RlcTopology::SeriesRlcShunt;
};

/// z(f) = r + j2πf·l + 1/(j2πf·c). The capacitive term is dropped when c = 0
/// or for the series-RL topology; at DC a capacitor is an open circuit.
inline ShuntElementModel lumped_to_shunt(const LumpedRLC& rlc, const FrequencyGrid& grid, std::string label = "rlc") {
    if (rlc.r < 0.0 || rlc.l < 0.0 || rlc.c < 0.0) throw ModelError("lumped element values must be nonnegative");
    if (rlc.r == 0.0 && rlc.l == 0.0 && rlc.c == 0.0) throw ModelError("lumped element has all values zero");
    const bool with_c = rlc.topology == RlcTopology::SeriesRlcShunt && rlc.c > 0.0;
    std::vector<Complex> z;
    z.reserve(grid.size());
    for (double f : grid) {
        const double w = kTwoPi * f;
        if (f == 0.0 && with_c) {
            z.emplace_back(kOpenCircuitOhms, 0.0);
            continue;
        }
        Complex v(rlc.r, w * rlc.l);
        if (with_c) v += 1.0 / Complex(0.0, w * rlc.c);
        z.push_back(v);
    }
    return ShuntElementModel(grid, std::move(z), std::move(label));
}

/// Linear interpolation of Re/Im against log10(f). Segments that touch a DC
/// point interpolate linearly in f.
inline ShuntElementModel align_grid(const ShuntElementModel& elem, const FrequencyGrid& target) {
    if (elem.grid == target) return elem;
    const auto& src = elem.grid.points();
    if (src.empty()) throw ModelError("align_grid: element '" + elem.label + "' has no data");
    std::vector<Complex> out;
    out.reserve(target.size());
    const double lo = src.front(), hi = src.back();
    for (double f : target) {
        if (f < lo * (1.0 - 1e-12) || f > hi * (1.0 + 1e-12))
            throw ModelError("align_grid: element '" + elem.label + "' covers " + format_sig(lo) + "-" +
                             format_sig(hi) + " Hz but " + format_sig(f) + " Hz is requested");
        auto it = std::lower_bound(src.begin(), src.end(), f);
        if (it != src.end() && *it == f) {
            out.push_back(elem.z[std::size_t(it - src.begin())]);
            continue;
        }
        if (it == src.end()) {
            out.push_back(elem.z.back());
            continue;
        }
        if (it == src.begin()) {
            out.push_back(elem.z.front());
            continue;
        }
        const std::size_t j = std::size_t(it - src.begin());
        const double f0 = src[j - 1], f1 = src[j];
        const double t = f0 == 0.0 ? (f - f0) / (f1 - f0) : std::log10(f / f0) / std::log10(f1 / f0);
        out.push_back(elem.z[j - 1] + t * (elem.z[j] - elem.z[j - 1]));
    }
    return ShuntElementModel(target, std::move(out), elem.label);
}

enum class TwoPortConvention {
    ShuntThrough,  ///< DUT shunted across a through line: z = (Z0/2) S21 / (1 - S21)
    Port1,         ///< driving-point impedance at port 1, port 2 open
};

/// Turns a measured or vendor capacitor model into a shunt element.
/// Negative resistance left by de-embedding noise is clamped to zero.
inline ShuntElementModel reduce_capacitor_to_shunt(const NetworkModel& cap, std::string label = {},
                                                   TwoPortConvention convention = TwoPortConvention::ShuntThrough) {
    if (cap.ports() < 1 || cap.ports() > 2)
        throw ModelError("capacitor model '" + label + "' has " + std::to_string(cap.ports()) + " ports (need 1 or 2)");
    std::vector<Complex> z;
    z.reserve(cap.frequencies());
    if (cap.ports() == 1 || convention == TwoPortConvention::Port1) {
        const NetworkModel zm = to_z(cap);
        for (const auto& m : zm.data()) z.push_back(m(0, 0));
    } else {
        const NetworkModel sm = cap.kind() == ParamKind::S ? cap : to_s(cap, 50.0);
        const double z0 = sm.ref_impedance();
        for (const auto& m : sm.data()) {
            const Complex s21 = m(1, 0);
            const Complex den = 1.0 - s21;
            z.push_back(std::abs(den) < 1e-15 ? Complex(kOpenCircuitOhms, 0.0) : 0.5 * z0 * s21 / den);
        }
    }
    double worst = 0.0;
    for (auto& v : z) {
        if (v.real() < 0.0) {
            worst = std::min(worst, v.real());
            v.real(0.0);
        }
    }
    if (worst < -1e-9)
        warn("capacitor model '" + label + "': negative resistance down to " + format_sig(worst) +
             " ohm after reduction, clamped to 0");
    return ShuntElementModel(cap.grid(), std::move(z), std::move(label));
}

/// Reflection coefficient of an impedance against a real reference.
inline Complex reflection(Complex z, double z0) { return (z - z0) / (z + z0); }

namespace detail {

inline void require_s(const NetworkModel& m, const char* op) {
    if (m.kind() != ParamKind::S) throw ModelError(std::string(op) + ": model must be S-parameters");
}

/// Terminates ports `terminated` with reflections gammas[k][i] and returns
/// the model seen at the remaining ports (in their original order):
///   S' = S_RR + S_RP G (I - S_PP G)^-1 S_PR.
inline NetworkModel terminate(const NetworkModel& m, const std::vector<std::size_t>& terminated,
                              const std::vector<std::vector<Complex>>& gammas) {
    const std::size_t n = m.ports();
    std::vector<char> is_term(n, 0);
    for (auto p : terminated) is_term[p] = 1;
    std::vector<Eigen::Index> keep, term(terminated.begin(), terminated.end());
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i)
        if (!is_term[i]) {
            keep.push_back(Eigen::Index(i));
            labels.push_back(m.port_labels()[i]);
        }
    const auto nt = Eigen::Index(term.size());
    std::vector<Matrix> out;
    out.reserve(m.frequencies());
    for (std::size_t k = 0; k < m.frequencies(); ++k) {
        const Matrix& s = m.at(k);
        Matrix s_rr = s(keep, keep), s_rp = s(keep, term), s_pr = s(term, keep), s_pp = s(term, term);
        Eigen::VectorXcd g(nt);
        for (Eigen::Index i = 0; i < nt; ++i) g(i) = gammas[k][std::size_t(i)];
        Matrix a = Matrix::Identity(nt, nt) - s_pp * g.asDiagonal();
        auto lu = checked_lu(a, 1.0, m.grid()[k], "port termination system");
        out.push_back(s_rr + s_rp * g.asDiagonal() * lu.solve(s_pr));
    }
    return NetworkModel(m.grid(), std::move(out), ParamKind::S, m.ref_impedance(), std::move(labels));
}

inline std::vector<Complex> gammas_for(const ShuntElementModel& elem, const FrequencyGrid& grid, double z0) {
    const ShuntElementModel aligned = align_grid(elem, grid);
    std::vector<Complex> g;
    g.reserve(grid.size());
    for (const auto& z : aligned.z) g.push_back(reflection(z, z0));
    return g;
}

}  // namespace detail

/// Connects `elem` from port `port_index` to its reference and removes that
/// port, giving an (N-1)-port model.
inline NetworkModel attach_shunt(const NetworkModel& pdn, std::size_t port_index, const ShuntElementModel& elem) {
    detail::require_s(pdn, "attach_shunt");
    if (port_index >= pdn.ports())
        throw ModelError("attach_shunt: port index " + std::to_string(port_index) + " out of range");
    const auto g = detail::gammas_for(elem, pdn.grid(), pdn.ref_impedance());
    std::vector<std::vector<Complex>> gammas(pdn.frequencies());
    for (std::size_t k = 0; k < g.size(); ++k) gammas[k] = {g[k]};
    return detail::terminate(pdn, {port_index}, gammas);
}

/// Attaches several shunt elements at once. The reduction is a single block
/// solve, so the result does not depend on the order of `assignments`.
inline NetworkModel attach_many(const NetworkModel& pdn,
                                const std::vector<std::pair<std::string, ShuntElementModel>>& assignments) {
    detail::require_s(pdn, "attach_many");
    if (assignments.empty()) return pdn;
    std::set<std::string> seen;
    std::vector<std::pair<std::size_t, const ShuntElementModel*>> items;
    for (const auto& [label, elem] : assignments) {
        if (!seen.insert(label).second) throw ModelError("attach_many: duplicate port label '" + label + "'");
        items.emplace_back(pdn.port_index(label), &elem);
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::size_t> ports;
    std::vector<std::vector<Complex>> per_elem;
    for (const auto& [idx, elem] : items) {
        ports.push_back(idx);
        per_elem.push_back(detail::gammas_for(*elem, pdn.grid(), pdn.ref_impedance()));
    }
    std::vector<std::vector<Complex>> gammas(pdn.frequencies(), std::vector<Complex>(ports.size()));
    for (std::size_t k = 0; k < pdn.frequencies(); ++k)
        for (std::size_t i = 0; i < ports.size(); ++i) gammas[k][i] = per_elem[i][k];
    return detail::terminate(pdn, ports, gammas);
}

/// Terminates a port in a short circuit (reflection -1) and removes it.
inline NetworkModel short_port(const NetworkModel& pdn, std::string_view port_label) {
    detail::require_s(pdn, "short_port");
    const std::size_t idx = pdn.port_index(port_label);
    std::vector<std::vector<Complex>> gammas(pdn.frequencies(), std::vector<Complex>{Complex(-1.0, 0.0)});
    return detail::terminate(pdn, {idx}, gammas);
}

/// Leaves a port open (reflection +1) and removes it.
inline NetworkModel open_port(const NetworkModel& pdn, std::string_view port_label) {
    detail::require_s(pdn, "open_port");
    const std::size_t idx = pdn.port_index(port_label);
    std::vector<std::vector<Complex>> gammas(pdn.frequencies(), std::vector<Complex>{Complex(1.0, 0.0)});
    return detail::terminate(pdn, {idx}, gammas);
}

/// Hard-parallels the named ports into a single port called `merged_label`,
/// placed where the first listed port was. Internally the ports are tied to
/// an ideal (k+1)-way junction, S_J = (2/(k+1)) 11^T - I, which is the
/// S-domain form of summing the admittance rows and columns.
inline NetworkModel merge_ports(const NetworkModel& pdn, const std::vector<std::string>& labels,
                                const std::string& merged_label) {
    detail::require_s(pdn, "merge_ports");
    if (labels.size() < 2) throw ModelError("merge_ports: need at least two ports to merge");
    std::vector<std::size_t> merged;
    std::set<std::string> seen;
    for (const auto& l : labels) {
        if (!seen.insert(l).second) throw ModelError("merge_ports: duplicate port label '" + l + "'");
        merged.push_back(pdn.port_index(l));
    }
    const std::size_t n = pdn.ports();
    const std::size_t k = merged.size();
    std::vector<char> is_merged(n, 0);
    for (auto p : merged) is_merged[p] = 1;
    for (std::size_t i = 0; i < n; ++i)
        if (!is_merged[i] && pdn.port_labels()[i] == merged_label)
            throw ModelError("merge_ports: label '" + merged_label + "' already used by another port");

    // External ports of the combined network, in output order; the junction's
    // common port has combined index n + k.
    std::vector<Eigen::Index> ext;
    std::vector<std::string> out_labels;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == merged.front()) {
            ext.push_back(Eigen::Index(n + k));
            out_labels.push_back(merged_label);
        } else if (!is_merged[i]) {
            ext.push_back(Eigen::Index(i));
            out_labels.push_back(pdn.port_labels()[i]);
        }
    }
    // Internal ports: the merged network ports then junction ports 0..k-1.
    std::vector<Eigen::Index> internal;
    for (auto p : merged) internal.push_back(Eigen::Index(p));
    for (std::size_t j = 0; j < k; ++j) internal.push_back(Eigen::Index(n + j));
    const auto ni = Eigen::Index(internal.size());
    // Connection permutation: a_internal = C b_internal.
    Eigen::MatrixXd conn = Eigen::MatrixXd::Zero(ni, ni);
    for (std::size_t j = 0; j < k; ++j) {
        conn(Eigen::Index(j), Eigen::Index(k + j)) = 1.0;
        conn(Eigen::Index(k + j), Eigen::Index(j)) = 1.0;
    }
    const Matrix c = conn.cast<Complex>();

    const auto total = Eigen::Index(n + k + 1);
    const double junction_diag = 2.0 / double(k + 1) - 1.0, junction_off = 2.0 / double(k + 1);
    std::vector<Matrix> out;
    out.reserve(pdn.frequencies());
    for (std::size_t f = 0; f < pdn.frequencies(); ++f) {
        Matrix s = Matrix::Zero(total, total);
        s.topLeftCorner(Eigen::Index(n), Eigen::Index(n)) = pdn.at(f);
        for (Eigen::Index i = Eigen::Index(n); i < total; ++i)
            for (Eigen::Index j = Eigen::Index(n); j < total; ++j) s(i, j) = i == j ? junction_diag : junction_off;
        Matrix s_ee = s(ext, ext), s_ei = s(ext, internal), s_ie = s(internal, ext), s_ii = s(internal, internal);
        Matrix a = Matrix::Identity(ni, ni) - s_ii * c;
        auto lu = detail::checked_lu(a, 1.0, pdn.grid()[f], "port merge system");
        out.push_back(s_ee + s_ei * c * lu.solve(s_ie));
    }
    return NetworkModel(pdn.grid(), std::move(out), ParamKind::S, pdn.ref_impedance(), std::move(out_labels));
}

/// Input impedance of a one-port S model.
inline std::vector<Complex> one_port_impedance(const NetworkModel& m) {
    if (m.ports() != 1) throw ModelError("one_port_impedance: model has " + std::to_string(m.ports()) + " ports");
    std::vector<Complex> z;
    z.reserve(m.frequencies());
    if (m.kind() == ParamKind::S) {
        for (std::size_t k = 0; k < m.frequencies(); ++k) {
            const Complex s = m.at(k)(0, 0);
            const Complex den = 1.0 - s;
            if (std::abs(den) <= 1e-12) throw ConversionError("one-port is an open circuit", m.grid()[k]);
            z.push_back(m.ref_impedance() * (1.0 + s) / den);
        }
    } else {
        for (const auto& v : to_z(m).data()) z.push_back(v(0, 0));
    }
    return z;
}

/// One-port S model of a shunt element.
inline NetworkModel shunt_to_one_port(const ShuntElementModel& elem, double z0, std::string label = "P1") {
    std::vector<Matrix> data;
    for (const auto& z : elem.z) data.push_back(Matrix::Constant(1, 1, reflection(z, z0)));
    return NetworkModel(elem.grid, std::move(data), ParamKind::S, z0, {std::move(label)});
}

/// Two-port shunt-through fixture holding `elem` (the inverse of the
/// ShuntThrough reduction); S11 = S22 = -Z0/(2z+Z0), S21 = S12 = 2z/(2z+Z0).
inline NetworkModel shunt_to_two_port(const ShuntElementModel& elem, double z0 = 50.0) {
    std::vector<Matrix> data;
    for (const auto& z : elem.z) {
        Matrix m(2, 2);
        const Complex den = 2.0 * z + z0;
        m(0, 0) = m(1, 1) = -z0 / den;
        m(1, 0) = m(0, 1) = 2.0 * z / den;
        data.push_back(m);
    }
    return NetworkModel(elem.grid, std::move(data), ParamKind::S, z0, {"P1", "P2"});
}

}  // namespace capopt
