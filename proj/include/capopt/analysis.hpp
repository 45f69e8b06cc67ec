#pragma once

// Board and component analyzers: per-port loop inductance, capacitor series
// resonance, and resonance/anti-resonance detection on |Z(f)|.

#include "capopt/network.hpp"

namespace capopt {

// ---------------------------------------------------------------------------
// Loop inductance

struct PortInductance {
    std::string label;
    double inductance = 0.0;    // H
    double extraction_hz = 0.0;
};

struct PortInductanceFailure {
    std::string label;
    std::string reason;
};

/// Loop inductance per candidate port, sorted ascending (ties by label).
struct PortInductanceReport {
    std::vector<PortInductance> entries;
    std::vector<PortInductanceFailure> failures;

    /// Ports in attachment-preference order: measured ports by ascending
    /// inductance, then failed ports by label.
    std::vector<std::string> ordered_labels() const {
        std::vector<std::string> out;
        for (const auto& e : entries) out.push_back(e.label);
        std::vector<std::string> failed;
        for (const auto& f : failures) failed.push_back(f.label);
        std::sort(failed.begin(), failed.end());
        out.insert(out.end(), failed.begin(), failed.end());
        return out;
    }
};

/// Shorts the observation port and reads L = Im(Z_kk) / (2πf) for each
/// candidate port, with all other ports open.
///
/// The extraction frequency is the highest frequency where the port is
/// clearly inductive (Im Z > 0 and Im Z > 3|Re Z|). Ports that never satisfy
/// that fall back to the highest frequency with Im Z > 0, with a warning;
/// ports with Im Z <= 0 everywhere are reported as failures.
inline PortInductanceReport loop_inductance(const NetworkModel& pdn, std::string_view observation_label,
                                            const std::vector<std::string>& candidate_labels) {
    const NetworkModel s = pdn.kind() == ParamKind::S ? pdn : to_s(pdn, kWorkingReference);
    const NetworkModel shorted = short_port(s, observation_label);
    std::vector<Eigen::Index> cols;
    for (const auto& l : candidate_labels) {
        if (l == observation_label) throw ModelError("loop_inductance: observation port listed as a candidate");
        cols.push_back(Eigen::Index(shorted.port_index(l)));
    }
    const std::size_t nc = cols.size();
    const auto n = Eigen::Index(shorted.ports());
    const Matrix eye = Matrix::Identity(n, n);

    enum class State { Open, Strong, Fallback };
    std::vector<State> state(nc, State::Open);
    std::vector<double> value(nc, 0.0), at_hz(nc, 0.0);
    std::size_t unresolved = nc;

    for (std::size_t kk = shorted.frequencies(); kk-- > 0 && unresolved > 0;) {
        const double f = shorted.grid()[kk];
        if (f <= 0.0) break;
        const Matrix& sm = shorted.at(kk);
        Eigen::PartialPivLU<Matrix> lu(eye - sm);
        if (!(lu.matrixLU().diagonal().cwiseAbs().minCoeff() > 1e-12)) continue;
        Matrix rhs(n, Eigen::Index(nc));
        for (std::size_t c = 0; c < nc; ++c) rhs.col(Eigen::Index(c)) = (eye + sm).col(cols[c]);
        const Matrix zc = shorted.ref_impedance() * lu.solve(rhs);
        const double w = kTwoPi * f;
        for (std::size_t c = 0; c < nc; ++c) {
            if (state[c] == State::Strong) continue;
            const Complex z = zc(cols[c], Eigen::Index(c));
            if (z.imag() > 0.0 && z.imag() > 3.0 * std::abs(z.real())) {
                state[c] = State::Strong;
                value[c] = z.imag() / w;
                at_hz[c] = f;
                --unresolved;
            } else if (z.imag() > 0.0 && state[c] == State::Open) {
                state[c] = State::Fallback;
                value[c] = z.imag() / w;
                at_hz[c] = f;
            }
        }
    }

    PortInductanceReport report;
    for (std::size_t c = 0; c < nc; ++c) {
        const auto& label = candidate_labels[c];
        if (state[c] == State::Open) {
            report.failures.push_back({label, "no inductive frequency (Im Z <= 0 across the band)"});
            continue;
        }
        if (state[c] == State::Fallback)
            warn("port '" + label + "' is never dominated by reactance; inductance read at " + format_sig(at_hz[c]) +
                 " Hz");
        report.entries.push_back({label, value[c], at_hz[c]});
    }
    std::sort(report.entries.begin(), report.entries.end(), [](const auto& a, const auto& b) {
        return a.inductance != b.inductance ? a.inductance < b.inductance : a.label < b.label;
    });
    return report;
}

/// "label<TAB>inductance_henries<TAB>extraction_hz" per port; failed ports
/// follow as '#' comment lines.
inline std::string format_inductance_report(const PortInductanceReport& r) {
    std::string out;
    for (const auto& e : r.entries)
        out += e.label + '\t' + format_exact(e.inductance) + '\t' + format_exact(e.extraction_hz) + '\n';
    for (const auto& f : r.failures) out += "# FAILED " + f.label + '\t' + f.reason + '\n';
    return out;
}

inline PortInductanceReport parse_inductance_report(std::istream& in) {
    PortInductanceReport r;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = trim(raw);
        if (line.empty()) continue;
        if (line.starts_with("# FAILED ")) {
            line.remove_prefix(9);
            const auto tab = line.find('\t');
            r.failures.push_back({std::string(line.substr(0, tab)),
                                  tab == std::string_view::npos ? std::string() : std::string(line.substr(tab + 1))});
            continue;
        }
        if (line.front() == '#') continue;
        const auto f = split_ws(line);
        PortInductance e;
        if (f.size() != 3 || !parse_double(f[1], e.inductance) || !parse_double(f[2], e.extraction_hz))
            throw ParseError("expected 'label inductance frequency'", line_no);
        e.label = std::string(f[0]);
        r.entries.push_back(e);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Series resonance

struct SrfResult {
    double hz = 0.0;
    bool in_band = true;  ///< false when the |z| minimum sits on the grid boundary
};

/// Series resonance of a capacitor model: the frequency of minimum |z|.
///
/// The discrete minimum is refined to the zero crossing of f·Im(z) (linear
/// in f² for an R-L-C series branch) when the reactance changes sign next to
/// it, otherwise by a parabola through log|z| against log f.
inline SrfResult capacitor_srf(const ShuntElementModel& cap) {
    const auto& f = cap.grid.points();
    std::size_t first = cap.grid.has_dc() ? 1 : 0;
    if (f.size() < first + 3) throw ModelError("capacitor_srf: '" + cap.label + "' needs at least 3 frequencies");
    std::size_t i = first;
    for (std::size_t k = first; k < f.size(); ++k)
        if (std::abs(cap.z[k]) < std::abs(cap.z[i])) i = k;
    if (i == first || i == f.size() - 1) {
        warn("capacitor '" + cap.label + "': SRF outside modeled band");
        return {f[i], false};
    }
    auto g = [&](std::size_t k) { return f[k] * cap.z[k].imag(); };
    for (std::size_t j = i - 1; j <= i; ++j) {
        const double g0 = g(j), g1 = g(j + 1);
        if (g0 <= 0.0 && g1 > 0.0) {
            const double a = f[j] * f[j], b = f[j + 1] * f[j + 1];
            return {std::sqrt(a + (b - a) * (-g0) / (g1 - g0)), true};
        }
    }
    const double x0 = std::log(f[i - 1]), x1 = std::log(f[i]), x2 = std::log(f[i + 1]);
    const double y0 = std::log(std::abs(cap.z[i - 1])), y1 = std::log(std::abs(cap.z[i])),
                 y2 = std::log(std::abs(cap.z[i + 1]));
    const double d01 = (y1 - y0) / (x1 - x0), d12 = (y2 - y1) / (x2 - x1);
    const double curv = (d12 - d01) / (x2 - x0);
    if (!(curv > 0.0)) return {f[i], true};
    const double xv = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
    return {std::exp(std::clamp(xv, x0, x2)), true};
}

// ---------------------------------------------------------------------------
// Capacitor catalog

struct CatalogEntry {
    std::string name;
    ShuntElementModel model;
    double srf = 0.0;
    double capacitance_estimate = 0.0;
};

struct CapacitorCatalog {
    std::vector<CatalogEntry> entries;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }
    const CatalogEntry& operator[](std::size_t i) const { return entries[i]; }

    std::size_t index_of(std::string_view name) const {
        for (std::size_t i = 0; i < entries.size(); ++i)
            if (entries[i].name == name) return i;
        throw ModelError("unknown capacitor '" + std::string(name) + "'");
    }
};

/// C from the lowest nonzero frequency, where the branch is capacitive.
inline double capacitance_estimate(const ShuntElementModel& cap) {
    for (std::size_t k = 0; k < cap.grid.size(); ++k) {
        const double f = cap.grid[k];
        if (f <= 0.0) continue;
        const double x = std::abs(cap.z[k].imag());
        return x > 0.0 ? 1.0 / (kTwoPi * f * x) : 0.0;
    }
    return 0.0;
}

inline CapacitorCatalog build_catalog(std::vector<ShuntElementModel> models) {
    CapacitorCatalog cat;
    std::set<std::string> names;
    for (auto& m : models) {
        if (!names.insert(m.label).second) throw ModelError("duplicate capacitor name '" + m.label + "'");
        CatalogEntry e;
        e.srf = capacitor_srf(m).hz;
        e.capacitance_estimate = capacitance_estimate(m);
        e.name = m.label;
        e.model = std::move(m);
        cat.entries.push_back(std::move(e));
    }
    return cat;
}

/// "name<TAB>srf_hz<TAB>capacitance_estimate" per capacitor.
inline std::string format_srf_table(const CapacitorCatalog& cat) {
    std::string out;
    for (const auto& e : cat.entries)
        out += e.name + '\t' + format_exact(e.srf) + '\t' + format_exact(e.capacitance_estimate) + '\n';
    return out;
}

// ---------------------------------------------------------------------------
// Extrema and Q

enum class ExtremumKind { Peak, Valley };

struct Extremum {
    double frequency = 0.0;
    double impedance = 0.0;
    ExtremumKind kind = ExtremumKind::Peak;
    double q_factor = 0.0;
    std::size_t index = 0;  ///< nearest sample
};

using PeakList = std::vector<Extremum>;

struct ExtremaOptions {
    /// Extrema within this relative distance of both neighbours are dropped.
    double prominence = 0.02;
};

/// Local extrema of |Z| with prominence filtering and a half-power Q for
/// each: Q = f / Δf, where Δf is the width at |Z|/√2 (peaks) or |Z|·√2
/// (valleys), searched no further than the neighbouring extrema. When only
/// one side crosses, that half-width is doubled.
inline PeakList find_extrema(std::span<const double> freqs, std::span<const double> mags,
                             const ExtremaOptions& opt = {}) {
    if (freqs.size() != mags.size()) throw ModelError("find_extrema: size mismatch");
    std::size_t first = 0;
    while (first < freqs.size() && freqs[first] <= 0.0) ++first;
    freqs = freqs.subspan(first);
    mags = mags.subspan(first);
    const std::size_t n = freqs.size();
    PeakList out;
    if (n < 3) return out;

    struct Cand {
        std::size_t i;
        ExtremumKind kind;
    };
    std::vector<Cand> c;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        ExtremumKind kind;
        if (mags[i] > mags[i - 1] && mags[i] >= mags[i + 1]) kind = ExtremumKind::Peak;
        else if (mags[i] < mags[i - 1] && mags[i] <= mags[i + 1]) kind = ExtremumKind::Valley;
        else continue;
        if (!c.empty() && c.back().kind == kind) {
            const bool better = kind == ExtremumKind::Peak ? mags[i] > mags[c.back().i] : mags[i] < mags[c.back().i];
            if (better) c.back().i = i;
            continue;
        }
        c.push_back({i, kind});
    }

    auto rel = [&](double a, double b) { return std::abs(a - b) / std::max(std::min(a, b), 1e-300); };
    // Repeatedly drop the least prominent extremum until all are prominent.
    for (;;) {
        std::size_t worst = c.size();
        double worst_prom = opt.prominence;
        for (std::size_t k = 0; k < c.size(); ++k) {
            const double v = mags[c[k].i];
            const double left = k > 0 ? mags[c[k - 1].i] : mags[0];
            const double right = k + 1 < c.size() ? mags[c[k + 1].i] : mags[n - 1];
            const double prom = std::max(rel(v, left), rel(v, right));
            if (prom < worst_prom) {
                worst_prom = prom;
                worst = k;
            }
        }
        if (worst == c.size()) break;
        const bool has_l = worst > 0, has_r = worst + 1 < c.size();
        if (has_l && has_r) {
            const double v = mags[c[worst].i];
            const std::size_t partner =
                rel(v, mags[c[worst - 1].i]) <= rel(v, mags[c[worst + 1].i]) ? worst - 1 : worst + 1;
            const std::size_t lo = std::min(worst, partner);
            c.erase(c.begin() + std::ptrdiff_t(lo), c.begin() + std::ptrdiff_t(lo + 2));
        } else {
            c.erase(c.begin() + std::ptrdiff_t(worst));
        }
    }

    const auto lf = [&](std::size_t i) { return std::log(freqs[i]); };
    const auto lm = [&](std::size_t i) { return std::log(std::max(mags[i], 1e-300)); };
    for (std::size_t k = 0; k < c.size(); ++k) {
        const std::size_t i = c[k].i;
        const bool peak = c[k].kind == ExtremumKind::Peak;
        // Vertex of the parabola through the three samples in log-log.
        double xe = lf(i), ye = lm(i);
        {
            const double x0 = lf(i - 1), x1 = lf(i), x2 = lf(i + 1);
            const double y0 = lm(i - 1), y1 = lm(i), y2 = lm(i + 1);
            const double d01 = (y1 - y0) / (x1 - x0), d12 = (y2 - y1) / (x2 - x1);
            const double curv = (d12 - d01) / (x2 - x0);
            if (curv != 0.0 && (peak ? curv < 0.0 : curv > 0.0)) {
                const double xv = std::clamp(0.5 * (x0 + x1) - d01 / (2.0 * curv), x0, x2);
                const double yv = y1 + d01 * (xv - x1) + curv * (xv - x0) * (xv - x1);
                xe = xv;
                ye = peak ? std::max(yv, y1) : std::min(yv, y1);
            }
        }
        const double level = ye + (peak ? -0.5 : 0.5) * std::log(2.0);
        const std::size_t lb = k > 0 ? c[k - 1].i : 0;
        const std::size_t rb = k + 1 < c.size() ? c[k + 1].i : n - 1;
        auto crosses = [&](std::size_t j) { return peak ? lm(j) <= level : lm(j) >= level; };
        auto interp = [&](std::size_t a, std::size_t b) {
            const double t = (level - lm(a)) / (lm(b) - lm(a));
            return std::exp(lf(a) + t * (lf(b) - lf(a)));
        };
        std::optional<double> fl, fr;
        for (std::size_t j = i; j-- > lb;)
            if (crosses(j)) {
                fl = interp(j + 1, j);
                break;
            }
        for (std::size_t j = i + 1; j <= rb; ++j)
            if (crosses(j)) {
                fr = interp(j - 1, j);
                break;
            }
        const double fe = std::exp(xe);
        double width;
        if (fl && fr) width = *fr - *fl;
        else if (fr) width = 2.0 * (*fr - fe);
        else if (fl) width = 2.0 * (fe - *fl);
        else width = freqs[rb] - freqs[lb];
        Extremum e;
        e.frequency = fe;
        e.impedance = std::exp(ye);
        e.kind = c[k].kind;
        e.q_factor = width > 0.0 ? fe / width : 0.0;
        e.index = i + first;
        out.push_back(e);
    }
    return out;
}

}  // namespace capopt
