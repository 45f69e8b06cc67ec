#pragma once

// Worst-case transient scoring: rational (vector) fitting of Z(f), the
// closed-form response to a finite-rise-time current step, the reverse-pulse
// worst-case bound and the matching SPICE PWL stimulus.

#include <Eigen/Eigenvalues>

#include "capopt/network.hpp"

namespace capopt {

// ---------------------------------------------------------------------------
// Rational model

/// Z(s) = Σ r_i / (s - p_i) + d + e·s. Complex poles are stored as adjacent
/// conjugate pairs, the member with positive imaginary part first.
struct RationalModel {
    std::vector<Complex> poles;
    std::vector<Complex> residues;
    double d = 0.0;
    double e = 0.0;
    double fit_error = 0.0;

    Complex eval(Complex s) const {
        Complex v(d, 0.0);
        v += e * s;
        for (std::size_t i = 0; i < poles.size(); ++i) v += residues[i] / (s - poles[i]);
        return v;
    }
    Complex at_frequency(double f) const { return eval(Complex(0.0, kTwoPi * f)); }

    /// Z(0), the steady-state volts per ampere.
    double dc() const {
        Complex v(d, 0.0);
        for (std::size_t i = 0; i < poles.size(); ++i) v -= residues[i] / poles[i];
        return v.real();
    }

    bool stable() const {
        return std::all_of(poles.begin(), poles.end(), [](Complex p) { return p.real() < 0.0; });
    }
};

class FitError : public Error {
public:
    FitError(const std::string& what, double achieved) : Error(what), achieved_(achieved) {}
    double achieved() const noexcept { return achieved_; }

private:
    double achieved_;
};

enum class FitWeighting {
    Magnitude,         ///< row weight |Z|: peaks dominate the least-squares fit
    InverseMagnitude,  ///< row weight 1/|Z|: relative error everywhere
    Uniform,
};

struct VectorFitOptions {
    int min_poles = 10;
    int max_poles = 50;
    int pole_step = 2;
    int iterations = 12;
    double target_error = 1e-3;
    double failure_error = 1e-2;
    FitWeighting weighting = FitWeighting::Magnitude;
    bool proportional_term = true;
};

namespace vf {

using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline bool is_pair_head(const std::vector<Complex>& poles, std::size_t i) { return poles[i].imag() > 0.0; }

/// Real basis row for the poles at s: 1/(s-a) for real a; for a conjugate
/// pair 1/(s-a) + 1/(s-a*) and j/(s-a) - j/(s-a*).
inline void basis(const std::vector<Complex>& poles, Complex s, std::vector<Complex>& out) {
    out.resize(poles.size());
    for (std::size_t i = 0; i < poles.size();) {
        if (is_pair_head(poles, i)) {
            const Complex a = 1.0 / (s - poles[i]), b = 1.0 / (s - std::conj(poles[i]));
            out[i] = a + b;
            out[i + 1] = Complex(0.0, 1.0) * (a - b);
            i += 2;
        } else {
            out[i] = 1.0 / (s - poles[i]);
            ++i;
        }
    }
}

inline std::vector<Complex> starting_poles(int n, double w_lo, double w_hi) {
    std::vector<Complex> poles;
    const int pairs = n / 2;
    for (int k = 0; k < pairs; ++k) {
        const double w = pairs == 1 ? std::sqrt(w_lo * w_hi)
                                    : w_lo * std::pow(w_hi / w_lo, double(k) / double(pairs - 1));
        poles.emplace_back(-w / 100.0, w);
        poles.emplace_back(-w / 100.0, -w);
    }
    if (n % 2) poles.emplace_back(-w_lo, 0.0);
    return poles;
}

/// Column-scaled least squares.
inline RVector solve_ls(RMatrix a, const RVector& b) {
    RVector scale(a.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        const double nrm = a.col(j).norm();
        scale(j) = nrm > 0.0 ? 1.0 / nrm : 1.0;
        a.col(j) *= scale(j);
    }
    RVector x = a.colPivHouseholderQr().solve(b);
    return x.cwiseProduct(scale);
}

inline std::vector<Complex> clean_poles(const Eigen::VectorXcd& eig) {
    std::vector<Complex> reals, heads;
    for (Eigen::Index i = 0; i < eig.size(); ++i) {
        Complex p = eig(i);
        const double mag = std::abs(p);
        if (std::abs(p.imag()) <= 1e-10 * mag) {
            reals.emplace_back(p.real(), 0.0);
        } else if (p.imag() > 0.0) {
            heads.push_back(p);
        }
    }
    auto stabilize = [](Complex& p) {
        if (p.real() > 0.0) p.real(-p.real());
        if (p.real() == 0.0) p.real(-1e-9 * std::max(std::abs(p.imag()), 1.0));
    };
    std::vector<Complex> poles;
    std::sort(heads.begin(), heads.end(), [](Complex a, Complex b) { return a.imag() < b.imag(); });
    std::sort(reals.begin(), reals.end(), [](Complex a, Complex b) { return a.real() > b.real(); });
    for (auto p : heads) {
        stabilize(p);
        poles.push_back(p);
        poles.push_back(std::conj(p));
    }
    for (auto p : reals) {
        stabilize(p);
        poles.push_back(p);
    }
    return poles;
}

struct Data {
    std::vector<Complex> s;
    std::vector<Complex> f;
    std::vector<double> w;
};

/// One pole-relocation step (relaxed non-triviality constraint).
inline std::vector<Complex> relocate(const std::vector<Complex>& poles, const Data& data, bool with_e) {
    const auto n = Eigen::Index(poles.size());
    const auto k = Eigen::Index(data.s.size());
    const Eigen::Index n_fit = n + 1 + (with_e ? 1 : 0);
    const Eigen::Index cols = n_fit + n + 1;

    auto build = [&](bool relax, double fixed_dt) {
        RMatrix a = RMatrix::Zero(2 * k + (relax ? 1 : 0), relax ? cols : cols - 1);
        RVector b = RVector::Zero(a.rows());
        std::vector<Complex> phi;
        RVector sum_re = RVector::Zero(n);
        for (Eigen::Index r = 0; r < k; ++r) {
            const Complex s = data.s[std::size_t(r)], f = data.f[std::size_t(r)];
            const double w = data.w[std::size_t(r)];
            basis(poles, s, phi);
            auto put = [&](Eigen::Index c, Complex v) {
                a(2 * r, c) = v.real();
                a(2 * r + 1, c) = v.imag();
            };
            for (Eigen::Index i = 0; i < n; ++i) {
                put(i, w * phi[std::size_t(i)]);
                put(n_fit + i, -w * f * phi[std::size_t(i)]);
                sum_re(i) += phi[std::size_t(i)].real();
            }
            put(n, Complex(w, 0.0));
            if (with_e) put(n + 1, w * s);
            if (relax) {
                put(cols - 1, -w * f);
            } else {
                const Complex rhs = w * f * fixed_dt;
                b(2 * r) = rhs.real();
                b(2 * r + 1) = rhs.imag();
            }
        }
        if (relax) {
            double nrm = 0.0;
            for (Eigen::Index r = 0; r < k; ++r) nrm += std::norm(data.w[std::size_t(r)] * data.f[std::size_t(r)]);
            const double scale = std::sqrt(nrm) / double(k);
            for (Eigen::Index i = 0; i < n; ++i) a(2 * k, n_fit + i) = scale * sum_re(i);
            a(2 * k, cols - 1) = scale * double(k);
            b(2 * k) = scale * double(k);
        }
        return std::pair{a, b};
    };

    auto [a, b] = build(true, 0.0);
    RVector x = solve_ls(a, b);
    RVector ct = x.segment(n_fit, n);
    double dt = x(cols - 1);
    if (!(std::abs(dt) > 1e-8)) {
        dt = dt < 0.0 ? -1e-8 : 1e-8;
        auto [a2, b2] = build(false, dt);
        x = solve_ls(a2, b2);
        ct = x.segment(n_fit, n);
    }

    // Zeros of sigma: eig(A - b c~^T / d~) in real block form.
    RMatrix h = RMatrix::Zero(n, n);
    RVector bv = RVector::Zero(n);
    for (Eigen::Index i = 0; i < n;) {
        const Complex p = poles[std::size_t(i)];
        if (is_pair_head(poles, std::size_t(i))) {
            h(i, i) = p.real();
            h(i, i + 1) = p.imag();
            h(i + 1, i) = -p.imag();
            h(i + 1, i + 1) = p.real();
            bv(i) = 2.0;
            i += 2;
        } else {
            h(i, i) = p.real();
            bv(i) = 1.0;
            ++i;
        }
    }
    h -= bv * ct.transpose() / dt;
    Eigen::EigenSolver<RMatrix> es(h, false);
    return clean_poles(es.eigenvalues());
}

inline RationalModel fit_residues(const std::vector<Complex>& poles, const Data& data, bool with_e) {
    const auto n = Eigen::Index(poles.size());
    const auto k = Eigen::Index(data.s.size());
    const Eigen::Index cols = n + 1 + (with_e ? 1 : 0);
    RMatrix a(2 * k, cols);
    RVector b(2 * k);
    std::vector<Complex> phi;
    for (Eigen::Index r = 0; r < k; ++r) {
        const Complex s = data.s[std::size_t(r)];
        const double w = data.w[std::size_t(r)];
        basis(poles, s, phi);
        auto put = [&](Eigen::Index c, Complex v) {
            a(2 * r, c) = v.real();
            a(2 * r + 1, c) = v.imag();
        };
        for (Eigen::Index i = 0; i < n; ++i) put(i, w * phi[std::size_t(i)]);
        put(n, Complex(w, 0.0));
        if (with_e) put(n + 1, w * s);
        const Complex rhs = w * data.f[std::size_t(r)];
        b(2 * r) = rhs.real();
        b(2 * r + 1) = rhs.imag();
    }
    const RVector x = solve_ls(a, b);
    RationalModel m;
    m.poles = poles;
    m.residues.resize(poles.size());
    for (std::size_t i = 0; i < poles.size();) {
        if (is_pair_head(poles, i)) {
            const Complex r(x(Eigen::Index(i)), x(Eigen::Index(i + 1)));
            m.residues[i] = r;
            m.residues[i + 1] = std::conj(r);
            i += 2;
        } else {
            m.residues[i] = Complex(x(Eigen::Index(i)), 0.0);
            ++i;
        }
    }
    m.d = x(n);
    m.e = with_e ? x(n + 1) : 0.0;
    return m;
}

}  // namespace vf

/// Relative RMS misfit, sqrt(mean(|fit - z|² / |z|²)).
inline double relative_rms_error(const RationalModel& m, std::span<const double> freqs,
                                 std::span<const Complex> z) {
    double acc = 0.0;
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        const double ref = std::max(std::abs(z[k]), 1e-300);
        acc += std::norm(m.at_frequency(freqs[k]) - z[k]) / (ref * ref);
    }
    return std::sqrt(acc / double(std::max<std::size_t>(freqs.size(), 1)));
}

/// Vector fitting of sampled Z(f). Pole counts are tried from min_poles
/// upward until the relative RMS error drops below target_error; the best
/// model seen is returned. Throws FitError if even the best model is worse
/// than failure_error.
inline RationalModel vector_fit(std::span<const double> freqs, std::span<const Complex> z,
                                const VectorFitOptions& opt = {}) {
    if (freqs.size() != z.size()) throw ModelError("vector_fit: size mismatch");
    if (opt.min_poles < 1 || opt.max_poles < opt.min_poles) throw ConfigError("vector_fit: invalid pole range");
    if (freqs.size() < std::size_t(2 * opt.max_poles) && freqs.size() < std::size_t(2 * opt.min_poles))
        throw ModelError("vector_fit: need at least 2 samples per pole");

    vf::Data data;
    double f_lo = 0.0;
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        data.s.emplace_back(0.0, kTwoPi * freqs[k]);
        data.f.push_back(z[k]);
        const double mag = std::max(std::abs(z[k]), 1e-300);
        switch (opt.weighting) {
            case FitWeighting::Magnitude: data.w.push_back(mag); break;
            case FitWeighting::InverseMagnitude: data.w.push_back(1.0 / mag); break;
            case FitWeighting::Uniform: data.w.push_back(1.0); break;
        }
        if (f_lo == 0.0 && freqs[k] > 0.0) f_lo = freqs[k];
    }
    const double w_lo = kTwoPi * std::max(f_lo, 1e-3), w_hi = kTwoPi * freqs.back();

    RationalModel best;
    best.fit_error = std::numeric_limits<double>::infinity();
    for (int n = opt.min_poles; n <= opt.max_poles; n += std::max(1, opt.pole_step)) {
        if (freqs.size() < std::size_t(2 * n)) break;
        std::vector<Complex> poles = vf::starting_poles(n, w_lo, w_hi);
        for (int it = 0; it < opt.iterations; ++it) {
            poles = vf::relocate(poles, data, opt.proportional_term);
            RationalModel m = vf::fit_residues(poles, data, opt.proportional_term);
            m.fit_error = relative_rms_error(m, freqs, z);
            if (std::isfinite(m.fit_error) && m.fit_error < best.fit_error) best = m;
            if (best.fit_error < opt.target_error) break;
        }
        if (best.fit_error < opt.target_error) break;
    }
    // Poles whose largest possible contribution |r|/|Re p| is below 1e-6 of
    // the data scale are relocation leftovers, usually parked far below the
    // band. They change nothing in Z but would stretch the step-response
    // horizon to their time constant, so they are dropped.
    double z_max = 0.0;
    for (const auto& v : z) z_max = std::max(z_max, std::abs(v));
    if (std::isfinite(best.fit_error)) {
        RationalModel kept = best;
        kept.poles.clear();
        kept.residues.clear();
        for (std::size_t i = 0; i < best.poles.size(); ++i)
            if (std::abs(best.residues[i]) >= 1e-6 * z_max * std::abs(best.poles[i].real())) {
                kept.poles.push_back(best.poles[i]);
                kept.residues.push_back(best.residues[i]);
            }
        if (kept.poles.size() != best.poles.size()) {
            kept.fit_error = relative_rms_error(kept, freqs, z);
            best = kept;
        }
    }
    if (!(best.fit_error <= opt.failure_error))
        throw FitError("vector fit error " + format_sig(best.fit_error) + " exceeds " +
                           format_sig(opt.failure_error) + " with " + std::to_string(opt.max_poles) + " poles",
                       best.fit_error);
    return best;
}

/// Frequency bands where Re Z(jω) < -1e-9, checked on a grid with three
/// extra log-spaced points between each pair of input frequencies.
inline std::vector<std::pair<double, double>> check_passivity(const RationalModel& m, const FrequencyGrid& grid) {
    std::vector<double> fine;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        fine.push_back(grid[k]);
        if (k + 1 == grid.size()) break;
        const double a = grid[k], b = grid[k + 1];
        for (int j = 1; j < 4; ++j)
            fine.push_back(a == 0.0 ? b * j / 4.0 : a * std::pow(b / a, j / 4.0));
    }
    std::vector<std::pair<double, double>> bands;
    bool in = false;
    for (double f : fine) {
        const bool bad = m.at_frequency(f).real() < -1e-9;
        if (bad && !in) bands.emplace_back(f, f);
        if (bad) bands.back().second = f;
        in = bad;
    }
    return bands;
}

// ---------------------------------------------------------------------------
// Step response

/// Voltage per ampere for a 0 → 1 A load step with a linear rise.
struct StepResponse {
    std::vector<double> times;
    std::vector<double> voltage;
    double rise_time = 0.0;
    double v_dc = 0.0;
    double horizon = 0.0;
    RationalModel model;

    /// Closed-form value at any t >= 0.
    double at(double t) const;
};

namespace detail {

/// (e^x - 1 - x) without cancellation for small |x|.
inline Complex expm1_minus_x(Complex x) {
    if (std::abs(x) < 0.1) {
        Complex term = x * x / 2.0, sum = term;
        for (int k = 3; k < 12; ++k) {
            term *= x / double(k);
            sum += term;
        }
        return sum;
    }
    return std::exp(x) - 1.0 - x;
}

inline Complex expm1c(Complex x) {
    if (std::abs(x) < 1e-5) return x + x * x / 2.0 + x * x * x / 6.0;
    return std::exp(x) - 1.0;
}

}  // namespace detail

/// Response of the rational model to a current ramping 0 → 1 A over
/// rise_time and holding at 1 A.
///
/// With G(t) the response to a unit-slope ramp,
///   G(t) = Σ r [ (e^{pt} - 1 - pt) / p² ] + d·t + e,
/// the ramp-step response is v(t) = [G(t) - G(t - t_r)·u(t - t_r)] / t_r.
inline double ramp_step_value(const RationalModel& m, double rise_time, double t) {
    if (t <= 0.0) return 0.0;
    Complex v(0.0, 0.0);
    if (t <= rise_time) {
        for (std::size_t i = 0; i < m.poles.size(); ++i) {
            const Complex p = m.poles[i];
            v += m.residues[i] * detail::expm1_minus_x(p * t) / (p * p);
        }
        return (v.real() + m.d * t + m.e) / rise_time;
    }
    for (std::size_t i = 0; i < m.poles.size(); ++i) {
        const Complex p = m.poles[i];
        v += m.residues[i] * std::exp(p * (t - rise_time)) * detail::expm1c(p * rise_time) / (p * p * rise_time);
        v -= m.residues[i] / p;
    }
    return v.real() + m.d;
}

inline double StepResponse::at(double t) const { return ramp_step_value(model, rise_time, t); }

/// 20 times the slowest pole time constant, and at least 20 rise times.
inline double default_horizon(const RationalModel& m, double rise_time) {
    double tau = 0.0;
    for (auto p : m.poles) tau = std::max(tau, 1.0 / std::abs(p.real()));
    return std::max(20.0 * tau, 20.0 * rise_time);
}

/// Samples the ramp-step response from rise_time/100 to horizon on a grid
/// that is logarithmic overall and fine enough (16 samples per period) to
/// follow each resonance until its contribution has decayed.
inline StepResponse step_response(const RationalModel& m, double rise_time, double horizon) {
    if (!(rise_time > 0.0)) throw ModelError("step_response: rise time must be positive");
    if (!m.stable()) throw ModelError("step_response: model has unstable poles");
    double tau = 0.0;
    for (auto p : m.poles) tau = std::max(tau, 1.0 / std::abs(p.real()));
    if (horizon < 20.0 * tau * (1.0 - 1e-12))
        throw ModelError("step_response: horizon " + format_sig(horizon) + " s is shorter than 20 time constants (" +
                         format_sig(20.0 * tau) + " s)");

    StepResponse sr;
    sr.rise_time = rise_time;
    sr.model = m;
    sr.v_dc = m.dc();
    sr.horizon = horizon;

    // Oscillatory poles: sampling period and the time after which their
    // contribution falls below 1e-6 of the largest one.
    struct Osc {
        double dt;
        double until;
    };
    std::vector<Osc> osc;
    std::vector<double> amp(m.poles.size());
    double ref = std::abs(sr.v_dc);
    for (std::size_t i = 0; i < m.poles.size(); ++i) {
        const Complex p = m.poles[i];
        amp[i] = std::abs(m.residues[i] * detail::expm1c(p * rise_time) / (p * p * rise_time));
        ref = std::max(ref, amp[i]);
    }
    for (std::size_t i = 0; i < m.poles.size(); ++i) {
        const Complex p = m.poles[i];
        if (std::abs(p.imag()) == 0.0 || !(amp[i] > 1e-6 * ref)) continue;
        const double until = std::min(horizon, rise_time + std::log(amp[i] / (1e-6 * ref)) / std::abs(p.real()));
        osc.push_back({kTwoPi / std::abs(p.imag()) / 16.0, until});
    }

    const double log_step = std::pow(10.0, 1.0 / 200.0) - 1.0;
    sr.times.push_back(0.0);
    double t = rise_time / 100.0;
    const double lin_dt = rise_time / 64.0;
    bool placed_tr = false;
    while (t < horizon) {
        if (!placed_tr && t >= rise_time) {
            if (t > rise_time) sr.times.push_back(rise_time);
            placed_tr = true;
        }
        sr.times.push_back(t);
        double dt = t * log_step;
        if (t < rise_time) dt = std::min(dt, lin_dt);
        for (const auto& o : osc)
            if (t < o.until) dt = std::min(dt, o.dt);
        t += dt;
        if (sr.times.size() > 2'000'000) throw ModelError("step_response: time grid too large");
    }
    if (!placed_tr && rise_time < horizon) sr.times.push_back(rise_time);
    sr.times.push_back(horizon);
    std::sort(sr.times.begin(), sr.times.end());
    sr.times.erase(std::unique(sr.times.begin(), sr.times.end()), sr.times.end());

    sr.voltage.reserve(sr.times.size());
    for (double tt : sr.times) sr.voltage.push_back(ramp_step_value(m, rise_time, tt));

    double excursion = 0.0;
    for (double v : sr.voltage) excursion = std::max(excursion, std::abs(v - sr.v_dc));
    if (std::abs(sr.voltage.back() - sr.v_dc) > 1e-3 * excursion)
        throw ModelError("step_response: response not settled within 0.1% at the horizon");
    return sr;
}

inline StepResponse step_response(const RationalModel& m, double rise_time) {
    return step_response(m, rise_time, default_horizon(m, rise_time));
}

// ---------------------------------------------------------------------------
// Reverse pulse

struct ResponseExtremum {
    double time;
    double value;
    bool is_max;
};

struct LoadEdge {
    double time;  ///< start of the ramp
    int direction;  ///< +1 rising, -1 falling
};

struct WorstCaseResult {
    double vpp_per_amp = 0.0;
    double v_max = 0.0;
    double v_min = 0.0;
    double v_dc = 0.0;
    double rise_time = 0.0;
    std::vector<double> extrema_times;
    std::vector<ResponseExtremum> extrema;
    std::vector<LoadEdge> edges;
    double max_time = 0.0;  ///< instant at which the train reaches v_max
    double min_time = 0.0;
    std::vector<std::pair<double, double>> pulse_train;  ///< (time, amperes) breakpoints
};

/// Load current at t for a train of unit ramp edges.
inline double train_current(const std::vector<LoadEdge>& edges, double rise_time, double t) {
    double i = 0.0;
    for (const auto& e : edges) i += e.direction * std::clamp((t - e.time) / rise_time, 0.0, 1.0);
    return i;
}

/// Local extrema of the step response, refined on the closed form and with
/// settled-tail extrema (deviation below 0.1% of the largest excursion)
/// removed. The result alternates between maxima and minima.
inline std::vector<ResponseExtremum> response_extrema(const StepResponse& sr) {
    const auto& t = sr.times;
    const auto& v = sr.voltage;
    double excursion = 0.0;
    for (double x : v) excursion = std::max(excursion, std::abs(x - sr.v_dc));
    const double floor = 1e-3 * excursion;

    std::vector<ResponseExtremum> raw;
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
        const bool is_max = v[i] > v[i - 1] && v[i] >= v[i + 1];
        const bool is_min = v[i] < v[i - 1] && v[i] <= v[i + 1];
        if (!is_max && !is_min) continue;
        // Golden-section refinement on [t[i-1], t[i+1]].
        double a = t[i - 1], b = t[i + 1];
        const double g = (std::sqrt(5.0) - 1.0) / 2.0;
        auto obj = [&](double x) { return is_max ? sr.at(x) : -sr.at(x); };
        double c = b - g * (b - a), d = a + g * (b - a);
        double fc = obj(c), fd = obj(d);
        for (int it = 0; it < 60 && (b - a) > 1e-15 * b; ++it) {
            if (fc > fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = obj(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = obj(d);
            }
        }
        double best_t = t[i], best_v = v[i];
        const double tm = 0.5 * (a + b), vm = sr.at(tm);
        if (is_max ? vm > best_v : vm < best_v) {
            best_t = tm;
            best_v = vm;
        }
        raw.push_back({best_t, best_v, is_max});
    }

    // Only the settled tail is trimmed: everything after the last extremum
    // that strays at least `floor` from the final value.
    std::size_t keep = 0;
    for (std::size_t i = 0; i < raw.size(); ++i)
        if (std::abs(raw[i].value - sr.v_dc) >= floor) keep = i + 1;
    raw.resize(keep);

    std::vector<ResponseExtremum> out;
    for (const auto& e : raw) {
        if (!out.empty() && out.back().is_max == e.is_max) {
            if (e.is_max ? e.value > out.back().value : e.value < out.back().value) out.back() = e;
            continue;
        }
        out.push_back(e);
    }
    return out;
}

/// Worst-case peak-to-peak noise for an on/off load with the response's rise
/// time, by the reverse-pulse construction.
///
/// Load edges are placed in reverse chronological order of the response
/// extrema so that every edge's extremum lands on the same instant: rising
/// edges on maxima and falling edges on minima give the largest voltage,
/// the opposite assignment the smallest. With a_k the extremum values,
///   v_max = Σ_max a_k - Σ_min a_k (+ v_dc if the load must start high)
/// and likewise for v_min; vpp = v_max - v_min, which is
/// v_dc + 2·Σ|a_k - v_dc| when the extrema straddle v_dc. The pulse train
/// realizing both instants is returned alongside.
inline WorstCaseResult reverse_pulse(const StepResponse& sr) {
    WorstCaseResult wc;
    wc.v_dc = sr.v_dc;
    wc.rise_time = sr.rise_time;
    wc.extrema = response_extrema(sr);
    for (const auto& e : wc.extrema) wc.extrema_times.push_back(e.time);
    const auto& ex = wc.extrema;

    // The settled value acts as a final extremum of the opposite kind to the
    // last real one (for a monotone response: a maximum iff v_dc > 0).
    const bool tail_is_max = ex.empty() ? sr.v_dc > 0.0 : !ex.back().is_max;
    double sum_max = 0.0, sum_min = 0.0;
    for (const auto& e : ex) (e.is_max ? sum_max : sum_min) += e.value;
    wc.v_max = sum_max - sum_min + (tail_is_max ? sr.v_dc : 0.0);
    wc.v_min = sum_min - sum_max + (tail_is_max ? 0.0 : sr.v_dc);
    wc.vpp_per_amp = wc.v_max - wc.v_min;

    // Pulse train: run the schedule that starts from 0 A first, then switch
    // the load to 1 A if needed, let it settle, and run the other schedule.
    const double settle = sr.horizon;
    const double span = ex.empty() ? 0.0 : ex.back().time;
    double cursor = 0.0;
    int state = 0;
    auto run = [&](bool maximize, double& observed_at) {
        const bool needs_high = maximize ? tail_is_max : !tail_is_max;
        if (needs_high != (state == 1)) {
            wc.edges.push_back({cursor, needs_high ? +1 : -1});
            state = needs_high ? 1 : 0;
            cursor += settle;
        }
        for (std::size_t k = ex.size(); k-- > 0;) {
            const int dir = (ex[k].is_max == maximize) ? +1 : -1;
            wc.edges.push_back({cursor + span - ex[k].time, dir});
            state += dir;
        }
        observed_at = cursor + span;
        if (!ex.empty()) cursor = observed_at + settle;
    };
    const bool max_first = !tail_is_max;  // the maximizing schedule starts low
    if (max_first) {
        run(true, wc.max_time);
        run(false, wc.min_time);
    } else {
        run(false, wc.min_time);
        run(true, wc.max_time);
    }

    std::vector<double> bps;
    for (const auto& e : wc.edges) {
        bps.push_back(e.time);
        bps.push_back(e.time + sr.rise_time);
    }
    std::sort(bps.begin(), bps.end());
    bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
    if (bps.empty() || bps.front() > 0.0) wc.pulse_train.emplace_back(0.0, 0.0);
    for (double tb : bps) {
        double i = train_current(wc.edges, sr.rise_time, tb);
        if (std::abs(i - std::round(i)) < 1e-9) i = std::round(i) + 0.0;
        wc.pulse_train.emplace_back(tb, i);
    }
    return wc;
}

/// SPICE PWL current source for the worst-case train, 6 significant digits.
inline std::string export_pwl(const WorstCaseResult& wc, double amplitude = 1.0, std::string_view name = "LOAD",
                              std::string_view node_plus = "vdd", std::string_view node_minus = "0") {
    if (wc.pulse_train.empty()) throw ModelError("export_pwl: empty pulse train");
    std::string out = "I" + std::string(name) + ' ' + std::string(node_plus) + ' ' + std::string(node_minus) + " PWL(";
    bool first = true;
    for (const auto& [t, i] : wc.pulse_train) {
        if (!first) out += ' ';
        first = false;
        out += format_sig(t, 6) + ' ' + format_sig(i * amplitude + 0.0, 6);
    }
    out += ")\n";
    return out;
}

// ---------------------------------------------------------------------------
// Model preparation

/// Adds the regulator's load-line (droop) resistance in series with its
/// branch impedance.
inline ShuntElementModel apply_vr_loadline(const ShuntElementModel& vr, double droop_resistance) {
    if (droop_resistance < 0.0) throw ConfigError("load-line resistance must be nonnegative");
    ShuntElementModel out = vr;
    for (auto& z : out.z) z += droop_resistance;
    return out;
}

/// Z(f) samples prepared for fitting. If the data stops above 1 kHz, an R+L
/// model fitted to the bottom half-decade is extrapolated down to DC (with a
/// warning).
inline std::pair<std::vector<double>, std::vector<Complex>> extend_to_dc(std::span<const double> freqs,
                                                                         std::span<const Complex> z,
                                                                         bool announce = true) {
    std::vector<double> f(freqs.begin(), freqs.end());
    std::vector<Complex> v(z.begin(), z.end());
    if (f.empty() || f.front() <= 1e3) return {f, v};
    const double f0 = f.front();
    double r = 0.0, l = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < f.size() && f[k] <= f0 * std::sqrt(10.0); ++k, ++n) {
        r += v[k].real();
        l += v[k].imag() / (kTwoPi * f[k]);
    }
    r /= n;
    l /= n;
    if (announce)
        warn("impedance data starts at " + format_sig(f0) + " Hz; extending to DC with R = " + format_sig(r) +
             " ohm, L = " + format_sig(l) + " H");
    std::vector<double> ef{0.0};
    for (double x = 10.0; x < f0 / std::pow(10.0, 0.1); x *= std::pow(10.0, 0.1)) ef.push_back(x);
    std::vector<Complex> ev;
    for (double x : ef) ev.emplace_back(r, kTwoPi * x * l);
    ef.insert(ef.end(), f.begin(), f.end());
    ev.insert(ev.end(), v.begin(), v.end());
    return {ef, ev};
}

struct TransientOptions {
    double rise_time = 10e-9;
    VectorFitOptions fit;
};

struct TransientResult {
    RationalModel model;
    StepResponse step;
    WorstCaseResult worst;
};

/// Fit → step response → reverse pulse for one Z(f) curve.
inline TransientResult transient_analysis(std::span<const double> freqs, std::span<const Complex> z,
                                          const TransientOptions& opt = {}) {
    auto [f, v] = extend_to_dc(freqs, z);
    TransientResult r;
    r.model = vector_fit(f, v, opt.fit);
    r.step = step_response(r.model, opt.rise_time);
    r.worst = reverse_pulse(r.step);
    return r;
}

}  // namespace capopt
