#pragma once

// Frequency-domain scoring of |Z(f)| against a target impedance curve and
// the normalized weighted combination minimized by the optimizer.

#include <array>
#include <fstream>

#include "capopt/analysis.hpp"

namespace capopt {

/// Piecewise-linear target in log-log coordinates.
class TargetImpedanceCurve {
public:
    TargetImpedanceCurve() = default;
    explicit TargetImpedanceCurve(std::vector<std::pair<double, double>> points) : pts_(std::move(points)) {
        if (pts_.size() < 2) throw ModelError("target impedance needs at least two points");
        for (std::size_t i = 0; i < pts_.size(); ++i) {
            if (!(pts_[i].first > 0.0) || !(pts_[i].second > 0.0))
                throw ModelError("target impedance points must be positive");
            if (i > 0 && !(pts_[i].first > pts_[i - 1].first))
                throw ModelError("target impedance frequencies must be strictly increasing");
        }
    }

    const std::vector<std::pair<double, double>>& points() const noexcept { return pts_; }
    double f_min() const { return pts_.front().first; }
    double f_max() const { return pts_.back().first; }

    /// Target impedance at f; log Z is linear in log f between pairs.
    double at(double f) const {
        if (f < f_min() * (1.0 - 1e-12) || f > f_max() * (1.0 + 1e-12))
            throw ModelError("target impedance queried at " + format_sig(f) + " Hz outside " + format_sig(f_min()) +
                             "-" + format_sig(f_max()) + " Hz");
        auto it = std::lower_bound(pts_.begin(), pts_.end(), f, [](const auto& p, double v) { return p.first < v; });
        if (it == pts_.end()) return pts_.back().second;
        if (it->first == f || it == pts_.begin()) return it->second;
        const auto& a = *(it - 1);
        const auto& b = *it;
        if (a.second == b.second) return a.second;
        const double t = std::log(f / a.first) / std::log(b.first / a.first);
        return std::exp(std::log(a.second) + t * std::log(b.second / a.second));
    }

private:
    std::vector<std::pair<double, double>> pts_;
};

inline double target_at(const TargetImpedanceCurve& curve, double f) { return curve.at(f); }

/// One "frequency_hz impedance_ohms" pair per line, '#' comments.
inline TargetImpedanceCurve parse_target_curve(std::istream& in) {
    std::vector<std::pair<double, double>> pts;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line(raw);
        if (const auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        double f = 0.0, z = 0.0;
        if (tok.size() != 2 || !parse_double(tok[0], f) || !parse_double(tok[1], z))
            throw ParseError("expected 'frequency_hz impedance_ohms'", line_no);
        if (!pts.empty() && !(f > pts.back().first)) throw ParseError("target frequencies must increase", line_no);
        if (!(f > 0.0) || !(z > 0.0)) throw ParseError("target values must be positive", line_no);
        pts.emplace_back(f, z);
    }
    if (pts.size() < 2) throw ParseError("target impedance needs at least two frequency/value pairs", 0);
    return TargetImpedanceCurve(std::move(pts));
}

inline TargetImpedanceCurve read_target_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open target impedance file " + path.string());
    try {
        return parse_target_curve(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

// ---------------------------------------------------------------------------
// Band sampling

enum class FrequencyWeighting { Log, Linear };

/// |Z| restricted to the scoring band (target span ∩ model grid), with the
/// band edges and interior target breakpoints inserted.
struct BandSamples {
    std::vector<double> f;
    std::vector<double> x;       ///< integration variable: log10 f or f
    std::vector<double> z;       ///< |Z|
    std::vector<double> target;  ///< Z_t
    std::vector<char> on_grid;   ///< sample is an original grid point

    std::size_t size() const noexcept { return f.size(); }
    double width() const { return x.empty() ? 0.0 : x.back() - x.front(); }
};

inline BandSamples band_samples(std::span<const double> freqs, std::span<const double> mags,
                                const TargetImpedanceCurve& curve,
                                FrequencyWeighting weighting = FrequencyWeighting::Log) {
    if (freqs.size() != mags.size()) throw ModelError("band_samples: size mismatch");
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i < freqs.size(); ++i)
        if (freqs[i] > 0.0) pos.push_back(i);
    BandSamples b;
    if (pos.size() < 2) return b;
    const double lo = std::max(curve.f_min(), freqs[pos.front()]);
    const double hi = std::min(curve.f_max(), freqs[pos.back()]);
    if (!(hi > lo)) return b;

    auto mag_at = [&](double f) {
        auto it = std::lower_bound(pos.begin(), pos.end(), f, [&](std::size_t i, double v) { return freqs[i] < v; });
        if (it != pos.end() && freqs[*it] == f) return mags[*it];
        const std::size_t j1 = *it, j0 = *(it - 1);
        const double t = std::log(f / freqs[j0]) / std::log(freqs[j1] / freqs[j0]);
        return std::exp(std::log(mags[j0]) + t * (std::log(mags[j1]) - std::log(mags[j0])));
    };

    std::vector<std::pair<double, bool>> pts;
    pts.emplace_back(lo, false);
    for (auto i : pos)
        if (freqs[i] > lo && freqs[i] < hi) pts.emplace_back(freqs[i], true);
    for (const auto& [f, z] : curve.points())
        if (f > lo && f < hi) pts.emplace_back(f, false);
    pts.emplace_back(hi, false);
    std::sort(pts.begin(), pts.end());
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const double f = pts[k].first;
        if (!b.f.empty() && f == b.f.back()) {
            b.on_grid.back() = b.on_grid.back() || pts[k].second;
            continue;
        }
        b.f.push_back(f);
        b.x.push_back(weighting == FrequencyWeighting::Log ? std::log10(f) : f);
        b.z.push_back(mag_at(f));
        b.target.push_back(curve.at(f));
        b.on_grid.push_back(pts[k].second);
    }
    // Edge points that coincide with grid points are grid points too.
    for (std::size_t k = 0; k < b.size(); ++k)
        if (!b.on_grid[k])
            for (auto i : pos)
                if (freqs[i] == b.f[k]) b.on_grid[k] = 1;
    return b;
}

// ---------------------------------------------------------------------------
// Criteria

struct AreaScores {
    double above = 0.0;  ///< Ω·decade (or Ω·Hz with linear weighting)
    double below = 0.0;
};

/// Integrates max(0, |Z| - Z_t) and max(0, Z_t - |Z|) over the band, with
/// the difference taken as piecewise linear and split at sign changes.
inline AreaScores area_scores(const BandSamples& b) {
    AreaScores a;
    for (std::size_t k = 1; k < b.size(); ++k) {
        const double dx = b.x[k] - b.x[k - 1];
        const double d0 = b.z[k - 1] - b.target[k - 1];
        const double d1 = b.z[k] - b.target[k];
        if ((d0 >= 0.0 && d1 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0)) {
            const double area = 0.5 * (d0 + d1) * dx;
            if (area >= 0.0) a.above += area;
            else a.below -= area;
            continue;
        }
        const double t = d0 / (d0 - d1);  // crossing fraction
        const double first = 0.5 * d0 * t * dx;
        const double second = 0.5 * d1 * (1.0 - t) * dx;
        if (d0 > 0.0) {
            a.above += first;
            a.below -= second;
        } else {
            a.below -= first;
            a.above += second;
        }
    }
    return a;
}

inline double max_violation(const BandSamples& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) m = std::max(m, b.z[k] - b.target[k]);
    return m;
}

/// Mean absolute deviation of |Z| from its band average, both averages
/// weighted along the integration variable.
inline double flatness_deviation(const BandSamples& b) {
    if (b.size() < 2 || !(b.width() > 0.0)) throw ModelError("flatness_deviation: empty scoring band");
    auto trapz = [&](auto&& fn) {
        double s = 0.0;
        for (std::size_t k = 1; k < b.size(); ++k) s += 0.5 * (fn(k - 1) + fn(k)) * (b.x[k] - b.x[k - 1]);
        return s;
    };
    const double w = b.width();
    const double mean = trapz([&](std::size_t k) { return b.z[k]; }) / w;
    return trapz([&](std::size_t k) { return std::abs(b.z[k] - mean); }) / w;
}

/// Sum of the Q factors of all in-band resonances and anti-resonances.
inline double flatness_q(const BandSamples& b, const ExtremaOptions& opt = {}) {
    std::vector<double> f, z;
    for (std::size_t k = 0; k < b.size(); ++k)
        if (b.on_grid[k]) {
            f.push_back(b.f[k]);
            z.push_back(b.z[k]);
        }
    double q = 0.0;
    for (const auto& e : find_extrema(f, z, opt)) q += e.q_factor;
    return q;
}

// ---------------------------------------------------------------------------
// Combination

enum Criterion : std::size_t { AreaAbove, AreaBelow, MaxViolation, FlatnessDev, FlatnessQ, Transient, kCriteria };

inline constexpr std::array<const char*, kCriteria> kCriterionNames = {
    "area_above", "area_below", "max_violation", "flatness_dev", "flatness_q", "transient_vpp"};

using RawScores = std::array<double, kCriteria>;

struct ScoreWeights {
    double area_above = 1.0;
    double area_below_credit = 0.0;
    double max_violation = 0.0;
    double flatness_dev = 0.0;
    double flatness_q = 0.0;
    double transient = 0.0;

    RawScores as_array() const {
        return {area_above, area_below_credit, max_violation, flatness_dev, flatness_q, transient};
    }
    double sum() const {
        double s = 0.0;
        for (double w : as_array()) s += w;
        return s;
    }
    bool frequency_domain_active() const {
        return area_above > 0 || area_below_credit > 0 || max_violation > 0 || flatness_dev > 0 || flatness_q > 0;
    }
    void validate() const {
        bool any = false;
        for (double w : as_array()) {
            if (w < 0.0 || !std::isfinite(w)) throw ConfigError("score weights must be finite and nonnegative");
            any = any || w > 0.0;
        }
        if (!any) throw ConfigError("at least one score weight must be positive");
    }
};

/// Resolution floor per criterion, substituted for a zero baseline.
inline constexpr RawScores kBaselineFloor = {1e-9, 1e-9, 1e-9, 1e-9, 1e-3, 1e-9};

struct ScoreBreakdown {
    RawScores raw{};
    RawScores normalized{};
    double total = 0.0;
};

/// Baseline for normalization; zero entries of active criteria are replaced
/// by the criterion's resolution floor (with a warning).
inline RawScores make_baseline(const RawScores& raw, const ScoreWeights& weights) {
    RawScores b = raw;
    const auto w = weights.as_array();
    for (std::size_t i = 0; i < kCriteria; ++i) {
        if (b[i] > 0.0) continue;
        if (w[i] > 0.0)
            warn(std::string("baseline ") + kCriterionNames[i] + " is zero; normalizing by " +
                 format_sig(kBaselineFloor[i]));
        b[i] = kBaselineFloor[i];
    }
    return b;
}

/// total = Σ w_i·raw_i/base_i over penalty criteria minus
/// w_below·area_below/base_below. Lower is better.
inline ScoreBreakdown combined_score(const RawScores& raw, const RawScores& baseline, const ScoreWeights& weights) {
    weights.validate();
    const auto w = weights.as_array();
    ScoreBreakdown s;
    s.raw = raw;
    for (std::size_t i = 0; i < kCriteria; ++i) {
        if (w[i] == 0.0) continue;
        if (!(baseline[i] > 0.0)) throw ModelError(std::string("baseline ") + kCriterionNames[i] + " is not positive");
        s.normalized[i] = raw[i] / baseline[i];
        s.total += (i == AreaBelow ? -w[i] : w[i]) * s.normalized[i];
    }
    return s;
}

struct ScoringOptions {
    FrequencyWeighting weighting = FrequencyWeighting::Log;
    ExtremaOptions extrema;
};

/// All frequency-domain criteria for one |Z(f)| curve. The transient entry is
/// left at zero.
inline RawScores frequency_scores(std::span<const double> freqs, std::span<const double> mags,
                                  const TargetImpedanceCurve& curve, const ScoringOptions& opt = {}) {
    const BandSamples b = band_samples(freqs, mags, curve, opt.weighting);
    if (b.size() < 2) throw ModelError("model grid does not overlap the target impedance band");
    RawScores r{};
    const AreaScores a = area_scores(b);
    r[AreaAbove] = a.above;
    r[AreaBelow] = a.below;
    r[MaxViolation] = max_violation(b);
    r[FlatnessDev] = flatness_deviation(b);
    r[FlatnessQ] = flatness_q(b, opt.extrema);
    return r;
}

}  // namespace capopt
