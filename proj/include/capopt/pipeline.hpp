#pragma once

// The attach-and-score loop: a board prepared once (observation ports
// merged, regulator attached, unused ports opened), candidate assignments
// terminated onto it, and the resulting Z(f) scored against the target.

#include "capopt/ga.hpp"
#include "capopt/transient.hpp"

namespace capopt {

struct RegulatorModel {
    std::string port;
    ShuntElementModel model;
    double droop = 0.0;  ///< load-line resistance, ohms
};

struct BoardInputs {
    NetworkModel pdn;
    std::vector<std::string> observation;  ///< merged into one port when more than one
    std::vector<std::string> candidates;   ///< empty: every port other than observation and regulator
    std::optional<ShuntElementModel> die;
    std::optional<RegulatorModel> vr;
    std::vector<ShuntElementModel> capacitors;
    TargetImpedanceCurve target;
    ScoreWeights weights;
    ScoringOptions scoring;
    TransientOptions transient;
    AttachOrder attach_order = AttachOrder::HighSrfToLowL;
};

struct EvaluationContext {
    NetworkModel board;  ///< S at kWorkingReference: observation port + candidate ports
    std::string observation;
    std::vector<std::string> candidates;  ///< in board port order
    std::optional<ShuntElementModel> die;  ///< aligned to the board grid
    CapacitorCatalog catalog;
    std::vector<std::vector<Complex>> cap_gamma;  ///< [type][frequency] at kWorkingReference
    PortInductanceReport inductance;
    TargetImpedanceCurve target;
    ScoreWeights weights;
    ScoringOptions scoring;
    TransientOptions transient;
    AttachOrder attach_order = AttachOrder::HighSrfToLowL;
    QuantityVector initial;
    RawScores baseline{};

    const FrequencyGrid& grid() const { return board.grid(); }
    int port_capacity() const { return int(candidates.size()); }
    double penalty() const { return 1e6 * weights.sum(); }
};

/// Resamples a capacitor model onto `grid`. Below the model's first
/// frequency the branch is extended as a capacitor (reactance ∝ 1/f, open at
/// DC) with a warning; above its last frequency is an error.
inline ShuntElementModel capacitor_on_grid(const ShuntElementModel& cap, const FrequencyGrid& grid) {
    const double lo = cap.grid.front();
    std::vector<double> inside;
    for (double f : grid)
        if (f >= lo * (1.0 - 1e-12)) inside.push_back(f);
    if (inside.size() == grid.size()) return align_grid(cap, grid);
    warn("capacitor model '" + cap.label + "' starts at " + format_sig(lo) + " Hz; extrapolating capacitively below");
    std::vector<Complex> z;
    const Complex z_lo = cap.z.front();
    for (double f : grid) {
        if (f >= lo * (1.0 - 1e-12)) break;
        if (f == 0.0)
            z.emplace_back(kOpenCircuitOhms, 0.0);
        else
            z.emplace_back(z_lo.real(), z_lo.imag() * lo / f);
    }
    if (!inside.empty()) {
        const auto rest = align_grid(cap, FrequencyGrid(inside));
        z.insert(z.end(), rest.z.begin(), rest.z.end());
    }
    return ShuntElementModel(grid, std::move(z), cap.label);
}

/// |Z| and Z at the observation port for an assignment. Every candidate port
/// is terminated in one block solve: populated ports with their capacitor,
/// the rest open. The die model, if any, sits in parallel at the observation
/// port.
inline std::vector<Complex> observed_impedance(const EvaluationContext& ctx, const Assignment& a) {
    const std::size_t nf = ctx.grid().size();
    const std::size_t nc = ctx.candidates.size();
    std::vector<int> type_at(nc, -1);
    for (const auto& [port, cap] : a.pairs) {
        const auto it = std::find(ctx.candidates.begin(), ctx.candidates.end(), port);
        if (it == ctx.candidates.end()) throw ModelError("'" + port + "' is not a capacitor port");
        auto& slot = type_at[std::size_t(it - ctx.candidates.begin())];
        if (slot >= 0) throw ModelError("port '" + port + "' assigned twice");
        slot = int(ctx.catalog.index_of(cap));
    }
    std::vector<std::size_t> ports;
    for (std::size_t i = 0; i < nc; ++i) ports.push_back(ctx.board.port_index(ctx.candidates[i]));
    std::vector<std::vector<Complex>> gammas(nf, std::vector<Complex>(nc));
    for (std::size_t k = 0; k < nf; ++k)
        for (std::size_t i = 0; i < nc; ++i)
            gammas[k][i] = type_at[i] < 0 ? Complex(1.0, 0.0) : ctx.cap_gamma[std::size_t(type_at[i])][k];
    const NetworkModel one = nc ? detail::terminate(ctx.board, ports, gammas) : ctx.board;

    std::vector<Complex> z(nf);
    const double z0 = one.ref_impedance();
    for (std::size_t k = 0; k < nf; ++k) {
        const Complex s = one.at(k)(0, 0);
        const Complex den = 1.0 - s;
        z[k] = std::abs(den) <= 1e-15 ? Complex(kOpenCircuitOhms, 0.0) : z0 * (1.0 + s) / den;
        if (ctx.die) z[k] = 1.0 / (1.0 / z[k] + 1.0 / ctx.die->z[k]);
    }
    return z;
}

inline std::vector<double> magnitudes(const std::vector<Complex>& z) {
    std::vector<double> m;
    m.reserve(z.size());
    for (const auto& v : z) m.push_back(std::abs(v));
    return m;
}

inline TransientResult transient_for(const EvaluationContext& ctx, const std::vector<Complex>& z) {
    auto [f, v] = extend_to_dc(ctx.grid().points(), z, false);
    TransientResult r;
    r.model = vector_fit(f, v, ctx.transient.fit);
    r.step = step_response(r.model, ctx.transient.rise_time);
    r.worst = reverse_pulse(r.step);
    return r;
}

/// Raw criteria for an observed Z(f); the transient entry is computed only
/// when its weight is positive.
inline RawScores raw_scores(const EvaluationContext& ctx, const std::vector<Complex>& z) {
    RawScores r = frequency_scores(ctx.grid().points(), magnitudes(z), ctx.target, ctx.scoring);
    if (ctx.weights.transient > 0.0) r[Transient] = transient_for(ctx, z).worst.vpp_per_amp;
    return r;
}

inline ScoreBreakdown score_assignment(const EvaluationContext& ctx, const Assignment& a) {
    return combined_score(raw_scores(ctx, observed_impedance(ctx, a)), ctx.baseline, ctx.weights);
}

inline Assignment assignment_for(const EvaluationContext& ctx, const QuantityVector& q) {
    return assign_ports(q, ctx.catalog, ctx.inductance, ctx.attach_order);
}

/// Objective for the optimizer. Failures (for example a rational fit that
/// does not converge) score as the penalty instead of aborting the run.
inline double attach_and_score(const EvaluationContext& ctx, const QuantityVector& q) {
    try {
        return score_assignment(ctx, assignment_for(ctx, q)).total;
    } catch (const Error&) {
        return ctx.penalty();
    }
}

/// Board-level preparation shared by analysis and optimization: the working
/// board model, the capacitor catalog and the inductance ranking.
inline EvaluationContext prepare_board(const BoardInputs& in) {
    if (in.observation.empty()) throw ConfigError("at least one observation port is required");
    if (in.capacitors.empty()) throw ConfigError("capacitor list is empty");
    EvaluationContext ctx;
    ctx.target = in.target;
    ctx.weights = in.weights;
    ctx.scoring = in.scoring;
    ctx.transient = in.transient;
    ctx.attach_order = in.attach_order;

    NetworkModel s = in.pdn.kind() == ParamKind::S && in.pdn.ref_impedance() == kWorkingReference
                         ? in.pdn
                         : to_s(in.pdn, kWorkingReference);
    for (const auto& o : in.observation) s.port_index(o);
    if (in.observation.size() > 1) {
        std::string merged;
        for (const auto& o : in.observation) merged += (merged.empty() ? "" : "+") + o;
        s = merge_ports(s, in.observation, merged);
        ctx.observation = merged;
    } else {
        ctx.observation = in.observation.front();
    }
    if (in.vr) {
        const auto vr = apply_vr_loadline(align_grid(in.vr->model, s.grid()), in.vr->droop);
        if (in.vr->port == ctx.observation) throw ConfigError("regulator port is the observation port");
        s = attach_shunt(s, s.port_index(in.vr->port), vr);
    }

    std::vector<std::string> cand = in.candidates;
    if (cand.empty()) {
        for (const auto& l : s.port_labels())
            if (l != ctx.observation) cand.push_back(l);
    }
    std::set<std::string> cand_set;
    for (const auto& c : cand) {
        if (c == ctx.observation) throw ConfigError("observation port '" + c + "' listed as a capacitor port");
        s.port_index(c);
        if (!cand_set.insert(c).second) throw ConfigError("capacitor port '" + c + "' listed twice");
    }
    std::vector<std::size_t> unused;
    for (std::size_t i = 0; i < s.ports(); ++i) {
        const auto& l = s.port_labels()[i];
        if (l != ctx.observation && !cand_set.count(l)) unused.push_back(i);
    }
    if (!unused.empty()) {
        std::vector<std::vector<Complex>> g(s.frequencies(), std::vector<Complex>(unused.size(), Complex(1.0, 0.0)));
        s = detail::terminate(s, unused, g);
    }
    ctx.board = std::move(s);
    for (const auto& l : ctx.board.port_labels())
        if (l != ctx.observation) ctx.candidates.push_back(l);

    if (in.die) ctx.die = align_grid(*in.die, ctx.grid());
    ctx.catalog = build_catalog(in.capacitors);
    for (const auto& e : ctx.catalog.entries) {
        const auto aligned = capacitor_on_grid(e.model, ctx.grid());
        std::vector<Complex> g;
        for (const auto& z : aligned.z) g.push_back(reflection(z, kWorkingReference));
        ctx.cap_gamma.push_back(std::move(g));
    }
    ctx.inductance = loop_inductance(ctx.board, ctx.observation, ctx.candidates);
    return ctx;
}

/// Full preparation: board, catalog and inductance ranking, then the initial
/// guess and the normalization baseline.
inline EvaluationContext prepare(const BoardInputs& in) {
    in.weights.validate();
    EvaluationContext ctx = prepare_board(in);
    if (ctx.weights.transient > 0.0 && ctx.grid().front() > 1e3)
        warn("impedance data starts at " + format_sig(ctx.grid().front()) +
             " Hz; transient fits extend it to DC with an R+L model");
    ctx.initial = initial_guess(ctx.catalog, ctx.target, ctx.port_capacity());
    const auto z0 = observed_impedance(ctx, assignment_for(ctx, ctx.initial));
    ctx.baseline = make_baseline(raw_scores(ctx, z0), ctx.weights);
    return ctx;
}

class OptimizationError : public Error {
public:
    using Error::Error;
};

struct OptimizationReport {
    OptimizeResult ga;
    Assignment assignment;
    ScoreBreakdown breakdown;
};

inline OptimizationReport run_optimization(const EvaluationContext& ctx, const GAConfig& cfg,
                                           const std::function<void(const GenerationRecord&)>& progress = {}) {
    OptimizationReport r;
    r.ga = optimize([&](const QuantityVector& q) { return attach_and_score(ctx, q); }, ctx.catalog.size(),
                    ctx.port_capacity(), ctx.initial, cfg, progress);
    if (r.ga.best_score >= ctx.penalty()) throw OptimizationError("optimization failed: every candidate was penalized");
    r.assignment = assignment_for(ctx, r.ga.best);
    r.breakdown = score_assignment(ctx, r.assignment);
    return r;
}

// ---------------------------------------------------------------------------
// Report files

/// "criterion<TAB>raw<TAB>normalized" rows and a final "total" row, all
/// values printed exactly.
inline std::string format_score(const ScoreBreakdown& s) {
    std::string out = "# criterion\traw\tnormalized\n";
    for (std::size_t i = 0; i < kCriteria; ++i)
        out += std::string(kCriterionNames[i]) + '\t' + format_exact(s.raw[i]) + '\t' + format_exact(s.normalized[i]) +
               '\n';
    out += "total\t" + format_exact(s.total) + '\n';
    return out;
}

inline ScoreBreakdown parse_score(std::istream& in) {
    ScoreBreakdown s;
    std::string raw;
    std::size_t line = 0;
    std::vector<char> got(kCriteria + 1, 0);
    while (std::getline(in, raw)) {
        ++line;
        const auto t = trim(raw);
        if (t.empty() || t.front() == '#') continue;
        const auto tok = split_ws(t);
        if (tok.size() == 2 && tok[0] == "total") {
            if (!parse_double(tok[1], s.total)) throw ParseError("invalid total", line);
            got[kCriteria] = 1;
            continue;
        }
        std::size_t i = 0;
        while (i < kCriteria && tok[0] != kCriterionNames[i]) ++i;
        if (i == kCriteria || tok.size() != 3) throw ParseError("unexpected score line", line);
        if (!parse_double(tok[1], s.raw[i]) || !parse_double(tok[2], s.normalized[i]))
            throw ParseError("invalid number", line);
        got[i] = 1;
    }
    if (std::find(got.begin(), got.end(), 0) != got.end()) throw ParseError("incomplete score file", 0);
    return s;
}

/// "freq_hz,z_ohms,target_ohms"; the target column is empty outside the
/// target band.
inline std::string format_impedance_csv(const FrequencyGrid& grid, const std::vector<Complex>& z,
                                        const TargetImpedanceCurve& target) {
    std::string out = "freq_hz,z_ohms,target_ohms\n";
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double f = grid[k];
        out += format_exact(f) + ',' + format_exact(std::abs(z[k])) + ',';
        if (f >= target.f_min() && f <= target.f_max()) out += format_exact(target.at(f));
        out += '\n';
    }
    return out;
}

inline std::string format_transient_csv(const StepResponse& sr) {
    std::string out = "time_s,volts\n";
    for (std::size_t k = 0; k < sr.times.size(); ++k)
        out += format_exact(sr.times[k]) + ',' + format_exact(sr.voltage[k]) + '\n';
    return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace capopt
