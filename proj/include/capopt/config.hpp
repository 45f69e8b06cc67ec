#pragma once

// Run configuration: an INI-style "key = value" file with [sections].
// Relative paths are resolved against the directory of the config file.

#include "capopt/pipeline.hpp"

namespace capopt {

struct ElementSource {
    std::filesystem::path touchstone;  ///< used when set
    LumpedRLC lumped;
    bool present = false;
};

struct RunConfig {
    std::filesystem::path pdn_model;
    std::vector<std::string> observation;
    std::vector<std::string> capacitor_ports;
    TwoPortConvention capacitor_convention = TwoPortConvention::ShuntThrough;

    std::string vr_port;
    ElementSource vr;
    double droop = 0.0;
    ElementSource die;

    std::filesystem::path target_curve;
    FrequencyWeighting weighting = FrequencyWeighting::Log;
    std::filesystem::path capacitor_list;
    ScoreWeights weights;
    GAConfig ga;
    TransientOptions transient;
    std::filesystem::path output_dir = "out";
};

using IniSections = std::map<std::string, std::map<std::string, std::pair<std::string, std::size_t>>>;

inline IniSections parse_ini(std::istream& in) {
    IniSections out;
    std::string section, raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string_view s(raw);
        if (const auto c = s.find_first_of("#;"); c != std::string_view::npos) s = s.substr(0, c);
        s = trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ParseError("unterminated section header", line);
            section = to_lower(trim(s.substr(1, s.size() - 2)));
            out[section];
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line);
        if (section.empty()) throw ParseError("key outside of any [section]", line);
        const std::string key = to_lower(trim(s.substr(0, eq)));
        if (key.empty()) throw ParseError("empty key", line);
        auto& sec = out[section];
        if (sec.count(key)) throw ParseError("duplicate key '" + key + "'", line);
        sec[key] = {std::string(trim(s.substr(eq + 1))), line};
    }
    return out;
}

namespace detail {

class SectionReader {
public:
    SectionReader(const IniSections& ini, std::string name, std::filesystem::path base, std::string file)
        : base_(std::move(base)), file_(std::move(file)), name_(std::move(name)) {
        if (auto it = ini.find(name_); it != ini.end()) {
            values_ = it->second;
            present_ = true;
        }
    }

    bool present() const { return present_; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::optional<std::string> text(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        used_.insert(key);
        return it->second.first;
    }
    std::optional<double> number(const std::string& key) {
        auto v = text(key);
        if (!v) return std::nullopt;
        double d = 0.0;
        if (!parse_double(*v, d) || !std::isfinite(d)) fail(key, "expected a number");
        return d;
    }
    std::optional<long long> integer(const std::string& key) {
        auto v = text(key);
        if (!v) return std::nullopt;
        long long i = 0;
        auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), i);
        if (ec != std::errc() || p != v->data() + v->size()) fail(key, "expected an integer");
        return i;
    }
    std::optional<std::filesystem::path> path(const std::string& key) {
        auto v = text(key);
        if (!v) return std::nullopt;
        if (v->empty()) fail(key, "empty path");
        std::filesystem::path p(*v);
        return p.is_absolute() ? p : base_ / p;
    }
    std::vector<std::string> list(const std::string& key) {
        std::vector<std::string> out;
        auto v = text(key);
        if (!v) return out;
        std::string s = *v;
        std::replace(s.begin(), s.end(), ',', ' ');
        for (auto t : split_ws(s)) out.emplace_back(t);
        return out;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        const auto line = values_.count(key) ? values_.at(key).second : 0;
        throw ConfigError(file_ + (line ? ":" + std::to_string(line) : "") + ": [" + name_ + "] " + key + ": " +
                          what);
    }

    void reject_unknown() const {
        for (const auto& [k, v] : values_)
            if (!used_.count(k))
                throw ConfigError(file_ + ":" + std::to_string(v.second) + ": unknown key '" + k + "' in [" + name_ +
                                  "]");
    }

private:
    std::map<std::string, std::pair<std::string, std::size_t>> values_;
    std::set<std::string> used_;
    std::filesystem::path base_;
    std::string file_;
    std::string name_;
    bool present_ = false;
};

inline ElementSource read_element(SectionReader& s, const std::string& prefix, bool default_rl) {
    ElementSource e;
    if (auto p = s.path(prefix + "_touchstone")) {
        e.touchstone = *p;
        e.present = true;
    }
    const auto r = s.number(prefix + "_r"), l = s.number(prefix + "_l"), c = s.number(prefix + "_c");
    if (r || l || c) {
        if (e.present) s.fail(prefix + "_touchstone", "give either a Touchstone model or lumped values, not both");
        e.lumped = LumpedRLC{r.value_or(0.0), l.value_or(0.0), c.value_or(0.0),
                             default_rl && !c ? RlcTopology::SeriesRlShunt : RlcTopology::SeriesRlcShunt};
        if (e.lumped.r < 0 || e.lumped.l < 0 || e.lumped.c < 0) s.fail(prefix + "_r", "values must be nonnegative");
        e.present = true;
    }
    return e;
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir,
                              const std::string& file_name = "config") {
    IniSections ini;
    try {
        ini = parse_ini(in);
    } catch (const ParseError& e) {
        throw ConfigError(file_name + ": " + e.what());
    }
    static const std::set<std::string> known = {"model", "target", "capacitors", "weights", "ga", "transient", "output"};
    for (const auto& [name, v] : ini)
        if (!known.count(name)) throw ConfigError(file_name + ": unknown section [" + name + "]");
    using detail::SectionReader;
    RunConfig c;

    SectionReader model(ini, "model", base_dir, file_name);
    if (auto p = model.path("touchstone"))
        c.pdn_model = *p;
    else
        throw ConfigError(file_name + ": [model] touchstone is required");
    c.observation = model.list("observation");
    if (c.observation.empty()) throw ConfigError(file_name + ": [model] observation needs at least one port label");
    c.capacitor_ports = model.list("capacitor_ports");
    if (auto v = model.text("capacitor_convention")) {
        const auto s = to_lower(*v);
        if (s == "shunt_through")
            c.capacitor_convention = TwoPortConvention::ShuntThrough;
        else if (s == "port1")
            c.capacitor_convention = TwoPortConvention::Port1;
        else
            model.fail("capacitor_convention", "expected shunt_through or port1");
    }
    if (auto v = model.text("regulator_port")) c.vr_port = *v;
    c.vr = detail::read_element(model, "regulator", true);
    if (auto v = model.number("droop")) {
        if (*v < 0) model.fail("droop", "must be nonnegative");
        c.droop = *v;
    }
    if (c.vr.present != !c.vr_port.empty())
        throw ConfigError(file_name + ": [model] regulator_port and a regulator model must be given together");
    c.die = detail::read_element(model, "die", false);
    model.reject_unknown();

    SectionReader target(ini, "target", base_dir, file_name);
    if (auto p = target.path("file")) c.target_curve = *p;
    if (auto v = target.text("weighting")) {
        const auto s = to_lower(*v);
        if (s == "log")
            c.weighting = FrequencyWeighting::Log;
        else if (s == "linear")
            c.weighting = FrequencyWeighting::Linear;
        else
            target.fail("weighting", "expected log or linear");
    }
    target.reject_unknown();

    SectionReader caps(ini, "capacitors", base_dir, file_name);
    if (auto p = caps.path("list")) c.capacitor_list = *p;
    caps.reject_unknown();

    SectionReader w(ini, "weights", base_dir, file_name);
    if (w.present()) {
        auto get = [&](const char* k) { return w.number(k).value_or(0.0); };
        c.weights.area_above = get("area_above");
        c.weights.area_below_credit = get("area_below_credit");
        c.weights.max_violation = get("max_violation");
        c.weights.flatness_dev = get("flatness_dev");
        c.weights.flatness_q = get("flatness_q");
        c.weights.transient = get("transient");
        w.reject_unknown();
    }
    try {
        c.weights.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(file_name + ": [weights] " + e.what());
    }

    SectionReader ga(ini, "ga", base_dir, file_name);
    if (auto v = ga.integer("max_generations")) c.ga.max_generations = int(*v);
    if (auto v = ga.integer("population_size")) c.ga.population_size = int(*v);
    if (auto v = ga.number("crossover_fraction")) c.ga.crossover_fraction = *v;
    if (auto v = ga.integer("elite_count")) c.ga.elite_count = int(*v);
    if (auto v = ga.number("function_tolerance")) c.ga.function_tolerance = *v;
    if (auto v = ga.integer("stall_generations")) c.ga.stall_generations = int(*v);
    if (auto v = ga.integer("seed")) c.ga.rng_seed = std::uint64_t(*v);
    if (auto v = ga.integer("jobs")) c.ga.jobs = int(*v);
    if (auto v = ga.text("attach_order")) {
        const auto s = to_lower(*v);
        if (s == "high_srf_to_low_l")
            c.ga.attach_order = AttachOrder::HighSrfToLowL;
        else if (s == "high_srf_to_high_l")
            c.ga.attach_order = AttachOrder::HighSrfToHighL;
        else
            ga.fail("attach_order", "expected high_srf_to_low_l or high_srf_to_high_l");
    }
    ga.reject_unknown();
    try {
        c.ga.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(file_name + ": [ga] " + e.what());
    }

    SectionReader tr(ini, "transient", base_dir, file_name);
    if (auto v = tr.number("rise_time")) {
        if (!(*v > 0)) tr.fail("rise_time", "must be positive");
        c.transient.rise_time = *v;
    }
    if (auto v = tr.integer("min_poles")) c.transient.fit.min_poles = int(*v);
    if (auto v = tr.integer("max_poles")) c.transient.fit.max_poles = int(*v);
    if (c.transient.fit.min_poles < 1 || c.transient.fit.max_poles < c.transient.fit.min_poles)
        throw ConfigError(file_name + ": [transient] need 1 <= min_poles <= max_poles");
    if (auto v = tr.text("fit_weighting")) {
        const auto s = to_lower(*v);
        if (s == "magnitude")
            c.transient.fit.weighting = FitWeighting::Magnitude;
        else if (s == "inverse_magnitude")
            c.transient.fit.weighting = FitWeighting::InverseMagnitude;
        else if (s == "uniform")
            c.transient.fit.weighting = FitWeighting::Uniform;
        else
            tr.fail("fit_weighting", "expected magnitude, inverse_magnitude or uniform");
    }
    tr.reject_unknown();

    SectionReader out(ini, "output", base_dir, file_name);
    c.output_dir = out.path("dir").value_or(base_dir / "out");
    out.reject_unknown();
    return c;
}

inline RunConfig read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    return parse_config(in, path.parent_path(), path.string());
}

/// Capacitor list: one model file per line, '#' comments; relative paths
/// are taken from the list's directory. Capacitor names are the file stems.
inline std::vector<std::filesystem::path> read_capacitor_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open capacitor list '" + path.string() + "'");
    std::vector<std::filesystem::path> out;
    std::string raw;
    while (std::getline(in, raw)) {
        std::string_view s(raw);
        if (const auto h = s.find('#'); h != std::string_view::npos) s = s.substr(0, h);
        s = trim(s);
        if (s.empty()) continue;
        std::filesystem::path p{std::string(s)};
        out.push_back(p.is_absolute() ? p : path.parent_path() / p);
    }
    if (out.empty()) throw ConfigError("capacitor list '" + path.string() + "' names no models");
    return out;
}

/// A file named by the configuration that does not exist is a
/// configuration error; one that exists but does not parse is a model error.
inline const std::filesystem::path& require_file(const std::filesystem::path& p, const std::string& what) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(p, ec)) throw ConfigError(what + " '" + p.string() + "' does not exist");
    return p;
}

inline ShuntElementModel load_element(const ElementSource& src, const FrequencyGrid& grid, const std::string& name,
                                      TwoPortConvention convention) {
    if (!src.touchstone.empty()) {
        const auto m = read_touchstone_file(require_file(src.touchstone, name + " model"));
        return align_grid(reduce_capacitor_to_shunt(m, name, convention), grid);
    }
    return lumped_to_shunt(src.lumped, grid, name);
}

/// Reads every file the configuration references. The target curve is
/// required only when `need_target` is set (analysis does not use it).
inline BoardInputs load_inputs(const RunConfig& c, bool need_target = true) {
    BoardInputs in;
    in.pdn = read_touchstone_file(require_file(c.pdn_model, "board model"));
    for (const auto& o : c.observation)
        if (!in.pdn.has_port(o)) throw ConfigError("observation port '" + o + "' is not in " + c.pdn_model.string());
    in.observation = c.observation;
    in.candidates = c.capacitor_ports;
    const auto& grid = in.pdn.grid();
    if (c.vr.present) in.vr = RegulatorModel{c.vr_port, load_element(c.vr, grid, "regulator", TwoPortConvention::Port1), c.droop};
    if (c.die.present) in.die = load_element(c.die, grid, "die", TwoPortConvention::Port1);
    if (c.capacitor_list.empty()) throw ConfigError("[capacitors] list is required");
    for (const auto& p : read_capacitor_list(c.capacitor_list)) {
        const auto m = read_touchstone_file(require_file(p, "capacitor model"));
        in.capacitors.push_back(reduce_capacitor_to_shunt(m, p.stem().string(), c.capacitor_convention));
    }
    if (need_target) {
        if (c.target_curve.empty()) throw ConfigError("[target] file is required");
        in.target = read_target_file(require_file(c.target_curve, "target curve"));
    }
    in.weights = c.weights;
    in.scoring.weighting = c.weighting;
    in.transient = c.transient;
    in.attach_order = c.ga.attach_order;
    return in;
}

}  // namespace capopt
