#pragma once

// Touchstone 1.x reading/writing and S/Z/Y conversions for N-port models.

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <set>
#include <sstream>

#include "capopt/core.hpp"

namespace capopt {

using Matrix = Eigen::MatrixXcd;

enum class ParamKind { S, Y, Z };
enum class FrequencyUnit { Hz, kHz, MHz, GHz };
enum class DataFormat { MA, DB, RI };

inline double unit_scale(FrequencyUnit u) {
    switch (u) {
        case FrequencyUnit::Hz: return 1.0;
        case FrequencyUnit::kHz: return 1e3;
        case FrequencyUnit::MHz: return 1e6;
        case FrequencyUnit::GHz: return 1e9;
    }
    return 1.0;
}

inline const char* to_string(FrequencyUnit u) {
    switch (u) {
        case FrequencyUnit::Hz: return "Hz";
        case FrequencyUnit::kHz: return "kHz";
        case FrequencyUnit::MHz: return "MHz";
        case FrequencyUnit::GHz: return "GHz";
    }
    return "?";
}
inline const char* to_string(ParamKind k) { return k == ParamKind::S ? "S" : k == ParamKind::Y ? "Y" : "Z"; }
inline const char* to_string(DataFormat f) { return f == DataFormat::MA ? "MA" : f == DataFormat::DB ? "DB" : "RI"; }

/// N-port network parameters on a frequency grid.
///
/// Immutable once constructed; all operations return new models. For Z and Y
/// models `ref_impedance` only records the normalizing resistance used by the
/// file the model came from.
class NetworkModel {
public:
    NetworkModel() = default;
    NetworkModel(FrequencyGrid grid, std::vector<Matrix> data, ParamKind kind, double ref_impedance,
                 std::vector<std::string> port_labels)
        : grid_(std::move(grid)),
          data_(std::move(data)),
          kind_(kind),
          ref_(ref_impedance),
          labels_(std::move(port_labels)) {
        validate();
    }

    const FrequencyGrid& grid() const noexcept { return grid_; }
    const std::vector<Matrix>& data() const noexcept { return data_; }
    const Matrix& at(std::size_t k) const { return data_.at(k); }
    ParamKind kind() const noexcept { return kind_; }
    double ref_impedance() const noexcept { return ref_; }
    const std::vector<std::string>& port_labels() const noexcept { return labels_; }
    std::size_t ports() const noexcept { return labels_.size(); }
    std::size_t frequencies() const noexcept { return grid_.size(); }

    /// Index of a port label; throws ModelError when absent.
    std::size_t port_index(std::string_view label) const {
        for (std::size_t i = 0; i < labels_.size(); ++i)
            if (labels_[i] == label) return i;
        throw ModelError("unknown port label '" + std::string(label) + "'");
    }
    bool has_port(std::string_view label) const {
        return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
    }

private:
    void validate() const {
        if (data_.size() != grid_.size())
            throw ModelError("network model: " + std::to_string(data_.size()) + " matrices for " +
                             std::to_string(grid_.size()) + " frequencies");
        const auto n = static_cast<Eigen::Index>(labels_.size());
        for (const auto& m : data_)
            if (m.rows() != n || m.cols() != n)
                throw ModelError("network model: matrix dimension does not match port count " + std::to_string(n));
        std::set<std::string> seen(labels_.begin(), labels_.end());
        if (seen.size() != labels_.size()) throw ModelError("network model: duplicate port labels");
        if (kind_ == ParamKind::S && !(ref_ > 0.0)) throw ModelError("network model: S-parameters need ref_impedance > 0");
    }

    FrequencyGrid grid_;
    std::vector<Matrix> data_;
    ParamKind kind_ = ParamKind::S;
    double ref_ = 50.0;
    std::vector<std::string> labels_;
};

inline std::vector<std::string> default_port_labels(std::size_t n) {
    std::vector<std::string> labels;
    for (std::size_t i = 1; i <= n; ++i) labels.push_back("P" + std::to_string(i));
    return labels;
}

// ---------------------------------------------------------------------------
// Matrix helpers

namespace detail {

/// LU of `m`, throwing ConversionError when it is numerically singular.
/// `scale` is the magnitude of a typical entry; a pivot below 1e-12 * scale
/// counts as singular.
inline Eigen::PartialPivLU<Matrix> checked_lu(const Matrix& m, double scale, double frequency, const char* what) {
    Eigen::PartialPivLU<Matrix> lu(m);
    const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!(min_pivot > 1e-12 * scale) || !(lu.rcond() > 1e-15))
        throw ConversionError(std::string("singular ") + what, frequency);
    return lu;
}

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Conversions

/// Z = Z0 (I + S)(I - S)^-1 at every frequency.
inline NetworkModel s_to_z(const NetworkModel& m) {
    if (m.kind() != ParamKind::S) throw ModelError("s_to_z: model is not S-parameters");
    const auto n = static_cast<Eigen::Index>(m.ports());
    const Matrix eye = Matrix::Identity(n, n);
    std::vector<Matrix> out;
    out.reserve(m.frequencies());
    for (std::size_t k = 0; k < m.frequencies(); ++k) {
        const Matrix& s = m.at(k);
        auto lu = detail::checked_lu(eye - s, 1.0, m.grid()[k], "(I - S)");
        out.push_back(m.ref_impedance() * lu.solve(eye + s));
    }
    return NetworkModel(m.grid(), std::move(out), ParamKind::Z, m.ref_impedance(), m.port_labels());
}

/// S = (Z - Z0 I)(Z + Z0 I)^-1 at every frequency.
inline NetworkModel z_to_s(const NetworkModel& m, double z0) {
    if (m.kind() != ParamKind::Z) throw ModelError("z_to_s: model is not Z-parameters");
    if (!(z0 > 0.0)) throw ModelError("z_to_s: reference impedance must be positive");
    const auto n = static_cast<Eigen::Index>(m.ports());
    const Matrix eye = Matrix::Identity(n, n);
    std::vector<Matrix> out;
    out.reserve(m.frequencies());
    for (std::size_t k = 0; k < m.frequencies(); ++k) {
        const Matrix& z = m.at(k);
        auto lu = detail::checked_lu(z + z0 * eye, std::max(z0, detail::max_abs(z)), m.grid()[k], "(Z + Z0 I)");
        out.push_back(lu.solve(z - z0 * eye));
    }
    return NetworkModel(m.grid(), std::move(out), ParamKind::S, z0, m.port_labels());
}

namespace detail {
inline NetworkModel invert_all(const NetworkModel& m, ParamKind to, const char* what) {
    const auto n = static_cast<Eigen::Index>(m.ports());
    const Matrix eye = Matrix::Identity(n, n);
    std::vector<Matrix> out;
    out.reserve(m.frequencies());
    for (std::size_t k = 0; k < m.frequencies(); ++k) {
        auto lu = checked_lu(m.at(k), max_abs(m.at(k)), m.grid()[k], what);
        out.push_back(lu.solve(eye));
    }
    return NetworkModel(m.grid(), std::move(out), to, m.ref_impedance(), m.port_labels());
}
}  // namespace detail

inline NetworkModel z_to_y(const NetworkModel& m) {
    if (m.kind() != ParamKind::Z) throw ModelError("z_to_y: model is not Z-parameters");
    return detail::invert_all(m, ParamKind::Y, "Z matrix");
}

inline NetworkModel y_to_z(const NetworkModel& m) {
    if (m.kind() != ParamKind::Y) throw ModelError("y_to_z: model is not Y-parameters");
    return detail::invert_all(m, ParamKind::Z, "Y matrix");
}

/// Re-references S-parameters to a new (common, real) port impedance:
/// S' = (I - r S)^-1 (S - r I), r = (Z0' - Z0) / (Z0' + Z0).
inline NetworkModel renormalize(const NetworkModel& m, double new_z0) {
    if (m.kind() != ParamKind::S) throw ModelError("renormalize: model is not S-parameters");
    if (!(new_z0 > 0.0)) throw ModelError("renormalize: reference impedance must be positive");
    if (new_z0 == m.ref_impedance()) return m;
    const double r = (new_z0 - m.ref_impedance()) / (new_z0 + m.ref_impedance());
    const auto n = static_cast<Eigen::Index>(m.ports());
    const Matrix eye = Matrix::Identity(n, n);
    std::vector<Matrix> out;
    out.reserve(m.frequencies());
    for (std::size_t k = 0; k < m.frequencies(); ++k) {
        const Matrix& s = m.at(k);
        auto lu = detail::checked_lu(eye - r * s, 1.0, m.grid()[k], "(I - r S)");
        out.push_back(lu.solve(s - r * eye));
    }
    return NetworkModel(m.grid(), std::move(out), ParamKind::S, new_z0, m.port_labels());
}

/// Converts any model to S-parameters referenced to `z0`.
inline NetworkModel to_s(const NetworkModel& m, double z0) {
    switch (m.kind()) {
        case ParamKind::S: return renormalize(m, z0);
        case ParamKind::Z: return z_to_s(m, z0);
        case ParamKind::Y: return z_to_s(y_to_z(m), z0);
    }
    return m;
}

inline NetworkModel to_z(const NetworkModel& m) {
    switch (m.kind()) {
        case ParamKind::S: return s_to_z(m);
        case ParamKind::Z: return m;
        case ParamKind::Y: return y_to_z(m);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Touchstone 1.x

struct TouchstoneHeader {
    FrequencyUnit freq_unit = FrequencyUnit::GHz;
    ParamKind param = ParamKind::S;
    DataFormat format = DataFormat::MA;
    double resistance = 50.0;

    friend bool operator==(const TouchstoneHeader&, const TouchstoneHeader&) = default;
};

/// Parses a '#' option line. Omitted fields keep the Touchstone defaults.
inline TouchstoneHeader parse_option_line(std::string_view line, std::size_t line_no = 0) {
    line = trim(line);
    if (line.empty() || line.front() != '#') throw ParseError("option line must start with '#'", line_no);
    if (const auto bang = line.find('!'); bang != std::string_view::npos) line = line.substr(0, bang);
    const auto tokens = split_ws(line.substr(1));
    TouchstoneHeader h;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string t = to_lower(tokens[i]);
        if (t == "hz") h.freq_unit = FrequencyUnit::Hz;
        else if (t == "khz") h.freq_unit = FrequencyUnit::kHz;
        else if (t == "mhz") h.freq_unit = FrequencyUnit::MHz;
        else if (t == "ghz") h.freq_unit = FrequencyUnit::GHz;
        else if (t == "s") h.param = ParamKind::S;
        else if (t == "y") h.param = ParamKind::Y;
        else if (t == "z") h.param = ParamKind::Z;
        else if (t == "g" || t == "h") throw ParseError("unsupported parameter type '" + std::string(tokens[i]) + "'", line_no);
        else if (t == "ma") h.format = DataFormat::MA;
        else if (t == "db") h.format = DataFormat::DB;
        else if (t == "ri") h.format = DataFormat::RI;
        else if (t == "r") {
            double r = 0.0;
            if (i + 1 >= tokens.size() || !parse_double(tokens[i + 1], r) || !(r > 0.0))
                throw ParseError("malformed option line: 'R' needs a positive resistance", line_no);
            h.resistance = r;
            ++i;
        } else {
            throw ParseError("malformed option line: unsupported token '" + std::string(tokens[i]) + "'", line_no);
        }
    }
    return h;
}

struct TouchstoneFile {
    TouchstoneHeader header;
    NetworkModel model;
};

namespace detail {

inline Complex decode_pair(DataFormat fmt, double a, double b) {
    switch (fmt) {
        case DataFormat::RI: return {a, b};
        case DataFormat::MA: return std::polar(a, b * std::numbers::pi / 180.0);
        case DataFormat::DB: return std::polar(std::pow(10.0, a / 20.0), b * std::numbers::pi / 180.0);
    }
    return {};
}

// Magnitude floor for DB output so that exact zeros stay finite.
inline constexpr double kDbFloor = -1000.0;

inline std::pair<double, double> encode_pair(DataFormat fmt, Complex v) {
    switch (fmt) {
        case DataFormat::RI: return {v.real(), v.imag()};
        case DataFormat::MA: return {std::abs(v), std::arg(v) * 180.0 / std::numbers::pi};
        case DataFormat::DB: {
            const double mag = std::abs(v);
            const double db = mag > 0.0 ? std::max(kDbFloor, 20.0 * std::log10(mag)) : kDbFloor;
            return {db, std::arg(v) * 180.0 / std::numbers::pi};
        }
    }
    return {};
}

struct Token {
    double value;
    std::size_t line;
    bool first_on_line;
};

// Recognizes "! Port[3] = C12" style label comments.
inline bool parse_port_label(std::string_view comment, std::size_t& index, std::string& label) {
    static const std::regex re(R"(^\s*port\s*\[\s*(\d+)\s*\]\s*=\s*(\S+)\s*$)", std::regex::icase);
    std::cmatch m;
    if (!std::regex_match(comment.data(), comment.data() + comment.size(), m, re)) return false;
    index = std::stoul(m[1].str());
    label = m[2].str();
    return true;
}

}  // namespace detail

/// Parses Touchstone 1.x text describing an `n_ports`-port network.
///
/// Comment lines and trailing comments start with '!'. Port labels are read
/// from "! Port[k] = label" comments when present, otherwise P1..PN. Matrix
/// rows may be wrapped over any number of lines, but every frequency record
/// must start on a new line. Two-port noise data is skipped with a warning.
inline TouchstoneFile read_touchstone(std::istream& in, std::size_t n_ports) {
    if (n_ports == 0) throw ParseError("port count must be positive", 0);
    TouchstoneFile file;
    bool have_option = false;
    std::vector<detail::Token> tokens;
    std::vector<std::pair<std::size_t, std::string>> labels;

    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line(raw);
        std::string_view comment;
        if (const auto bang = line.find('!'); bang != std::string_view::npos) {
            comment = line.substr(bang + 1);
            line = line.substr(0, bang);
        }
        if (!comment.empty()) {
            std::size_t idx = 0;
            std::string label;
            if (detail::parse_port_label(comment, idx, label)) labels.emplace_back(idx, label);
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[')
            throw ParseError("Touchstone 2.x keyword '" + std::string(line) + "' found; only Touchstone 1.x is supported",
                             line_no);
        if (line.front() == '#') {
            if (!have_option) {
                file.header = parse_option_line(line, line_no);
                have_option = true;
            }
            continue;
        }
        bool first = true;
        for (auto tok : split_ws(line)) {
            double v = 0.0;
            if (!parse_double(tok, v))
                throw ParseError("invalid numeric value '" + std::string(tok) + "'", line_no);
            tokens.push_back({v, line_no, first});
            first = false;
        }
    }

    const std::size_t per_record = 1 + 2 * n_ports * n_ports;
    const double fscale = unit_scale(file.header.freq_unit);
    const auto n = static_cast<Eigen::Index>(n_ports);
    std::vector<double> freqs;
    std::vector<Matrix> data;

    std::size_t pos = 0;
    while (pos < tokens.size()) {
        const auto& start = tokens[pos];
        if (!start.first_on_line)
            throw ParseError("wrong value count per frequency: expected " + std::to_string(per_record - 1) +
                                 " values after each frequency",
                             start.line);
        const double f = start.value * fscale;
        if (!freqs.empty() && !(f > freqs.back())) {
            if (n_ports == 2) {
                warn("skipping two-port noise parameter data starting at line " + std::to_string(start.line));
                break;
            }
            throw ParseError("non-monotonic frequency " + format_sig(f, 9) + " Hz", start.line);
        }
        if (f < 0.0) throw ParseError("negative frequency", start.line);
        if (pos + per_record > tokens.size())
            throw ParseError("wrong value count per frequency: record is truncated", start.line);
        Matrix m(n, n);
        for (std::size_t e = 0; e < n_ports * n_ports; ++e) {
            const double a = tokens[pos + 1 + 2 * e].value;
            const double b = tokens[pos + 2 + 2 * e].value;
            Complex v = detail::decode_pair(file.header.format, a, b);
            if (file.header.param == ParamKind::Z) v *= file.header.resistance;
            if (file.header.param == ParamKind::Y) v /= file.header.resistance;
            Eigen::Index r = static_cast<Eigen::Index>(e / n_ports), c = static_cast<Eigen::Index>(e % n_ports);
            if (n_ports == 2) std::swap(r, c);  // S11 S21 S12 S22
            m(r, c) = v;
        }
        freqs.push_back(f);
        data.push_back(std::move(m));
        pos += per_record;
    }
    if (freqs.empty()) throw ParseError("no network data found", line_no);

    std::vector<std::string> port_labels = default_port_labels(n_ports);
    for (const auto& [idx, label] : labels) {
        if (idx < 1 || idx > n_ports) throw ParseError("port label index " + std::to_string(idx) + " out of range", 0);
        port_labels[idx - 1] = label;
    }
    file.model = NetworkModel(FrequencyGrid(std::move(freqs)), std::move(data), file.header.param,
                              file.header.resistance, std::move(port_labels));
    return file;
}

inline NetworkModel parse_touchstone(std::istream& in, std::size_t n_ports) { return read_touchstone(in, n_ports).model; }

inline NetworkModel parse_touchstone(std::string_view text, std::size_t n_ports) {
    std::istringstream in{std::string(text)};
    return parse_touchstone(in, n_ports);
}

/// Port count from a ".sNp" extension, if the name has one.
inline std::optional<std::size_t> ports_from_extension(const std::filesystem::path& path) {
    static const std::regex re(R"(^\.s(\d+)p$)", std::regex::icase);
    const std::string ext = path.extension().string();
    std::smatch m;
    if (std::regex_match(ext, m, re)) return std::stoul(m[1].str());
    return std::nullopt;
}

inline constexpr std::uintmax_t kMaxTouchstoneBytes = std::uintmax_t(1) << 30;

/// Reads a Touchstone file. An explicit `n_ports` overrides the extension.
inline NetworkModel read_touchstone_file(const std::filesystem::path& path, std::optional<std::size_t> n_ports = {}) {
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(path, ec);
    if (ec) throw ModelError("cannot open Touchstone file " + path.string());
    if (bytes > kMaxTouchstoneBytes)
        throw ModelError(path.string() + " is larger than 1 GB; thin the frequency sweep before optimizing");
    const auto n = n_ports ? n_ports : ports_from_extension(path);
    if (!n) throw ModelError("cannot infer port count for " + path.string() + " (expected a .sNp extension)");
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open Touchstone file " + path.string());
    try {
        return parse_touchstone(in, *n);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

/// Emits a Touchstone 1.x file. Values are written with round-trip precision;
/// Z and Y data are normalized by the model's reference resistance.
inline std::string write_touchstone(const NetworkModel& model, DataFormat format,
                                    FrequencyUnit unit = FrequencyUnit::GHz) {
    std::ostringstream out;
    const std::size_t n = model.ports();
    out << "! " << n << "-port network\n";
    for (std::size_t i = 0; i < n; ++i) out << "! Port[" << (i + 1) << "] = " << model.port_labels()[i] << '\n';
    const double r = model.ref_impedance() > 0.0 ? model.ref_impedance() : 50.0;
    out << "# " << to_string(unit) << ' ' << to_string(model.kind()) << ' ' << to_string(format) << " R "
        << format_exact(r) << '\n';
    const double fscale = unit_scale(unit);

    auto value = [&](const Matrix& m, std::size_t row, std::size_t col) {
        Complex v = m(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
        if (model.kind() == ParamKind::Z) v /= r;
        if (model.kind() == ParamKind::Y) v *= r;
        const auto [a, b] = detail::encode_pair(format, v);
        return format_exact(a) + ' ' + format_exact(b);
    };

    for (std::size_t k = 0; k < model.frequencies(); ++k) {
        const Matrix& m = model.at(k);
        out << format_exact(model.grid()[k] / fscale);
        if (n <= 2) {
            for (std::size_t e = 0; e < n * n; ++e) {
                std::size_t row = e / n, col = e % n;
                if (n == 2) std::swap(row, col);
                out << ' ' << value(m, row, col);
            }
            out << '\n';
            continue;
        }
        for (std::size_t row = 0; row < n; ++row) {
            if (row > 0) out << ' ';
            for (std::size_t col = 0; col < n; ++col) {
                if (col > 0 && col % 4 == 0) out << "\n ";
                out << ' ' << value(m, row, col);
            }
            out << '\n';
        }
    }
    return out.str();
}

inline void write_touchstone_file(const std::filesystem::path& path, const NetworkModel& model, DataFormat format,
                                  FrequencyUnit unit = FrequencyUnit::GHz) {
    std::ofstream out(path);
    if (!out) throw ModelError("cannot write " + path.string());
    out << write_touchstone(model, format, unit);
}

}  // namespace capopt
