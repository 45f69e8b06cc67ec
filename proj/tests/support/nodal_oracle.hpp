#pragma once

// Direct nodal analysis of small lumped circuits, used as a reference for
// the S-domain termination and merge operations.

#include <complex>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using cd = std::complex<double>;

struct Rlc {
    double r = 0.0;
    double l = 0.0;
    double c = 0.0;  // 0: no capacitor

    cd impedance(double f) const {
        const double w = 2.0 * std::numbers::pi * f;
        cd z(r, w * l);
        if (c > 0.0) z += cd(0.0, -1.0 / (w * c));
        return z;
    }
};

struct Edge {
    int a;  // -1 is ground
    int b;
    Rlc element;
};

/// A circuit plus the port bookkeeping of a sequence of attach / short /
/// open / merge operations, solved by nodal analysis at each query.
class Circuit {
public:
    explicit Circuit(int nodes) : parent_(std::size_t(nodes)), grounded_(std::size_t(nodes), false) {
        std::iota(parent_.begin(), parent_.end(), 0);
    }

    void add_branch(int a, int b, Rlc e) { edges_.push_back({a, b, e}); }
    void add_port(std::string label, int node) { ports_.emplace_back(std::move(label), node); }

    const std::vector<std::pair<std::string, int>>& ports() const { return ports_; }

    void attach(const std::string& label, Rlc e) { edges_.push_back({take(label), -1, e}); }
    void short_to_ground(const std::string& label) { grounded_[std::size_t(find(take(label)))] = true; }
    void open(const std::string& label) { take(label); }

    /// Ties the nodes of the listed ports together; the merged port takes the
    /// position of the first listed one.
    void merge(const std::vector<std::string>& labels, const std::string& merged) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < ports_.size(); ++i)
            if (ports_[i].first == labels.front()) pos = i;
        const int root = find(ports_[pos].second);
        for (std::size_t k = 1; k < labels.size(); ++k) {
            const int r = find(take(labels[k]));
            if (r != root) {
                if (grounded_[std::size_t(r)]) grounded_[std::size_t(root)] = true;
                parent_[std::size_t(r)] = root;
            }
        }
        for (auto& p : ports_)
            if (p.first == labels.front()) p.first = merged;
    }

    /// Open-circuit impedance matrix of the remaining ports.
    Eigen::MatrixXcd z_matrix(double f) {
        std::map<int, int> index;
        for (int n = 0; n < int(parent_.size()); ++n) {
            const int r = find(n);
            if (!grounded_[std::size_t(r)] && !index.count(r)) index.emplace(r, int(index.size()));
        }
        auto id = [&](int node) {
            if (node < 0) return -1;
            auto it = index.find(find(node));
            return it == index.end() ? -1 : it->second;
        };
        const auto n = Eigen::Index(index.size());
        Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
        for (const auto& e : edges_) {
            const int a = id(e.a), b = id(e.b);
            if (a == b) continue;
            const cd g = 1.0 / e.element.impedance(f);
            if (a >= 0) y(a, a) += g;
            if (b >= 0) y(b, b) += g;
            if (a >= 0 && b >= 0) {
                y(a, b) -= g;
                y(b, a) -= g;
            }
        }
        const auto np = Eigen::Index(ports_.size());
        Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(n, np);
        for (Eigen::Index k = 0; k < np; ++k) {
            const int i = id(ports_[std::size_t(k)].second);
            if (i >= 0) p(i, k) = 1.0;
        }
        const Eigen::MatrixXcd x = y.fullPivLu().solve(p);
        return p.transpose() * x;
    }

private:
    int find(int n) {
        while (parent_[std::size_t(n)] != n) n = parent_[std::size_t(n)] = parent_[std::size_t(parent_[std::size_t(n)])];
        return n;
    }
    int take(const std::string& label) {
        for (std::size_t i = 0; i < ports_.size(); ++i)
            if (ports_[i].first == label) {
                const int node = ports_[i].second;
                ports_.erase(ports_.begin() + std::ptrdiff_t(i));
                return node;
            }
        throw std::runtime_error("oracle: unknown port " + label);
    }

    std::vector<int> parent_;
    std::vector<bool> grounded_;
    std::vector<Edge> edges_;
    std::vector<std::pair<std::string, int>> ports_;
};

/// Random element with PDN-like values. Kinds: 0 = R+L, 1 = R+L+C.
inline Rlc random_rlc(std::mt19937_64& rng, bool allow_c) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto log_uniform = [&](double lo, double hi) { return lo * std::pow(hi / lo, u(rng)); };
    Rlc e;
    e.r = log_uniform(1e-3, 1.0);
    e.l = log_uniform(1e-11, 1e-8);
    if (allow_c && u(rng) < 0.5) e.c = log_uniform(1e-9, 1e-5);
    return e;
}

}  // namespace oracle
