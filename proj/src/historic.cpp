#include "histent/historic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace histent {

double birkhoff_average(const DynamicalSystem& sys, const Point& x,
                        const std::function<double(const Point&)>& phi, std::size_t n) {
    if (n < 1) throw std::invalid_argument("birkhoff_average: n >= 1");
    double acc = 0.0, comp = 0.0;
    Point p = x;
    for (std::size_t i = 0; i < n; ++i) {
        double y = phi(p) - comp;
        double t = acc + y;
        comp = (t - acc) - y;
        acc = t;
        if (i + 1 < n) p = sys.apply(p);
    }
    return acc / static_cast<double>(n);
}

HistoricReport detect_historic_stream(const std::function<double(std::size_t)>& phi_at,
                                      std::size_t horizon, const std::string& label,
                                      const HistoricOptions& opts) {
    if (horizon < 1) throw std::invalid_argument("detect_historic: horizon >= 1");
    std::size_t burn = opts.burn_in ? opts.burn_in : std::max<std::size_t>(1, horizon / 10);
    if (burn >= horizon) throw std::invalid_argument("detect_historic: burn_in < horizon");

    HistoricReport rep;
    rep.phi_label = label;
    rep.horizon = horizon;
    rep.burn_in = burn;
    rep.threshold = opts.threshold;
    rep.low_level = opts.low_level;
    rep.high_level = opts.high_level;
    rep.tail_min = std::numeric_limits<double>::infinity();
    rep.tail_max = -std::numeric_limits<double>::infinity();

    std::size_t stride =
        std::max<std::size_t>(1, horizon / std::max<std::size_t>(1, opts.trace_points));
    double acc = 0.0, comp = 0.0;
    int band = 0; // -1 low, +1 high, 0 neither yet
    for (std::size_t i = 0; i < horizon; ++i) {
        double y = phi_at(i) - comp;
        double t = acc + y;
        comp = (t - acc) - y;
        acc = t;
        double avg = acc / static_cast<double>(i + 1);
        if (i + 1 >= burn) {
            rep.tail_min = std::min(rep.tail_min, avg);
            rep.tail_max = std::max(rep.tail_max, avg);
        }
        if (avg <= opts.low_level && band != -1) {
            ++rep.low_visits;
            band = -1;
        } else if (avg >= opts.high_level && band != 1) {
            ++rep.high_visits;
            band = 1;
        }
        if ((i + 1) % stride == 0 || i + 1 == horizon) rep.trace.push_back({i + 1, avg});
    }
    rep.historic = rep.gap() > opts.threshold;
    return rep;
}

HistoricReport detect_historic(const DynamicalSystem& sys, const Point& x,
                               const NamedObservable& phi, std::size_t horizon,
                               const HistoricOptions& opts) {
    Point p = x;
    bool first = true;
    auto stream = [&](std::size_t) {
        if (!first) p = sys.apply(p);
        first = false;
        return phi.fn(p);
    };
    return detect_historic_stream(stream, horizon, phi.label, opts);
}

// ---------------------------------------------------------------------------
// Limit set estimation
// ---------------------------------------------------------------------------

LimitSetEstimate estimate_limit_set(const DynamicalSystem& sys, const Point& x,
                                    const TestBasis& basis,
                                    const std::vector<std::size_t>& n_grid,
                                    double cluster_radius, std::size_t atom_cap) {
    if (n_grid.empty()) throw std::invalid_argument("estimate_limit_set: empty n grid");
    for (std::size_t i = 1; i < n_grid.size(); ++i)
        if (n_grid[i] <= n_grid[i - 1])
            throw std::invalid_argument("estimate_limit_set: n grid must increase");

    std::size_t n_max = n_grid.back();
    int I = basis.truncation();

    // One pass along the orbit accumulates every E_n integral vector; orbit
    // points are kept (thinned when huge) to materialize representatives.
    std::vector<std::vector<double>> grid_integrals;
    std::vector<double> acc(static_cast<std::size_t>(I), 0.0);
    std::size_t thin = n_max <= atom_cap ? 1 : (n_max + atom_cap - 1) / atom_cap;
    std::vector<Point> kept;
    kept.reserve(n_max / thin + 1);
    Point p = x;
    std::size_t next = 0;
    for (std::size_t i = 0; i < n_max; ++i) {
        for (int f = 1; f <= I; ++f)
            acc[static_cast<std::size_t>(f - 1)] += basis.evaluate(f, p);
        if (i % thin == 0) kept.push_back(p);
        if (next < n_grid.size() && i + 1 == n_grid[next]) {
            std::vector<double> v(acc);
            for (auto& e : v) e /= static_cast<double>(i + 1);
            grid_integrals.push_back(std::move(v));
            ++next;
        }
        if (i + 1 < n_max) p = sys.apply(p);
    }

    LimitSetEstimate out;
    out.cluster_radius = cluster_radius;
    out.n_grid = n_grid;
    for (std::size_t g = 0; g < n_grid.size(); ++g) {
        const auto& v = grid_integrals[g];
        bool joined = false;
        for (auto& cand : out.candidates) {
            if (metric_D_from_integrals(v, cand.integrals, basis).value <= cluster_radius) {
                ++cand.members;
                joined = true;
                break;
            }
        }
        if (joined) continue;
        LimitSetEstimate::Candidate cand;
        cand.n = n_grid[g];
        cand.integrals = v;
        cand.members = 1;
        std::size_t take = (n_grid[g] + thin - 1) / thin;
        std::vector<Point> pts(
            kept.begin(),
            kept.begin() + static_cast<std::ptrdiff_t>(std::min(take, kept.size())));
        cand.measure = AtomicMeasure::uniform(
            std::move(pts), "limit-candidate[n=" + std::to_string(n_grid[g]) + "]");
        out.candidates.push_back(std::move(cand));
    }
    return out;
}

bool n_membership_diagnostic(const DynamicalSystem& sys, const LimitSetEstimate& limits,
                             const std::vector<Point>& block_sample, double radius,
                             double tolerance) {
    if (block_sample.empty()) return false;
    for (const auto& cand : limits.candidates) {
        double inside = 0.0;
        for (const auto& atom : cand.measure.atoms()) {
            for (const auto& b : block_sample) {
                if (sys.distance(atom.point, b) <= radius) {
                    inside += atom.weight;
                    break;
                }
            }
        }
        if (inside >= 1.0 - tolerance) return true;
    }
    return false;
}

} // namespace histent
