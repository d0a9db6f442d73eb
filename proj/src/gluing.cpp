#include "histent/gluing.hpp"

#include "histent/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace histent {

namespace {

bool is_shift_system(const DynamicalSystem& sys) {
    return sys.kind() == SystemKind::FullShift2;
}

std::vector<std::uint8_t> rotated_block(const std::vector<std::uint8_t>& w, std::size_t by) {
    std::vector<std::uint8_t> r(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) r[i] = w[(i + by) % w.size()];
    return r;
}

// Basis integrals of the n-point empirical measure of w^infinity: cyclic
// occurrence frequencies of the basis cylinders.
std::vector<double> periodic_word_integrals(const std::vector<std::uint8_t>& w,
                                            const TestBasis& basis) {
    std::vector<double> out(static_cast<std::size_t>(basis.truncation()), 0.0);
    std::size_t n = w.size();
    for (int i = 1; i <= basis.truncation(); ++i) {
        auto spec = basis.cylinder_spec(i);
        if (!spec) throw std::logic_error("periodic_word_integrals: needs the shift basis");
        std::size_t hits = 0;
        for (std::size_t p = 0; p < n; ++p) {
            bool match = true;
            for (int r = 0; r < spec->depth; ++r) {
                std::uint32_t want = (spec->bits >> (spec->depth - 1 - r)) & 1u;
                if (w[(p + static_cast<std::size_t>(r)) % n] != want) {
                    match = false;
                    break;
                }
            }
            if (match) ++hits;
        }
        out[static_cast<std::size_t>(i - 1)] = static_cast<double>(hits) / static_cast<double>(n);
    }
    return out;
}

std::vector<double> bernoulli_integrals(double p, const TestBasis& basis) {
    std::vector<double> out(static_cast<std::size_t>(basis.truncation()), 0.0);
    for (int i = 1; i <= basis.truncation(); ++i) {
        auto spec = basis.cylinder_spec(i);
        if (!spec) throw std::logic_error("bernoulli_integrals: needs the shift basis");
        double mass = 1.0;
        for (int r = 0; r < spec->depth; ++r) {
            std::uint32_t bit = (spec->bits >> (spec->depth - 1 - r)) & 1u;
            mass *= bit ? p : 1.0 - p;
        }
        out[static_cast<std::size_t>(i - 1)] = mass;
    }
    return out;
}

std::size_t detect_orbit_period(const DynamicalSystem& sys, TorusPoint p, std::size_t cap = 64) {
    Point cur = p;
    for (std::size_t i = 1; i <= cap; ++i) {
        cur = sys.apply(cur);
        if (torus_distance(std::get<TorusPoint>(cur), p) < 1e-12) return i;
    }
    throw std::invalid_argument("target orbit point is not periodic within period " +
                                std::to_string(cap));
}

std::vector<TorusPoint> torus_orbit_of(const DynamicalSystem& sys, TorusPoint p,
                                       std::size_t length) {
    std::vector<TorusPoint> out;
    out.reserve(length);
    Point cur = p;
    for (std::size_t i = 0; i < length; ++i) {
        out.push_back(std::get<TorusPoint>(cur));
        if (i + 1 < length) cur = sys.apply(cur);
    }
    return out;
}

std::vector<double> torus_points_integrals(const std::vector<TorusPoint>& pts,
                                           const TestBasis& basis) {
    std::vector<double> out(static_cast<std::size_t>(basis.truncation()), 0.0);
    for (const auto& p : pts)
        for (int i = 1; i <= basis.truncation(); ++i)
            out[static_cast<std::size_t>(i - 1)] += basis.evaluate(i, Point(p));
    for (auto& v : out) v /= static_cast<double>(pts.size());
    return out;
}

double integrals_D(const std::vector<double>& a, const std::vector<double>& b,
                   const TestBasis& basis) {
    return metric_D_from_integrals(a, b, basis).value;
}

} // namespace

// ---------------------------------------------------------------------------
// Targets
// ---------------------------------------------------------------------------

std::string TargetComponent::describe() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::PeriodicWord: {
            os << "word[";
            for (auto s : word) os << int(s);
            os << "]";
            break;
        }
        case Kind::PeriodicOrbit:
            os << "orbit[" << format_double(orbit_point.x) << ","
               << format_double(orbit_point.y) << "]";
            break;
        case Kind::Bernoulli:
            os << "bernoulli[" << format_double(bernoulli_p) << "]";
            break;
    }
    return os.str();
}

std::vector<double> target_integrals(const DynamicalSystem& sys, const TargetComponent& t,
                                     const TestBasis& basis) {
    switch (t.kind) {
        case TargetComponent::Kind::PeriodicWord: {
            if (!is_shift_system(sys))
                throw std::invalid_argument("periodic-word target needs the shift");
            if (t.word.empty()) throw std::invalid_argument("empty target word");
            return periodic_word_integrals(t.word, basis);
        }
        case TargetComponent::Kind::Bernoulli: {
            if (!is_shift_system(sys))
                throw std::invalid_argument("bernoulli target needs the shift");
            if (!(t.bernoulli_p > 0.0 && t.bernoulli_p < 1.0))
                throw std::invalid_argument("bernoulli parameter must lie in (0,1)");
            return bernoulli_integrals(t.bernoulli_p, basis);
        }
        case TargetComponent::Kind::PeriodicOrbit: {
            if (is_shift_system(sys))
                throw std::invalid_argument("periodic-orbit target needs a torus system");
            std::size_t p = detect_orbit_period(sys, t.orbit_point);
            return torus_points_integrals(torus_orbit_of(sys, t.orbit_point, p), basis);
        }
    }
    throw std::logic_error("unreachable");
}

std::vector<double> target_integrals(const DynamicalSystem& sys, const TargetMeasure& t,
                                     const TestBasis& basis) {
    if (t.empty()) throw std::invalid_argument("empty target measure");
    std::vector<double> out(static_cast<std::size_t>(basis.truncation()), 0.0);
    double wsum = 0.0;
    for (const auto& c : t) {
        auto ci = target_integrals(sys, c, basis);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += c.weight * ci[i];
        wsum += c.weight;
    }
    if (std::fabs(wsum - 1.0) > 1e-9)
        throw std::invalid_argument("target component weights must sum to 1");
    return out;
}

double target_integral(const DynamicalSystem& sys, const TargetMeasure& t,
                       const std::function<double(const Point&)>& phi) {
    double out = 0.0;
    for (const auto& c : t) {
        switch (c.kind) {
            case TargetComponent::Kind::PeriodicWord: {
                std::size_t n = c.word.size();
                double acc = 0.0;
                for (std::size_t r = 0; r < n; ++r)
                    acc += phi(Point(SymbolicWord::periodic(rotated_block(c.word, r))));
                out += c.weight * acc / static_cast<double>(n);
                break;
            }
            case TargetComponent::Kind::PeriodicOrbit: {
                std::size_t p = detect_orbit_period(sys, c.orbit_point);
                auto orbit = torus_orbit_of(sys, c.orbit_point, p);
                double acc = 0.0;
                for (const auto& q : orbit) acc += phi(Point(q));
                out += c.weight * acc / static_cast<double>(p);
                break;
            }
            case TargetComponent::Kind::Bernoulli: {
                // Monte Carlo with a fixed seed; reporting only.
                std::mt19937_64 rng(0x5eedb00b);
                std::bernoulli_distribution bit(c.bernoulli_p);
                double acc = 0.0;
                const int trials = 4096;
                for (int s = 0; s < trials; ++s) {
                    std::vector<std::uint8_t> w(48);
                    for (auto& b : w) b = bit(rng) ? 1 : 0;
                    acc += phi(Point(SymbolicWord::from_prefix(std::move(w))));
                }
                out += c.weight * acc / trials;
                break;
            }
        }
    }
    return out;
}

int rho_alternator(int k) { return (k + 1) % 2 + 1; }

// ---------------------------------------------------------------------------
// Library
// ---------------------------------------------------------------------------

std::pair<std::size_t, std::size_t> best_return_window(
    const DynamicalSystem& sys, const std::vector<Point>& points,
    const std::function<bool(const Point&, const Point&)>& same_cell, std::size_t n,
    double gamma) {
    if (points.empty()) throw std::invalid_argument("best_return_window: no points");
    std::size_t q_hi = static_cast<std::size_t>(std::floor((1.0 + gamma) * n));
    std::size_t best_q = n, best_count = 0;
    std::vector<Point> iter = points;
    for (std::size_t q = 0; q < n; ++q)
        for (auto& p : iter) p = sys.apply(p);
    for (std::size_t q = n; q <= q_hi; ++q) {
        std::size_t count = 0;
        for (std::size_t i = 0; i < points.size(); ++i)
            if (same_cell(points[i], iter[i])) ++count;
        if (count > best_count) { // ties keep the smallest q
            best_count = count;
            best_q = q;
        }
        if (q < q_hi)
            for (auto& p : iter) p = sys.apply(p);
    }
    return {best_q, best_count};
}

namespace {

std::vector<std::uint8_t> cell_prefix_for(const TargetComponent& t, std::size_t depth) {
    std::vector<std::uint8_t> prefix(depth);
    if (t.kind == TargetComponent::Kind::PeriodicWord) {
        for (std::size_t i = 0; i < depth; ++i) prefix[i] = t.word[i % t.word.size()];
    } else {
        for (std::size_t i = 0; i < depth; ++i) prefix[i] = static_cast<std::uint8_t>(i % 2);
    }
    return prefix;
}

LibraryComponent build_shift_component(const TargetComponent& target, int k, int j_index,
                                       const TestBasis& basis, const LibraryOptions& opt,
                                       std::uint64_t seed) {
    LibraryComponent comp;
    comp.target = target;
    comp.target_ints = target_integrals(FullShift(), target, basis);
    comp.cell_prefix = cell_prefix_for(target, opt.cell_depth);
    comp.cell_diameter = std::ldexp(1.0, -static_cast<int>(opt.cell_depth));

    double tolerance = 1.0 / static_cast<double>(k);
    if (target.kind == TargetComponent::Kind::PeriodicWord) {
        std::size_t p = target.word.size();
        std::size_t n = ((std::max(opt.base_length, opt.cell_depth) + p - 1) / p) * p;
        comp.length = n;
        std::vector<std::uint8_t> block(n);
        for (std::size_t i = 0; i < n; ++i) block[i] = target.word[i % p];
        double d = integrals_D(periodic_word_integrals(block, basis), comp.target_ints, basis);
        if (d >= tolerance)
            throw LibraryError("segment library: periodic word misses its own measure", k,
                               j_index, d);
        comp.worst_empirical_D = d;
        comp.segments.push_back(SymbolicWord::periodic(std::move(block)));
    } else if (target.kind == TargetComponent::Kind::Bernoulli) {
        // sampled periodic words sharing the cell prefix, kept when their
        // empirical measure lands within the level tolerance
        std::size_t n = std::max<std::size_t>(opt.base_length,
                                              opt.base_length * static_cast<std::size_t>(k));
        if (n <= opt.cell_depth + 2) n = opt.cell_depth + 4;
        comp.length = n;
        std::mt19937_64 rng(seed);
        std::bernoulli_distribution bit(target.bernoulli_p);
        double best = 2.0;
        std::vector<std::vector<std::uint8_t>> words;
        std::unordered_map<std::string, char> seen;
        for (std::size_t attempt = 0;
             attempt < opt.search_attempts && words.size() < opt.max_segments; ++attempt) {
            std::vector<std::uint8_t> w(n);
            for (std::size_t i = 0; i < opt.cell_depth; ++i) w[i] = comp.cell_prefix[i];
            for (std::size_t i = opt.cell_depth; i < n; ++i) w[i] = bit(rng) ? 1 : 0;
            double d = integrals_D(periodic_word_integrals(w, basis), comp.target_ints, basis);
            best = std::min(best, d);
            if (d >= tolerance) continue;
            std::string key(w.begin(), w.end());
            if (!seen.emplace(std::move(key), 1).second) continue;
            comp.worst_empirical_D = std::max(comp.worst_empirical_D, d);
            words.push_back(std::move(w));
        }
        if (words.empty())
            throw LibraryError("segment library: no admissible words at level " +
                                   std::to_string(k) + ", component " +
                                   std::to_string(j_index) +
                                   " (best D = " + format_double(best) + ")",
                               k, j_index, best);
        for (auto& w : words) comp.segments.push_back(SymbolicWord::periodic(std::move(w)));
    } else {
        throw std::invalid_argument("shift targets must be periodic words or Bernoulli");
    }

    // separation certificate
    FullShift shift;
    auto sep = max_separated(shift, comp.segments, comp.length, opt.eps_prime);
    if (sep.count != comp.segments.size())
        throw std::logic_error("segment library: separation certificate failed");
    comp.separation = opt.eps_prime;

    // return-window scan; periodic words return exactly at q = n
    auto same_cell = [&](const Point& a, const Point& b) {
        const auto& wa = std::get<SymbolicWord>(a);
        const auto& wb = std::get<SymbolicWord>(b);
        for (std::size_t i = 0; i < opt.cell_depth; ++i)
            if (wa.at(i) != wb.at(i)) return false;
        return true;
    };
    auto [q, cnt] = best_return_window(shift, comp.segments, same_cell, comp.length, opt.gamma);
    if (q != comp.length || cnt != comp.segments.size())
        throw std::logic_error("segment library: periodic return window mismatch");
    return comp;
}

LibraryComponent build_torus_component(const DynamicalSystem& sys,
                                       const TargetComponent& target, int k, int j_index,
                                       const TestBasis& basis, const LibraryOptions& opt,
                                       std::uint64_t seed) {
    if (sys.kind() != SystemKind::CatMap)
        throw std::invalid_argument(
            "segment library: torus gluing is implemented for the linear toral map only");
    if (target.kind != TargetComponent::Kind::PeriodicOrbit)
        throw std::invalid_argument("torus targets must be periodic-orbit measures");

    LibraryComponent comp;
    comp.target = target;
    comp.target_ints = target_integrals(sys, target, basis);
    comp.orbit_period = detect_orbit_period(sys, target.orbit_point);
    comp.cell_center = target.orbit_point;
    comp.cell_diameter = opt.cell_size > 0.0 ? opt.cell_size : opt.eps_prime / 27.0;
    std::size_t n =
        ((opt.base_length + comp.orbit_period - 1) / comp.orbit_period) * comp.orbit_period;
    comp.length = n;

    double tolerance = 1.0 / static_cast<double>(k);
    if (!opt.force_generic_search) {
        // the invariant orbit realizes its own measure exactly
        auto orbit = torus_orbit_of(sys, target.orbit_point, n);
        double d = integrals_D(torus_points_integrals(orbit, basis), comp.target_ints, basis);
        if (d >= tolerance)
            throw LibraryError("segment library: exact orbit misses its measure", k, j_index, d);
        comp.worst_empirical_D = d;
        comp.segments.push_back(target.orbit_point);
        comp.torus_orbits.push_back(std::move(orbit));
    } else {
        // search mode: random starts must track the measure for n steps and
        // return to the cell; hyperbolic divergence defeats this once
        // lambda^n swallows the cell, and the error names the level
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-0.5 * comp.cell_diameter,
                                                 0.5 * comp.cell_diameter);
        double best = 2.0;
        for (std::size_t attempt = 0;
             attempt < opt.search_attempts && comp.segments.size() < opt.max_segments;
             ++attempt) {
            TorusPoint start =
                reduce_mod1(target.orbit_point.x + u(rng), target.orbit_point.y + u(rng));
            auto orbit = torus_orbit_of(sys, start, n + 1);
            std::vector<TorusPoint> head(orbit.begin(), orbit.begin() + static_cast<long>(n));
            double d = integrals_D(torus_points_integrals(head, basis), comp.target_ints, basis);
            bool returns = torus_distance(orbit[n], start) <= comp.cell_diameter;
            best = std::min(best, d);
            if (d < tolerance && returns) {
                comp.worst_empirical_D = std::max(comp.worst_empirical_D, d);
                comp.segments.push_back(start);
                comp.torus_orbits.push_back(std::move(head));
            }
        }
        if (comp.segments.empty())
            throw LibraryError("segment library: no admissible segment starts at level " +
                                   std::to_string(k) + ", component " +
                                   std::to_string(j_index) +
                                   " (best D = " + format_double(best) + ")",
                               k, j_index, best);
        auto sep = max_separated(sys, comp.segments, n, opt.eps_prime);
        std::vector<Point> kept;
        std::vector<std::vector<TorusPoint>> kept_orbits;
        for (auto idx : sep.kept) {
            kept.push_back(comp.segments[idx]);
            kept_orbits.push_back(std::move(comp.torus_orbits[idx]));
        }
        comp.segments = std::move(kept);
        comp.torus_orbits = std::move(kept_orbits);
    }
    comp.separation = opt.eps_prime;
    return comp;
}

Connector make_shift_connector(const std::vector<std::uint8_t>& from_prefix,
                               const std::vector<std::uint8_t>& to_prefix) {
    Connector c;
    std::vector<std::uint8_t> w;
    w.reserve(from_prefix.size() + to_prefix.size());
    w.insert(w.end(), from_prefix.begin(), from_prefix.end());
    w.insert(w.end(), to_prefix.begin(), to_prefix.end());
    c.length = from_prefix.size();
    SymbolicWord word = SymbolicWord::from_prefix(std::move(w));
    c.start = word;
    for (std::size_t i = 0; i < c.length; ++i) {
        c.orbit.push_back(word);
        word = word.shifted();
    }
    c.exit_point = word;
    c.entry_error = std::ldexp(1.0, -static_cast<int>(from_prefix.size()));
    c.exit_error = std::ldexp(1.0, -static_cast<int>(to_prefix.size()));
    return c;
}

// Orbit segment bridging the cell of a to the cell of b on the linear toral
// map: y = a + xi with xi purely unstable, chosen so A^s y lands within d of b.
Connector make_cat_connector(const CatMapSpec& spec, const DynamicalSystem& sys, TorusPoint a,
                             std::size_t a_period, TorusPoint b, double d,
                             std::size_t horizon) {
    auto a_orbit = torus_orbit_of(sys, a, a_period);
    for (std::size_t s = 2; s <= horizon; ++s) {
        TorusPoint fsa = a_orbit[s % a_period];
        Vec2 delta = centered_lift(reduce_mod1(b.x - fsa.x, b.y - fsa.y));
        double lam_s = std::exp(spec.log_lambda * static_cast<double>(s));
        double reach = 0.9 * d * lam_s;
        if (reach < 1.0) continue;
        std::int64_t R = static_cast<std::int64_t>(std::ceil(reach)) + 2;
        if (R > 20000000) break;
        for (std::int64_t m1 = -R; m1 <= R; ++m1) {
            double m2d =
                (-delta.dot(spec.stable) - static_cast<double>(m1) * spec.stable.x) /
                spec.stable.y;
            std::int64_t m2 = static_cast<std::int64_t>(std::llround(m2d));
            Vec2 v{delta.x + static_cast<double>(m1), delta.y + static_cast<double>(m2)};
            double vs = v.dot(spec.stable);
            double vu = v.dot(spec.unstable);
            if (std::fabs(vs) > 0.9 * d) continue;
            if (std::fabs(vu) > reach) continue;
            double xi_u = vu / lam_s;
            if (std::fabs(xi_u) > 0.9 * d) continue;
            Connector c;
            c.length = s;
            Vec2 xi = xi_u * spec.unstable;
            c.start = reduce_mod1(a.x + xi.x, a.y + xi.y);
            c.entry_error = std::fabs(xi_u);
            c.exit_error = std::fabs(vs);
            for (std::size_t p = 0; p < s; ++p) {
                TorusPoint base = a_orbit[p % a_period];
                double grow = xi_u * std::exp(spec.log_lambda * static_cast<double>(p));
                Vec2 off = grow * spec.unstable;
                c.orbit.push_back(reduce_mod1(base.x + off.x, base.y + off.y));
            }
            Vec2 exit_off = (xi_u * lam_s) * spec.unstable;
            c.exit_point = reduce_mod1(fsa.x + exit_off.x, fsa.y + exit_off.y);
            return c;
        }
    }
    throw std::runtime_error(
        "connector search failed within the horizon; widen the cells or raise the horizon");
}

Connector make_trivial_orbit_connector(const DynamicalSystem& sys, TorusPoint a,
                                       std::size_t period) {
    Connector c;
    c.start = a;
    c.length = period;
    auto orbit = torus_orbit_of(sys, a, period);
    for (auto& p : orbit) c.orbit.push_back(p);
    c.exit_point = a;
    return c;
}

} // namespace

const Connector& SegmentLibrary::connector(int k1, int j1, int k2, int j2) const {
    auto it = connectors.find({k1, j1, k2, j2});
    if (it == connectors.end())
        throw std::out_of_range("missing connector (" + std::to_string(k1) + "," +
                                std::to_string(j1) + ") -> (" + std::to_string(k2) + "," +
                                std::to_string(j2) + ")");
    return it->second;
}

double SegmentLibrary::delta_bound(int level) const {
    const auto& comps = levels.at(static_cast<std::size_t>(level - 1));
    double bound = 0.0;
    for (const auto& c : comps) bound = std::max(bound, c.cell_diameter);
    for (const auto& [key, conn] : connectors)
        if (key[0] == level || key[2] == level)
            bound = std::max({bound, conn.entry_error, conn.exit_error});
    return bound;
}

SegmentLibrary build_segment_library(const DynamicalSystem& sys, const TargetMeasure& mu1,
                                     const TargetMeasure& mu2, int k_max,
                                     const LibraryOptions& options) {
    if (k_max < 1) throw std::invalid_argument("build_segment_library: k_max >= 1");
    if (mu1.empty() || mu2.empty())
        throw std::invalid_argument("build_segment_library: empty target");
    if (!(options.eps_prime > 0.0)) throw std::invalid_argument("eps_prime > 0");
    if (!(options.gamma > 0.0 && options.gamma < 1.0))
        throw std::invalid_argument("gamma in (0,1)");
    if (!(options.delta > 0.0 && options.delta < 1.0))
        throw std::invalid_argument("delta in (0,1)");

    SegmentLibrary lib;
    lib.options = options;
    lib.system = sys.kind();
    lib.basis = TestBasis::for_system(sys, 16);
    bool shift = is_shift_system(sys);

    for (int k = 1; k <= k_max; ++k) {
        const TargetMeasure& mu = rho_alternator(k) == 1 ? mu1 : mu2;
        std::vector<double> ws;
        for (const auto& c : mu) ws.push_back(c.weight);
        auto rats =
            mu.size() == 1 ? std::vector<Rational>{Rational(1, 1)} : rational_weights(ws, k);
        std::vector<LibraryComponent> comps;
        for (std::size_t j = 0; j < mu.size(); ++j) {
            std::uint64_t seed =
                splitmix64(options.seed ^ (0x517cc1b727220a95ULL *
                                           (static_cast<std::uint64_t>(k) * 64 + j + 1)));
            LibraryComponent comp =
                shift ? build_shift_component(mu[j], k, static_cast<int>(j + 1), lib.basis,
                                              options, seed)
                      : build_torus_component(sys, mu[j], k, static_cast<int>(j + 1), lib.basis,
                                              options, seed);
            comp.weight = rats[j];
            comps.push_back(std::move(comp));
        }
        lib.levels.push_back(std::move(comps));
    }

    CatMapSpec cat_spec;
    auto link = [&](int k1, int j1, int k2, int j2) {
        std::array<std::int64_t, 4> key{k1, j1, k2, j2};
        if (lib.connectors.count(key)) return;
        const auto& from =
            lib.levels[static_cast<std::size_t>(k1 - 1)][static_cast<std::size_t>(j1 - 1)];
        const auto& to =
            lib.levels[static_cast<std::size_t>(k2 - 1)][static_cast<std::size_t>(j2 - 1)];
        if (shift) {
            lib.connectors.emplace(key, make_shift_connector(from.cell_prefix, to.cell_prefix));
            return;
        }
        TorusPoint a = from.cell_center;
        TorusPoint b = to.cell_center;
        if (torus_distance(a, b) < 1e-12) {
            lib.connectors.emplace(key,
                                   make_trivial_orbit_connector(sys, a, from.orbit_period));
            return;
        }
        double d = std::min(from.cell_diameter, to.cell_diameter);
        lib.connectors.emplace(key, make_cat_connector(cat_spec, sys, a, from.orbit_period, b,
                                                       d, options.connector_horizon));
    };

    for (int k = 1; k <= k_max; ++k) {
        int sk = static_cast<int>(lib.levels[static_cast<std::size_t>(k - 1)].size());
        for (int j = 1; j <= sk; ++j) link(k, j, k, j % sk + 1);
        if (k < k_max) link(k, 1, k + 1, 1);
    }
    if (options.all_pair_connectors) {
        for (int k1 = 1; k1 <= k_max; ++k1)
            for (int k2 = 1; k2 <= k_max; ++k2) {
                int s1 = static_cast<int>(lib.levels[static_cast<std::size_t>(k1 - 1)].size());
                int s2 = static_cast<int>(lib.levels[static_cast<std::size_t>(k2 - 1)].size());
                for (int j1 = 1; j1 <= s1; ++j1)
                    for (int j2 = 1; j2 <= s2; ++j2) link(k1, j1, k2, j2);
            }
    }
    return lib;
}

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

std::int64_t GluingSchedule::offset(int q, std::int64_t i, int j, std::int64_t t) const {
    const auto& lv = levels.at(static_cast<std::size_t>(q - 1));
    std::int64_t off = M_q(q) + (i - 1) * lv.Y;
    for (int p = 1; p < j; ++p) {
        off += lv.copies[static_cast<std::size_t>(p - 1)] *
               static_cast<std::int64_t>(lv.lengths[static_cast<std::size_t>(p - 1)]);
        off += static_cast<std::int64_t>(
            lv.within_connector_lengths[static_cast<std::size_t>(p - 1)]);
    }
    off += (t - 1) * static_cast<std::int64_t>(lv.lengths[static_cast<std::size_t>(j - 1)]);
    return off;
}

bool GluingSchedule::certificate_holds() const {
    for (const auto& c : certificate)
        if (!c.holds) return false;
    return true;
}

namespace {

std::int64_t all_pairs_transition_sum(const SegmentLibrary& library, int k) {
    std::int64_t total = 0;
    int cap = std::min(k + 1, library.k_max());
    for (int r1 = 1; r1 <= cap; ++r1)
        for (int r2 = 1; r2 <= cap; ++r2) {
            int s1 = static_cast<int>(library.levels[static_cast<std::size_t>(r1 - 1)].size());
            int s2 = static_cast<int>(library.levels[static_cast<std::size_t>(r2 - 1)].size());
            for (int j1 = 1; j1 <= s1; ++j1)
                for (int j2 = 1; j2 <= s2; ++j2)
                    total +=
                        static_cast<std::int64_t>(library.connector(r1, j1, r2, j2).length);
        }
    return total;
}

} // namespace

GluingSchedule build_schedule(const SegmentLibrary& library, int k_max,
                              const ScheduleOptions& options) {
    if (k_max < 1 || k_max > library.k_max())
        throw std::invalid_argument("build_schedule: k_max outside the library range");

    GluingSchedule sched;
    sched.mode = options.mode;
    sched.growth_factor = options.growth_factor;

    for (int k = 1; k <= k_max; ++k) {
        const auto& comps = library.levels[static_cast<std::size_t>(k - 1)];
        LevelSchedule lv;
        lv.k = k;
        std::int64_t lcm_den = 1;
        for (const auto& c : comps) {
            lv.weights.push_back(c.weight);
            lv.lengths.push_back(c.length);
            Rational ratio(c.weight.num, c.weight.den * static_cast<std::int64_t>(c.length));
            lcm_den = std::lcm(lcm_den, ratio.den);
        }
        int sk = static_cast<int>(comps.size());
        for (int j = 1; j <= sk; ++j)
            lv.within_connector_lengths.push_back(library.connector(k, j, k, j % sk + 1).length);
        lv.X = 0;
        for (auto s : lv.within_connector_lengths) lv.X += static_cast<std::int64_t>(s);
        if (k < k_max) lv.cross_connector_length = library.connector(k, 1, k + 1, 1).length;

        std::int64_t needed = (static_cast<std::int64_t>(k) - 1) * lv.X;
        lv.N = lcm_den;
        if (lv.N < needed) lv.N = ((needed + lcm_den - 1) / lcm_den) * lcm_den;
        if (options.mode == ScheduleMode::PaperStrict) {
            std::int64_t strict_need =
                static_cast<std::int64_t>(k) * all_pairs_transition_sum(library, k);
            if (lv.N < strict_need) lv.N = ((strict_need + lcm_den - 1) / lcm_den) * lcm_den;
        }
        for (std::size_t j = 0; j < comps.size(); ++j) {
            Rational copies(lv.weights[j].num * lv.N,
                            lv.weights[j].den * static_cast<std::int64_t>(lv.lengths[j]));
            if (copies.den != 1)
                throw std::logic_error("build_schedule: N_k C_{k,j} failed to be integral");
            lv.copies.push_back(copies.num);
        }
        lv.Y = lv.N + lv.X;
        sched.levels.push_back(std::move(lv));
    }

    sched.M.assign(1, 0);
    for (int k = 1; k <= k_max; ++k) {
        auto& lv = sched.levels[static_cast<std::size_t>(k - 1)];
        std::int64_t Mk = sched.M.back();
        double grow =
            options.growth_factor * static_cast<double>(Mk) / static_cast<double>(lv.Y);
        std::int64_t T = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(grow)));
        if (k >= 2) T = std::max(T, sched.levels[static_cast<std::size_t>(k - 2)].T + 1);
        if (options.mode == ScheduleMode::PaperStrict) {
            // equ4b for this level: sum up to k-1 of (Y_r T_r + s) <= Y_k T_k / k
            T = std::max(T, static_cast<std::int64_t>(
                                std::ceil(static_cast<double>(k) * static_cast<double>(Mk) /
                                          static_cast<double>(lv.Y))));
            // equ4a for the next level: Y_{k+1} <= (1/(k+1)) sum_{r<=k} Y_r T_r
            if (k < k_max) {
                std::int64_t y_next = sched.levels[static_cast<std::size_t>(k)].Y;
                std::int64_t have = 0;
                for (int r = 1; r < k; ++r) {
                    const auto& lr = sched.levels[static_cast<std::size_t>(r - 1)];
                    have += lr.Y * lr.T;
                }
                double need = (static_cast<double>(k + 1) * static_cast<double>(y_next) -
                               static_cast<double>(have)) /
                              static_cast<double>(lv.Y);
                if (need > static_cast<double>(T))
                    T = static_cast<std::int64_t>(std::ceil(need));
            }
        }
        lv.T = T;
        std::int64_t block = lv.T * lv.Y + static_cast<std::int64_t>(lv.cross_connector_length);
        sched.M.push_back(Mk + block);
        if (sched.M.back() > options.max_total_length)
            throw std::runtime_error("build_schedule: total length exceeds the configured cap");
    }

    auto add_check = [&](const std::string& name, bool holds) {
        sched.certificate.push_back({name, holds});
    };
    bool integral_ok = true, equ3_ok = true, t_incr = true, equ2_ok = true;
    for (int k = 1; k <= k_max; ++k) {
        const auto& lv = sched.levels[static_cast<std::size_t>(k - 1)];
        std::int64_t seg_total = 0;
        for (std::size_t j = 0; j < lv.copies.size(); ++j)
            seg_total += lv.copies[j] * static_cast<std::int64_t>(lv.lengths[j]);
        if (seg_total != lv.N) integral_ok = false;
        if (lv.Y != lv.N + lv.X) equ2_ok = false;
        if (static_cast<double>(lv.N) * static_cast<double>(k) <
            (static_cast<double>(k) - 1.0) * static_cast<double>(lv.Y))
            equ3_ok = false;
        if (k >= 2 && lv.T <= sched.levels[static_cast<std::size_t>(k - 2)].T) t_incr = false;
    }
    add_check("integral copies: sum_j N_k C_{k,j} n(k,j) = N_k", integral_ok);
    add_check("equ2: Y_k = N_k + X_k", equ2_ok);
    add_check("equ3: N_k / Y_k >= 1 - 1/k", equ3_ok);
    add_check("T_k strictly increasing", t_incr);
    if (options.mode == ScheduleMode::PaperStrict) {
        bool equ1_ok = true, equ4a_ok = true, equ4b_ok = true;
        for (int k = 1; k <= k_max; ++k) {
            const auto& lv = sched.levels[static_cast<std::size_t>(k - 1)];
            if (lv.N < static_cast<std::int64_t>(k) * all_pairs_transition_sum(library, k))
                equ1_ok = false;
        }
        for (int k = 2; k <= k_max; ++k) {
            const auto& lv = sched.levels[static_cast<std::size_t>(k - 1)];
            std::int64_t sum_yt = 0;
            for (int r = 1; r < k; ++r) {
                const auto& lr = sched.levels[static_cast<std::size_t>(r - 1)];
                sum_yt += lr.Y * lr.T;
            }
            if (static_cast<double>(lv.Y) * static_cast<double>(k) >
                static_cast<double>(sum_yt))
                equ4a_ok = false;
            if (static_cast<double>(k) * static_cast<double>(sched.M_q(k)) >
                static_cast<double>(lv.Y * lv.T))
                equ4b_ok = false;
        }
        add_check("equ1: N_k >= k * sum of transition times", equ1_ok);
        add_check("equ4a: Y_{k+1} <= sum Y_r T_r / (k+1)", equ4a_ok);
        add_check("equ4b: sum (Y_r T_r + s) <= Y_{k+1} T_{k+1} / (k+1)", equ4b_ok);
    }
    return sched;
}

// ---------------------------------------------------------------------------
// Pseudo-orbit
// ---------------------------------------------------------------------------

namespace {
std::size_t default_choice(int, int, std::int64_t, std::int64_t) { return 0; }
} // namespace

PseudoOrbit::PseudoOrbit(std::shared_ptr<const SegmentLibrary> library,
                         std::shared_ptr<const GluingSchedule> schedule, int k,
                         SlotChoice choice)
    : library_(std::move(library)), schedule_(std::move(schedule)), k_(k),
      choice_(choice ? std::move(choice) : SlotChoice(default_choice)) {}

struct PseudoOrbit::Locator {
    const PseudoOrbit& po;
    std::int64_t block_start = 0;
    std::size_t block_len = 0;
    PseudoOrbitAnnotation ann;
    const LibraryComponent* comp = nullptr;
    const Connector* conn = nullptr;
    std::size_t seg_choice = 0;

    Locator(const PseudoOrbit& p, std::int64_t idx) : po(p) {
        const auto& sched = *po.schedule_;
        const auto& lib = *po.library_;
        if (idx < 0 || idx >= po.length())
            throw std::out_of_range("pseudo-orbit index out of range");
        int q = 1;
        while (q < po.k_ && idx >= sched.M_q(q + 1)) ++q;
        const auto& lv = sched.levels[static_cast<std::size_t>(q - 1)];
        const auto& comps = lib.levels[static_cast<std::size_t>(q - 1)];
        std::int64_t rem = idx - sched.M_q(q);
        ann.q = q;
        std::int64_t sweeps_len = lv.T * lv.Y;
        if (rem >= sweeps_len) {
            ann.connector = true;
            ann.cross_connector = true;
            ann.j = 1;
            ann.sweep = lv.T;
            conn = &lib.connector(q, 1, q + 1, 1);
            block_start = sched.M_q(q) + sweeps_len;
            block_len = lv.cross_connector_length;
            ann.phase = static_cast<std::size_t>(rem - sweeps_len);
            return;
        }
        std::int64_t i = rem / lv.Y;
        std::int64_t w = rem % lv.Y;
        ann.sweep = i + 1;
        std::int64_t base = sched.M_q(q) + i * lv.Y;
        for (std::size_t j = 0; j < comps.size(); ++j) {
            std::int64_t seg_zone = lv.copies[j] * static_cast<std::int64_t>(lv.lengths[j]);
            if (w < seg_zone) {
                ann.j = static_cast<int>(j + 1);
                ann.copy = w / static_cast<std::int64_t>(lv.lengths[j]) + 1;
                ann.phase =
                    static_cast<std::size_t>(w % static_cast<std::int64_t>(lv.lengths[j]));
                comp = &comps[j];
                seg_choice = po.choice_(q, ann.j, ann.sweep, ann.copy) % comp->segments.size();
                block_start = base + (ann.copy - 1) * static_cast<std::int64_t>(lv.lengths[j]);
                block_len = lv.lengths[j];
                return;
            }
            w -= seg_zone;
            base += seg_zone;
            std::int64_t conn_len = static_cast<std::int64_t>(lv.within_connector_lengths[j]);
            if (w < conn_len) {
                ann.j = static_cast<int>(j + 1);
                ann.connector = true;
                ann.phase = static_cast<std::size_t>(w);
                int sk = static_cast<int>(comps.size());
                conn = &lib.connector(q, static_cast<int>(j + 1), q,
                                      static_cast<int>(j + 1) % sk + 1);
                block_start = base;
                block_len = static_cast<std::size_t>(conn_len);
                return;
            }
            w -= conn_len;
            base += conn_len;
        }
        throw std::logic_error("pseudo-orbit locator: fell off the sweep layout");
    }

    Point point(std::size_t phase) const {
        if (conn) return conn->orbit.at(phase);
        if (po.library_->system == SystemKind::FullShift2) {
            SymbolicWord w = std::get<SymbolicWord>(comp->segments[seg_choice]);
            for (std::size_t s = 0; s < phase; ++s) w = w.shifted();
            return w;
        }
        return comp->torus_orbits[seg_choice][phase];
    }

    std::uint8_t symbol(std::size_t phase) const {
        if (conn) return std::get<SymbolicWord>(conn->start).at(phase);
        return std::get<SymbolicWord>(comp->segments[seg_choice]).at(phase);
    }

    Point image_of_last() const {
        if (conn) return conn->exit_point;
        if (po.library_->system == SystemKind::FullShift2)
            return comp->segments[seg_choice]; // periodic word returns to itself
        return comp->torus_orbits[seg_choice][0];
    }
};

PseudoOrbitAnnotation PseudoOrbit::annotate(std::int64_t idx) const {
    return Locator(*this, idx).ann;
}

Point PseudoOrbit::point_at(std::int64_t idx) const {
    Locator loc(*this, idx);
    return loc.point(loc.ann.phase);
}

std::uint8_t PseudoOrbit::symbol_at(std::int64_t idx) const {
    if (library_->system != SystemKind::FullShift2)
        throw std::logic_error("symbol_at: shift systems only");
    Locator loc(*this, idx);
    return loc.symbol(loc.ann.phase);
}

void PseudoOrbit::stream_points(
    std::int64_t from, std::int64_t to,
    const std::function<void(std::int64_t, const Point&)>& fn) const {
    std::int64_t idx = from;
    while (idx < to) {
        Locator loc(*this, idx);
        std::int64_t block_end = loc.block_start + static_cast<std::int64_t>(loc.block_len);
        std::int64_t stop = std::min(to, block_end);
        if (loc.conn || library_->system != SystemKind::FullShift2) {
            for (; idx < stop; ++idx)
                fn(idx, loc.point(static_cast<std::size_t>(idx - loc.block_start)));
        } else {
            SymbolicWord w = std::get<SymbolicWord>(loc.comp->segments[loc.seg_choice]);
            for (std::size_t s = 0; s < static_cast<std::size_t>(idx - loc.block_start); ++s)
                w = w.shifted();
            for (; idx < stop; ++idx) {
                fn(idx, w);
                w = w.shifted();
            }
        }
    }
}

void PseudoOrbit::stream_symbols(
    std::int64_t from, std::int64_t to,
    const std::function<void(std::int64_t, std::uint8_t)>& fn) const {
    if (library_->system != SystemKind::FullShift2)
        throw std::logic_error("stream_symbols: shift systems only");
    std::int64_t idx = from;
    while (idx < to) {
        Locator loc(*this, idx);
        std::int64_t block_end = loc.block_start + static_cast<std::int64_t>(loc.block_len);
        std::int64_t stop = std::min(to, block_end);
        for (; idx < stop; ++idx)
            fn(idx, loc.symbol(static_cast<std::size_t>(idx - loc.block_start)));
    }
}

std::vector<PseudoOrbit::Jump> PseudoOrbit::nonzero_jumps() const {
    std::vector<Jump> jumps;
    std::int64_t total = length();
    std::int64_t at = 0;
    while (true) {
        Locator loc(*this, at);
        std::int64_t block_end = loc.block_start + static_cast<std::int64_t>(loc.block_len);
        if (block_end >= total) break;
        Locator next(*this, block_end);
        Point image = loc.image_of_last();
        Point first = next.point(0);
        double err = point_distance(image, first);
        if (err > 1e-15) {
            Jump j;
            j.index = block_end - 1;
            j.error = err;
            if (library_->system != SystemKind::FullShift2) {
                TorusPoint a = std::get<TorusPoint>(image);
                TorusPoint b = std::get<TorusPoint>(first);
                j.vector = centered_lift(reduce_mod1(a.x - b.x, a.y - b.y));
            }
            jumps.push_back(j);
        }
        at = block_end;
    }
    return jumps;
}

double PseudoOrbit::allowed_jump_bound() const {
    double bound = 0.0;
    for (int k = 1; k <= k_; ++k) bound = std::max(bound, library_->delta_bound(k));
    return bound;
}

std::vector<Point> PseudoOrbit::materialize(std::int64_t cap) const {
    std::int64_t n = std::min(cap, length());
    std::vector<Point> out;
    out.reserve(static_cast<std::size_t>(n));
    stream_points(0, n, [&](std::int64_t, const Point& p) { out.push_back(p); });
    return out;
}

PseudoOrbit assemble_pseudo_orbit(std::shared_ptr<const SegmentLibrary> library,
                                  std::shared_ptr<const GluingSchedule> schedule, int k,
                                  SlotChoice choice) {
    if (!library || !schedule) throw std::invalid_argument("assemble_pseudo_orbit: null inputs");
    if (k < 1 || k > schedule->k_max() || k > library->k_max())
        throw std::invalid_argument("assemble_pseudo_orbit: level out of range");
    PseudoOrbit orbit(std::move(library), std::move(schedule), k, std::move(choice));

    // the closed-form offsets M_{q,i,j,t} must agree with the locator
    const auto& sched = orbit.schedule();
    for (int q = 1; q <= k; ++q) {
        const auto& lv = sched.levels[static_cast<std::size_t>(q - 1)];
        for (int j = 1; j <= static_cast<int>(lv.lengths.size()); ++j) {
            std::int64_t i = std::min<std::int64_t>(lv.T, 2);
            std::int64_t t =
                std::min<std::int64_t>(lv.copies[static_cast<std::size_t>(j - 1)], 2);
            std::int64_t off = sched.offset(q, i, j, t);
            auto ann = orbit.annotate(off);
            if (ann.q != q || ann.j != j || ann.sweep != i || ann.copy != t ||
                ann.phase != 0 || ann.connector)
                throw std::logic_error("assemble_pseudo_orbit: annotation/offset mismatch");
        }
    }
    return orbit;
}

// ---------------------------------------------------------------------------
// Shadowing
// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> level_sweep_symbols(const PseudoOrbit& orbit, int q) {
    const auto& sched = orbit.schedule();
    const auto& lv = sched.levels[static_cast<std::size_t>(q - 1)];
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<std::size_t>(lv.Y));
    std::int64_t start = sched.M_q(q);
    orbit.stream_symbols(start, start + lv.Y,
                         [&](std::int64_t, std::uint8_t s) { out.push_back(s); });
    return out;
}

} // namespace

ShadowResult shadow(const PseudoOrbit& orbit, const DynamicalSystem& sys,
                    const ShadowOptions& opts) {
    ShadowResult res;
    if (is_shift_system(sys)) {
        // concatenation is exact: the word realizes every cylinder constraint
        res.method = "symbolic-concatenation";
        res.max_distance = 0.0;
        std::int64_t cap = std::min(orbit.length(), opts.materialize_cap);
        std::vector<std::uint8_t> symbols;
        symbols.reserve(static_cast<std::size_t>(cap));
        orbit.stream_symbols(0, cap,
                             [&](std::int64_t, std::uint8_t s) { symbols.push_back(s); });
        res.point = SymbolicWord::from_prefix(std::move(symbols));
        return res;
    }

    if (sys.kind() != SystemKind::CatMap)
        throw std::invalid_argument(
            "shadow: supported backends are the full shift (concatenation) and the linear "
            "hyperbolic toral map (exact correction)");

    const auto& spec = static_cast<const CatMap&>(sys).spec();
    res.method = "exact-linear";
    auto jumps = orbit.nonzero_jumps();
    double ll = spec.log_lambda;
    double lam = spec.lambda;

    std::size_t J = jumps.size();
    std::vector<double> eu(J), es(J);
    for (std::size_t m = 0; m < J; ++m) {
        eu[m] = jumps[m].vector.dot(spec.unstable);
        es[m] = jumps[m].vector.dot(spec.stable);
        res.jump_sum += jumps[m].error;
        res.jump_positions.push_back(jumps[m].index);
    }

    // The corrected orbit z_n = x_n + w_n needs w_{n+1} = A w_n + e_n with e
    // supported на the jump indices; the bounded solution has the unstable
    // component summed backward and the stable one forward.
    std::vector<double> wu_at(J);    // w^u at the jump index
    std::vector<double> wu_after(J); // w^u just past the jump
    double carry = 0.0;
    for (std::size_t m = J; m-- > 0;) {
        wu_after[m] = carry;
        wu_at[m] = (carry - eu[m]) / lam;
        if (m > 0) {
            double gap = static_cast<double>(jumps[m].index - jumps[m - 1].index - 1);
            carry = wu_at[m] * std::exp(-ll * gap);
        }
    }
    double wu0 = 0.0;
    if (J > 0) wu0 = wu_at[0] * std::exp(-ll * static_cast<double>(jumps[0].index));

    std::vector<double> ws_after(J);
    double ws = 0.0;
    std::int64_t prev_after = 0; // index the current ws value lives at
    for (std::size_t m = 0; m < J; ++m) {
        double gap = static_cast<double>(jumps[m].index - prev_after);
        ws *= std::exp(-ll * gap);   // decay from prev_after to the jump index
        ws = ws / lam + es[m];       // one step across the jump
        ws_after[m] = ws;
        prev_after = jumps[m].index + 1;
    }

    res.wu_at_jump = wu_at;
    res.ws_after_jump = ws_after;

    // certified sup bound: inside a stretch both components are dominated by
    // their values at the stretch ends
    double bound = std::fabs(wu0);
    double ws_left = 0.0;
    for (std::size_t m = 0; m < J; ++m) {
        bound = std::max(bound, std::fabs(wu_at[m]) + std::fabs(ws_left));
        bound = std::max(bound, std::fabs(wu_after[m]) + std::fabs(ws_after[m]));
        ws_left = ws_after[m];
    }
    res.max_distance = bound;

    double series_bound = res.jump_sum * (1.0 + 1.0 / lam) / (1.0 - 1.0 / lam);
    if (res.max_distance > series_bound + 1e-12)
        throw std::logic_error("shadow: certified distance exceeded the geometric-series bound");

    TorusPoint x0 = std::get<TorusPoint>(orbit.point_at(0));
    Vec2 w0 = wu0 * spec.unstable;
    res.point = reduce_mod1(x0.x + w0.x, x0.y + w0.y);

    for (std::size_t m = 0; m < std::min<std::size_t>(J, 64); ++m)
        res.distances.push_back(
            {jumps[m].index,
             std::fabs(wu_at[m]) + std::fabs(m > 0 ? ws_after[m - 1] : 0.0)});
    return res;
}

void stream_shadowed_points(const PseudoOrbit& orbit, const ShadowResult& shadow_result,
                            std::int64_t from, std::int64_t to,
                            const std::function<void(std::int64_t, const Point&)>& fn) {
    if (orbit.library().system == SystemKind::FullShift2) {
        // 64-symbol windows resolve any observable down to 2^-64
        const std::size_t window = 64;
        std::int64_t end = std::min(to + static_cast<std::int64_t>(window), orbit.length());
        std::vector<std::uint8_t> buf;
        buf.reserve(static_cast<std::size_t>(end - from));
        orbit.stream_symbols(from, end,
                             [&](std::int64_t, std::uint8_t s) { buf.push_back(s); });
        for (std::int64_t idx = from; idx < to; ++idx) {
            std::size_t off = static_cast<std::size_t>(idx - from);
            std::size_t have = std::min(window, buf.size() - off);
            std::vector<std::uint8_t> w(buf.begin() + static_cast<std::ptrdiff_t>(off),
                                        buf.begin() + static_cast<std::ptrdiff_t>(off + have));
            fn(idx, SymbolicWord::from_prefix(std::move(w)));
        }
        return;
    }

    CatMapSpec spec;
    double ll = spec.log_lambda;
    double lam = spec.lambda;
    const auto& pos = shadow_result.jump_positions;
    const auto& wu_at = shadow_result.wu_at_jump;
    const auto& ws_after = shadow_result.ws_after_jump;
    std::size_t J = pos.size();

    // stable correction at `from`
    double ws = 0.0;
    std::size_t m = 0;
    while (m < J && pos[m] < from) ++m;
    if (m > 0) {
        double gap = static_cast<double>(from - (pos[m - 1] + 1));
        ws = ws_after[m - 1] * std::exp(-ll * gap);
    }

    orbit.stream_points(from, to, [&](std::int64_t idx, const Point& p) {
        while (m < J && pos[m] < idx) ++m;
        double wu = 0.0;
        if (m < J) {
            double dist = static_cast<double>(pos[m] - idx);
            if (dist * ll < 700.0) wu = wu_at[m] * std::exp(-ll * dist);
        }
        TorusPoint x = std::get<TorusPoint>(p);
        Vec2 corr = wu * spec.unstable + ws * spec.stable;
        fn(idx, reduce_mod1(x.x + corr.x, x.y + corr.y));
        bool jump_here = m < J && pos[m] == idx;
        if (jump_here) {
            ws = ws_after[m]; // exact post-jump value
            ++m;
        } else {
            ws /= lam;
        }
    });
}

// ---------------------------------------------------------------------------
// Historic point
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> shift_checkpoint_integrals(const PseudoOrbit& orbit,
                                                            const TestBasis& basis) {
    if (orbit.library().system != SystemKind::FullShift2)
        throw std::logic_error("shift_checkpoint_integrals: shift systems only");
    const auto& sched = orbit.schedule();
    int k = orbit.top_level();

    std::vector<std::vector<std::uint8_t>> sweeps;
    std::vector<std::vector<std::uint8_t>> crosses;
    for (int q = 1; q <= k; ++q) {
        sweeps.push_back(level_sweep_symbols(orbit, q));
        const auto& lv = sched.levels[static_cast<std::size_t>(q - 1)];
        std::vector<std::uint8_t> cross;
        if (lv.cross_connector_length > 0) {
            std::int64_t start = sched.M_q(q) + lv.T * lv.Y;
            orbit.stream_symbols(
                start, start + static_cast<std::int64_t>(lv.cross_connector_length),
                [&](std::int64_t, std::uint8_t s) { cross.push_back(s); });
        }
        crosses.push_back(std::move(cross));
    }

    int I = basis.truncation();
    std::vector<std::vector<double>> out;
    std::vector<double> cum(static_cast<std::size_t>(I), 0.0);

    auto count_run = [](const std::vector<std::uint8_t>& S,
                        const std::vector<std::uint8_t>& ctx, int depth,
                        std::uint32_t bits) -> std::int64_t {
        std::int64_t hits = 0;
        for (std::size_t p = 0; p < S.size(); ++p) {
            bool match = true;
            for (int r = 0; r < depth; ++r) {
                std::size_t at = p + static_cast<std::size_t>(r);
                std::uint8_t sym;
                if (at < S.size()) {
                    sym = S[at];
                } else {
                    std::size_t over = at - S.size();
                    if (over >= ctx.size()) {
                        match = false;
                        break;
                    }
                    sym = ctx[over];
                }
                std::uint32_t want = (bits >> (depth - 1 - r)) & 1u;
                if (sym != want) {
                    match = false;
                    break;
                }
            }
            if (match) ++hits;
        }
        return hits;
    };

    for (int q = 1; q <= k; ++q) {
        const auto& lv = sched.levels[static_cast<std::size_t>(q - 1)];
        const auto& S = sweeps[static_cast<std::size_t>(q - 1)];
        std::vector<std::uint8_t> after; // what follows the last sweep
        if (q < k) {
            after = crosses[static_cast<std::size_t>(q - 1)];
            const auto& next = sweeps[static_cast<std::size_t>(q)];
            after.insert(after.end(), next.begin(), next.end());
        } else {
            after = S; // continued periodically past M_{k+1}
        }
        for (int f = 1; f <= I; ++f) {
            auto spec = basis.cylinder_spec(f);
            if (!spec)
                throw std::logic_error("shift_checkpoint_integrals: cylinder basis only");
            std::int64_t hits = 0;
            if (lv.T > 1) hits += (lv.T - 1) * count_run(S, S, spec->depth, spec->bits);
            hits += count_run(S, after, spec->depth, spec->bits);
            if (q < k) {
                const auto& cross = crosses[static_cast<std::size_t>(q - 1)];
                const auto& next = sweeps[static_cast<std::size_t>(q)];
                if (!cross.empty()) hits += count_run(cross, next, spec->depth, spec->bits);
            }
            cum[static_cast<std::size_t>(f - 1)] += static_cast<double>(hits);
        }
        std::vector<double> ints(cum);
        double M = static_cast<double>(sched.M_q(q + 1));
        for (auto& v : ints) v /= M;
        out.push_back(std::move(ints));
    }
    return out;
}

HistoricPointResult construct_historic_point(const DynamicalSystem& sys,
                                             const TargetMeasure& mu1, const TargetMeasure& mu2,
                                             int k_max, const NamedObservable& phi,
                                             const HistoricPointOptions& options) {
    auto library = std::make_shared<const SegmentLibrary>(
        build_segment_library(sys, mu1, mu2, k_max, options.library));
    auto schedule = std::make_shared<const GluingSchedule>(
        build_schedule(*library, k_max, options.schedule));
    PseudoOrbit orbit = assemble_pseudo_orbit(library, schedule, k_max);
    ShadowResult sres = shadow(orbit, sys);

    HistoricPointResult out;
    out.library = library;
    out.schedule = schedule;
    out.phi_mu1 = target_integral(sys, mu1, phi.fn);
    out.phi_mu2 = target_integral(sys, mu2, phi.fn);

    const TestBasis& basis = library->basis;
    auto mu1_ints = target_integrals(sys, mu1, basis);
    auto mu2_ints = target_integrals(sys, mu2, basis);

    if (is_shift_system(sys)) {
        auto cps = shift_checkpoint_integrals(orbit, basis);
        for (int q = 2; q <= k_max + 1; ++q) {
            int target = rho_alternator(q - 1);
            const auto& ints = cps[static_cast<std::size_t>(q - 2)];
            double D =
                metric_D_from_integrals(ints, target == 1 ? mu1_ints : mu2_ints, basis).value;
            out.checkpoints.push_back({q, schedule->M_q(q), target, D});
        }
    } else {
        std::vector<double> acc(static_cast<std::size_t>(basis.truncation()), 0.0);
        int next_q = 2;
        std::int64_t total = orbit.length();
        stream_shadowed_points(orbit, sres, 0, total, [&](std::int64_t idx, const Point& p) {
            for (int f = 1; f <= basis.truncation(); ++f)
                acc[static_cast<std::size_t>(f - 1)] += basis.evaluate(f, p);
            while (next_q <= k_max + 1 && idx + 1 == schedule->M_q(next_q)) {
                std::vector<double> ints(acc);
                for (auto& v : ints) v /= static_cast<double>(idx + 1);
                int target = rho_alternator(next_q - 1);
                double D =
                    metric_D_from_integrals(ints, target == 1 ? mu1_ints : mu2_ints, basis)
                        .value;
                out.checkpoints.push_back({next_q, schedule->M_q(next_q), target, D});
                ++next_q;
            }
        });
    }

    std::int64_t horizon = std::min<std::int64_t>(
        static_cast<std::int64_t>(options.trace_horizon), orbit.length());
    Point current{};
    bool have = false;
    HistoricOptions det = options.detector;
    // evaluate phi along the shadowed orbit in one pass
    std::vector<double>* sink = nullptr;
    std::vector<double> phi_vals;
    phi_vals.reserve(static_cast<std::size_t>(horizon));
    sink = &phi_vals;
    stream_shadowed_points(orbit, sres, 0, horizon, [&](std::int64_t, const Point& p) {
        sink->push_back(phi.fn(p));
        current = p;
        have = true;
    });
    (void)have;
    (void)current;
    out.report = detect_historic_stream([&](std::size_t i) { return phi_vals[i]; },
                                        static_cast<std::size_t>(horizon), phi.label, det);

    bool ok = true;
    for (const auto& cp : out.checkpoints) {
        int pair_index = cp.q / 2;
        if (pair_index >= options.checkpoint_from && cp.D > options.checkpoint_tolerance)
            ok = false;
    }
    out.checkpoints_converge = ok;
    out.shadow = sres;
    out.z = sres.point;
    return out;
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

EnsembleResult ensemble_and_alpha(std::shared_ptr<const SegmentLibrary> library,
                                  std::shared_ptr<const GluingSchedule> schedule, int k,
                                  std::size_t sample_size, std::uint64_t seed,
                                  std::size_t word_cap, std::size_t enumerate_limit) {
    if (!library || !schedule) throw std::invalid_argument("ensemble_and_alpha: null inputs");
    if (library->system != SystemKind::FullShift2)
        throw std::invalid_argument(
            "ensemble_and_alpha: ensembles are built on the shift; the toral construction "
            "produces a single corrected orbit");
    if (sample_size < 1) throw std::invalid_argument("ensemble_and_alpha: sample_size >= 1");

    EnsembleResult out;
    out.seed = seed;

    double log_count = 0.0;
    std::vector<std::array<std::int64_t, 4>> slots; // (q, j, i, t)
    for (int q = 1; q <= k; ++q) {
        const auto& lv = schedule->levels[static_cast<std::size_t>(q - 1)];
        const auto& comps = library->levels[static_cast<std::size_t>(q - 1)];
        for (std::size_t j = 0; j < comps.size(); ++j) {
            double w = std::log(static_cast<double>(comps[j].segments.size()));
            log_count += static_cast<double>(lv.T) * static_cast<double>(lv.copies[j]) * w;
        }
        if (log_count <= std::log(static_cast<double>(enumerate_limit)) + 1.0) {
            for (std::int64_t i = 1; i <= lv.T; ++i)
                for (std::size_t j = 0; j < comps.size(); ++j)
                    for (std::int64_t t = 1; t <= lv.copies[j]; ++t)
                        slots.push_back({q, static_cast<std::int64_t>(j + 1), i, t});
        }
    }
    out.log_Lk = log_count;

    std::int64_t cap =
        std::min<std::int64_t>(static_cast<std::int64_t>(word_cap), schedule->M_q(k + 1));

    auto word_for_choice = [&](const SlotChoice& choice) {
        PseudoOrbit po(library, schedule, k, choice);
        std::vector<std::uint8_t> symbols;
        symbols.reserve(static_cast<std::size_t>(cap));
        po.stream_symbols(0, cap, [&](std::int64_t, std::uint8_t s) { symbols.push_back(s); });
        return Point(SymbolicWord::from_prefix(std::move(symbols)));
    };

    bool enumerate = log_count <= std::log(static_cast<double>(enumerate_limit));
    if (enumerate) {
        out.enumerated = true;
        std::map<std::array<std::int64_t, 4>, std::size_t> slot_index;
        for (std::size_t s = 0; s < slots.size(); ++s) slot_index[slots[s]] = s;
        std::vector<std::size_t> odometer(slots.size(), 0);
        bool done = false;
        while (!done) {
            SlotChoice choice = [&](int q, int j, std::int64_t i, std::int64_t t) {
                auto it = slot_index.find({q, j, i, t});
                return it == slot_index.end() ? std::size_t(0) : odometer[it->second];
            };
            out.points.push_back(word_for_choice(choice));
            done = true;
            for (std::size_t s = 0; s < slots.size(); ++s) {
                const auto& comp = library->levels[static_cast<std::size_t>(slots[s][0] - 1)]
                                                  [static_cast<std::size_t>(slots[s][1] - 1)];
                if (++odometer[s] < comp.segments.size()) {
                    done = false;
                    break;
                }
                odometer[s] = 0;
            }
        }
    } else {
        out.points.reserve(sample_size);
        for (std::size_t p = 0; p < sample_size; ++p) {
            std::uint64_t point_seed = splitmix64(seed ^ (0xa0761d6478bd642fULL * (p + 1)));
            SlotChoice choice = [point_seed](int q, int j, std::int64_t i, std::int64_t t) {
                std::uint64_t h = point_seed;
                h ^= static_cast<std::uint64_t>(q) << 48;
                h ^= static_cast<std::uint64_t>(j) << 40;
                h ^= static_cast<std::uint64_t>(i) << 20;
                h ^= static_cast<std::uint64_t>(t);
                return static_cast<std::size_t>(splitmix64(h));
            };
            out.points.push_back(word_for_choice(choice));
        }
    }
    out.alpha = AtomicMeasure::uniform(out.points, "alpha[k=" + std::to_string(k) + "]");
    return out;
}

// ---------------------------------------------------------------------------
// Return-time diagnostic
// ---------------------------------------------------------------------------

std::optional<std::size_t> return_time_check(const DynamicalSystem& sys, const Point& x,
                                             const std::function<bool(const Point&)>& in_gamma,
                                             std::size_t n, double gamma, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("return_time_check: t in [0,1]");
    if (!(gamma > 0.0)) throw std::invalid_argument("return_time_check: gamma > 0");
    Point p = x;
    for (std::size_t l = 0; l <= n; ++l) {
        double frac = static_cast<double>(l) / static_cast<double>(n);
        if (std::fabs(frac - t) < gamma && in_gamma(p)) return l;
        if (l < n) p = sys.apply(p);
    }
    return std::nullopt;
}

} // namespace histent
