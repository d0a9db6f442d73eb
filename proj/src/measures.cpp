#include "histent/measures.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace histent {

namespace {

constexpr double TWO_PI = 6.283185307179586476925286766559;

// Strict weak order on points so measures can be canonicalized. Words are
// compared symbol by symbol down to the deduplication resolution: agreement
// to depth 64 is already distance < 1e-19, far below any resolution in use.
bool point_less(const Point& a, const Point& b) {
    if (std::holds_alternative<TorusPoint>(a)) {
        const auto& pa = std::get<TorusPoint>(a);
        const auto& pb = std::get<TorusPoint>(b);
        if (pa.x != pb.x) return pa.x < pb.x;
        return pa.y < pb.y;
    }
    const auto& wa = std::get<SymbolicWord>(a);
    const auto& wb = std::get<SymbolicWord>(b);
    std::size_t h = std::min<std::size_t>(
        64, std::max(wa.prefix_size(), wb.prefix_size()) +
                std::lcm(wa.tail_period(), wb.tail_period()));
    for (std::size_t i = 0; i < h; ++i) {
        if (wa.at(i) != wb.at(i)) return wa.at(i) < wb.at(i);
    }
    return false;
}

} // namespace

AtomicMeasure::AtomicMeasure(std::vector<Atom> atoms, std::string label, double resolution)
    : label_(std::move(label)) {
    if (atoms.empty()) throw std::invalid_argument("AtomicMeasure: no atoms");
    for (const auto& a : atoms)
        if (!(a.weight > 0.0))
            throw std::invalid_argument("AtomicMeasure: weights must be positive");
    std::sort(atoms.begin(), atoms.end(),
              [](const Atom& a, const Atom& b) { return point_less(a.point, b.point); });
    atoms_.reserve(atoms.size());
    for (auto& a : atoms) {
        if (!atoms_.empty() && point_close(atoms_.back().point, a.point, resolution))
            atoms_.back().weight += a.weight;
        else
            atoms_.push_back(std::move(a));
    }
    double mass = total_mass();
    if (std::fabs(mass - 1.0) > 1e-12)
        throw std::invalid_argument("AtomicMeasure: weights sum to " + format_double(mass) +
                                    ", not 1");
}

AtomicMeasure AtomicMeasure::dirac(Point p, std::string label) {
    return AtomicMeasure({{std::move(p), 1.0}}, std::move(label));
}

AtomicMeasure AtomicMeasure::uniform(std::vector<Point> pts, std::string label,
                                     double resolution) {
    if (pts.empty()) throw std::invalid_argument("AtomicMeasure::uniform: no points");
    std::vector<Atom> atoms;
    atoms.reserve(pts.size());
    double w = 1.0 / static_cast<double>(pts.size());
    for (auto& p : pts) atoms.push_back({std::move(p), w});
    return AtomicMeasure(std::move(atoms), std::move(label), resolution);
}

AtomicMeasure AtomicMeasure::convex(const std::vector<std::pair<AtomicMeasure, double>>& parts,
                                    std::string label, double resolution) {
    std::vector<Atom> atoms;
    for (const auto& [m, w] : parts) {
        if (!(w > 0.0)) throw std::invalid_argument("convex: weights must be positive");
        for (const auto& a : m.atoms()) atoms.push_back({a.point, a.weight * w});
    }
    return AtomicMeasure(std::move(atoms), std::move(label), resolution);
}

double AtomicMeasure::total_mass() const {
    // Kahan summation: the 1e-12 normalization invariant has to survive
    // hundred-thousand-atom empirical measures.
    double s = 0.0, comp = 0.0;
    for (const auto& a : atoms_) {
        double y = a.weight - comp;
        double t = s + y;
        comp = (t - s) - y;
        s = t;
    }
    return s;
}

AtomicMeasure empirical_measure(const DynamicalSystem& sys, const Point& x, std::size_t n) {
    if (n < 1) throw std::invalid_argument("empirical_measure: n >= 1");
    std::vector<Atom> atoms;
    atoms.reserve(n);
    double w = 1.0 / static_cast<double>(n);
    Point p = x;
    for (std::size_t i = 0; i < n; ++i) {
        atoms.push_back({p, w});
        if (i + 1 < n) p = sys.apply(p);
    }
    std::ostringstream label;
    label << "empirical[" << sys.name() << ",n=" << n << "]";
    return AtomicMeasure(std::move(atoms), label.str());
}

double integrate(const AtomicMeasure& mu, const std::function<double(const Point&)>& phi) {
    double s = 0.0;
    for (const auto& a : mu.atoms()) s += a.weight * phi(a.point);
    return s;
}

// ---------------------------------------------------------------------------
// TestBasis
// ---------------------------------------------------------------------------

TestBasis::TestBasis(Kind kind, int truncation) : kind_(kind), truncation_(truncation) {
    if (truncation < 1) throw std::invalid_argument("TestBasis: truncation >= 1");
    if (kind_ == Kind::TorusTrig) {
        id_ = "torus-trig/v1";
        // Frequency vectors ordered by total frequency; within a level the
        // mixed (balanced) frequencies come first, as in
        // 1, cos2pix1, sin2pix1, cos2pix2, sin2pix2, cos2pi(x1+x2), ...
        struct Freq { int k1, k2; };
        std::vector<Freq> freqs;
        for (int level = 1; static_cast<int>(torus_fns_.size()) < truncation_ + 2; ++level) {
            std::vector<Freq> at_level;
            for (int k1 = 0; k1 <= level; ++k1) {
                int k2abs = level - k1;
                if (k1 == 0) {
                    at_level.push_back({0, k2abs});
                } else if (k2abs == 0) {
                    at_level.push_back({k1, 0});
                } else {
                    at_level.push_back({k1, k2abs});
                    at_level.push_back({k1, -k2abs});
                }
            }
            std::sort(at_level.begin(), at_level.end(), [](const Freq& a, const Freq& b) {
                int ma = std::min(std::abs(a.k1), std::abs(a.k2));
                int mb = std::min(std::abs(b.k1), std::abs(b.k2));
                if (ma != mb) return ma > mb;
                if (a.k1 != b.k1) return a.k1 > b.k1;
                return a.k2 > b.k2;
            });
            if (torus_fns_.empty()) torus_fns_.push_back({0, 0, false}); // constant
            for (const auto& f : at_level) {
                torus_fns_.push_back({f.k1, f.k2, false});
                torus_fns_.push_back({f.k1, f.k2, true});
            }
        }
        torus_fns_.resize(truncation_);
    } else {
        id_ = "shift-cyl/v1";
        for (int depth = 1; static_cast<int>(cyl_fns_.size()) < truncation_; ++depth) {
            if (depth > 30) throw std::invalid_argument("TestBasis: truncation too deep");
            for (std::uint32_t bits = 0; bits < (1u << depth); ++bits)
                cyl_fns_.push_back({depth, bits});
        }
        cyl_fns_.resize(truncation_);
    }
}

TestBasis TestBasis::torus_trig(int truncation) { return TestBasis(Kind::TorusTrig, truncation); }
TestBasis TestBasis::shift_cylinders(int truncation) {
    return TestBasis(Kind::ShiftCylinder, truncation);
}

TestBasis TestBasis::for_system(const DynamicalSystem& sys, int truncation) {
    return sys.kind() == SystemKind::FullShift2 ? shift_cylinders(truncation)
                                                : torus_trig(truncation);
}

TestBasis TestBasis::with_truncation(int truncation) const {
    return TestBasis(kind_, truncation);
}

double TestBasis::evaluate(int i, const Point& p) const {
    if (i < 1 || i > truncation_) throw std::out_of_range("TestBasis::evaluate");
    if (kind_ == Kind::TorusTrig) {
        const auto& f = torus_fns_[static_cast<std::size_t>(i - 1)];
        if (f.k1 == 0 && f.k2 == 0) return 1.0;
        const auto& q = std::get<TorusPoint>(p);
        double arg = TWO_PI * (f.k1 * q.x + f.k2 * q.y);
        return f.sine ? std::sin(arg) : std::cos(arg);
    }
    const auto& f = cyl_fns_[static_cast<std::size_t>(i - 1)];
    const auto& w = std::get<SymbolicWord>(p);
    for (int j = 0; j < f.depth; ++j) {
        std::uint32_t want = (f.bits >> (f.depth - 1 - j)) & 1u;
        if (w.at(static_cast<std::size_t>(j)) != want) return 0.0;
    }
    return 1.0;
}

std::optional<TestBasis::CylinderSpec> TestBasis::cylinder_spec(int i) const {
    if (kind_ != Kind::ShiftCylinder || i < 1 || i > truncation_) return std::nullopt;
    const auto& f = cyl_fns_[static_cast<std::size_t>(i - 1)];
    return CylinderSpec{f.depth, f.bits};
}

double TestBasis::weight(int i) const { return std::ldexp(1.0, -(i + 1)); }

double TestBasis::tail_bound() const { return std::ldexp(1.0, -truncation_); }

std::vector<double> basis_integrals(const AtomicMeasure& mu, const TestBasis& basis) {
    std::vector<double> out(static_cast<std::size_t>(basis.truncation()), 0.0);
    for (const auto& a : mu.atoms())
        for (int i = 1; i <= basis.truncation(); ++i)
            out[static_cast<std::size_t>(i - 1)] += a.weight * basis.evaluate(i, a.point);
    return out;
}

MetricDValue metric_D_from_integrals(const std::vector<double>& a, const std::vector<double>& b,
                                     const TestBasis& basis) {
    if (a.size() != b.size() || static_cast<int>(a.size()) != basis.truncation())
        throw std::invalid_argument("metric_D_from_integrals: size mismatch");
    double v = 0.0;
    for (int i = 1; i <= basis.truncation(); ++i) {
        std::size_t j = static_cast<std::size_t>(i - 1);
        v += basis.weight(i) * std::fabs(a[j] - b[j]) / basis.sup_norm(i);
    }
    return {v, basis.tail_bound()};
}

MetricDValue metric_D(const AtomicMeasure& mu, const AtomicMeasure& nu, const TestBasis& basis) {
    return metric_D_from_integrals(basis_integrals(mu, basis), basis_integrals(nu, basis), basis);
}

// ---------------------------------------------------------------------------
// Rational approximation
// ---------------------------------------------------------------------------

AtomicMeasure RationalCombination::flatten(std::string label) const {
    std::vector<std::pair<AtomicMeasure, double>> parts;
    parts.reserve(components.size());
    for (const auto& [m, w] : components) parts.emplace_back(m, w.value());
    return AtomicMeasure::convex(parts, std::move(label));
}

std::vector<Rational> rational_weights(const std::vector<double>& weights, int k) {
    if (k < 1) throw std::invalid_argument("rational_weights: k >= 1");
    if (weights.empty()) throw std::invalid_argument("rational_weights: empty combination");
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw std::invalid_argument("rational_weights: weights > 0");
        wsum += w;
    }
    if (std::fabs(wsum - 1.0) > 1e-9)
        throw std::invalid_argument("rational_weights: weights must sum to 1");

    std::int64_t s = static_cast<std::int64_t>(weights.size());
    // Common denominator fine enough that floor rounding plus the sum fix
    // keeps every weight strictly within 1/(3 k s).
    std::int64_t q = 6 * static_cast<std::int64_t>(k) * s * s;
    std::vector<std::int64_t> numer(weights.size());
    std::int64_t acc = 0;
    std::vector<std::pair<double, std::size_t>> remainders;
    for (std::size_t j = 0; j < weights.size(); ++j) {
        double exact = weights[j] * static_cast<double>(q);
        numer[j] = static_cast<std::int64_t>(std::floor(exact));
        if (numer[j] < 1) numer[j] = 1; // weights stay positive
        remainders.push_back({exact - std::floor(exact), j});
        acc += numer[j];
    }
    // Largest remainders absorb the deficit so the numerators sum to q.
    std::sort(remainders.begin(), remainders.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    std::int64_t deficit = q - acc;
    std::size_t idx = 0;
    while (deficit > 0) {
        numer[remainders[idx % remainders.size()].second] += 1;
        --deficit;
        ++idx;
    }
    while (deficit < 0) {
        auto& n = numer[remainders[remainders.size() - 1 - (idx % remainders.size())].second];
        if (n > 1) {
            n -= 1;
            ++deficit;
        }
        ++idx;
    }

    std::vector<Rational> out;
    Rational total(0, 1);
    for (std::size_t j = 0; j < weights.size(); ++j) {
        Rational a(numer[j], q);
        double bound = 1.0 / (3.0 * static_cast<double>(k) * static_cast<double>(s));
        if (std::fabs(a.value() - weights[j]) >= bound)
            throw std::logic_error("rational_weights: rounding exceeded 1/(3ks)");
        total = total + a;
        out.push_back(a);
    }
    if (!(total == Rational(1, 1)))
        throw std::logic_error("rational_weights: rational weights do not sum to 1");
    return out;
}

RationalCombination rational_approximation(
    const std::vector<std::pair<AtomicMeasure, double>>& components, int k,
    const TestBasis& basis) {
    if (k < 1) throw std::invalid_argument("rational_approximation: k >= 1");
    if (components.empty())
        throw std::invalid_argument("rational_approximation: empty combination");
    double target = 1.0 / static_cast<double>(k);
    if (target <= basis.tail_bound()) {
        int required = static_cast<int>(std::ceil(std::log2(static_cast<double>(k)))) + 1;
        throw ApproximationError(
            "rational_approximation: 1/k is below the basis truncation error; "
            "need truncation >= " + std::to_string(required),
            required);
    }
    std::vector<double> ws;
    ws.reserve(components.size());
    for (const auto& [m, w] : components) {
        (void)m;
        ws.push_back(w);
    }
    auto rats = rational_weights(ws, k);

    RationalCombination out;
    out.order = k;
    for (std::size_t j = 0; j < components.size(); ++j)
        out.components.emplace_back(components[j].first, rats[j]);

    AtomicMeasure input = AtomicMeasure::convex(components, "rational-approx-input");
    out.certified = metric_D(input, out.flatten(), basis);
    if (out.certified.value > target)
        throw ApproximationError("rational_approximation: certification D <= 1/k failed",
                                 basis.truncation());
    return out;
}

} // namespace histent
