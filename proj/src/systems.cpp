#include "histent/systems.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace histent {

double Vec2::norm() const { return std::sqrt(x * x + y * y); }

double Mat2::norm() const {
    // Largest singular value of a 2x2 matrix, closed form.
    double e = a * a + b * b + c * c + d * d;
    double f = det();
    double disc = std::sqrt(std::max(0.0, e * e - 4.0 * f * f));
    return std::sqrt(0.5 * (e + disc));
}

TorusPoint reduce_mod1(double x, double y) {
    double rx = x - std::floor(x);
    double ry = y - std::floor(y);
    if (rx >= 1.0) rx = 0.0; // floor rounding at the seam
    if (ry >= 1.0) ry = 0.0;
    return {rx, ry};
}

Vec2 centered_lift(TorusPoint p) {
    auto center = [](double v) {
        double r = v - std::floor(v + 0.5);
        return r;
    };
    return {center(p.x), center(p.y)};
}

double torus_distance(TorusPoint a, TorusPoint b) {
    auto axis = [](double u, double v) {
        double d = std::fabs(u - v);
        return std::min(d, 1.0 - d);
    };
    double dx = axis(a.x, b.x);
    double dy = axis(a.y, b.y);
    return std::sqrt(dx * dx + dy * dy);
}

// ---------------------------------------------------------------------------
// Symbolic words
// ---------------------------------------------------------------------------

SymbolicWord SymbolicWord::ones() {
    SymbolicWord w;
    w.tail_ = TailKind::Ones;
    return w;
}

SymbolicWord SymbolicWord::periodic(std::vector<std::uint8_t> block) {
    if (block.empty()) throw std::invalid_argument("periodic word needs a non-empty block");
    SymbolicWord w;
    w.tail_ = TailKind::Periodic;
    w.tail_block_ = std::make_shared<const std::vector<std::uint8_t>>(std::move(block));
    return w;
}

SymbolicWord SymbolicWord::from_prefix(std::vector<std::uint8_t> p, TailKind t) {
    if (t == TailKind::Periodic)
        throw std::invalid_argument("use SymbolicWord::periodic for periodic tails");
    SymbolicWord w;
    if (!p.empty()) w.data_ = std::make_shared<const std::vector<std::uint8_t>>(std::move(p));
    w.tail_ = t;
    return w;
}

std::uint8_t SymbolicWord::at(std::size_t i) const {
    std::size_t ps = prefix_size();
    if (i < ps) return (*data_)[offset_ + i];
    switch (tail_) {
        case TailKind::Zeros: return 0;
        case TailKind::Ones: return 1;
        case TailKind::Periodic:
            return (*tail_block_)[(tail_offset_ + (i - ps)) % tail_block_->size()];
    }
    return 0;
}

SymbolicWord SymbolicWord::shifted() const {
    SymbolicWord r = *this;
    if (prefix_size() > 0) {
        r.offset_ += 1;
        if (r.prefix_size() == 0) {
            r.data_.reset();
            r.offset_ = 0;
        }
        return r;
    }
    if (tail_ == TailKind::Periodic)
        r.tail_offset_ = (tail_offset_ + 1) % tail_block_->size();
    return r;
}

SymbolicWord SymbolicWord::with_prepended(std::uint8_t sym) const {
    std::vector<std::uint8_t> p;
    p.reserve(prefix_size() + 1);
    p.push_back(sym);
    for (std::size_t i = 0; i < prefix_size(); ++i) p.push_back(at(i));
    SymbolicWord r = *this;
    r.data_ = std::make_shared<const std::vector<std::uint8_t>>(std::move(p));
    r.offset_ = 0;
    return r;
}

std::string SymbolicWord::to_string(std::size_t show) const {
    std::ostringstream os;
    for (std::size_t i = 0; i < show; ++i) os << int(at(i));
    os << "...";
    switch (tail_) {
        case TailKind::Zeros: os << "(0)"; break;
        case TailKind::Ones: os << "(1)"; break;
        case TailKind::Periodic: {
            os << "(per:";
            for (std::size_t i = 0; i < tail_block_->size(); ++i)
                os << int(at(prefix_size() + i));
            os << ")";
            break;
        }
    }
    return os.str();
}

namespace {
// Two eventually periodic sequences agree everywhere iff they agree on a
// prefix of length max(preperiods) + lcm(periods).
std::size_t comparison_horizon(const SymbolicWord& a, const SymbolicWord& b) {
    std::size_t pre = std::max(a.prefix_size(), b.prefix_size());
    std::size_t pa = a.tail_period(), pb = b.tail_period();
    std::size_t l = std::lcm(pa, pb);
    return pre + l;
}
} // namespace

bool word_equal(const SymbolicWord& a, const SymbolicWord& b) {
    std::size_t h = comparison_horizon(a, b);
    for (std::size_t i = 0; i < h; ++i)
        if (a.at(i) != b.at(i)) return false;
    return true;
}

double word_distance(const SymbolicWord& a, const SymbolicWord& b) {
    std::size_t h = comparison_horizon(a, b);
    for (std::size_t i = 0; i < h; ++i)
        if (a.at(i) != b.at(i)) return std::ldexp(1.0, -static_cast<int>(i));
    return 0.0;
}

double point_distance(const Point& a, const Point& b) {
    if (std::holds_alternative<TorusPoint>(a) && std::holds_alternative<TorusPoint>(b))
        return torus_distance(std::get<TorusPoint>(a), std::get<TorusPoint>(b));
    if (std::holds_alternative<SymbolicWord>(a) && std::holds_alternative<SymbolicWord>(b))
        return word_distance(std::get<SymbolicWord>(a), std::get<SymbolicWord>(b));
    throw std::invalid_argument("point_distance: mixed point types");
}

bool point_equal(const Point& a, const Point& b, double resolution) {
    return point_distance(a, b) <= resolution;
}

bool point_close(const Point& a, const Point& b, double resolution) {
    if (std::holds_alternative<SymbolicWord>(a)) {
        const auto& wa = std::get<SymbolicWord>(a);
        const auto& wb = std::get<SymbolicWord>(b);
        // agreement past this depth already means distance <= resolution
        std::size_t depth = 1;
        while (std::ldexp(1.0, -static_cast<int>(depth)) > resolution && depth < 64) ++depth;
        for (std::size_t i = 0; i <= depth; ++i)
            if (wa.at(i) != wb.at(i)) return std::ldexp(1.0, -static_cast<int>(i)) <= resolution;
        return true;
    }
    return point_distance(a, b) <= resolution;
}

// ---------------------------------------------------------------------------
// Cat map
// ---------------------------------------------------------------------------

CatMapSpec::CatMapSpec() {
    lambda = (3.0 + std::sqrt(5.0)) / 2.0;
    log_lambda = std::log(lambda);
    // (A - lambda I) v = 0  ->  v = (1, lambda - 2)
    Vec2 u{1.0, lambda - 2.0};
    double nu = u.norm();
    unstable = {u.x / nu, u.y / nu};
    stable = {-unstable.y, unstable.x};
}

TorusPoint cat_apply(TorusPoint p) {
    return reduce_mod1(2.0 * p.x + p.y, p.x + p.y);
}

TorusPoint cat_apply_inverse(TorusPoint p) {
    return reduce_mod1(p.x - p.y, -p.x + 2.0 * p.y);
}

Point CatMap::apply(const Point& p) const { return cat_apply(std::get<TorusPoint>(p)); }
Point CatMap::apply_inverse(const Point& p) const { return cat_apply_inverse(std::get<TorusPoint>(p)); }
double CatMap::distance(const Point& a, const Point& b) const {
    return torus_distance(std::get<TorusPoint>(a), std::get<TorusPoint>(b));
}

// ---------------------------------------------------------------------------
// Katok map
// ---------------------------------------------------------------------------

double KatokMapSpec::psi(double u) const {
    double u0 = r0 * r0;
    if (u >= u0) return 1.0;
    if (u <= 0.0) return 0.0;
    return std::pow(u / u0, alpha);
}

double KatokMapSpec::psi_prime(double u) const {
    double u0 = r0 * r0;
    if (u >= u0 || u <= 0.0) return 0.0;
    return alpha * std::pow(u / u0, alpha - 1.0) / u0;
}

void KatokMapSpec::validate() const {
    if (!(r0 > 0.0 && r0 < r1)) throw std::invalid_argument("katok spec: need 0 < r0 < r1");
    if (!(r1 < 0.3)) throw std::invalid_argument("katok spec: r1 too large for the origin chart");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("katok spec: alpha in (0,1)");
    // Trajectories launched from the flow disk must stay inside the chart and
    // clear of the slowdown disk by the time-1 mark, otherwise f is not a
    // homeomorphism at the seam.
    CatMapSpec cat;
    if (!(r0 < r1 / cat.lambda))
        throw std::invalid_argument("katok spec: need r0 < r1/lambda for a continuous seam");
    if (!(ode_tolerance > 0.0 && ode_max_step > 0.0))
        throw std::invalid_argument("katok spec: integrator controls must be positive");
}

namespace {

struct FlowState {
    double s1, s2;
    Mat2 jac; // d(state)/d(state0), carried only when requested
};

struct KatokField {
    const KatokMapSpec& spec;
    double log_lambda;

    void eval(const FlowState& st, bool with_jac, FlowState& out) const {
        double u = st.s1 * st.s1 + st.s2 * st.s2;
        double ps = spec.psi(u);
        out.s1 = st.s1 * ps * log_lambda;
        out.s2 = -st.s2 * ps * log_lambda;
        if (with_jac) {
            double pp = spec.psi_prime(u);
            // Jacobian of the field;  psi' * s_i * s_j stays bounded near 0.
            double a11 = (ps + 2.0 * st.s1 * st.s1 * pp) * log_lambda;
            double a12 = (2.0 * st.s1 * st.s2 * pp) * log_lambda;
            double a21 = (-2.0 * st.s1 * st.s2 * pp) * log_lambda;
            double a22 = (-ps - 2.0 * st.s2 * st.s2 * pp) * log_lambda;
            Mat2 dx{a11, a12, a21, a22};
            out.jac = dx * st.jac;
        }
    }
};

FlowState rk4_step(const KatokField& field, const FlowState& st, double h, bool with_jac) {
    auto add = [with_jac](const FlowState& a, double s, const FlowState& b) {
        FlowState r;
        r.s1 = a.s1 + s * b.s1;
        r.s2 = a.s2 + s * b.s2;
        if (with_jac)
            r.jac = {a.jac.a + s * b.jac.a, a.jac.b + s * b.jac.b,
                     a.jac.c + s * b.jac.c, a.jac.d + s * b.jac.d};
        else
            r.jac = a.jac;
        return r;
    };
    FlowState k1, k2, k3, k4;
    field.eval(st, with_jac, k1);
    field.eval(add(st, h / 2.0, k1), with_jac, k2);
    field.eval(add(st, h / 2.0, k2), with_jac, k3);
    field.eval(add(st, h, k3), with_jac, k4);
    FlowState r = st;
    r.s1 += h / 6.0 * (k1.s1 + 2.0 * k2.s1 + 2.0 * k3.s1 + k4.s1);
    r.s2 += h / 6.0 * (k1.s2 + 2.0 * k2.s2 + 2.0 * k3.s2 + k4.s2);
    if (with_jac) {
        r.jac.a += h / 6.0 * (k1.jac.a + 2.0 * k2.jac.a + 2.0 * k3.jac.a + k4.jac.a);
        r.jac.b += h / 6.0 * (k1.jac.b + 2.0 * k2.jac.b + 2.0 * k3.jac.b + k4.jac.b);
        r.jac.c += h / 6.0 * (k1.jac.c + 2.0 * k2.jac.c + 2.0 * k3.jac.c + k4.jac.c);
        r.jac.d += h / 6.0 * (k1.jac.d + 2.0 * k2.jac.d + 2.0 * k3.jac.d + k4.jac.d);
    }
    return r;
}

// Integrate the slowed field for signed time `duration`, step-halving on the
// step-doubling error estimate. Returns false if the radius exceeds `abort_radius`
// (caller then knows the trajectory is irrelevant); throws on step underflow.
bool integrate_flow(const KatokMapSpec& spec, double log_lambda, FlowState& st,
                    double duration, bool with_jac, double abort_radius,
                    TorusPoint origin_point) {
    KatokField field{spec, log_lambda};
    double t = 0.0;
    double end = duration;
    double dir = duration >= 0.0 ? 1.0 : -1.0;
    double h = dir * spec.ode_max_step;
    double tol = spec.ode_tolerance;
    while (dir * (end - t) > 1e-15) {
        if (dir * h > dir * (end - t)) h = end - t;
        FlowState big = rk4_step(field, st, h, with_jac);
        FlowState half = rk4_step(field, st, h / 2.0, with_jac);
        FlowState two = rk4_step(field, half, h / 2.0, with_jac);
        double err_state = std::max(std::fabs(big.s1 - two.s1), std::fabs(big.s2 - two.s2));
        double err_jac = 0.0;
        if (with_jac) {
            err_jac = std::max({std::fabs(big.jac.a - two.jac.a),
                                std::fabs(big.jac.b - two.jac.b),
                                std::fabs(big.jac.c - two.jac.c),
                                std::fabs(big.jac.d - two.jac.d)});
        }
        // Absolute floors: 5e-14 keeps rounding noise from forcing endless
        // halving; the Jacobian channel gets a larger one because the
        // variational field jumps at the psi kink (u = r0^2), where the
        // step-doubling error is O(h) and a pure per-step bound cannot be met.
        double allowed_state = tol * std::fabs(h) + 5e-14;
        double allowed_jac = tol * std::fabs(h) + 2e-11;
        if (err_state > allowed_state || err_jac > allowed_jac) {
            h /= 2.0;
            if (std::fabs(h) < 1e-12)
                throw IntegratorError("katok integrator: step underflow", origin_point);
            continue;
        }
        // Richardson extrapolation of the two half steps.
        st.s1 = two.s1 + (two.s1 - big.s1) / 15.0;
        st.s2 = two.s2 + (two.s2 - big.s2) / 15.0;
        if (with_jac) {
            st.jac.a = two.jac.a + (two.jac.a - big.jac.a) / 15.0;
            st.jac.b = two.jac.b + (two.jac.b - big.jac.b) / 15.0;
            st.jac.c = two.jac.c + (two.jac.c - big.jac.c) / 15.0;
            st.jac.d = two.jac.d + (two.jac.d - big.jac.d) / 15.0;
        }
        t += h;
        if (err_state < allowed_state / 32.0 && err_jac < allowed_jac / 32.0 &&
            std::fabs(h) < spec.ode_max_step)
            h *= 2.0;
        if (st.s1 * st.s1 + st.s2 * st.s2 > abort_radius * abort_radius) return false;
    }
    return true;
}

} // namespace

KatokMap::KatokMap(KatokMapSpec spec) : spec_(spec) { spec_.validate(); }

std::pair<TorusPoint, Mat2> KatokMap::apply_with_derivative(TorusPoint p) const {
    Vec2 d = centered_lift(p);
    double s1 = d.dot(cat_.unstable);
    double s2 = d.dot(cat_.stable);
    double u = s1 * s1 + s2 * s2;
    if (u >= spec_.r1 * spec_.r1) {
        TorusPoint q = cat_apply(p);
        return {q, cat_.matrix};
    }
    FlowState st{s1, s2, Mat2::identity()};
    integrate_flow(spec_, cat_.log_lambda, st, 1.0, true, 10.0, p);
    Vec2 img = st.s1 * cat_.unstable + st.s2 * cat_.stable;
    TorusPoint q = reduce_mod1(img);
    // Conjugate the eigenframe Jacobian back to torus coordinates.
    Mat2 basis{cat_.unstable.x, cat_.stable.x, cat_.unstable.y, cat_.stable.y};
    Mat2 basis_t{cat_.unstable.x, cat_.unstable.y, cat_.stable.x, cat_.stable.y};
    return {q, basis * st.jac * basis_t};
}

Point KatokMap::apply(const Point& p) const {
    return apply_with_derivative(std::get<TorusPoint>(p)).first;
}

Point KatokMap::apply_inverse(const Point& pt) const {
    TorusPoint q = std::get<TorusPoint>(pt);
    Vec2 d = centered_lift(q);
    double s1 = d.dot(cat_.unstable);
    double s2 = d.dot(cat_.stable);
    double r = std::sqrt(s1 * s1 + s2 * s2);
    double reach = cat_.lambda * spec_.r1 * 1.02;
    if (r >= reach) return cat_apply_inverse(q);
    // Run the flow backwards; if the preimage escapes the flow disk the true
    // preimage is the linear one.
    FlowState st{s1, s2, Mat2::identity()};
    bool stayed = integrate_flow(spec_, cat_.log_lambda, st, -1.0, false, reach, q);
    if (stayed && st.s1 * st.s1 + st.s2 * st.s2 < spec_.r1 * spec_.r1) {
        Vec2 pre = st.s1 * cat_.unstable + st.s2 * cat_.stable;
        return reduce_mod1(pre);
    }
    return cat_apply_inverse(q);
}

double KatokMap::distance(const Point& a, const Point& b) const {
    return torus_distance(std::get<TorusPoint>(a), std::get<TorusPoint>(b));
}

Mat2 KatokMap::derivative(const Point& p) const {
    return apply_with_derivative(std::get<TorusPoint>(p)).second;
}

Mat2 KatokMap::derivative_inverse(const Point& p) const {
    Point pre = apply_inverse(p);
    Mat2 fwd = derivative(pre);
    double det = fwd.det();
    return {fwd.d / det, -fwd.b / det, -fwd.c / det, fwd.a / det};
}

// ---------------------------------------------------------------------------
// Full shift
// ---------------------------------------------------------------------------

SymbolicWord shift_apply(const SymbolicWord& w) { return w.shifted(); }

Point FullShift::apply(const Point& p) const { return std::get<SymbolicWord>(p).shifted(); }

Point FullShift::apply_inverse(const Point& p) const {
    // One-sided shift: prepend the canonical 0 preimage.
    return std::get<SymbolicWord>(p).with_prepended(0);
}

double FullShift::distance(const Point& a, const Point& b) const {
    return word_distance(std::get<SymbolicWord>(a), std::get<SymbolicWord>(b));
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

Mat2 DynamicalSystem::derivative(const Point&) const {
    throw std::logic_error(name() + ": no tangent map on a symbolic system");
}

Mat2 DynamicalSystem::derivative_inverse(const Point&) const {
    throw std::logic_error(name() + ": no tangent map on a symbolic system");
}

std::vector<Point> DynamicalSystem::orbit(const Point& start, std::size_t length) const {
    std::vector<Point> out;
    out.reserve(length);
    Point p = start;
    for (std::size_t i = 0; i < length; ++i) {
        out.push_back(p);
        if (i + 1 < length) p = apply(p);
    }
    return out;
}

Mat2 tangent_cocycle(const DynamicalSystem& sys, const Point& x, std::size_t n) {
    if (!sys.smooth()) throw std::logic_error("tangent_cocycle: system is not smooth");
    if (n < 1) throw std::invalid_argument("tangent_cocycle: n >= 1");
    Mat2 prod = Mat2::identity();
    Point p = x;
    for (std::size_t i = 0; i < n; ++i) {
        if (sys.kind() == SystemKind::KatokMap) {
            auto [q, df] = static_cast<const KatokMap&>(sys).apply_with_derivative(
                std::get<TorusPoint>(p));
            prod = df * prod;
            p = q;
        } else {
            prod = sys.derivative(p) * prod;
            p = sys.apply(p);
        }
    }
    return prod;
}

std::unique_ptr<DynamicalSystem> make_system(SystemKind kind) {
    switch (kind) {
        case SystemKind::CatMap: return std::make_unique<CatMap>();
        case SystemKind::KatokMap: return std::make_unique<KatokMap>();
        case SystemKind::FullShift2: return std::make_unique<FullShift>();
    }
    throw std::invalid_argument("make_system: unknown kind");
}

} // namespace histent
