#include "histent/hyperbolicity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace histent {

namespace {

Mat2 invert(const Mat2& m) {
    double det = m.det();
    if (std::fabs(det) < 1e-300) throw std::runtime_error("singular step derivative");
    return {m.d / det, -m.b / det, -m.c / det, m.a / det};
}

Mat2 step_derivative(const DynamicalSystem& sys, const Point& p) {
    if (sys.kind() == SystemKind::KatokMap)
        return static_cast<const KatokMap&>(sys)
            .apply_with_derivative(std::get<TorusPoint>(p))
            .second;
    return sys.derivative(p);
}

double norm(Vec2 v) { return std::sqrt(v.x * v.x + v.y * v.y); }

Vec2 normalized(Vec2 v) {
    double n = norm(v);
    if (n < 1e-300) throw std::runtime_error("zero vector in splitting estimate");
    return {v.x / n, v.y / n};
}

// Orbit segment x_{lo}, ..., x_{hi} with the per-step derivatives D_t = Df_{x_t}.
struct CocycleSegment {
    std::int64_t lo = 0, hi = 0;
    std::vector<Point> pts;
    std::vector<Mat2> derivs;

    CocycleSegment(const DynamicalSystem& sys, const Point& x, std::int64_t lo_,
                   std::int64_t hi_)
        : lo(lo_), hi(hi_) {
        std::size_t len = static_cast<std::size_t>(hi - lo + 1);
        pts.resize(len);
        Point p = x;
        for (std::int64_t t = 0; t >= lo; --t) {
            pts[static_cast<std::size_t>(t - lo)] = p;
            if (t > lo) p = sys.apply_inverse(p);
        }
        p = x;
        for (std::int64_t t = 0; t <= hi; ++t) {
            pts[static_cast<std::size_t>(t - lo)] = p;
            if (t < hi) p = sys.apply(p);
        }
        derivs.resize(len);
        for (std::size_t i = 0; i < len; ++i) derivs[i] = step_derivative(sys, pts[i]);
    }

    const Mat2& deriv(std::int64_t t) const { return derivs[static_cast<std::size_t>(t - lo)]; }

    // log ||Df^n v|| at x_t, renormalizing every step
    double log_forward_growth(std::int64_t t, std::size_t n, Vec2 v) const {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            v = deriv(t + static_cast<std::int64_t>(j)).apply(v);
            double nv = norm(v);
            acc += std::log(nv);
            v = {v.x / nv, v.y / nv};
        }
        return acc;
    }

    // log ||Df^{-n} v|| at x_t
    double log_backward_growth(std::int64_t t, std::size_t n, Vec2 v) const {
        double acc = 0.0;
        for (std::size_t j = 1; j <= n; ++j) {
            v = invert(deriv(t - static_cast<std::int64_t>(j))).apply(v);
            double nv = norm(v);
            acc += std::log(nv);
            v = {v.x / nv, v.y / nv};
        }
        return acc;
    }

    // finite-time unstable direction at x_t: push a seed forward from the past
    Vec2 unstable_at(std::int64_t t, std::size_t warmup, Vec2 seed) const {
        Vec2 v = seed;
        for (std::size_t j = 0; j < warmup; ++j) {
            std::int64_t s = t - static_cast<std::int64_t>(warmup - j);
            v = normalized(deriv(s).apply(v));
        }
        return v;
    }

    // finite-time stable direction at x_t: pull a seed back from the future
    Vec2 stable_at(std::int64_t t, std::size_t warmup, Vec2 seed) const {
        Vec2 v = seed;
        for (std::size_t j = 0; j < warmup; ++j) {
            std::int64_t s = t + static_cast<std::int64_t>(warmup - j);
            v = normalized(invert(deriv(s - 1)).apply(v));
        }
        return v;
    }
};

} // namespace

// ---------------------------------------------------------------------------
// Lyapunov exponents
// ---------------------------------------------------------------------------

ExponentReport lyapunov_exponents(const DynamicalSystem& sys, const Point& x, std::size_t n) {
    if (!sys.smooth()) throw std::logic_error("lyapunov_exponents: system is not smooth");
    if (n < 1) throw std::invalid_argument("lyapunov_exponents: n >= 1");

    // lambda1 = (1/n) log sigma_1(Df^n), lambda2 through the determinant;
    // this has no frame-alignment transient, so constant cocycles come out
    // exact. The product is renormalized every step to avoid overflow.
    Mat2 prod = Mat2::identity();
    double acc_norm = 0.0, acc_det = 0.0;
    ExponentReport rep;
    rep.horizon = n;
    std::size_t stride = std::max<std::size_t>(1, n / 100);

    Point p = x;
    for (std::size_t i = 0; i < n; ++i) {
        Mat2 d = step_derivative(sys, p);
        acc_det += std::log(std::fabs(d.det()));
        prod = d * prod;
        double c = prod.norm();
        if (c < 1e-300) throw std::runtime_error("lyapunov_exponents: collapsed cocycle");
        prod = {prod.a / c, prod.b / c, prod.c / c, prod.d / c};
        acc_norm += std::log(c);
        if ((i + 1) % stride == 0 || i + 1 == n) {
            double steps = static_cast<double>(i + 1);
            double l1 = (acc_norm + std::log(prod.norm())) / steps;
            rep.partials.push_back({i + 1, {l1, acc_det / steps - l1}});
        }
        if (i + 1 < n) p = sys.apply(p);
    }
    double l1 = (acc_norm + std::log(prod.norm())) / static_cast<double>(n);
    double l2 = acc_det / static_cast<double>(n) - l1;
    rep.lambda1 = std::max(l1, l2);
    rep.lambda2 = std::min(l1, l2);
    return rep;
}

LambdaPlusMinus lambda_plus_minus(const std::vector<double>& exponents) {
    if (exponents.empty()) throw std::invalid_argument("lambda_plus_minus: empty exponent list");
    LambdaPlusMinus out;
    bool has_plus = false, has_minus = false;
    for (double l : exponents) {
        if (l >= 0.0) {
            out.lambda_plus = has_plus ? std::min(out.lambda_plus, l) : l;
            has_plus = true;
        }
        if (l <= 0.0) {
            out.lambda_minus = has_minus ? std::min(out.lambda_minus, -l) : -l;
            has_minus = true;
        }
    }
    // min over the empty set is appointed to be 0
    if (!has_plus) out.lambda_plus = 0.0;
    if (!has_minus) out.lambda_minus = 0.0;
    out.hyperbolic = out.lambda_plus > 0.0 && out.lambda_minus > 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Pesin blocks
// ---------------------------------------------------------------------------

double PesinBlockParams::eps_k() const { return eps0 * std::exp(-eps * static_cast<double>(k)); }

void PesinBlockParams::validate() const {
    if (!(eps > 0.0)) throw std::invalid_argument("pesin block: eps > 0");
    if (!(beta1 > eps && beta2 > eps))
        throw std::invalid_argument("pesin block: beta1, beta2 must exceed eps");
    if (k < 1) throw std::invalid_argument("pesin block: k >= 1");
    if (T < 1) throw std::invalid_argument("pesin block: T >= 1");
    if (!(eps0 > 0.0)) throw std::invalid_argument("pesin block: eps0 > 0");
}

BlockMembershipWitness pesin_block_membership(const DynamicalSystem& sys, const Point& x,
                                              const PesinBlockParams& params) {
    params.validate();
    if (!sys.smooth()) throw std::logic_error("pesin_block_membership: system is not smooth");

    std::int64_t T = static_cast<std::int64_t>(params.T);
    CocycleSegment seg(sys, x, -2 * T - static_cast<std::int64_t>(params.warmup),
                       2 * T + static_cast<std::int64_t>(params.warmup));

    // Seeds: the eigenframe of the linear model; exact for the cat map, a
    // stable warm start for its slowed-down variant.
    CatMapSpec cat;
    Vec2 seed_u = cat.unstable, seed_s = cat.stable;

    std::vector<Vec2> eu(static_cast<std::size_t>(2 * T + 1));
    std::vector<Vec2> es(static_cast<std::size_t>(2 * T + 1));
    for (std::int64_t t = -T; t <= T; ++t) {
        Vec2 u = seg.unstable_at(t, params.warmup, seed_u);
        Vec2 s = seg.stable_at(t, params.warmup, seed_s);
        double cross = std::fabs(u.x * s.y - u.y * s.x); // sin of their angle
        if (cross < 1e-10)
            throw DegenerateSplittingError("pesin block: splitting angle below 1e-10 at t=" +
                                           std::to_string(t));
        eu[static_cast<std::size_t>(t + T)] = u;
        es[static_cast<std::size_t>(t + T)] = s;
    }

    BlockMembershipWitness wit;
    wit.x = x;
    wit.unstable_dir = eu[static_cast<std::size_t>(T)];
    wit.stable_dir = es[static_cast<std::size_t>(T)];

    double ek = params.eps * static_cast<double>(params.k);
    double inf = std::numeric_limits<double>::infinity();
    double m_inv = inf, m_s = inf, m_u = inf, m_ang = inf;
    // Invariance slack: one derivative step must carry the estimated field
    // onto itself, up to the finite-horizon estimation error.
    double inv_tol = sys.kind() == SystemKind::CatMap ? 1e-9 : 1e-3;

    for (std::int64_t t = -T; t <= T; ++t) {
        std::size_t it = static_cast<std::size_t>(t + T);
        double et = params.eps * static_cast<double>(t < 0 ? -t : t);

        // condition 1: Df(E_x) = E_fx for both subbundles
        if (t < T) {
            Vec2 pu = normalized(seg.deriv(t).apply(eu[it]));
            Vec2 ps = normalized(seg.deriv(t).apply(es[it]));
            const Vec2& nu = eu[it + 1];
            const Vec2& ns = es[it + 1];
            double du = std::fabs(pu.x * nu.y - pu.y * nu.x);
            double ds = std::fabs(ps.x * ns.y - ps.y * ns.x);
            m_inv = std::min(m_inv, inv_tol - std::max(du, ds));
        }

        // condition 4: angle lower bound
        const Vec2& u = eu[it];
        const Vec2& s = es[it];
        double sin_ang = std::fabs(u.x * s.y - u.y * s.x);
        double cos_ang = std::fabs(u.dot(s));
        double log_tan = std::log(sin_ang) - std::log(std::max(cos_ang, 1e-300));
        m_ang = std::min(m_ang, log_tan + ek + et);

        // conditions 2 and 3: contraction bounds along the orbit
        for (std::int64_t n = 1; n <= T; ++n) {
            double lhs_s = seg.log_forward_growth(t, static_cast<std::size_t>(n), s);
            m_s = std::min(m_s,
                           ek + et - (params.beta1 - params.eps) * static_cast<double>(n) - lhs_s);
            double lhs_u = seg.log_backward_growth(t, static_cast<std::size_t>(n), u);
            m_u = std::min(m_u,
                           ek + et - (params.beta2 - params.eps) * static_cast<double>(n) - lhs_u);
        }
    }

    wit.margin_invariance = m_inv;
    wit.margin_stable = m_s;
    wit.margin_unstable = m_u;
    wit.margin_angle = m_ang;
    wit.member = m_inv >= 0.0 && m_s >= 0.0 && m_u >= 0.0 && m_ang >= 0.0;
    return wit;
}

BlockMonotonicityReport block_monotonicity_check(const DynamicalSystem& sys,
                                                 const std::vector<Point>& sample,
                                                 const PesinBlockParams& base, int k_from,
                                                 int k_to) {
    if (k_from < 1 || k_to < k_from)
        throw std::invalid_argument("block_monotonicity_check: need 1 <= k_from <= k_to");
    BlockMonotonicityReport rep;
    for (const auto& x : sample) {
        for (int k = k_from; k < k_to; ++k) {
            PesinBlockParams pk = base;
            pk.k = k;
            PesinBlockParams pk1 = base;
            pk1.k = k + 1;
            bool in_k = pesin_block_membership(sys, x, pk).member;
            ++rep.tested;
            if (!in_k) continue;
            if (!pesin_block_membership(sys, x, pk1).member) ++rep.nesting_violations;
            if (!pesin_block_membership(sys, sys.apply(x), pk1).member)
                ++rep.forward_violations;
        }
    }
    return rep;
}

} // namespace histent
