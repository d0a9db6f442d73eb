#ifndef HISTENT_HYPERBOLICITY_HPP
#define HISTENT_HYPERBOLICITY_HPP

#include "histent/systems.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace histent {

// ---------------------------------------------------------------------------
// Finite-time Lyapunov exponents
// ---------------------------------------------------------------------------

struct ExponentReport {
    double lambda1 = 0.0; // nats per iterate, lambda1 >= lambda2
    double lambda2 = 0.0;
    std::size_t horizon = 0;
    // per-step running exponents for convergence diagnostics, subsampled
    std::vector<std::pair<std::size_t, std::pair<double, double>>> partials;
    double sum() const { return lambda1 + lambda2; }
};

// QR-orthogonalized cocycle push along the orbit of x.
ExponentReport lyapunov_exponents(const DynamicalSystem& sys, const Point& x, std::size_t n);

struct LambdaPlusMinus {
    double lambda_plus = 0.0;  // min of the nonnegative exponents, 0 if none
    double lambda_minus = 0.0; // min of the negated nonpositive exponents, 0 if none
    bool hyperbolic = false;
};

LambdaPlusMinus lambda_plus_minus(const std::vector<double>& exponents);

// ---------------------------------------------------------------------------
// Hyperbolic (Pesin) blocks
// ---------------------------------------------------------------------------

struct PesinBlockParams {
    double beta1 = 0.9;
    double beta2 = 0.9;
    double eps = 0.05;
    int k = 1;
    double eps0 = 1.0;     // shadowing scale constant of the system
    std::size_t T = 50;    // finite test horizon for t and n
    std::size_t warmup = 24; // iterations used to settle the splitting estimate

    double eps_k() const;
    void validate() const;
};

struct BlockMembershipWitness {
    Point x;
    Vec2 stable_dir, unstable_dir; // at x
    // worst slack over the tested (t, n) range, one per block condition:
    // splitting invariance, stable contraction, unstable back-contraction,
    // angle lower bound
    double margin_invariance = 0.0;
    double margin_stable = 0.0;
    double margin_unstable = 0.0;
    double margin_angle = 0.0;
    bool member = false;

    std::vector<double> all_margins() const {
        return {margin_invariance, margin_stable, margin_unstable, margin_angle};
    }
};

struct DegenerateSplittingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checks the four block inequalities for |t| <= T, 1 <= n <= T. Verdicts are
// horizon-bounded: membership is falsifiable, non-membership is certified by
// a violated inequality.
BlockMembershipWitness pesin_block_membership(const DynamicalSystem& sys, const Point& x,
                                              const PesinBlockParams& params);

struct BlockMonotonicityReport {
    std::size_t tested = 0;
    std::size_t nesting_violations = 0; // member(k) but not member(k+1)
    std::size_t forward_violations = 0; // member(x,k) but f(x) not in block k+1
    bool ok() const { return nesting_violations == 0 && forward_violations == 0; }
};

BlockMonotonicityReport block_monotonicity_check(const DynamicalSystem& sys,
                                                 const std::vector<Point>& sample,
                                                 const PesinBlockParams& base, int k_from,
                                                 int k_to);

} // namespace histent

#endif
