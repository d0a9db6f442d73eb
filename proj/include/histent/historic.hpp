#ifndef HISTENT_HISTORIC_HPP
#define HISTENT_HISTORIC_HPP

#include "histent/measures.hpp"
#include "histent/systems.hpp"

#include <functional>
#include <string>
#include <vector>

namespace histent {

struct NamedObservable {
    std::string label;
    double sup_norm = 1.0;
    std::function<double(const Point&)> fn;
};

double birkhoff_average(const DynamicalSystem& sys, const Point& x,
                        const std::function<double(const Point&)>& phi, std::size_t n);

// ---------------------------------------------------------------------------
// Historic (irregular) behavior detection
// ---------------------------------------------------------------------------

struct HistoricReport {
    std::string phi_label;
    std::size_t horizon = 0;
    std::size_t burn_in = 0;
    double threshold = 0.0;
    // liminf/limsup surrogates: extremes of the running average past burn-in
    double tail_min = 0.0;
    double tail_max = 0.0;
    bool historic = false;
    // subsampled running-average trace (n, S_n phi / n)
    std::vector<std::pair<std::size_t, double>> trace;
    // alternation surrogate for "infinitely often": counts of entries into
    // the low/high bands after visiting the opposite one
    double low_level = 0.0, high_level = 0.0;
    std::size_t low_visits = 0, high_visits = 0;

    double gap() const { return tail_max - tail_min; }
};

struct HistoricOptions {
    std::size_t burn_in = 0; // 0 means horizon / 10
    double threshold = 0.1;
    double low_level = 0.1;
    double high_level = 0.9;
    std::size_t trace_points = 4096;
};

// Core detector over a value stream phi(f^i x), i = 0..horizon-1.
HistoricReport detect_historic_stream(const std::function<double(std::size_t)>& phi_at,
                                      std::size_t horizon, const std::string& label,
                                      const HistoricOptions& opts = {});

HistoricReport detect_historic(const DynamicalSystem& sys, const Point& x,
                               const NamedObservable& phi, std::size_t horizon,
                               const HistoricOptions& opts = {});

// ---------------------------------------------------------------------------
// Limit-measure set V(x)
// ---------------------------------------------------------------------------

struct LimitSetEstimate {
    struct Candidate {
        AtomicMeasure measure;            // representative empirical measure
        std::size_t n = 0;                // the horizon it was taken at
        std::vector<double> integrals;    // basis integrals (the cluster key)
        std::size_t members = 0;          // how many grid horizons joined it
    };
    std::vector<Candidate> candidates;
    double cluster_radius = 0.0;
    std::vector<std::size_t> n_grid;
};

// Clusters the empirical measures E_n(x) over the n grid under metric D.
LimitSetEstimate estimate_limit_set(const DynamicalSystem& sys, const Point& x,
                                    const TestBasis& basis,
                                    const std::vector<std::size_t>& n_grid,
                                    double cluster_radius = 0.05,
                                    std::size_t atom_cap = 200000);

// True iff some candidate limit measure puts at least (1 - tolerance) of its
// mass within `radius` of the sampled block region.
bool n_membership_diagnostic(const DynamicalSystem& sys, const LimitSetEstimate& limits,
                             const std::vector<Point>& block_sample, double radius,
                             double tolerance);

} // namespace histent

#endif
