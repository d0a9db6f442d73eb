#include "histent/entropy.hpp"

#include "histent/util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <unordered_map>

namespace histent {

namespace {

// Smallest m with 2^{-m} < eps: on the shift, d(sigma^i x, sigma^i y) < eps
// for all i < n is exactly agreement on the first n - 1 + m symbols.
int cylinder_margin(double eps) {
    int m = 0;
    while (std::ldexp(1.0, -m) >= eps) {
        ++m;
        if (m > 62) throw std::invalid_argument("shift radius too small to resolve");
    }
    return m;
}

std::size_t shift_ball_depth(std::size_t n, double eps) {
    return n - 1 + static_cast<std::size_t>(cylinder_margin(eps));
}

bool is_shift(const DynamicalSystem& sys) { return sys.kind() == SystemKind::FullShift2; }

// Flattened orbit table for torus systems; pts[i * n + k] is f^k(x_i).
struct OrbitTable {
    std::vector<TorusPoint> pts;
    std::size_t n = 0;

    OrbitTable(const DynamicalSystem& sys, const std::vector<Point>& points, std::size_t n_)
        : n(n_) {
        pts.resize(points.size() * n);
        for (std::size_t i = 0; i < points.size(); ++i) {
            Point p = points[i];
            for (std::size_t k = 0; k < n; ++k) {
                pts[i * n + k] = std::get<TorusPoint>(p);
                if (k + 1 < n) p = sys.apply(p);
            }
        }
    }

    bool dn_less(std::size_t i, std::size_t j, double eps) const {
        for (std::size_t k = 0; k < n; ++k)
            if (torus_distance(pts[i * n + k], pts[j * n + k]) >= eps) return false;
        return true;
    }
};

// Packs the depth-d prefix into a key; callers must keep d <= 62.
std::uint64_t prefix_key(const SymbolicWord& w, std::size_t depth) {
    std::uint64_t key = 1; // leading 1 guards against depth aliasing
    for (std::size_t i = 0; i < depth; ++i) key = (key << 1) | w.at(i);
    return key;
}

// ---------------------------------------------------------------------------
// Greedy weighted max-coverage
// ---------------------------------------------------------------------------

struct CoverProblem {
    std::vector<std::vector<std::uint32_t>> adj; // candidate -> covered sample indices
    std::vector<double> weights;
    double total = 0.0;
};

CoverProblem build_cover_problem(const DynamicalSystem& sys, const std::vector<Point>& centers,
                                 const std::vector<Point>& sample, std::size_t n, double eps,
                                 const std::vector<double>& sample_weights) {
    CoverProblem prob;
    prob.adj.resize(centers.size());
    if (sample_weights.empty()) {
        prob.weights.assign(sample.size(), 1.0 / std::max<std::size_t>(1, sample.size()));
    } else {
        if (sample_weights.size() != sample.size())
            throw std::invalid_argument("sample weights size mismatch");
        prob.weights = sample_weights;
    }
    for (double w : prob.weights) prob.total += w;

    if (is_shift(sys)) {
        std::size_t depth = shift_ball_depth(n, eps);
        if (depth > 62)
            throw std::invalid_argument("shift cover: cylinder depth exceeds 62 symbols");
        std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
        buckets.reserve(sample.size());
        for (std::size_t j = 0; j < sample.size(); ++j)
            buckets[prefix_key(std::get<SymbolicWord>(sample[j]), depth)].push_back(
                static_cast<std::uint32_t>(j));
        for (std::size_t c = 0; c < centers.size(); ++c) {
            auto it = buckets.find(prefix_key(std::get<SymbolicWord>(centers[c]), depth));
            if (it != buckets.end()) prob.adj[c] = it->second;
        }
        return prob;
    }

    OrbitTable ct(sys, centers, n);
    OrbitTable st(sys, sample, n);
    for (std::size_t c = 0; c < centers.size(); ++c) {
        for (std::size_t j = 0; j < sample.size(); ++j) {
            bool inside = true;
            for (std::size_t k = 0; k < n; ++k) {
                if (torus_distance(ct.pts[c * n + k], st.pts[j * n + k]) >= eps) {
                    inside = false;
                    break;
                }
            }
            if (inside) prob.adj[c].push_back(static_cast<std::uint32_t>(j));
        }
    }
    return prob;
}

SpanningResult greedy_cover_run(const CoverProblem& prob, double mass_goal) {
    SpanningResult res;
    std::vector<char> covered(prob.weights.size(), 0);
    double covered_mass = 0.0;
    double goal = mass_goal * prob.total - 1e-12;

    // Lazy greedy: cached gains only ever shrink, so a stale heap entry that
    // still tops the heap after refresh is the true maximizer.
    std::priority_queue<std::pair<double, std::size_t>> heap;
    auto gain_of = [&](std::size_t c) {
        double g = 0.0;
        for (auto j : prob.adj[c])
            if (!covered[j]) g += prob.weights[j];
        return g;
    };
    for (std::size_t c = 0; c < prob.adj.size(); ++c) {
        double g = gain_of(c);
        if (g > 0.0) heap.push({g, c});
    }

    while (covered_mass < goal) {
        double best = 0.0;
        std::size_t best_c = 0;
        while (!heap.empty()) {
            auto [g, c] = heap.top();
            heap.pop();
            double fresh = gain_of(c);
            if (fresh <= 0.0) continue;
            if (heap.empty() || fresh >= heap.top().first - 1e-15) {
                best = fresh;
                best_c = c;
                break;
            }
            heap.push({fresh, c});
        }
        if (best <= 0.0) {
            for (std::size_t j = 0; j < covered.size(); ++j)
                if (!covered[j])
                    throw UncoverableError("min_spanning: sample point " + std::to_string(j) +
                                               " is not covered by any candidate ball",
                                           j);
            break;
        }
        res.centers.push_back(best_c);
        for (auto j : prob.adj[best_c]) {
            if (!covered[j]) {
                covered[j] = 1;
                covered_mass += prob.weights[j];
            }
        }
    }
    res.count = res.centers.size();
    res.covered_mass = covered_mass;
    return res;
}

} // namespace

// ---------------------------------------------------------------------------
// Basic operations
// ---------------------------------------------------------------------------

double bowen_distance(const DynamicalSystem& sys, const Point& x, const Point& y,
                      std::size_t n) {
    if (n < 1) throw std::invalid_argument("bowen_distance: n >= 1");
    double worst = 0.0;
    Point a = x, b = y;
    for (std::size_t i = 0; i < n; ++i) {
        worst = std::max(worst, sys.distance(a, b));
        if (i + 1 < n) {
            a = sys.apply(a);
            b = sys.apply(b);
        }
    }
    return worst;
}

bool bowen_ball_membership(const DynamicalSystem& sys, const BowenBallSpec& ball,
                           const Point& y) {
    if (ball.length < 1 || !(ball.radius > 0.0))
        throw std::invalid_argument("bowen ball: length >= 1 and radius > 0");
    Point a = ball.center, b = y;
    for (std::size_t i = 0; i < ball.length; ++i) {
        if (sys.distance(a, b) >= ball.radius) return false;
        if (i + 1 < ball.length) {
            a = sys.apply(a);
            b = sys.apply(b);
        }
    }
    return true;
}

std::vector<Point> torus_grid(int resolution) {
    if (resolution < 1) throw std::invalid_argument("torus_grid: resolution >= 1");
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(resolution) * resolution);
    double h = 1.0 / resolution;
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j)
            pts.push_back(TorusPoint{(i + 0.5) * h, (j + 0.5) * h});
    return pts;
}

std::vector<Point> shift_cylinder_representatives(std::size_t n) {
    if (n > 24) throw std::invalid_argument("cylinder enumeration capped at n = 24");
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(1) << n);
    for (std::uint64_t bits = 0; bits < (1ull << n); ++bits) {
        std::vector<std::uint8_t> pre(n);
        for (std::size_t i = 0; i < n; ++i) pre[i] = (bits >> (n - 1 - i)) & 1ull;
        pts.push_back(SymbolicWord::from_prefix(std::move(pre)));
    }
    return pts;
}

SeparatedResult max_separated(const DynamicalSystem& sys, const std::vector<Point>& points,
                              std::size_t n, double eps) {
    if (n < 1 || !(eps > 0.0)) throw std::invalid_argument("max_separated: n >= 1, eps > 0");
    SeparatedResult res;
    if (points.empty()) return res;

    if (is_shift(sys)) {
        // two words are (n,eps)-separated iff they disagree within the ball depth
        std::size_t depth = shift_ball_depth(n, eps);
        if (depth <= 62) {
            std::unordered_map<std::uint64_t, std::uint32_t> seen;
            for (std::size_t i = 0; i < points.size(); ++i) {
                auto key = prefix_key(std::get<SymbolicWord>(points[i]), depth);
                if (seen.emplace(key, static_cast<std::uint32_t>(i)).second)
                    res.kept.push_back(i);
            }
            res.count = res.kept.size();
            return res;
        }
    }

    OrbitTable table(sys, points, n);
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool ok = true;
        for (auto k : res.kept) {
            if (table.dn_less(i, k, eps)) {
                ok = false;
                break;
            }
        }
        if (ok) res.kept.push_back(i);
    }
    res.count = res.kept.size();
    return res;
}

SpanningResult min_spanning(const DynamicalSystem& sys, const std::vector<Point>& centers,
                            const std::vector<Point>& sample, std::size_t n, double eps,
                            const std::vector<double>& sample_weights, double mass_goal) {
    if (n < 1 || !(eps > 0.0)) throw std::invalid_argument("min_spanning: n >= 1, eps > 0");
    auto prob = build_cover_problem(sys, centers, sample, n, eps, sample_weights);
    return greedy_cover_run(prob, mass_goal);
}

// ---------------------------------------------------------------------------
// Lattice cover counts for the linear toral case
// ---------------------------------------------------------------------------

ToralCoverCounts toral_bowen_cover_counts(const CatMapSpec& spec, std::size_t n, double eps,
                                          double delta) {
    if (n < 1 || n > 700) throw std::invalid_argument("toral cover counts: 1 <= n <= 700");
    if (!(eps > 0.0 && eps <= 0.13))
        throw std::invalid_argument("toral cover counts: need 0 < eps <= 0.13 so Bowen balls "
                                    "are single lifted components");
    if (!(delta >= 0.0 && delta < 1.0))
        throw std::invalid_argument("toral cover counts: delta in [0,1)");

    double ll = spec.log_lambda;
    // Inscribed tile: half-widths (q lambda^{-(n-1)}, q) in the eigenframe sit
    // inside B_n(., eps) provided the worst corner stays under eps.
    double q = eps / std::sqrt(1.0 + std::exp(-2.0 * ll));
    for (std::size_t i = 0; i < std::min<std::size_t>(n, 64); ++i) {
        double du = q * std::exp(-ll * static_cast<double>(n - 1 - i));
        double ds = q * std::exp(-ll * static_cast<double>(i));
        if (du * du + ds * ds > eps * eps)
            throw std::logic_error("toral cover counts: inscribed tile certification failed");
    }

    // Extent of the unit square projected on each eigenaxis.
    double ext_u = std::fabs(spec.unstable.x) + std::fabs(spec.unstable.y);
    double ext_s = std::fabs(spec.stable.x) + std::fabs(spec.stable.y);

    auto log_cells = [](double log_ratio) {
        // log(ceil(e^r) + 1), computed stably for huge r
        if (log_ratio < 30.0) {
            double exact = std::ceil(std::exp(log_ratio)) + 1.0;
            return std::log(exact);
        }
        return log_ratio;
    };
    double log_ku = log_cells(std::log(ext_u / (2.0 * q)) + ll * static_cast<double>(n - 1));
    double log_ks = log_cells(std::log(ext_s / (2.0 * q)));

    ToralCoverCounts out;
    // The heaviest m cells of the full tiling carry mass >= m / count, so the
    // lightest delta fraction can be dropped without enumeration.
    double log_total = log_ku + log_ks;
    out.log_upper = log_total + std::log1p(-delta);
    if (log_total < 30.0) {
        double exact = std::ceil(std::exp(log_total) * (1.0 - delta));
        out.log_upper = std::log(std::max(1.0, exact));
    }

    // Outer bound: every Bowen ball fits in a 2 eps lambda^{-(n-1)} x 2 eps
    // rectangle, so at least (1 - delta) / area balls are needed.
    double log_area = std::log(4.0 * eps * eps) - ll * static_cast<double>(n - 1);
    double log_lo = std::log1p(-delta) - std::min(0.0, log_area);
    out.log_lower = std::max(0.0, log_lo);
    return out;
}

// ---------------------------------------------------------------------------
// Katok entropy
// ---------------------------------------------------------------------------

double WeightedSample::mass() const {
    if (weights.empty()) return 1.0;
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

EntropyEstimate katok_entropy(const DynamicalSystem& sys, const SampleProvider& sample,
                              const CenterProvider& centers, double eps, double delta,
                              const std::vector<std::size_t>& n_list,
                              const KatokEntropyOptions& opts) {
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("katok_entropy: delta must lie in (0,1)");
    if (n_list.size() < 2) throw std::invalid_argument("katok_entropy: need >= 2 lengths");
    if (!(eps > 0.0)) throw std::invalid_argument("katok_entropy: eps > 0");

    EntropyEstimate est;
    est.method = "katok";
    est.params = {{"eps", eps}, {"delta", delta}};

    std::vector<double> xs, ys;

    if (opts.backend == KatokEntropyOptions::Backend::ToralLattice) {
        if (sys.kind() != SystemKind::CatMap)
            throw std::invalid_argument("toral-lattice backend needs the linear toral system");
        est.backend = "toral-lattice";
        est.bias = "two-sided";
        const auto& spec = static_cast<const CatMap&>(sys).spec();
        for (auto n : n_list) {
            auto counts = toral_bowen_cover_counts(spec, n, eps, delta);
            est.log_counts.push_back({n, counts.log_upper});
            est.log_counts_lower.push_back({n, counts.log_lower});
            xs.push_back(static_cast<double>(n));
            ys.push_back(counts.log_upper);
        }
        est.value = ls_slope(xs, ys);
        std::vector<double> ylo;
        ylo.reserve(est.log_counts_lower.size());
        for (auto& [m, v] : est.log_counts_lower) {
            (void)m;
            ylo.push_back(v);
        }
        est.params["slope_lower"] = ls_slope(xs, ylo);
        return est;
    }

    est.backend = "greedy-sample";
    est.bias = "upper";
    std::size_t required = static_cast<std::size_t>(std::ceil(10.0 / delta));
    for (auto n : n_list) {
        WeightedSample s = sample(n);
        // Exact weighted samples resolve any delta; an empirical (uniform)
        // sample needs enough points to see the delta tail.
        if (s.weights.empty() && s.points.size() < required)
            throw SampleTooSmallError("katok_entropy: need at least " + std::to_string(required) +
                                          " sample points for delta=" + format_double(delta),
                                      required);
        std::vector<Point> cand = centers ? centers(n) : std::vector<Point>{};
        if (opts.add_sample_as_centers)
            cand.insert(cand.end(), s.points.begin(), s.points.end());
        auto cover = min_spanning(sys, cand, s.points, n, eps, s.weights, 1.0 - delta);
        double logN = std::log(static_cast<double>(std::max<std::size_t>(1, cover.count)));
        est.log_counts.push_back({n, logN});
        xs.push_back(static_cast<double>(n));
        ys.push_back(logN);

        if (opts.verify_chain && s.points.size() <= 5000 && cand.size() <= 10000) {
            auto sep = max_separated(sys, s.points, n, eps);
            auto full = min_spanning(sys, cand, s.points, n, eps, s.weights, 1.0);
            if (!(sep.count >= full.count && full.count >= cover.count))
                throw std::logic_error("katok_entropy: P >= Q >= N chain violated at n=" +
                                       std::to_string(n));
            est.params["P_n" + std::to_string(n)] = static_cast<double>(sep.count);
            est.params["Q_n" + std::to_string(n)] = static_cast<double>(full.count);
        }
    }
    est.value = ls_slope(xs, ys);
    return est;
}

EntropyEstimate katok_entropy(const DynamicalSystem& sys, const WeightedSample& sample,
                              const std::vector<Point>& centers, double eps, double delta,
                              const std::vector<std::size_t>& n_list,
                              const KatokEntropyOptions& opts) {
    return katok_entropy(
        sys, [&](std::size_t) { return sample; }, [&](std::size_t) { return centers; }, eps,
        delta, n_list, opts);
}

// ---------------------------------------------------------------------------
// Bowen entropy of a set
// ---------------------------------------------------------------------------

double CoverCertificate::recompute_log_value() const {
    if (entries.empty()) return -std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> terms;
    for (const auto& e : entries) {
        double t = e.log_count - static_cast<double>(e.length) * s;
        terms.push_back(t);
        mx = std::max(mx, t);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - mx);
    return mx + std::log(acc);
}

namespace {

// Exact infimum of sum e^{-ns} over cylinder covers of the sampled words,
// depths constrained to [d_min, d_max]; dynamic program over the prefix trie.
struct CylinderTrie {
    struct Node {
        std::int32_t child[2] = {-1, -1};
    };
    std::vector<Node> nodes;
    std::size_t d_min, d_max;
    int margin;

    CylinderTrie(const std::vector<Point>& sample, std::size_t n_min, std::size_t n_max,
                 double eps)
        : d_min(shift_ball_depth(n_min, eps)), d_max(shift_ball_depth(n_max, eps)),
          margin(cylinder_margin(eps)) {
        nodes.push_back({});
        for (const auto& p : sample) {
            const auto& w = std::get<SymbolicWord>(p);
            std::size_t cur = 0;
            for (std::size_t d = 0; d < d_max; ++d) {
                int b = w.at(d);
                if (nodes[cur].child[b] < 0) {
                    nodes[cur].child[b] = static_cast<std::int32_t>(nodes.size());
                    nodes.push_back({});
                }
                cur = static_cast<std::size_t>(nodes[cur].child[b]);
            }
        }
    }

    std::size_t length_for_depth(std::size_t d) const {
        return d + 1 - static_cast<std::size_t>(margin);
    }

    // log cost of covering the subtree rooted at node (at depth d)
    double solve(std::size_t node, std::size_t d, double s,
                 std::vector<std::size_t>* chosen_lengths) const {
        double buy = (d >= d_min) ? -s * static_cast<double>(length_for_depth(d))
                                  : std::numeric_limits<double>::infinity();
        if (d >= d_max) {
            if (chosen_lengths) chosen_lengths->push_back(length_for_depth(d));
            return buy;
        }
        double split = 0.0;
        bool has_child = false;
        std::vector<std::size_t> sub;
        for (int b = 0; b < 2; ++b) {
            if (nodes[node].child[b] >= 0) {
                has_child = true;
                double c = solve(static_cast<std::size_t>(nodes[node].child[b]), d + 1, s,
                                 chosen_lengths ? &sub : nullptr);
                split += std::exp(c);
            }
        }
        if (!has_child) {
            // a sampled word's subtree is a single line; buying here is optimal
            if (chosen_lengths && std::isfinite(buy))
                chosen_lengths->push_back(length_for_depth(d));
            return buy;
        }
        double log_split = std::log(split);
        if (log_split <= buy) {
            if (chosen_lengths)
                chosen_lengths->insert(chosen_lengths->end(), sub.begin(), sub.end());
            return log_split;
        }
        if (chosen_lengths) chosen_lengths->push_back(length_for_depth(d));
        return buy;
    }
};

double bisect_crossover(const std::function<double(double)>& log_value, double tol) {
    double lo = 0.0;
    double hi = 1.0;
    if (log_value(lo) < 0.0) return 0.0;
    while (log_value(hi) > 0.0) {
        hi *= 2.0;
        if (hi > 64.0) throw std::logic_error("bowen entropy: no crossover below s = 64");
    }
    while (hi - lo > tol) {
        double mid = 0.5 * (lo + hi);
        if (log_value(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

BowenSetEntropyResult bowen_set_entropy(const DynamicalSystem& sys,
                                        const std::vector<Point>& z_sample, double eps,
                                        std::size_t N, const BowenSetEntropyOptions& opts) {
    if (N < 1 || !(eps > 0.0)) throw std::invalid_argument("bowen_set_entropy: N >= 1, eps > 0");
    auto backend = opts.backend;
    if (backend == BowenSetEntropyOptions::Backend::Auto) {
        if (is_shift(sys))
            backend = BowenSetEntropyOptions::Backend::CylinderTrie;
        else if (sys.kind() == SystemKind::CatMap && z_sample.empty())
            backend = BowenSetEntropyOptions::Backend::ToralLattice;
        else
            backend = BowenSetEntropyOptions::Backend::GreedyExplicit;
    }

    BowenSetEntropyResult out;
    out.estimate.method = "bowen-cover";
    out.estimate.bias = "upper";
    out.estimate.params = {{"eps", eps}, {"N", static_cast<double>(N)}};

    if (backend == BowenSetEntropyOptions::Backend::ToralLattice) {
        if (sys.kind() != SystemKind::CatMap)
            throw std::invalid_argument("toral-lattice backend needs the linear toral system");
        const auto& spec = static_cast<const CatMap&>(sys).spec();
        std::size_t n_hi = std::max<std::size_t>(N + 1, opts.lattice_max_length);
        out.estimate.backend = "toral-lattice";
        auto log_m = [&](double s) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t n = N; n <= n_hi; ++n) {
                auto c = toral_bowen_cover_counts(spec, n, eps, 0.0);
                best = std::min(best, c.log_upper - s * static_cast<double>(n));
            }
            return best;
        };
        double s_star = bisect_crossover(log_m, opts.bisect_tol);
        out.estimate.value = s_star;
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_n = N;
        double best_count = 0.0;
        for (std::size_t n = N; n <= n_hi; ++n) {
            auto c = toral_bowen_cover_counts(spec, n, eps, 0.0);
            double v = c.log_upper - s_star * static_cast<double>(n);
            if (v < best) {
                best = v;
                best_n = n;
                best_count = c.log_upper;
            }
        }
        out.certificate.entries.push_back({best_n, best_count, std::nullopt});
        out.certificate.s = s_star;
        out.certificate.log_value = best;
        out.certificate.explicit_cover = false;
        out.estimate.log_counts.push_back({best_n, best_count});
        return out;
    }

    if (z_sample.empty()) throw std::invalid_argument("bowen_set_entropy: empty sample");

    if (backend == BowenSetEntropyOptions::Backend::CylinderTrie) {
        if (!is_shift(sys))
            throw std::invalid_argument("cylinder-trie backend needs the full shift");
        CylinderTrie trie(z_sample, N, N + opts.length_window, eps);
        out.estimate.backend = "cylinder-trie";
        auto log_m = [&](double s) { return trie.solve(0, 0, s, nullptr); };
        double s_star = bisect_crossover(log_m, opts.bisect_tol);
        out.estimate.value = s_star;
        std::vector<std::size_t> chosen;
        out.certificate.log_value = trie.solve(0, 0, s_star, &chosen);
        out.certificate.s = s_star;
        out.certificate.explicit_cover = true;
        std::map<std::size_t, double> per_len;
        for (auto len : chosen) per_len[len] += 1.0;
        for (auto& [len, cnt] : per_len) {
            out.certificate.entries.push_back({len, std::log(cnt), std::nullopt});
            out.estimate.log_counts.push_back({len, std::log(cnt)});
        }
        return out;
    }

    // explicit greedy covers over candidate centers
    out.estimate.backend = "greedy-sample";
    std::vector<Point> centers = z_sample;
    centers.insert(centers.end(), opts.extra_centers.begin(), opts.extra_centers.end());
    std::size_t n_hi = N + opts.length_window;
    std::vector<CoverProblem> probs;
    for (std::size_t n = N; n <= n_hi; ++n)
        probs.push_back(build_cover_problem(sys, centers, z_sample, n, eps, {}));

    auto cover_at = [&](double s, CoverCertificate* cert) {
        // one greedy pass over (center, length) items, gain measured per cost
        std::vector<char> covered(z_sample.size(), 0);
        std::size_t left = z_sample.size();
        double value = 0.0;
        std::vector<std::pair<std::size_t, std::size_t>> picked; // (length idx, center)
        while (left > 0) {
            double best_ratio = -1.0;
            std::size_t bl = 0, bc = 0;
            for (std::size_t li = 0; li < probs.size(); ++li) {
                double cost = std::exp(-s * static_cast<double>(N + li));
                for (std::size_t c = 0; c < centers.size(); ++c) {
                    std::size_t g = 0;
                    for (auto j : probs[li].adj[c])
                        if (!covered[j]) ++g;
                    if (g == 0) continue;
                    double ratio = static_cast<double>(g) / cost;
                    if (ratio > best_ratio) {
                        best_ratio = ratio;
                        bl = li;
                        bc = c;
                    }
                }
            }
            if (best_ratio <= 0.0)
                throw UncoverableError("bowen_set_entropy: uncoverable sample point", 0);
            for (auto j : probs[bl].adj[bc])
                if (!covered[j]) {
                    covered[j] = 1;
                    --left;
                }
            value += std::exp(-s * static_cast<double>(N + bl));
            picked.push_back({bl, bc});
        }
        if (cert) {
            std::map<std::size_t, std::pair<double, std::optional<Point>>> per_len;
            for (auto& [li, c] : picked) {
                auto& slot = per_len[N + li];
                slot.first += 1.0;
                if (!slot.second) slot.second = centers[c];
            }
            for (auto& [len, info] : per_len)
                cert->entries.push_back({len, std::log(info.first), info.second});
        }
        return std::log(value);
    };

    double s_star =
        bisect_crossover([&](double s) { return cover_at(s, nullptr); }, opts.bisect_tol);
    out.estimate.value = s_star;
    out.certificate.s = s_star;
    out.certificate.explicit_cover = true;
    out.certificate.log_value = cover_at(s_star, &out.certificate);
    for (const auto& e : out.certificate.entries)
        out.estimate.log_counts.push_back({e.length, e.log_count});
    return out;
}

// ---------------------------------------------------------------------------
// Entropy distribution principle
// ---------------------------------------------------------------------------

EdpResult edp_certify(const DynamicalSystem& sys, const std::vector<AtomicMeasure>& alphas,
                      const std::vector<Point>& z_sample, double eps, double s, double K,
                      std::size_t N, std::size_t n_max) {
    if (alphas.empty()) throw std::invalid_argument("edp_certify: empty measure sequence");
    if (z_sample.empty()) throw std::invalid_argument("edp_certify: empty sample");
    if (N < 1 || n_max < N) throw std::invalid_argument("edp_certify: need 1 <= N <= n_max");
    if (!(K > 0.0)) throw std::invalid_argument("edp_certify: K > 0");
    for (const auto& a : alphas)
        if (std::fabs(a.total_mass() - 1.0) > 1e-9)
            throw std::invalid_argument("edp_certify: measure " + a.label() + " not normalized");

    EdpResult res;
    res.n_min = N;
    res.n_max = n_max;

    if (is_shift(sys)) {
        for (std::size_t n = N; n <= n_max; ++n) {
            std::size_t depth = shift_ball_depth(n, eps);
            if (depth > 62) throw std::invalid_argument("edp_certify: cylinder depth too deep");
            std::unordered_map<std::uint64_t, char> met;
            for (const auto& p : z_sample)
                met[prefix_key(std::get<SymbolicWord>(p), depth)] = 1;
            double bound = K * std::exp(-s * static_cast<double>(n));
            for (const auto& alpha : alphas) {
                std::unordered_map<std::uint64_t, double> mass;
                for (const auto& atom : alpha.atoms()) {
                    auto key = prefix_key(std::get<SymbolicWord>(atom.point), depth);
                    if (met.count(key)) mass[key] += atom.weight;
                }
                for (auto& [key, m] : mass) {
                    (void)key;
                    res.worst_ratio = std::max(res.worst_ratio, m / bound);
                    ++res.balls_tested;
                }
            }
        }
        res.certified = res.worst_ratio <= 1.0;
        return res;
    }

    // generic path: balls centered at the sample points
    for (std::size_t n = N; n <= n_max; ++n) {
        double bound = K * std::exp(-s * static_cast<double>(n));
        for (const auto& z : z_sample) {
            BowenBallSpec ball{z, n, eps};
            for (const auto& alpha : alphas) {
                double m = 0.0;
                for (const auto& atom : alpha.atoms())
                    if (bowen_ball_membership(sys, ball, atom.point)) m += atom.weight;
                res.worst_ratio = std::max(res.worst_ratio, m / bound);
                ++res.balls_tested;
            }
        }
    }
    res.certified = res.worst_ratio <= 1.0;
    return res;
}

} // namespace histent
