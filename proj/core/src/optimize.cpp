#include "lambda1/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace lambda1 {

namespace {

std::uint64_t support_signature(const std::vector<std::uint8_t>& cells) {
    std::uint64_t hash = 1469598103934665603ULL;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        if (!cells[k]) continue;
        std::uint64_t v = static_cast<std::uint64_t>(k);
        for (int b = 0; b < 8; ++b) {
            hash ^= (v >> (8 * b)) & 0xffULL;
            hash *= 1099511628211ULL;
        }
    }
    return hash;
}

bool is_boundary_cell(const GridDomain& d, const std::vector<std::uint8_t>& cells, int idx) {
    int i = idx % d.nx;
    int j = idx / d.nx;
    const int di[4] = {1, -1, 0, 0};
    const int dj[4] = {0, 0, 1, -1};
    for (int m = 0; m < 4; ++m) {
        int ii = i + di[m];
        int jj = j + dj[m];
        if (!d.in_grid(ii, jj)) return true;
        if (!cells[static_cast<std::size_t>(d.index(ii, jj))]) return true;
    }
    return false;
}

bool has_support_neighbour(const GridDomain& d, const std::vector<std::uint8_t>& cells, int idx) {
    int i = idx % d.nx;
    int j = idx / d.nx;
    const int di[4] = {1, -1, 0, 0};
    const int dj[4] = {0, 0, 1, -1};
    for (int m = 0; m < 4; ++m) {
        int ii = i + di[m];
        int jj = j + dj[m];
        if (d.in_grid(ii, jj) && cells[static_cast<std::size_t>(d.index(ii, jj))]) return true;
    }
    return false;
}

int count_cells(const std::vector<std::uint8_t>& cells) {
    int n = 0;
    for (std::uint8_t c : cells) n += c != 0;
    return n;
}

/// Exact-volume projection onto {0 <= phi <= 1, sum phi h^2 = a} by
/// scalar-shift bisection with clipping.
void project_density(const GridDomain& d, Field& phi, double a) {
    const double h2 = d.h * d.h;
    double lo = -2.0, hi = 2.0;
    for (double v : phi) {
        lo = std::min(lo, -v - 1.0);
        hi = std::max(hi, 1.0 - v + 1.0);
    }
    auto mass = [&](double c) {
        double s = 0.0;
        for (int idx = 0; idx < d.size(); ++idx) {
            if (!d.admissible(idx)) continue;
            s += std::clamp(phi[static_cast<std::size_t>(idx)] + c, 0.0, 1.0);
        }
        return s * h2;
    };
    for (int it = 0; it < 100; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mass(mid) < a) lo = mid; else hi = mid;
    }
    double c = 0.5 * (lo + hi);
    for (int idx = 0; idx < d.size(); ++idx) {
        phi[static_cast<std::size_t>(idx)] =
            d.admissible(idx) ? std::clamp(phi[static_cast<std::size_t>(idx)] + c, 0.0, 1.0) : 0.0;
    }
}

struct FlipSearch {
    const GridDomain& d;
    double lambda_penalty;
    std::vector<std::uint8_t> cells;
    int count;
    Field warm_u;
    double lambda_cur = 0.0;
    std::unordered_map<std::uint64_t, double> cold_cache;

    FlipSearch(const GridDomain& dom, double pen, const Support& initial)
        : d(dom), lambda_penalty(pen), cells(initial.cells), count(initial.cell_count) {}

    double objective() const { return lambda_cur + lambda_penalty * volume(); }
    double volume() const { return static_cast<double>(count) * d.h * d.h; }

    double eval_lambda(const std::vector<std::uint8_t>& cand, bool cold, Field* u_out) {
        if (cold) {
            std::uint64_t sig = support_signature(cand);
            auto it = cold_cache.find(sig);
            if (it != cold_cache.end() && !u_out) return it->second;
            Support s = make_support(d, cand);
            SpectralResult r = smallest_eigenpair(d, s);
            cold_cache[sig] = r.lambda;
            if (u_out) *u_out = std::move(r.u);
            return r.lambda;
        }
        Support s = make_support(d, cand);
        EigOptions opts;
        opts.warm_start = warm_u.empty() ? nullptr : &warm_u;
        SpectralResult r = smallest_eigenpair(d, s, opts);
        if (u_out) *u_out = std::move(r.u);
        return r.lambda;
    }

    /// One pass over the cells that are boundary-adjacent at sweep start,
    /// row-major, applying strictly improving flips immediately.
    /// Returns the number of accepted flips.
    int sweep(bool cold) {
        std::vector<int> candidates;
        for (int idx = 0; idx < d.size(); ++idx) {
            bool in = cells[static_cast<std::size_t>(idx)] != 0;
            if (in && is_boundary_cell(d, cells, idx)) {
                candidates.push_back(idx);
            } else if (!in && d.admissible(idx) && has_support_neighbour(d, cells, idx)) {
                candidates.push_back(idx);
            }
        }
        int accepted = 0;
        for (int idx : candidates) {
            bool in = cells[static_cast<std::size_t>(idx)] != 0;
            if (in && count == 1) continue;
            std::vector<std::uint8_t> cand = cells;
            cand[static_cast<std::size_t>(idx)] = in ? 0 : 1;
            int cand_count = count + (in ? -1 : 1);
            Field u_new;
            double lam = eval_lambda(cand, cold, &u_new);
            double f_new = lam + lambda_penalty * static_cast<double>(cand_count) * d.h * d.h;
            double f_cur = objective();
            if (f_cur - f_new > 1e-12 * std::abs(f_cur)) {
                cells = std::move(cand);
                count = cand_count;
                lambda_cur = lam;
                warm_u = std::move(u_new);
                ++accepted;
            }
        }
        return accepted;
    }
};

std::uint64_t binomial_saturated(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    const std::uint64_t cap = 1ULL << 62;
    unsigned __int128 r = 1;
    for (int i = 1; i <= k; ++i) {
        r = r * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
        if (r > cap) return cap;
    }
    return static_cast<std::uint64_t>(r);
}

bool cells_connected(const GridDomain& d, const std::vector<int>& idxs) {
    if (idxs.empty()) return false;
    std::unordered_map<int, int> pos;
    for (std::size_t k = 0; k < idxs.size(); ++k) pos[idxs[k]] = static_cast<int>(k);
    std::vector<std::uint8_t> seen(idxs.size(), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int reached = 1;
    const int d4[4] = {1, -1, 0, 0};
    const int d4j[4] = {0, 0, 1, -1};
    while (!stack.empty()) {
        int k = stack.back();
        stack.pop_back();
        int idx = idxs[static_cast<std::size_t>(k)];
        int i = idx % d.nx;
        int j = idx / d.nx;
        for (int m = 0; m < 4; ++m) {
            int ii = i + d4[m];
            int jj = j + d4j[m];
            if (!d.in_grid(ii, jj)) continue;
            auto it = pos.find(d.index(ii, jj));
            if (it != pos.end() && !seen[static_cast<std::size_t>(it->second)]) {
                seen[static_cast<std::size_t>(it->second)] = 1;
                stack.push_back(it->second);
                ++reached;
            }
        }
    }
    return reached == static_cast<int>(idxs.size());
}

} // namespace

double auto_stiffness(const GridDomain& domain) {
    return 1e4 * support_lambda1(domain, full_support(domain), 1e-8);
}

DensityField relaxed_descent(const GridDomain& d, double a, double c_pen,
                             const RelaxOptions& opts) {
    if (!(a > 0.0) || a > d.total_volume() * (1.0 + 1e-12)) {
        throw Error("target volume out of range (0, |D|]");
    }
    if (!(c_pen > 0.0)) throw Error("stiffness must be positive");

    DensityField density;
    density.domain = &d;
    density.target_volume = a;
    density.stiffness = c_pen;
    density.phi.assign(d.mask.size(), 0.0);
    double uniform = a / d.total_volume();
    for (int idx = 0; idx < d.size(); ++idx) {
        if (d.admissible(idx)) density.phi[static_cast<std::size_t>(idx)] = uniform;
    }
    project_density(d, density.phi, a);

    EigOptions eopts;
    eopts.tol = opts.eig_tol;
    eopts.seed = opts.seed;
    SpectralResult cur = penalized_smallest_eigenpair(d, density.phi, c_pen, eopts);
    std::vector<double> lambda_trace{cur.lambda};

    for (int step = 1; step <= opts.steps; ++step) {
        Field g(d.mask.size(), 0.0);
        double gmax = 0.0;
        for (int idx = 0; idx < d.size(); ++idx) {
            if (!d.admissible(idx)) continue;
            double v = cur.u[static_cast<std::size_t>(idx)];
            g[static_cast<std::size_t>(idx)] = c_pen * v * v;
            gmax = std::max(gmax, g[static_cast<std::size_t>(idx)]);
        }
        if (gmax == 0.0) break;
        double s = 0.1 * a / gmax;
        bool accepted = false;
        for (int bt = 0; bt < 20; ++bt) {
            Field trial = density.phi;
            for (int idx = 0; idx < d.size(); ++idx) {
                trial[static_cast<std::size_t>(idx)] += s * g[static_cast<std::size_t>(idx)];
            }
            project_density(d, trial, a);
            eopts.warm_start = &cur.u;
            SpectralResult next = penalized_smallest_eigenpair(d, trial, c_pen, eopts);
            if (next.lambda < cur.lambda) {
                density.phi = std::move(trial);
                cur = std::move(next);
                lambda_trace.push_back(cur.lambda);
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if (!accepted) break; // 20 backtracks: stall
        std::size_t n = lambda_trace.size();
        if (n > 10 &&
            std::abs(lambda_trace[n - 11] - lambda_trace[n - 1]) < opts.stall_tol * lambda_trace[n - 1]) {
            break;
        }
    }
    return density;
}

Support threshold(const DensityField& density) {
    const GridDomain& d = *density.domain;
    const double h2 = d.h * d.h;
    std::vector<std::pair<double, int>> vals; // (phi, idx), phi > 0
    for (int idx = 0; idx < d.size(); ++idx) {
        double v = density.phi[static_cast<std::size_t>(idx)];
        if (d.admissible(idx) && v > 0.0) vals.emplace_back(v, idx);
    }
    std::sort(vals.begin(), vals.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::uint8_t> cells(d.mask.size(), 0);
    std::size_t k = 0;
    std::size_t taken = 0;
    while (k < vals.size()) {
        // include the whole tied group at this level
        double level = vals[k].first;
        std::size_t k2 = k;
        while (k2 < vals.size() && vals[k2].first == level) {
            cells[static_cast<std::size_t>(vals[k2].second)] = 1;
            ++k2;
        }
        taken = k2;
        if (static_cast<double>(taken) * h2 >= density.target_volume * (1.0 - 1e-12)) break;
        k = k2;
    }
    return make_support(d, std::move(cells));
}

OptimizeResult penalized_local_search(const GridDomain& d, double lambda_penalty,
                                      const Support& initial, int sweep_limit) {
    if (!(lambda_penalty > 0.0)) throw Error("penalty must be positive");
    if (initial.cell_count == 0) throw Error("empty support");

    FlipSearch search(d, lambda_penalty, initial);
    search.lambda_cur = search.eval_lambda(search.cells, true, &search.warm_u);

    OptimizeResult result;
    result.lambda_penalty = lambda_penalty;
    result.history.push_back({0, search.lambda_cur, search.volume(), search.objective()});

    int sweeps = 0;
    bool verified = false;
    while (sweeps < sweep_limit) {
        ++sweeps;
        bool cold = false;
        int accepted = search.sweep(false);
        if (accepted == 0) {
            // confirm local optimality with cold deterministic solves,
            // re-baselining the current objective the same way
            cold = true;
            search.lambda_cur = search.eval_lambda(search.cells, true, nullptr);
            accepted = search.sweep(true);
            verified = accepted == 0;
        }
        result.history.push_back({sweeps, search.lambda_cur, search.volume(), search.objective()});
        if (cold && accepted == 0) break;
    }
    (void)verified;

    result.support = make_support(d, search.cells);
    result.spectral = smallest_eigenpair(d, result.support);
    return result;
}

OptimizeResult lambda_volume_search(const GridDomain& d, double a,
                                    std::pair<double, double> bracket, double tol_vol) {
    if (!(a > 0.0) || !(a < d.total_volume())) throw Error("target volume out of range (0, |D|)");
    if (!(bracket.first > 0.0) || !(bracket.second > bracket.first)) {
        throw Error("bracket does not straddle: bad or reversed bracket");
    }
    const double h2 = d.h * d.h;

    // seed from a short relaxed run
    RelaxOptions ropts;
    ropts.steps = 80;
    DensityField phi = relaxed_descent(d, a, auto_stiffness(d), ropts);
    Support seed = threshold(phi);

    const int sweep_limit = 50;
    struct Trial {
        double lambda_penalty;
        OptimizeResult result;
    };
    std::vector<HistoryRow> history;
    Support best_support = seed;
    double best_gap = std::numeric_limits<double>::infinity();
    double best_pen = bracket.first;
    SpectralResult best_spec;

    auto evaluate = [&](double pen, int iter) {
        OptimizeResult r = penalized_local_search(d, pen, best_support, sweep_limit);
        double vol = r.support.volume;
        history.push_back({iter, r.spectral.lambda, vol, r.spectral.lambda + pen * vol});
        double gap = std::abs(vol - a);
        if (gap < best_gap) {
            best_gap = gap;
            best_support = r.support;
            best_pen = pen;
            best_spec = r.spectral;
        }
        return vol;
    };

    if (tol_vol <= 0.0) {
        int boundary_cells = 0;
        for (int idx = 0; idx < d.size(); ++idx) {
            if (seed.contains(idx) && is_boundary_cell(d, seed.cells, idx)) ++boundary_cells;
        }
        tol_vol = h2 * std::max(4.0, static_cast<double>(boundary_cells) / 10.0);
    }

    double lo = bracket.first, hi = bracket.second;
    int iter = 0;
    double v_lo = evaluate(lo, iter++);
    double v_hi = std::numeric_limits<double>::quiet_NaN();
    if (std::abs(v_lo - a) > tol_vol) {
        v_hi = evaluate(hi, iter++);
        if (v_lo < a - tol_vol || v_hi > a + tol_vol) {
            throw Error("bracket does not straddle target volume: vol(lo)=" +
                        std::to_string(v_lo) + " vol(hi)=" + std::to_string(v_hi) +
                        " a=" + std::to_string(a));
        }
        const double width0 = hi - lo;
        while (best_gap > tol_vol && (hi - lo) > 1e-6 * width0) {
            double mid = std::sqrt(lo * hi); // bisection in log scale; penalties are positive
            double v = evaluate(mid, iter++);
            if (v >= a) lo = mid; else hi = mid;
        }
    }

    // exact cell-count repair toward the target volume
    long long n_target = std::llround(a / h2);
    n_target = std::clamp<long long>(n_target, 1, d.admissible_count);
    std::vector<std::uint8_t> cells = best_support.cells;
    int count = count_cells(cells);
    if (best_spec.u.empty()) {
        best_spec = smallest_eigenpair(d, make_support(d, cells));
    }
    const Field& u = best_spec.u;
    while (count > n_target) {
        int pick = -1;
        double pick_val = std::numeric_limits<double>::infinity();
        for (int idx = 0; idx < d.size(); ++idx) {
            if (!cells[static_cast<std::size_t>(idx)]) continue;
            if (!is_boundary_cell(d, cells, idx)) continue;
            double v = u[static_cast<std::size_t>(idx)];
            if (v < pick_val) {
                pick_val = v;
                pick = idx;
            }
        }
        if (pick < 0) break;
        cells[static_cast<std::size_t>(pick)] = 0;
        --count;
    }
    while (count < n_target) {
        int pick = -1;
        double pick_val = -1.0;
        for (int idx = 0; idx < d.size(); ++idx) {
            if (cells[static_cast<std::size_t>(idx)] || !d.admissible(idx)) continue;
            if (!has_support_neighbour(d, cells, idx)) continue;
            double s = 0.0;
            int i = idx % d.nx, j = idx / d.nx;
            const int di[4] = {1, -1, 0, 0};
            const int dj[4] = {0, 0, 1, -1};
            for (int m = 0; m < 4; ++m) {
                int ii = i + di[m], jj = j + dj[m];
                if (d.in_grid(ii, jj) && cells[static_cast<std::size_t>(d.index(ii, jj))]) {
                    s += u[static_cast<std::size_t>(d.index(ii, jj))];
                }
            }
            if (s > pick_val) {
                pick_val = s;
                pick = idx;
            }
        }
        if (pick < 0) break;
        cells[static_cast<std::size_t>(pick)] = 1;
        ++count;
    }

    OptimizeResult result;
    result.lambda_penalty = best_pen;
    result.support = make_support(d, std::move(cells));
    result.spectral = smallest_eigenpair(d, result.support);

    // swap polish at fixed count; affordable on desk-size grids only
    if (d.admissible_count <= 100) {
        std::unordered_map<std::uint64_t, double> cache;
        auto cold_lambda = [&](const std::vector<std::uint8_t>& c) {
            std::uint64_t sig = support_signature(c);
            auto it = cache.find(sig);
            if (it != cache.end()) return it->second;
            double lam = smallest_eigenpair(d, make_support(d, c)).lambda;
            cache[sig] = lam;
            return lam;
        };
        std::vector<std::uint8_t> cur = result.support.cells;
        double cur_lambda = result.spectral.lambda;
        bool improved = true;
        int guard = 0;
        while (improved && guard++ < 500) {
            improved = false;
            for (int out = 0; out < d.size() && !improved; ++out) {
                if (!cur[static_cast<std::size_t>(out)]) continue;
                for (int in = 0; in < d.size() && !improved; ++in) {
                    if (cur[static_cast<std::size_t>(in)] || !d.admissible(in)) continue;
                    std::vector<std::uint8_t> cand = cur;
                    cand[static_cast<std::size_t>(out)] = 0;
                    cand[static_cast<std::size_t>(in)] = 1;
                    double lam = cold_lambda(cand);
                    if (lam < cur_lambda * (1.0 - 1e-12)) {
                        cur = std::move(cand);
                        cur_lambda = lam;
                        improved = true;
                    }
                }
            }
        }
        result.support = make_support(d, std::move(cur));
        result.spectral = smallest_eigenpair(d, result.support);
    }

    history.push_back({iter, result.spectral.lambda, result.support.volume,
                       result.spectral.lambda + best_pen * result.support.volume});
    result.history = std::move(history);
    return result;
}

std::uint64_t brute_force_count(const GridDomain& d, int a_cells) {
    return binomial_saturated(d.admissible_count, a_cells);
}

OptimizeResult brute_force_optimal(const GridDomain& d, int a_cells, bool connected_only) {
    if (a_cells < 1 || a_cells > d.admissible_count) throw Error("a_cells out of range");
    std::uint64_t total = brute_force_count(d, a_cells);
    if (total > 10000000ULL) {
        throw Error("enumeration budget exceeded: " + std::to_string(total) + " supports");
    }
    std::vector<int> adm;
    for (int idx = 0; idx < d.size(); ++idx) {
        if (d.admissible(idx)) adm.push_back(idx);
    }
    const int n = static_cast<int>(adm.size());
    const int k = a_cells;
    std::vector<int> comb(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) comb[static_cast<std::size_t>(i)] = i;

    OptimizeResult result;
    double best_lambda = std::numeric_limits<double>::infinity();
    std::vector<int> idxs(static_cast<std::size_t>(k));
    bool done = false;
    while (!done) {
        for (int i = 0; i < k; ++i) idxs[static_cast<std::size_t>(i)] = adm[static_cast<std::size_t>(comb[static_cast<std::size_t>(i)])];
        bool eligible = !connected_only || cells_connected(d, idxs);
        if (eligible) {
            std::vector<std::uint8_t> cells(d.mask.size(), 0);
            for (int idx : idxs) cells[static_cast<std::size_t>(idx)] = 1;
            Support s = make_support(d, std::move(cells));
            SpectralResult r = dense_eigen_oracle(d, s);
            // lexicographic enumeration order: first strict improvement wins ties
            if (r.lambda < best_lambda * (1.0 - 1e-12)) {
                best_lambda = r.lambda;
                result.support = std::move(s);
                result.spectral = std::move(r);
            }
        }
        // next combination
        int i = k - 1;
        while (i >= 0 && comb[static_cast<std::size_t>(i)] == n - k + i) --i;
        if (i < 0) {
            done = true;
        } else {
            ++comb[static_cast<std::size_t>(i)];
            for (int m = i + 1; m < k; ++m) comb[static_cast<std::size_t>(m)] = comb[static_cast<std::size_t>(m - 1)] + 1;
        }
    }
    if (!std::isfinite(best_lambda)) throw Error("no eligible support");
    result.lambda_penalty = 0.0;
    result.history.push_back({0, result.spectral.lambda, result.support.volume, result.spectral.lambda});
    return result;
}

} // namespace lambda1
