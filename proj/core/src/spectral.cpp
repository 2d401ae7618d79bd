#include "lambda1/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "lambda1/rng.hpp"

namespace lambda1 {

namespace {

/// Matrix-free 5-point operator restricted to a cell subset, with an
/// optional extra diagonal (fictitious-domain reaction term).
struct CompactOperator {
    int n = 0;
    double inv_h2 = 0.0;
    double shift = 0.0;       ///< subtracted constant; add back to eigenvalues
    std::vector<int> cell;    ///< compact slot -> grid index
    std::vector<int> nbr;     ///< 4n entries, compact index or -1
    std::vector<double> diag; ///< extra diagonal, empty if none

    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        for (int k = 0; k < n; ++k) {
            double s = 4.0 * x[static_cast<std::size_t>(k)];
            const int* nb = &nbr[static_cast<std::size_t>(4 * k)];
            for (int m = 0; m < 4; ++m) {
                if (nb[m] >= 0) s -= x[static_cast<std::size_t>(nb[m])];
            }
            double v = s * inv_h2;
            if (!diag.empty()) v += diag[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(k)];
            y[static_cast<std::size_t>(k)] = v;
        }
    }
};

CompactOperator build_compact(const GridDomain& d, const std::vector<std::uint8_t>& ind,
                              const Field* phi, double c_pen) {
    CompactOperator op;
    op.inv_h2 = 1.0 / (d.h * d.h);
    std::vector<int> pos(ind.size(), -1);
    for (int j = 0; j < d.ny; ++j) {
        for (int i = 0; i < d.nx; ++i) {
            int idx = d.index(i, j);
            if (ind[static_cast<std::size_t>(idx)]) {
                pos[static_cast<std::size_t>(idx)] = op.n++;
                op.cell.push_back(idx);
            }
        }
    }
    op.nbr.assign(static_cast<std::size_t>(4 * op.n), -1);
    const int di[4] = {1, -1, 0, 0};
    const int dj[4] = {0, 0, 1, -1};
    for (int k = 0; k < op.n; ++k) {
        int idx = op.cell[static_cast<std::size_t>(k)];
        int i = idx % d.nx;
        int j = idx / d.nx;
        for (int m = 0; m < 4; ++m) {
            int ii = i + di[m];
            int jj = j + dj[m];
            if (ii < 0 || ii >= d.nx || jj < 0 || jj >= d.ny) continue;
            op.nbr[static_cast<std::size_t>(4 * k + m)] = pos[static_cast<std::size_t>(d.index(ii, jj))];
        }
    }
    if (phi) {
        op.diag.resize(static_cast<std::size_t>(op.n));
        double dmin = std::numeric_limits<double>::infinity();
        for (int k = 0; k < op.n; ++k) {
            double v = c_pen * (1.0 - (*phi)[static_cast<std::size_t>(op.cell[static_cast<std::size_t>(k)])]);
            op.diag[static_cast<std::size_t>(k)] = v;
            dmin = std::min(dmin, v);
        }
        // remove the constant part of the reaction term: a near-uniform
        // density otherwise pushes the whole spectrum up by ~c_pen and
        // kills the eigenvalue gap ratio the power iteration relies on
        if (dmin > 0.0) {
            op.shift = dmin;
            for (double& v : op.diag) v -= dmin;
        }
    }
    return op;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

/// CG for the SPD compact operator. Returns achieved relative residual.
double cg_solve(const CompactOperator& op, const std::vector<double>& b,
                std::vector<double>& x, double rel_tol, int max_iter) {
    const int n = op.n;
    std::vector<double> r(static_cast<std::size_t>(n)), p, ap(static_cast<std::size_t>(n));
    op.apply(x, ap);
    for (int k = 0; k < n; ++k) r[static_cast<std::size_t>(k)] = b[static_cast<std::size_t>(k)] - ap[static_cast<std::size_t>(k)];
    double bnorm = std::sqrt(dot(b, b));
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        return 0.0;
    }
    double rr = dot(r, r);
    double target = rel_tol * bnorm;
    if (std::sqrt(rr) <= target) return std::sqrt(rr) / bnorm;
    p = r;
    for (int it = 0; it < max_iter; ++it) {
        op.apply(p, ap);
        double pap = dot(p, ap);
        if (pap <= 0.0) break; // loss of positivity: bail with current iterate
        double alpha = rr / pap;
        for (int k = 0; k < n; ++k) {
            x[static_cast<std::size_t>(k)] += alpha * p[static_cast<std::size_t>(k)];
            r[static_cast<std::size_t>(k)] -= alpha * ap[static_cast<std::size_t>(k)];
        }
        double rr_new = dot(r, r);
        if (std::sqrt(rr_new) <= target) return std::sqrt(rr_new) / bnorm;
        double beta = rr_new / rr;
        rr = rr_new;
        for (int k = 0; k < n; ++k) {
            p[static_cast<std::size_t>(k)] = r[static_cast<std::size_t>(k)] + beta * p[static_cast<std::size_t>(k)];
        }
    }
    return std::sqrt(rr) / bnorm;
}

struct EigPair {
    double lambda = 0.0;
    std::vector<double> u; ///< compact, h-weighted L2 normalized
    double residual = 0.0;
    int iterations = 0;
};

/// Inverse power iteration with zero shift. The inner CG tolerance starts
/// at 1e-2 and tightens with the outer eigenresidual so the final residual
/// can reach `tol` (a fixed loose inner tolerance would floor it).
EigPair inverse_power(const CompactOperator& op, double h, const EigOptions& opts,
                      const std::vector<double>* warm) {
    const int n = op.n;
    EigPair best;
    best.residual = std::numeric_limits<double>::infinity();

    std::vector<double> x(static_cast<std::size_t>(n), 1.0);
    if (warm && !warm->empty()) {
        double s = 0.0;
        for (double v : *warm) s += std::abs(v);
        if (s > 0.0) x = *warm;
    }
    auto normalize = [&](std::vector<double>& v) {
        double nrm = h * std::sqrt(dot(v, v));
        if (nrm == 0.0) return false;
        for (double& e : v) e /= nrm;
        return true;
    };
    if (!normalize(x)) x.assign(static_cast<std::size_t>(n), 1.0), normalize(x);

    std::vector<double> y = x, ay(static_cast<std::size_t>(n));
    double rho_prev = 0.0;
    double res = 1.0;
    int best_iter = 0;
    bool restarted = false;
    Rng rng(opts.seed ^ 0x5eed5eedULL);
    const int cg_cap = 4 * n + 200;

    for (int outer = 1; outer <= opts.max_iter; ++outer) {
        double inner_tol = std::clamp(0.3 * res, 1e-13, 1e-2);
        // warm CG start: y ~ x / rho
        if (rho_prev > 0.0) {
            for (int k = 0; k < n; ++k) y[static_cast<std::size_t>(k)] = x[static_cast<std::size_t>(k)] / rho_prev;
        } else {
            std::fill(y.begin(), y.end(), 0.0);
        }
        cg_solve(op, x, y, inner_tol, cg_cap);
        op.apply(y, ay);
        double yy = dot(y, y);
        if (yy == 0.0) throw SolveError("eigensolver breakdown", 0.0, 1.0, outer, {});
        double rho = dot(y, ay) / yy;
        double rn = 0.0;
        for (int k = 0; k < n; ++k) {
            double e = ay[static_cast<std::size_t>(k)] - rho * y[static_cast<std::size_t>(k)];
            rn += e * e;
        }
        res = std::sqrt(rn / yy) / rho;
        x = y;
        normalize(x);
        if (res < best.residual) {
            best.lambda = rho;
            best.u = x;
            best.residual = res;
            best.iterations = outer;
            best_iter = outer;
        }
        if (std::abs(rho - rho_prev) <= opts.tol * rho && res <= opts.tol) {
            best.lambda = rho;
            best.u = x;
            best.residual = res;
            best.iterations = outer;
            return best;
        }
        rho_prev = rho;
        if (outer - best_iter > 25) {
            if (!restarted) {
                restarted = true;
                for (int k = 0; k < n; ++k) x[static_cast<std::size_t>(k)] = 0.5 + rng.uniform();
                normalize(x);
                rho_prev = 0.0;
                best_iter = outer;
            } else {
                break;
            }
        }
    }
    throw SolveError("eigensolver did not converge", best.lambda, best.residual,
                     best.iterations, Field(best.u));
}

void fix_sign_and_normalize(const GridDomain& d, Field& u) {
    double s = 0.0;
    for (double v : u) s += v;
    if (s < 0.0) {
        for (double& v : u) v = -v;
    }
    double nrm = 0.0;
    for (double& v : u) {
        v = std::abs(v);
        nrm += v * v;
    }
    nrm = d.h * std::sqrt(nrm);
    if (nrm > 0.0) {
        for (double& v : u) v /= nrm;
    }
}

double support_residual(const GridDomain& d, const Support& s, const Field& u, double lambda) {
    Field lu = apply_laplacian(d, s, u);
    double rn = 0.0, un = 0.0;
    for (int idx = 0; idx < d.size(); ++idx) {
        if (!s.contains(idx)) continue;
        double e = lu[static_cast<std::size_t>(idx)] - lambda * u[static_cast<std::size_t>(idx)];
        rn += e * e;
        un += u[static_cast<std::size_t>(idx)] * u[static_cast<std::size_t>(idx)];
    }
    if (un == 0.0 || lambda == 0.0) return 0.0;
    return std::sqrt(rn / un) / lambda;
}

/// Symmetric eigen decomposition by cyclic Jacobi rotations.
void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& evals,
                  std::vector<double>& evecs, int* sweeps_out) {
    evecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) evecs[static_cast<std::size_t>(i * n + i)] = 1.0;
    auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i * n + j)]; };
    double fro = 0.0;
    for (double v : a) fro += v * v;
    fro = std::sqrt(fro);
    const double tol = 1e-15 * std::max(fro, 1.0);
    int sweeps = 0;
    for (; sweeps < 100; ++sweeps) {
        double off = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
        }
        if (std::sqrt(2.0 * off) <= tol) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = at(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                double app = at(p, p), aqq = at(q, q);
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = evecs[static_cast<std::size_t>(k * n + p)];
                    double vkq = evecs[static_cast<std::size_t>(k * n + q)];
                    evecs[static_cast<std::size_t>(k * n + p)] = c * vkp - s * vkq;
                    evecs[static_cast<std::size_t>(k * n + q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    evals.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) evals[static_cast<std::size_t>(i)] = at(i, i);
    if (sweeps_out) *sweeps_out = sweeps;
}

std::vector<std::vector<std::uint8_t>> split_components(const Support& s, int* count) {
    std::vector<int> label = support_components(s, count);
    std::vector<std::vector<std::uint8_t>> parts(
        static_cast<std::size_t>(*count),
        std::vector<std::uint8_t>(s.cells.size(), 0));
    for (std::size_t k = 0; k < label.size(); ++k) {
        if (label[k] >= 0) parts[static_cast<std::size_t>(label[k])][k] = 1;
    }
    return parts;
}

} // namespace

Field apply_laplacian(const GridDomain& d, const Support& s, const Field& v) {
    Field out(v.size(), 0.0);
    const double inv_h2 = 1.0 / (d.h * d.h);
    for (int j = 0; j < d.ny; ++j) {
        for (int i = 0; i < d.nx; ++i) {
            int idx = d.index(i, j);
            if (!s.contains(idx)) continue;
            double acc = 4.0 * v[static_cast<std::size_t>(idx)];
            if (i + 1 < d.nx && s.contains(idx + 1)) acc -= v[static_cast<std::size_t>(idx + 1)];
            if (i - 1 >= 0 && s.contains(idx - 1)) acc -= v[static_cast<std::size_t>(idx - 1)];
            if (j + 1 < d.ny && s.contains(idx + d.nx)) acc -= v[static_cast<std::size_t>(idx + d.nx)];
            if (j - 1 >= 0 && s.contains(idx - d.nx)) acc -= v[static_cast<std::size_t>(idx - d.nx)];
            out[static_cast<std::size_t>(idx)] = acc * inv_h2;
        }
    }
    return out;
}

SpectralResult smallest_eigenpair(const GridDomain& d, const Support& s, const EigOptions& opts) {
    if (s.cell_count == 0) throw Error("empty support");
    int ncomp = 0;
    auto parts = split_components(s, &ncomp);

    SpectralResult result;
    result.u.assign(s.cells.size(), 0.0);

    int best_comp = -1;
    double best_lambda = std::numeric_limits<double>::infinity();
    std::vector<EigPair> pairs;
    std::vector<CompactOperator> ops;
    pairs.reserve(static_cast<std::size_t>(ncomp));
    for (int c = 0; c < ncomp; ++c) {
        CompactOperator op = build_compact(d, parts[static_cast<std::size_t>(c)], nullptr, 0.0);
        std::vector<double> warm;
        if (opts.warm_start && !opts.warm_start->empty()) {
            warm.resize(static_cast<std::size_t>(op.n));
            for (int k = 0; k < op.n; ++k) {
                warm[static_cast<std::size_t>(k)] =
                    (*opts.warm_start)[static_cast<std::size_t>(op.cell[static_cast<std::size_t>(k)])];
            }
        }
        EigPair p = inverse_power(op, d.h, opts, warm.empty() ? nullptr : &warm);
        result.iterations += p.iterations;
        if (ncomp > 1) result.per_component.push_back(p.lambda);
        // ties at relative 1e-12 go to the smallest component label
        if (p.lambda < best_lambda * (1.0 - 1e-12)) {
            best_lambda = p.lambda;
            best_comp = c;
        }
        pairs.push_back(std::move(p));
        ops.push_back(std::move(op));
    }
    const EigPair& win = pairs[static_cast<std::size_t>(best_comp)];
    const CompactOperator& wop = ops[static_cast<std::size_t>(best_comp)];
    for (int k = 0; k < wop.n; ++k) {
        result.u[static_cast<std::size_t>(wop.cell[static_cast<std::size_t>(k)])] =
            win.u[static_cast<std::size_t>(k)];
    }
    result.lambda = win.lambda;
    fix_sign_and_normalize(d, result.u);
    result.residual = support_residual(d, s, result.u, result.lambda);
    return result;
}

SpectralResult penalized_smallest_eigenpair(const GridDomain& d, const Field& phi,
                                            double c_pen, const EigOptions& opts) {
    CompactOperator op = build_compact(d, d.mask, &phi, c_pen);
    std::vector<double> warm;
    if (opts.warm_start && !opts.warm_start->empty()) {
        warm.resize(static_cast<std::size_t>(op.n));
        for (int k = 0; k < op.n; ++k) {
            warm[static_cast<std::size_t>(k)] =
                (*opts.warm_start)[static_cast<std::size_t>(op.cell[static_cast<std::size_t>(k)])];
        }
    }
    EigPair p = inverse_power(op, d.h, opts, warm.empty() ? nullptr : &warm);
    SpectralResult result;
    result.lambda = p.lambda;
    result.residual = p.residual;
    result.iterations = p.iterations;
    result.u.assign(d.mask.size(), 0.0);
    for (int k = 0; k < op.n; ++k) {
        result.u[static_cast<std::size_t>(op.cell[static_cast<std::size_t>(k)])] =
            p.u[static_cast<std::size_t>(k)];
    }
    fix_sign_and_normalize(d, result.u);
    return result;
}

double rayleigh_quotient(const GridDomain& d, const Support& s, const Field& v) {
    Field lv = apply_laplacian(d, s, v);
    const double h2 = d.h * d.h;
    double num = 0.0, den = 0.0;
    for (int idx = 0; idx < d.size(); ++idx) {
        if (!s.contains(idx)) continue;
        num += v[static_cast<std::size_t>(idx)] * lv[static_cast<std::size_t>(idx)];
        den += v[static_cast<std::size_t>(idx)] * v[static_cast<std::size_t>(idx)];
    }
    if (den == 0.0) throw Error("zero field");
    return (num * h2) / (den * h2);
}

EnergyValue j_energy(const GridDomain& d, const Field& v, double lambda_ref) {
    EnergyValue e;
    for (int j = 0; j < d.ny; ++j) {
        for (int i = 0; i < d.nx; ++i) {
            int idx = d.index(i, j);
            if (!d.admissible(idx)) continue;
            double vi = v[static_cast<std::size_t>(idx)];
            e.mass_part += vi * vi;
            // east face, plus ghost faces where the neighbour leaves D
            double ve = (i + 1 < d.nx && d.admissible(idx + 1)) ? v[static_cast<std::size_t>(idx + 1)] : 0.0;
            double de = ve - vi;
            e.gradient_part += de * de;
            if (!(i - 1 >= 0 && d.admissible(idx - 1))) e.gradient_part += vi * vi;
            double vn = (j + 1 < d.ny && d.admissible(idx + d.nx)) ? v[static_cast<std::size_t>(idx + d.nx)] : 0.0;
            double dn = vn - vi;
            e.gradient_part += dn * dn;
            if (!(j - 1 >= 0 && d.admissible(idx - d.nx))) e.gradient_part += vi * vi;
        }
    }
    const double h2 = d.h * d.h;
    e.mass_part *= h2;
    // (dv/h)^2 h^2 = dv^2
    e.j = e.gradient_part - lambda_ref * e.mass_part;
    return e;
}

SpectralResult dense_eigen_oracle(const GridDomain& d, const Support& s) {
    if (s.cell_count == 0) throw Error("empty support");
    if (s.cell_count > 400) throw Error("oracle size limit: more than 400 cells");
    int ncomp = 0;
    auto parts = split_components(s, &ncomp);

    SpectralResult result;
    result.u.assign(s.cells.size(), 0.0);
    int best_comp = -1;
    double best_lambda = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_vecs;
    std::vector<CompactOperator> ops;
    std::vector<std::vector<double>> vecs;
    std::vector<double> lams;

    for (int c = 0; c < ncomp; ++c) {
        CompactOperator op = build_compact(d, parts[static_cast<std::size_t>(c)], nullptr, 0.0);
        int n = op.n;
        std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0);
        for (int k = 0; k < n; ++k) {
            a[static_cast<std::size_t>(k * n + k)] = 4.0 * op.inv_h2;
            for (int m = 0; m < 4; ++m) {
                int nb = op.nbr[static_cast<std::size_t>(4 * k + m)];
                if (nb >= 0) a[static_cast<std::size_t>(k * n + nb)] = -op.inv_h2;
            }
        }
        std::vector<double> evals, evecs;
        int sweeps = 0;
        jacobi_eigen(a, n, evals, evecs, &sweeps);
        result.iterations += sweeps;
        int imin = 0;
        for (int i = 1; i < n; ++i) {
            if (evals[static_cast<std::size_t>(i)] < evals[static_cast<std::size_t>(imin)]) imin = i;
        }
        std::vector<double> vec(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) vec[static_cast<std::size_t>(k)] = evecs[static_cast<std::size_t>(k * n + imin)];
        double lam = evals[static_cast<std::size_t>(imin)];
        if (ncomp > 1) result.per_component.push_back(lam);
        if (lam < best_lambda * (1.0 - 1e-12)) {
            best_lambda = lam;
            best_comp = c;
        }
        lams.push_back(lam);
        vecs.push_back(std::move(vec));
        ops.push_back(std::move(op));
    }
    const CompactOperator& wop = ops[static_cast<std::size_t>(best_comp)];
    const std::vector<double>& wvec = vecs[static_cast<std::size_t>(best_comp)];
    for (int k = 0; k < wop.n; ++k) {
        result.u[static_cast<std::size_t>(wop.cell[static_cast<std::size_t>(k)])] =
            wvec[static_cast<std::size_t>(k)];
    }
    result.lambda = lams[static_cast<std::size_t>(best_comp)];
    fix_sign_and_normalize(d, result.u);
    result.residual = support_residual(d, s, result.u, result.lambda);
    return result;
}

double support_lambda1(const GridDomain& d, const Support& s, double tol) {
    EigOptions opts;
    opts.tol = tol;
    return smallest_eigenpair(d, s, opts).lambda;
}

} // namespace lambda1
