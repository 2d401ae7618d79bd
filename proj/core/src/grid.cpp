#include "lambda1/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lambda1 {

namespace {

void flood_label(int nx, int ny, const std::vector<std::uint8_t>& ind,
                 std::vector<int>& label, int* count_out) {
    label.assign(ind.size(), -1);
    int next = 0;
    std::vector<int> stack;
    for (int start = 0; start < nx * ny; ++start) {
        if (!ind[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) {
            continue;
        }
        stack.push_back(start);
        label[static_cast<std::size_t>(start)] = next;
        while (!stack.empty()) {
            int idx = stack.back();
            stack.pop_back();
            int i = idx % nx;
            int j = idx / nx;
            const int di[4] = {1, -1, 0, 0};
            const int dj[4] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                int ii = i + di[k];
                int jj = j + dj[k];
                if (ii < 0 || ii >= nx || jj < 0 || jj >= ny) continue;
                int nidx = ii + nx * jj;
                if (ind[static_cast<std::size_t>(nidx)] && label[static_cast<std::size_t>(nidx)] < 0) {
                    label[static_cast<std::size_t>(nidx)] = next;
                    stack.push_back(nidx);
                }
            }
        }
        ++next;
    }
    if (count_out) *count_out = next;
}

} // namespace

GridDomain build_box_domain(std::span<const Rect> rects, double h) {
    if (!(h > 0.0) || !std::isfinite(h)) {
        throw Error("bad grid: spacing must be positive");
    }
    double x0 = std::numeric_limits<double>::infinity();
    double y0 = std::numeric_limits<double>::infinity();
    double x1 = -std::numeric_limits<double>::infinity();
    double y1 = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (const Rect& r : rects) {
        if (r.x1 <= r.x0 || r.y1 <= r.y0) continue; // degenerate, contributes nothing
        any = true;
        x0 = std::min(x0, r.x0);
        y0 = std::min(y0, r.y0);
        x1 = std::max(x1, r.x1);
        y1 = std::max(y1, r.y1);
    }
    if (!any) throw Error("empty domain: no rectangles");

    GridDomain d;
    d.h = h;
    d.nx = std::max(1, static_cast<int>(std::llround((x1 - x0) / h)));
    d.ny = std::max(1, static_cast<int>(std::llround((y1 - y0) / h)));
    if (d.nx < 3 || d.ny < 3) throw Error("bad grid: fewer than 3 cells per axis");
    if (static_cast<long long>(d.nx) * d.ny > (1LL << 26)) {
        throw Error("bad grid: too many cells");
    }
    d.origin_x = x0 + 0.5 * h;
    d.origin_y = y0 + 0.5 * h;
    d.mask.assign(static_cast<std::size_t>(d.nx) * d.ny, 0);

    for (int j = 0; j < d.ny; ++j) {
        double y = d.cell_y(j);
        for (int i = 0; i < d.nx; ++i) {
            double x = d.cell_x(i);
            for (const Rect& r : rects) {
                if (x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1) {
                    d.mask[static_cast<std::size_t>(d.index(i, j))] = 1;
                    break;
                }
            }
        }
    }
    d.admissible_count = static_cast<int>(std::count(d.mask.begin(), d.mask.end(), std::uint8_t{1}));
    if (d.admissible_count == 0) throw Error("empty domain: no admissible cell");
    flood_label(d.nx, d.ny, d.mask, d.component_id, &d.component_count);
    return d;
}

Support make_support(const GridDomain& domain, std::vector<std::uint8_t> cells) {
    if (cells.size() != domain.mask.size()) {
        throw Error("support indicator size mismatch");
    }
    Support s;
    s.domain = &domain;
    s.cells = std::move(cells);
    for (std::size_t k = 0; k < s.cells.size(); ++k) {
        if (s.cells[k] && !domain.mask[k]) throw Error("support not contained in domain");
        if (s.cells[k]) ++s.cell_count;
    }
    s.volume = static_cast<double>(s.cell_count) * domain.h * domain.h;
    return s;
}

Support full_support(const GridDomain& domain) {
    return make_support(domain, domain.mask);
}

Support ball_support(const GridDomain& domain, const BallSpec& ball) {
    if (!(ball.radius > 0.0)) throw Error("degenerate ball: radius must be positive");
    std::vector<std::uint8_t> cells(domain.mask.size(), 0);
    const double r2 = ball.radius * ball.radius;
    bool any = false;
    for (int j = 0; j < domain.ny; ++j) {
        double dy = domain.cell_y(j) - ball.cy;
        for (int i = 0; i < domain.nx; ++i) {
            double dx = domain.cell_x(i) - ball.cx;
            int idx = domain.index(i, j);
            if (domain.admissible(idx) && dx * dx + dy * dy <= r2) {
                cells[static_cast<std::size_t>(idx)] = 1;
                any = true;
            }
        }
    }
    if (!any) throw Error("degenerate ball: no admissible cell inside");
    return make_support(domain, std::move(cells));
}

double measure_volume(const Support& support) {
    return static_cast<double>(support.cell_count) * support.domain->h * support.domain->h;
}

std::vector<int> support_components(const Support& support, int* count) {
    std::vector<int> label;
    flood_label(support.domain->nx, support.domain->ny, support.cells, label, count);
    return label;
}

} // namespace lambda1
