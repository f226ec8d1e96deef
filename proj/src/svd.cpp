#include "nwp/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nwp {
namespace {

// Column-major working storage for the Jacobi sweeps: columns are the objects
// being rotated, so keeping them contiguous is what matters here.
struct ColMat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    ColMat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    double* col(int c) { return data.data() + static_cast<size_t>(c) * rows; }
    const double* col(int c) const { return data.data() + static_cast<size_t>(c) * rows; }
};

double col_dot(const ColMat& m, int a, int b) {
    const double* x = m.col(a);
    const double* y = m.col(b);
    double s = 0;
    for (int i = 0; i < m.rows; ++i) s += x[i] * y[i];
    return s;
}

void rotate_cols(ColMat& m, int p, int q, double c, double s) {
    double* cp = m.col(p);
    double* cq = m.col(q);
    for (int i = 0; i < m.rows; ++i) {
        const double a = cp[i];
        const double b = cq[i];
        cp[i] = c * a - s * b;
        cq[i] = s * a + c * b;
    }
}

// Orthogonalizes the columns of g in place with cyclic Hestenes sweeps and
// accumulates the right-hand rotations into v (cols x cols identity on entry),
// so that g_in = g_out * v^T.
void jacobi_sweeps(ColMat& g, ColMat& v) {
    const int m = g.cols;
    constexpr int kMaxSweeps = 60;
    constexpr double kTol = 1e-13;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < m - 1; ++p) {
            for (int q = p + 1; q < m; ++q) {
                const double app = col_dot(g, p, p);
                const double aqq = col_dot(g, q, q);
                const double apq = col_dot(g, p, q);
                if (apq == 0.0 || app == 0.0 || aqq == 0.0) continue;
                if (std::abs(apq) <= kTol * std::sqrt(app * aqq)) continue;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate_cols(g, p, q, c, s);
                rotate_cols(v, p, q, c, s);
                rotated = true;
            }
        }
        if (!rotated) break;
    }
}

// Extends the orthonormal columns of q marked `present` to a full basis by
// orthogonalizing standard basis vectors (re-orthogonalized once) against the
// columns accepted so far. Deterministic: candidates are tried in index order.
void complete_basis(ColMat& q, const std::vector<bool>& present) {
    const int n = q.rows;
    std::vector<bool> have = present;
    std::vector<double> cand(n);
    int next_candidate = 0;
    for (int c = 0; c < q.cols; ++c) {
        if (have[c]) continue;
        while (true) {
            if (next_candidate >= n)
                throw DomainError("svd: basis completion exhausted candidates");
            std::fill(cand.begin(), cand.end(), 0.0);
            cand[next_candidate++] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (int j = 0; j < q.cols; ++j) {
                    if (!have[j]) continue;
                    const double* cj = q.col(j);
                    double d = 0;
                    for (int i = 0; i < n; ++i) d += cand[i] * cj[i];
                    for (int i = 0; i < n; ++i) cand[i] -= d * cj[i];
                }
            }
            double norm = 0;
            for (double x : cand) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 0.5) {
                double* cc = q.col(c);
                for (int i = 0; i < n; ++i) cc[i] = cand[i] / norm;
                have[c] = true;
                break;
            }
        }
    }
}

Matrix to_f32_rowmajor(const ColMat& m, int take_cols) {
    Matrix out(m.rows, take_cols);
    for (int c = 0; c < take_cols; ++c)
        for (int r = 0; r < m.rows; ++r) out(r, c) = static_cast<float>(m.col(c)[r]);
    return out;
}

Matrix transpose_to_f32(const ColMat& m, int take_cols) {
    Matrix out(take_cols, m.rows);
    for (int c = 0; c < take_cols; ++c) {
        const double* col = m.col(c);
        for (int r = 0; r < m.rows; ++r) out(c, r) = static_cast<float>(col[r]);
    }
    return out;
}

} // namespace

SvdResult svd(const Matrix& w) {
    if (w.rows < 1 || w.cols < 1) throw ShapeError("svd: empty matrix");
    if (!all_finite(w)) throw DomainError("svd: non-finite input");

    const int m = w.rows;
    const int n = w.cols;
    const int mn = std::min(m, n);
    const bool use_transpose = m <= n; // sweep over the smaller column count

    // g holds the matrix whose columns get orthogonalized; it has mn columns.
    const int grows = use_transpose ? n : m;
    ColMat g(grows, mn);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) {
            const double v = static_cast<double>(w(r, c));
            if (use_transpose)
                g.col(r)[c] = v;
            else
                g.col(c)[r] = v;
        }

    ColMat rot(mn, mn);
    for (int i = 0; i < mn; ++i) rot.col(i)[i] = 1.0;

    jacobi_sweeps(g, rot);

    // Singular values are the column norms; sort descending, ties by index.
    std::vector<double> sig(mn);
    for (int c = 0; c < mn; ++c) sig[c] = std::sqrt(col_dot(g, c, c));
    const double sig_max = *std::max_element(sig.begin(), sig.end());
    std::vector<int> order(mn);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sig[a] > sig[b]; });

    ColMat q(grows, mn);       // normalized columns of g, in sorted order
    ColMat rsorted(mn, mn);    // rotation matrix columns, in sorted order
    std::vector<bool> present(mn, false);
    std::vector<double> sigma_sorted(mn);
    const double tiny = sig_max > 0 ? sig_max * 1e-12 : 0.0;
    for (int c = 0; c < mn; ++c) {
        const int src = order[c];
        sigma_sorted[c] = sig[src];
        std::copy_n(rot.col(src), mn, rsorted.col(c));
        if (sig[src] > tiny) {
            const double inv = 1.0 / sig[src];
            const double* gcol = g.col(src);
            double* qcol = q.col(c);
            for (int i = 0; i < grows; ++i) qcol[i] = gcol[i] * inv;
            present[c] = true;
        } else {
            sigma_sorted[c] = sig[src]; // keep the (near-)zero value as computed
        }
    }
    complete_basis(q, present); // fill columns belonging to zero singular values

    SvdResult out;
    out.sigma.resize(mn);
    for (int i = 0; i < mn; ++i) out.sigma[i] = static_cast<float>(sigma_sorted[i]);

    if (use_transpose) {
        // w = R * Sigma * Q^T : u is the (square) rotation product, vt is Q^T.
        out.u = to_f32_rowmajor(rsorted, mn); // m x m
        out.vt = transpose_to_f32(q, mn);     // mn x n
    } else {
        // w = Q * Sigma * R^T : Q needs completion to a full m x m basis.
        ColMat qfull(m, m);
        std::vector<bool> have(m, false);
        for (int c = 0; c < mn; ++c) {
            std::copy_n(q.col(c), m, qfull.col(c));
            have[c] = true;
        }
        complete_basis(qfull, have);
        out.u = to_f32_rowmajor(qfull, m);     // m x m
        out.vt = transpose_to_f32(rsorted, mn); // mn x n
    }
    return out;
}

void truncated_factors(const SvdResult& s, int rank, Matrix& a, Matrix& b) {
    const int mn = static_cast<int>(s.sigma.size());
    if (rank < 1 || rank > mn) throw RangeError("truncated_factors: rank out of range");
    const int m = s.u.rows;
    const int n = s.vt.cols;
    a = Matrix(m, rank);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < rank; ++c) a(r, c) = s.u(r, c) * s.sigma[c];
    b = Matrix(rank, n);
    for (int r = 0; r < rank; ++r)
        for (int c = 0; c < n; ++c) b(r, c) = s.vt(r, c);
    return;
}

} // namespace nwp
