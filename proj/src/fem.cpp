#include "mgua/fem.hpp"

#include <cmath>
#include <mutex>

#include "mgua/error.hpp"

namespace mgua {

namespace {

// Reference-element quadrature rule and exact fp64 basis gradients.
struct ReferenceRule {
    int n_points;
    int n_basis;
    int dim;
    std::array<std::array<double, 3>, 8> points;
    std::array<double, 8> weights;
    std::array<std::array<std::array<double, 3>, 8>, 8> grads;  // [q][b][d]
};

ReferenceRule make_tri3_rule() {
    ReferenceRule r{};
    r.n_points = 3;
    r.n_basis = 3;
    r.dim = 2;
    r.points = {{{1.0 / 6.0, 1.0 / 6.0, 0.0},
                 {2.0 / 3.0, 1.0 / 6.0, 0.0},
                 {1.0 / 6.0, 2.0 / 3.0, 0.0}}};
    r.weights = {1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0};
    for (int q = 0; q < 3; ++q) {
        r.grads[q][0] = {-1.0, -1.0, 0.0};
        r.grads[q][1] = {1.0, 0.0, 0.0};
        r.grads[q][2] = {0.0, 1.0, 0.0};
    }
    return r;
}

ReferenceRule make_tet4_rule() {
    ReferenceRule r{};
    r.n_points = 4;
    r.n_basis = 4;
    r.dim = 3;
    const double a = (5.0 + 3.0 * std::sqrt(5.0)) / 20.0;
    const double b = (5.0 - std::sqrt(5.0)) / 20.0;
    r.points = {{{b, b, b}, {a, b, b}, {b, a, b}, {b, b, a}}};
    r.weights = {1.0 / 24.0, 1.0 / 24.0, 1.0 / 24.0, 1.0 / 24.0};
    for (int q = 0; q < 4; ++q) {
        r.grads[q][0] = {-1.0, -1.0, -1.0};
        r.grads[q][1] = {1.0, 0.0, 0.0};
        r.grads[q][2] = {0.0, 1.0, 0.0};
        r.grads[q][3] = {0.0, 0.0, 1.0};
    }
    return r;
}

// Trilinear hex on [-1,1]^3, VTK corner order, 2x2x2 Gauss points.
constexpr double kHexCorner[8][3] = {
    {-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
    {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1},
};

ReferenceRule make_hex8_rule() {
    ReferenceRule r{};
    r.n_points = 8;
    r.n_basis = 8;
    r.dim = 3;
    const double g = 1.0 / std::sqrt(3.0);
    int q = 0;
    for (int iz = 0; iz < 2; ++iz) {
        for (int iy = 0; iy < 2; ++iy) {
            for (int ix = 0; ix < 2; ++ix, ++q) {
                const double x = ix == 0 ? -g : g;
                const double y = iy == 0 ? -g : g;
                const double z = iz == 0 ? -g : g;
                r.points[q] = {x, y, z};
                r.weights[q] = 1.0;
                for (int b = 0; b < 8; ++b) {
                    const double sx = kHexCorner[b][0];
                    const double sy = kHexCorner[b][1];
                    const double sz = kHexCorner[b][2];
                    r.grads[q][b] = {
                        sx * (1.0 + sy * y) * (1.0 + sz * z) / 8.0,
                        sy * (1.0 + sx * x) * (1.0 + sz * z) / 8.0,
                        sz * (1.0 + sx * x) * (1.0 + sy * y) / 8.0,
                    };
                }
            }
        }
    }
    return r;
}

const ReferenceRule& reference_rule(ElementType type) {
    static const ReferenceRule tri3 = make_tri3_rule();
    static const ReferenceRule tet4 = make_tet4_rule();
    static const ReferenceRule hex8 = make_hex8_rule();
    switch (type) {
        case ElementType::Tri3: return tri3;
        case ElementType::Tet4: return tet4;
        case ElementType::Hex8: return hex8;
    }
    return tri3;
}

// Jacobian at one quadrature point, plain fp64: J[r][c] = sum_b x_b[r] * dN_b/dxi_c.
void jacobian_at(const ElementGeometry& elem, const ReferenceRule& rule, int q, double J[3][3]) {
    const int dim = rule.dim;
    for (int r = 0; r < dim; ++r) {
        for (int c = 0; c < dim; ++c) {
            double sum = 0.0;
            for (int b = 0; b < rule.n_basis; ++b) {
                sum += elem.coords[static_cast<size_t>(b)][static_cast<size_t>(r)] *
                       rule.grads[q][b][static_cast<size_t>(c)];
            }
            J[r][c] = sum;
        }
    }
}

double det_fp64(const double J[3][3], int dim) {
    if (dim == 2) return J[0][0] * J[1][1] - J[0][1] * J[1][0];
    return J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
           J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
           J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
}

// Eigenvalues of a symmetric 2x2 / 3x3 matrix, closed form. The 3x3 case is
// the trigonometric solution of the characteristic cubic; the smallest
// singular value is later recovered from det(J) instead of the smallest
// eigenvalue, which keeps kappa accurate when sigma_min cancels.
void symmetric_eigenvalues(const double S[3][3], int dim, double out[3]) {
    if (dim == 2) {
        const double tr = S[0][0] + S[1][1];
        const double d = S[0][0] - S[1][1];
        const double disc = std::sqrt(d * d + 4.0 * S[0][1] * S[0][1]);
        out[0] = 0.5 * (tr + disc);
        out[1] = 0.5 * (tr - disc);
        out[2] = 0.0;
        return;
    }
    const double p1 = S[0][1] * S[0][1] + S[0][2] * S[0][2] + S[1][2] * S[1][2];
    if (p1 == 0.0) {
        double d0 = S[0][0], d1 = S[1][1], d2 = S[2][2];
        if (d0 < d1) std::swap(d0, d1);
        if (d1 < d2) std::swap(d1, d2);
        if (d0 < d1) std::swap(d0, d1);
        out[0] = d0;
        out[1] = d1;
        out[2] = d2;
        return;
    }
    const double q = (S[0][0] + S[1][1] + S[2][2]) / 3.0;
    const double p2 = (S[0][0] - q) * (S[0][0] - q) + (S[1][1] - q) * (S[1][1] - q) +
                      (S[2][2] - q) * (S[2][2] - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    double B[3][3];
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            B[i][j] = (S[i][j] - (i == j ? q : 0.0)) / p;
        }
    }
    double r = det_fp64(B, 3) / 2.0;
    r = std::fmin(1.0, std::fmax(-1.0, r));
    const double phi = std::acos(r) / 3.0;
    const double two_pi_3 = 2.0943951023931953;
    out[0] = q + 2.0 * p * std::cos(phi);
    out[2] = q + 2.0 * p * std::cos(phi + two_pi_3);
    out[1] = 3.0 * q - out[0] - out[2];
}

// Precision-aware elementary ops: round after every multiply/add/divide.
struct RoundedArith {
    PrecisionLevel level;
    uint64_t ops = 0;

    double val(double x) { return round_to(x, level); }
    double mul(double a, double b) {
        ++ops;
        return round_to(a * b, level);
    }
    double add(double a, double b) {
        ++ops;
        return round_to(a + b, level);
    }
    double sub(double a, double b) {
        ++ops;
        return round_to(a - b, level);
    }
    double div(double a, double b) {
        ++ops;
        return round_to(a / b, level);
    }
};

// Gauss-Jordan inverse with partial pivoting, every operation rounded.
// dim <= 3. Throws on a pivot that rounded to zero.
void rounded_inverse(RoundedArith& ar, const double M[3][3], int dim, double inv[3][3]) {
    double a[3][6];
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            a[i][j] = M[i][j];
            a[i][dim + j] = (i == j) ? 1.0 : 0.0;
        }
    }
    for (int col = 0; col < dim; ++col) {
        int pivot = col;
        for (int r = col + 1; r < dim; ++r) {
            if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
        }
        if (a[pivot][col] == 0.0) throw_geometry("singular jacobian");
        if (pivot != col) {
            for (int j = 0; j < 2 * dim; ++j) std::swap(a[pivot][j], a[col][j]);
        }
        const double inv_p = ar.div(1.0, a[col][col]);
        for (int j = 0; j < 2 * dim; ++j) a[col][j] = ar.mul(a[col][j], inv_p);
        for (int r = 0; r < dim; ++r) {
            if (r == col || a[r][col] == 0.0) continue;
            const double f = a[r][col];
            for (int j = 0; j < 2 * dim; ++j) {
                a[r][j] = ar.sub(a[r][j], ar.mul(f, a[col][j]));
            }
        }
    }
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) inv[i][j] = a[i][dim + j];
    }
}

double rounded_det(RoundedArith& ar, const double J[3][3], int dim) {
    if (dim == 2) {
        return ar.sub(ar.mul(J[0][0], J[1][1]), ar.mul(J[0][1], J[1][0]));
    }
    const double c0 = ar.sub(ar.mul(J[1][1], J[2][2]), ar.mul(J[1][2], J[2][1]));
    const double c1 = ar.sub(ar.mul(J[1][0], J[2][2]), ar.mul(J[1][2], J[2][0]));
    const double c2 = ar.sub(ar.mul(J[1][0], J[2][1]), ar.mul(J[1][1], J[2][0]));
    const double t0 = ar.mul(J[0][0], c0);
    const double t1 = ar.mul(J[0][1], c1);
    const double t2 = ar.mul(J[0][2], c2);
    return ar.add(ar.sub(t0, t1), t2);
}

}  // namespace

const BasisTable& tabulate_basis(ElementType type, PrecisionLevel u_p) {
    static BasisTable tables[3][kPrecisionLevelCount];
    static std::once_flag flags[3][kPrecisionLevelCount];
    const int ti = static_cast<int>(type);
    const int li = static_cast<int>(u_p);
    std::call_once(flags[ti][li], [&] {
        const ReferenceRule& rule = reference_rule(type);
        BasisTable& t = tables[ti][li];
        t.type = type;
        t.level = u_p;
        t.n_basis = rule.n_basis;
        t.n_points = rule.n_points;
        t.dim = rule.dim;
        t.weights = rule.weights;
        for (int q = 0; q < rule.n_points; ++q) {
            for (int b = 0; b < rule.n_basis; ++b) {
                for (int d = 0; d < rule.dim; ++d) {
                    t.grads[q][b][static_cast<size_t>(d)] =
                        round_to(rule.grads[q][b][static_cast<size_t>(d)], u_p);
                }
            }
        }
    });
    return tables[ti][li];
}

double condition_number(const ElementGeometry& elem) {
    const ReferenceRule& rule = reference_rule(elem.type);
    const int dim = rule.dim;

    // Reject inverted or degenerate maps at every quadrature point.
    double mean[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    for (int q = 0; q < rule.n_points; ++q) {
        double J[3][3];
        jacobian_at(elem, rule, q, J);
        const double det = det_fp64(J, dim);
        if (!(det > 0.0)) {
            throw_geometry("nonpositive jacobian determinant (" + std::to_string(det) +
                           ") at quadrature point " + std::to_string(q));
        }
        for (int r = 0; r < dim; ++r) {
            for (int c = 0; c < dim; ++c) mean[r][c] += J[r][c];
        }
    }
    for (int r = 0; r < dim; ++r) {
        for (int c = 0; c < dim; ++c) mean[r][c] /= rule.n_points;
    }

    const double det = det_fp64(mean, dim);
    if (det == 0.0 || !std::isfinite(det)) throw_geometry("singular jacobian");

    double S[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            double sum = 0.0;
            for (int k = 0; k < dim; ++k) sum += mean[k][i] * mean[k][j];
            S[i][j] = sum;
        }
    }
    double eig[3];
    symmetric_eigenvalues(S, dim, eig);
    const double sigma_max = std::sqrt(std::fmax(eig[0], 0.0));
    double sigma_min;
    if (dim == 2) {
        sigma_min = std::fabs(det) / sigma_max;
    } else {
        const double sigma_mid = std::sqrt(std::fmax(eig[1], 0.0));
        sigma_min = std::fabs(det) / (sigma_max * sigma_mid);
    }
    if (!(sigma_min > 0.0) || !std::isfinite(sigma_min)) throw_geometry("singular jacobian");
    const double kappa = sigma_max / sigma_min;
    return kappa < 1.0 ? 1.0 : kappa;
}

GeometryTensor geometry_tensor(const ElementGeometry& elem, PrecisionLevel u_m) {
    const ReferenceRule& rule = reference_rule(elem.type);
    const int dim = rule.dim;
    RoundedArith ar{u_m};

    GeometryTensor out;
    out.n_points = rule.n_points;
    out.dim = dim;
    out.diag.resize(static_cast<size_t>(rule.n_points));

    // Rounded copies of the inputs.
    double coords[8][3];
    for (int b = 0; b < rule.n_basis; ++b) {
        for (int d = 0; d < dim; ++d) {
            coords[b][d] = ar.val(elem.coords[static_cast<size_t>(b)][static_cast<size_t>(d)]);
        }
    }
    const double coeff = ar.val(elem.coeff);

    for (int q = 0; q < rule.n_points; ++q) {
        double J[3][3];
        for (int r = 0; r < dim; ++r) {
            for (int c = 0; c < dim; ++c) {
                double sum = 0.0;
                for (int b = 0; b < rule.n_basis; ++b) {
                    const double g = ar.val(rule.grads[q][b][static_cast<size_t>(c)]);
                    if (g == 0.0) continue;  // structural zero of the basis
                    sum = ar.add(sum, ar.mul(coords[b][r], g));
                }
                J[r][c] = sum;
            }
        }

        const double det = rounded_det(ar, J, dim);
        if (!(det > 0.0)) {
            throw_geometry("nonpositive jacobian determinant at quadrature point " +
                           std::to_string(q) + " under " + to_token(u_m));
        }

        double inv[3][3];
        rounded_inverse(ar, J, dim, inv);

        // scale = w_q * det * coeff, then C = scale * (inv * inv^T).
        const double scale = ar.mul(ar.mul(ar.val(rule.weights[static_cast<size_t>(q)]), det),
                                    coeff);
        auto& block = out.diag[static_cast<size_t>(q)];
        block.fill(0.0);
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) {
                double sum = 0.0;
                for (int k = 0; k < dim; ++k) {
                    sum = ar.add(sum, ar.mul(inv[i][k], inv[j][k]));
                }
                block[static_cast<size_t>(i * dim + j)] = ar.mul(scale, sum);
            }
        }
    }

    out.ops = ar.ops;
    return out;
}

ElementMatrix assemble_element(const BasisTable& basis, const GeometryTensor& geometry,
                               PrecisionLevel u_q, PrecisionLevel u_s,
                               const AssemblyOptions& options) {
    if (basis.n_points != geometry.n_points || basis.dim != geometry.dim) {
        throw_contract("basis/geometry tabulation mismatch: " + std::to_string(basis.n_points) +
                       "x" + std::to_string(basis.dim) + " vs " +
                       std::to_string(geometry.n_points) + "x" + std::to_string(geometry.dim));
    }
    const int n = basis.n_basis;
    const int dim = basis.dim;

    ElementMatrix em;
    em.n = n;
    em.a.assign(static_cast<size_t>(n) * n, 0.0);
    em.config.u_q = u_q;
    em.config.u_s = u_s;

    double tmp[8][3];
    for (int s = 0; s < basis.n_points; ++s) {
        for (int t = 0; t < basis.n_points; ++t) {
            const double* c_st = geometry.block(s, t);
            if (!c_st) continue;

            // tmp = B_s * C_st  (n x dim)
            for (int i = 0; i < n; ++i) {
                for (int d2 = 0; d2 < dim; ++d2) {
                    double acc = 0.0;
                    for (int d1 = 0; d1 < dim; ++d1) {
                        acc = mac_in(basis.grads[s][i][static_cast<size_t>(d1)],
                                     c_st[d1 * dim + d2], acc, u_q, options.fused);
                        ++em.macs;
                    }
                    tmp[i][d2] = acc;
                }
            }
            // A += tmp * B_t^T
            for (int i = 0; i < n; ++i) {
                const int j0 = options.symmetric_accumulation ? i : 0;
                for (int j = j0; j < n; ++j) {
                    double acc = em.a[static_cast<size_t>(i) * n + j];
                    for (int d2 = 0; d2 < dim; ++d2) {
                        acc = mac_in(tmp[i][d2], basis.grads[t][j][static_cast<size_t>(d2)], acc,
                                     u_q, options.fused);
                        ++em.macs;
                    }
                    em.a[static_cast<size_t>(i) * n + j] = acc;
                }
            }
        }
    }

    if (options.symmetric_accumulation) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < i; ++j) {
                em.a[static_cast<size_t>(i) * n + j] = em.a[static_cast<size_t>(j) * n + i];
            }
        }
    }

    for (auto& v : em.a) v = round_to(v, u_s);
    return em;
}

ElementMatrix assemble_element(const ElementGeometry& elem, const AssemblyOptions& options,
                               int element_id) {
    const BasisTable& basis = tabulate_basis(elem.type, options.config.u_p);
    GeometryTensor geometry = geometry_tensor(elem, options.config.u_m);
    ElementMatrix em =
        assemble_element(basis, geometry, options.config.u_q, options.config.u_s, options);
    em.element_id = element_id;
    em.config = options.config;
    em.geometry_ops = geometry.ops;
    return em;
}

ElementMatrix reference_assembly(const ElementGeometry& elem, int element_id) {
    AssemblyOptions options;
    options.config = kConfigAllFp64;
    return assemble_element(elem, options, element_id);
}

double element_l2_error(std::span<const double> a, std::span<const double> a_ref) {
    if (a.size() != a_ref.size()) {
        throw_contract("element_l2_error shape mismatch: " + std::to_string(a.size()) + " vs " +
                       std::to_string(a_ref.size()));
    }
    double diff2 = 0.0;
    double ref2 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - a_ref[i];
        diff2 += d * d;
        ref2 += a_ref[i] * a_ref[i];
    }
    if (ref2 == 0.0) return diff2 == 0.0 ? 0.0 : HUGE_VAL;
    return std::sqrt(diff2) / std::sqrt(ref2);
}

double element_l2_error(const ElementMatrix& a, const ElementMatrix& a_ref) {
    return element_l2_error(std::span<const double>(a.a), std::span<const double>(a_ref.a));
}

}  // namespace mgua
