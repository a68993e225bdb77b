#include <doctest.h>

#include <cmath>

#include "mgua/error.hpp"
#include "mgua/fem.hpp"
#include "mgua/mesh.hpp"
#include "mgua/pipeline.hpp"
#include "mgua/rng.hpp"
#include "oracles.hpp"

using namespace mgua;

namespace {

const char* kUnitSquareMesh = R"({
  "nodes": [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
  "elements": [
    {"type": "tri3", "nodes": [0, 1, 2]},
    {"type": "tri3", "nodes": [0, 2, 3]}
  ],
  "boundary_conditions": [{"node": 0, "value": 0.0}],
  "material_properties": {"default_coeff": 1.0}
})";

ElementGeometry tri(double x0, double y0, double x1, double y1, double x2, double y2,
                    double coeff = 1.0) {
    ElementGeometry g;
    g.type = ElementType::Tri3;
    g.dim = 2;
    g.coords[0] = {x0, y0, 0.0};
    g.coords[1] = {x1, y1, 0.0};
    g.coords[2] = {x2, y2, 0.0};
    g.coeff = coeff;
    return g;
}

ElementGeometry reference_tet(double coeff = 1.0) {
    ElementGeometry g;
    g.type = ElementType::Tet4;
    g.dim = 3;
    g.coords[0] = {0, 0, 0};
    g.coords[1] = {1, 0, 0};
    g.coords[2] = {0, 1, 0};
    g.coords[3] = {0, 0, 1};
    g.coeff = coeff;
    return g;
}

ElementGeometry affine_tet(const double j[3][3], double coeff = 1.0) {
    ElementGeometry g = reference_tet(coeff);
    const double ref[4][3] = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int b = 0; b < 4; ++b) {
        for (int r = 0; r < 3; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 3; ++c) sum += j[r][c] * ref[b][c];
            g.coords[static_cast<size_t>(b)][static_cast<size_t>(r)] = sum;
        }
    }
    return g;
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

}  // namespace

TEST_SUITE("fem") {

TEST_CASE("parse bundled unit-square mesh") {
    const Mesh mesh = parse_mesh(kUnitSquareMesh);
    CHECK(mesh.element_count() == 2);
    CHECK(mesh.nodes.size() == 4);
    CHECK(mesh.dim == 2);
    CHECK(mesh.elements[0].coeff == 1.0);
    CHECK(mesh.boundary_conditions.size() == 1);
}

TEST_CASE("parse errors name the offending path") {
    try {
        parse_mesh(R"({"elements": []})");
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
        CHECK(std::string(e.what()).find("$.nodes") != std::string::npos);
    }

    // Out-of-range node index.
    try {
        parse_mesh(R"({"nodes": [[0,0],[1,0],[0,1]],
                       "elements": [{"type": "tri3", "nodes": [0, 1, 7]}]})");
        FAIL("expected validation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Validation);
        CHECK(std::string(e.what()).find("out of range") != std::string::npos);
    }

    // Clockwise (inverted) triangle: analytic 2x2 determinant is negative.
    try {
        parse_mesh(R"({"nodes": [[0,0],[1,0],[0,1]],
                       "elements": [{"type": "tri3", "nodes": [0, 2, 1]}]})");
        FAIL("expected geometry error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Geometry);
        CHECK(std::string(e.what()).find("element 0") != std::string::npos);
    }
}

TEST_CASE("condition number: pinned cases") {
    // Identity-mapped reference triangle.
    CHECK(condition_number(tri(0, 0, 1, 0, 0, 1)) == doctest::Approx(1.0).epsilon(1e-12));
    // J = diag(10, 1).
    CHECK(condition_number(tri(0, 0, 10, 0, 0, 1)) == doctest::Approx(10.0).epsilon(1e-12));
    // Singular (collinear) triangle.
    CHECK_THROWS_AS((void)condition_number(tri(0, 0, 1, 0, 2, 0)), Error);
}

TEST_CASE("condition number matches the Jacobi-rotation SVD oracle") {
    Rng rng(21);
    for (int trial = 0; trial < 500; ++trial) {
        // Well-conditioned random 3x3 J: identity plus a modest perturbation.
        double j[3][3];
        std::vector<double> flat(9);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                j[r][c] = (r == c ? 1.0 : 0.0) + 0.4 * rng.uniform_real(-1.0, 1.0);
                flat[static_cast<size_t>(r * 3 + c)] = j[r][c];
            }
        }
        const double det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) -
                           j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
                           j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
        if (det <= 0.05) continue;

        const auto sigma = oracle::hestenes_svd(flat, 3, 3);
        const double expected = sigma.front() / sigma.back();
        const double got = condition_number(affine_tet(j));
        CHECK(got == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("tabulate_basis: reference gradients") {
    const BasisTable& tri3 = tabulate_basis(ElementType::Tri3, PrecisionLevel::FP64);
    CHECK(tri3.n_points == 3);
    CHECK(tri3.n_basis == 3);
    for (int q = 0; q < 3; ++q) {
        CHECK(tri3.grads[q][0][0] == -1.0);
        CHECK(tri3.grads[q][0][1] == -1.0);
        CHECK(tri3.grads[q][1][0] == 1.0);
        CHECK(tri3.grads[q][1][1] == 0.0);
        CHECK(tri3.grads[q][2][0] == 0.0);
        CHECK(tri3.grads[q][2][1] == 1.0);
    }

    const BasisTable& tet4 = tabulate_basis(ElementType::Tet4, PrecisionLevel::FP64);
    CHECK(tet4.n_points == 4);
    for (int q = 0; q < 4; ++q) {
        for (int d = 0; d < 3; ++d) {
            CHECK(tet4.grads[q][0][static_cast<size_t>(d)] == -1.0);
            CHECK(tet4.grads[q][1 + d][static_cast<size_t>(d)] == 1.0);
        }
    }

    // HEX8 at BF16: every entry equals the rounded fp64 tabulation.
    const BasisTable& hex64 = tabulate_basis(ElementType::Hex8, PrecisionLevel::FP64);
    const BasisTable& hex16 = tabulate_basis(ElementType::Hex8, PrecisionLevel::BF16);
    for (int q = 0; q < 8; ++q) {
        for (int b = 0; b < 8; ++b) {
            for (int d = 0; d < 3; ++d) {
                CHECK(hex16.grads[q][b][static_cast<size_t>(d)] ==
                      oracle::round_to(hex64.grads[q][b][static_cast<size_t>(d)],
                                       PrecisionLevel::BF16));
            }
        }
    }
}

TEST_CASE("geometry tensor: identity and scaled triangles") {
    const auto g1 = geometry_tensor(tri(0, 0, 1, 0, 0, 1), PrecisionLevel::FP64);
    REQUIRE(g1.n_points == 3);
    double weight_sum = 0.0;
    for (int q = 0; q < 3; ++q) {
        const double* c = g1.block(q, q);
        REQUIRE(c != nullptr);
        CHECK(c[0] == doctest::Approx(c[3]).epsilon(1e-15));
        CHECK(c[1] == doctest::Approx(0.0).epsilon(1e-15));
        weight_sum += c[0];
        CHECK(g1.block(q, (q + 1) % 3) == nullptr);  // quadrature-diagonal
    }
    CHECK(weight_sum == doctest::Approx(0.5).epsilon(1e-15));  // reference area

    // Uniform scaling cancels in 2D: C = w * coeff * I.
    const double h = 7.5;
    const auto g2 = geometry_tensor(tri(0, 0, h, 0, 0, h, 3.0), PrecisionLevel::FP64);
    for (int q = 0; q < 3; ++q) {
        const double* c = g2.block(q, q);
        CHECK(c[0] == doctest::Approx(3.0 / 6.0).epsilon(1e-14));
        CHECK(c[1] == doctest::Approx(0.0).epsilon(1e-14));
    }
}

TEST_CASE("geometry tensor matches the adjugate-inverse oracle on random tets") {
    Rng rng(22);
    for (int trial = 0; trial < 200; ++trial) {
        double j[3][3];
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                j[r][c] = (r == c ? 1.0 : 0.0) + 0.3 * rng.uniform_real(-1.0, 1.0);
            }
        }
        const double det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) -
                           j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
                           j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
        if (det <= 0.1) continue;

        const double coeff = 2.5;
        const auto g = geometry_tensor(affine_tet(j, coeff), PrecisionLevel::FP64);

        double inv[9];
        double flat[9] = {j[0][0], j[0][1], j[0][2], j[1][0], j[1][1],
                          j[1][2], j[2][0], j[2][1], j[2][2]};
        oracle::adjugate_inverse(flat, 3, inv);
        for (int q = 0; q < 4; ++q) {
            const double* c = g.block(q, q);
            for (int a = 0; a < 3; ++a) {
                for (int b = 0; b < 3; ++b) {
                    double gab = 0.0;
                    for (int k = 0; k < 3; ++k) gab += inv[a * 3 + k] * inv[b * 3 + k];
                    const double expected = (1.0 / 24.0) * det * coeff * gab;
                    CHECK(c[a * 3 + b] ==
                          doctest::Approx(expected).epsilon(1e-12).scale(std::fabs(expected) +
                                                                         1.0));
                }
            }
        }
    }
}

TEST_CASE("unit right triangle stiffness matches the symbolic oracle") {
    const ElementGeometry g = tri(0, 0, 1, 0, 0, 1);
    const ElementMatrix em = reference_assembly(g);
    const double expected[9] = {1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5};
    for (int i = 0; i < 9; ++i) {
        CHECK(std::fabs(em.a[static_cast<size_t>(i)] - expected[i]) <= 1e-15);
    }

    // The nodal-coordinate oracle agrees (and on random triangles too).
    const auto sym = oracle::p1_stiffness_tri3({{{0, 0}, {1, 0}, {0, 1}}}, 1.0);
    for (int i = 0; i < 9; ++i) {
        CHECK(std::fabs(em.a[static_cast<size_t>(i)] - sym[static_cast<size_t>(i)]) <= 1e-15);
    }

    Rng rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        const double x1 = rng.uniform_real(0.5, 2.0);
        const double y2 = rng.uniform_real(0.5, 2.0);
        const double x2 = rng.uniform_real(-0.5, 0.5);
        const double y1 = rng.uniform_real(-0.4, 0.4);
        const double coeff = rng.uniform_real(0.1, 5.0);
        const ElementGeometry rt = tri(0, 0, x1, y1, x2, y2, coeff);
        if ((x1 - 0.0) * (y2 - 0.0) - (x2 - 0.0) * (y1 - 0.0) <= 0.05) continue;
        const ElementMatrix em2 = reference_assembly(rt);
        const auto sym2 =
            oracle::p1_stiffness_tri3({{{0, 0}, {x1, y1}, {x2, y2}}}, coeff);
        for (int i = 0; i < 9; ++i) {
            CHECK(em2.a[static_cast<size_t>(i)] ==
                  doctest::Approx(sym2[static_cast<size_t>(i)]).epsilon(1e-13).scale(1.0));
        }
    }
}

TEST_CASE("tet stiffness matches the symbolic oracle") {
    Rng rng(24);
    for (int trial = 0; trial < 100; ++trial) {
        double j[3][3];
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                j[r][c] = (r == c ? 1.0 : 0.0) + 0.3 * rng.uniform_real(-1.0, 1.0);
            }
        }
        const double det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) -
                           j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
                           j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
        if (det <= 0.1) continue;
        const ElementGeometry g = affine_tet(j, 1.5);
        std::array<std::array<double, 3>, 4> pts{};
        for (int b = 0; b < 4; ++b) {
            for (int d = 0; d < 3; ++d) {
                pts[static_cast<size_t>(b)][static_cast<size_t>(d)] =
                    g.coords[static_cast<size_t>(b)][static_cast<size_t>(d)];
            }
        }
        const ElementMatrix em = reference_assembly(g);
        const auto sym = oracle::p1_stiffness_tet4(pts, 1.5);
        for (int i = 0; i < 16; ++i) {
            CHECK(em.a[static_cast<size_t>(i)] ==
                  doctest::Approx(sym[static_cast<size_t>(i)]).epsilon(1e-12).scale(1.0));
        }
    }
}

TEST_CASE("assembly edge cases") {
    // Zero coefficient annihilates the matrix exactly.
    const ElementMatrix zero = reference_assembly(tri(0, 0, 1, 0, 0, 1, 0.0));
    for (double v : zero.a) CHECK(v == 0.0);

    // Determinism: identical config, bit-identical result.
    AssemblyOptions options;
    options.config = kConfigBf16Mixed;
    const ElementMatrix a = assemble_element(tri(0, 0, 1.3, 0.1, 0.2, 0.9), options);
    const ElementMatrix b = assemble_element(tri(0, 0, 1.3, 0.1, 0.2, 0.9), options);
    CHECK(a.a == b.a);
    CHECK(a.macs == b.macs);

    // 2D stiffness is scale invariant.
    const ElementMatrix small = reference_assembly(tri(0, 0, 1.1, 0.2, 0.3, 0.8));
    const ElementMatrix big = reference_assembly(tri(0, 0, 5.5, 1.0, 1.5, 4.0));
    for (int i = 0; i < 9; ++i) {
        CHECK(big.a[static_cast<size_t>(i)] ==
              doctest::Approx(small.a[static_cast<size_t>(i)]).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("symmetry and kernel invariants across the fixture suite") {
    for (const ElementType type :
         {ElementType::Tri3, ElementType::Tet4, ElementType::Hex8}) {
        const Mesh mesh = generate_synthetic_mesh(25, 1.0, 40.0, type, 91);
        for (size_t i = 0; i < mesh.element_count(); ++i) {
            const ElementGeometry g = element_geometry(mesh, i);

            // Symmetric accumulation (default): exact symmetry.
            const ElementMatrix sym = reference_assembly(g);
            const int n = sym.n;
            for (int r = 0; r < n; ++r) {
                for (int c = 0; c < n; ++c) {
                    CHECK(sym.at(r, c) == sym.at(c, r));
                }
            }

            // Full accumulation: symmetry within 1e-12 * max|A|.
            AssemblyOptions full;
            full.symmetric_accumulation = false;
            const ElementMatrix asym = assemble_element(g, full);
            const double scale = max_abs(asym.a);
            for (int r = 0; r < n; ++r) {
                for (int c = 0; c < n; ++c) {
                    CHECK(std::fabs(asym.at(r, c) - asym.at(c, r)) <= 1e-12 * scale);
                }
                double row_sum = 0.0;
                for (int c = 0; c < n; ++c) row_sum += sym.at(r, c);
                CHECK(std::fabs(row_sum) <= 1e-10 * scale);  // constants in the kernel
            }
        }
    }
}

TEST_CASE("precision dominance on the fixture suite") {
    const Mesh mesh = generate_synthetic_mesh(40, 1.0, 30.0, ElementType::Tri3, 92);
    for (size_t i = 0; i < mesh.element_count(); ++i) {
        const ElementGeometry g = element_geometry(mesh, i);
        const ElementMatrix ref = reference_assembly(g);

        auto error_at = [&](PrecisionLevel level) {
            AssemblyOptions options;
            options.config = PrecisionConfig{level, level, level, level};
            return element_l2_error(assemble_element(g, options), ref);
        };
        const double e64 = error_at(PrecisionLevel::FP64);
        const double e32 = error_at(PrecisionLevel::FP32);
        const double e16 = error_at(PrecisionLevel::BF16);
        CHECK(e64 <= e32 + 1e-18);
        CHECK(e32 <= e16 + 1e-12);
    }
}

TEST_CASE("kappa / bf16-error rank correlation is positive") {
    const Mesh mesh = generate_synthetic_mesh(120, 1.0, 1000.0, ElementType::Tri3, 93);
    std::vector<double> kappas, errors;
    for (size_t i = 0; i < mesh.element_count(); ++i) {
        const ElementGeometry g = element_geometry(mesh, i);
        const double kappa = condition_number(g);
        AssemblyOptions options;
        options.config = kConfigBf16Mixed;
        const double err = element_l2_error(assemble_element(g, options),
                                            reference_assembly(g));
        kappas.push_back(kappa);
        errors.push_back(err);
    }
    CHECK(oracle::spearman(kappas, errors) > 0.5);
}

TEST_CASE("element_l2_error") {
    const ElementMatrix a = reference_assembly(tri(0, 0, 1, 0, 0, 1));
    CHECK(element_l2_error(a, a) == 0.0);

    ElementMatrix doubled = a;
    for (auto& v : doubled.a) v *= 2.0;
    CHECK(element_l2_error(doubled, a) == doctest::Approx(1.0).epsilon(1e-15));

    // Random perturbation vs the naive double-loop norm oracle.
    Rng rng(25);
    ElementMatrix noisy = a;
    for (auto& v : noisy.a) v += rng.uniform_real(-0.01, 0.01);
    double diff2 = 0.0, ref2 = 0.0;
    for (size_t i = 0; i < a.a.size(); ++i) {
        diff2 += (noisy.a[i] - a.a[i]) * (noisy.a[i] - a.a[i]);
        ref2 += a.a[i] * a.a[i];
    }
    CHECK(element_l2_error(noisy, a) ==
          doctest::Approx(std::sqrt(diff2) / std::sqrt(ref2)).epsilon(1e-12));

    ElementMatrix wrong_shape = reference_assembly(reference_tet());
    CHECK_THROWS_AS((void)element_l2_error(noisy, wrong_shape), Error);
}

}  // TEST_SUITE
