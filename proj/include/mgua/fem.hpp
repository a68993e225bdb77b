#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mgua/mesh.hpp"
#include "mgua/precision.hpp"

namespace mgua {

// Reference-element basis gradients tabulated at every quadrature point,
// entries rounded to u_p. Geometry independent, cached per (type, level).
struct BasisTable {
    ElementType type;
    PrecisionLevel level;
    int n_basis;
    int n_points;
    int dim;
    // grads[q][b][d]; fixed-capacity slots, only the leading entries used.
    std::array<std::array<std::array<double, 3>, 8>, 8> grads;
    std::array<double, 8> weights;  // exact fp64 quadrature weights
};

const BasisTable& tabulate_basis(ElementType type, PrecisionLevel u_p);

// Per-quadrature-point dim x dim blocks C_s = w_s * detJ_s * coeff *
// (J_s^-1 J_s^-T), every elementary operation rounded at u_m. The assembly
// sum runs over a general (s, t) pair; for quadrature-based diffusion the
// cross blocks vanish, so block(s, t) yields nullptr for s != t and the loop
// skips them. Forms with cross coupling would populate the off-diagonal.
struct GeometryTensor {
    int n_points = 0;
    int dim = 0;
    std::vector<std::array<double, 9>> diag;  // row-major dim x dim per point
    uint64_t ops = 0;                         // rounded u_m operations

    const double* block(int s, int t) const {
        return s == t ? diag[static_cast<size_t>(s)].data() : nullptr;
    }
};

GeometryTensor geometry_tensor(const ElementGeometry& elem, PrecisionLevel u_m);

// kappa = sigma_max(J) / sigma_min(J) of the element Jacobian (mean over
// quadrature points for HEX8), computed in fp64. Throws a geometry error on
// singular J.
double condition_number(const ElementGeometry& elem);

struct AssemblyOptions {
    PrecisionConfig config = kConfigAllFp64;
    bool symmetric_accumulation = true;  // build upper triangle, mirror
    bool fused = false;                  // fuse the u_q multiply-add
};

struct ElementMatrix {
    int element_id = -1;
    int n = 0;                // basis functions per element
    std::vector<double> a;    // n x n row-major, entries u_s-rounded
    double kappa = 1.0;
    PrecisionConfig config = kConfigAllFp64;
    uint64_t macs = 0;          // u_q multiply-accumulates
    uint64_t geometry_ops = 0;  // u_m rounded operations

    double at(int i, int j) const { return a[static_cast<size_t>(i) * n + j]; }
};

// Core assembly A = sum_s sum_t B_s C_st B_t^T with every multiply and
// accumulate rounded at u_q and final entries rounded to u_s.
ElementMatrix assemble_element(const BasisTable& basis, const GeometryTensor& geometry,
                               PrecisionLevel u_q, PrecisionLevel u_s,
                               const AssemblyOptions& options);

// Convenience path: tabulate + geometry + assemble for one element.
ElementMatrix assemble_element(const ElementGeometry& elem, const AssemblyOptions& options,
                               int element_id = -1);

// fp64 ground truth: assemble_element under the all-FP64 config.
ElementMatrix reference_assembly(const ElementGeometry& elem, int element_id = -1);

// Relative Frobenius error ||A - A_ref||_F / ||A_ref||_F; 0 when both zero.
double element_l2_error(std::span<const double> a, std::span<const double> a_ref);
double element_l2_error(const ElementMatrix& a, const ElementMatrix& a_ref);

}  // namespace mgua
