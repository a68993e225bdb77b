#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mgua {

enum class ElementType : uint8_t { Tri3 = 0, Tet4 = 1, Hex8 = 2 };

int nodes_per_element(ElementType type);  // 3, 4, 8
int quad_point_count(ElementType type);   // 3, 4, 8
int element_dimension(ElementType type);  // 2, 3, 3

std::string element_type_token(ElementType type);  // "tri3", "tet4", "hex8"
std::optional<ElementType> element_type_from_token(std::string_view token);

struct MeshElement {
    ElementType type;
    std::vector<int> nodes;
    double coeff = 1.0;  // scalar diffusion coefficient
};

struct BoundaryCondition {
    int node;
    double value;
};

struct Mesh {
    int dim = 2;  // 2 or 3; every node has this many coordinates
    std::vector<std::array<double, 3>> nodes;  // z unused when dim == 2
    std::vector<MeshElement> elements;
    std::vector<BoundaryCondition> boundary_conditions;  // carried as metadata
    double default_coeff = 1.0;

    size_t element_count() const { return elements.size(); }
};

// The per-element view assembly works on: node coordinates gathered in
// element-local order.
struct ElementGeometry {
    ElementType type;
    int dim;
    std::array<std::array<double, 3>, 8> coords;
    double coeff = 1.0;
};

ElementGeometry element_geometry(const Mesh& mesh, size_t element_index);

// Parse + validate a mesh JSON document. Schema violations name the offending
// path ($.nodes, $.elements[3].type, ...); out-of-range node indices are
// validation errors; a nonpositive Jacobian determinant at any quadrature
// point is a geometry error naming the element.
Mesh parse_mesh(const std::string& json_text);

std::string mesh_to_json(const Mesh& mesh);

}  // namespace mgua
