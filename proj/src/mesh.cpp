#include "mgua/mesh.hpp"

#include <nlohmann/json.hpp>

#include "mgua/error.hpp"
#include "mgua/fem.hpp"

namespace mgua {

using nlohmann::json;
using nlohmann::ordered_json;

int nodes_per_element(ElementType type) {
    switch (type) {
        case ElementType::Tri3: return 3;
        case ElementType::Tet4: return 4;
        case ElementType::Hex8: return 8;
    }
    return 0;
}

int quad_point_count(ElementType type) {
    switch (type) {
        case ElementType::Tri3: return 3;
        case ElementType::Tet4: return 4;
        case ElementType::Hex8: return 8;
    }
    return 0;
}

int element_dimension(ElementType type) {
    return type == ElementType::Tri3 ? 2 : 3;
}

std::string element_type_token(ElementType type) {
    switch (type) {
        case ElementType::Tri3: return "tri3";
        case ElementType::Tet4: return "tet4";
        case ElementType::Hex8: return "hex8";
    }
    return "tri3";
}

std::optional<ElementType> element_type_from_token(std::string_view token) {
    if (token == "tri3") return ElementType::Tri3;
    if (token == "tet4") return ElementType::Tet4;
    if (token == "hex8") return ElementType::Hex8;
    return std::nullopt;
}

ElementGeometry element_geometry(const Mesh& mesh, size_t element_index) {
    const MeshElement& el = mesh.elements.at(element_index);
    ElementGeometry geom;
    geom.type = el.type;
    geom.dim = element_dimension(el.type);
    geom.coeff = el.coeff;
    for (size_t i = 0; i < el.nodes.size(); ++i) {
        geom.coords[i] = mesh.nodes[static_cast<size_t>(el.nodes[i])];
    }
    return geom;
}

namespace {

const json* find_key(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double require_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw_parse("expected number at " + path);
    return v.get<double>();
}

int require_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw_parse("expected integer at " + path);
    return v.get<int>();
}

}  // namespace

Mesh parse_mesh(const std::string& json_text) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) throw_parse("malformed JSON at $");
    if (!doc.is_object()) throw_parse("expected object at $");

    Mesh mesh;

    const json* nodes = find_key(doc, "nodes");
    if (!nodes) throw_parse("missing required key at $.nodes");
    if (!nodes->is_array() || nodes->empty()) throw_parse("expected non-empty array at $.nodes");
    size_t coord_count = 0;
    for (size_t i = 0; i < nodes->size(); ++i) {
        const json& node = (*nodes)[i];
        const std::string path = "$.nodes[" + std::to_string(i) + "]";
        if (!node.is_array() || (node.size() != 2 && node.size() != 3)) {
            throw_parse("expected [x,y] or [x,y,z] at " + path);
        }
        if (i == 0) {
            coord_count = node.size();
            mesh.dim = static_cast<int>(coord_count);
        } else if (node.size() != coord_count) {
            throw_parse("inconsistent coordinate count at " + path);
        }
        std::array<double, 3> p{0.0, 0.0, 0.0};
        for (size_t d = 0; d < node.size(); ++d) {
            p[d] = require_number(node[d], path + "[" + std::to_string(d) + "]");
        }
        mesh.nodes.push_back(p);
    }

    if (const json* mat = find_key(doc, "material_properties")) {
        if (!mat->is_object()) throw_parse("expected object at $.material_properties");
        if (const json* c = find_key(*mat, "default_coeff")) {
            mesh.default_coeff = require_number(*c, "$.material_properties.default_coeff");
        }
    }

    const json* elements = find_key(doc, "elements");
    if (!elements) throw_parse("missing required key at $.elements");
    if (!elements->is_array() || elements->empty()) {
        throw_parse("expected non-empty array at $.elements");
    }
    for (size_t i = 0; i < elements->size(); ++i) {
        const json& el = (*elements)[i];
        const std::string path = "$.elements[" + std::to_string(i) + "]";
        if (!el.is_object()) throw_parse("expected object at " + path);

        const json* type = find_key(el, "type");
        if (!type) throw_parse("missing required key at " + path + ".type");
        if (!type->is_string()) throw_parse("expected string at " + path + ".type");
        const auto etype = element_type_from_token(type->get<std::string>());
        if (!etype) {
            throw_parse("unknown element type '" + type->get<std::string>() + "' at " + path +
                        ".type");
        }

        const json* enodes = find_key(el, "nodes");
        if (!enodes) throw_parse("missing required key at " + path + ".nodes");
        if (!enodes->is_array()) throw_parse("expected array at " + path + ".nodes");

        MeshElement element;
        element.type = *etype;
        element.coeff = mesh.default_coeff;
        if (const json* c = find_key(el, "coeff")) {
            element.coeff = require_number(*c, path + ".coeff");
        }

        const int expected = nodes_per_element(*etype);
        if (static_cast<int>(enodes->size()) != expected) {
            throw_validation("element " + std::to_string(i) + " expects " +
                             std::to_string(expected) + " nodes, got " +
                             std::to_string(enodes->size()));
        }
        if (element_dimension(*etype) != mesh.dim) {
            throw_validation("element " + std::to_string(i) + " type " +
                             element_type_token(*etype) + " requires " +
                             std::to_string(element_dimension(*etype)) + "D nodes, mesh is " +
                             std::to_string(mesh.dim) + "D");
        }
        for (size_t k = 0; k < enodes->size(); ++k) {
            const int idx =
                require_int((*enodes)[k], path + ".nodes[" + std::to_string(k) + "]");
            if (idx < 0 || idx >= static_cast<int>(mesh.nodes.size())) {
                throw_validation("element " + std::to_string(i) + " node index " +
                                 std::to_string(idx) + " out of range [0, " +
                                 std::to_string(mesh.nodes.size()) + ")");
            }
            element.nodes.push_back(idx);
        }
        mesh.elements.push_back(std::move(element));
    }

    if (const json* bcs = find_key(doc, "boundary_conditions")) {
        if (!bcs->is_array()) throw_parse("expected array at $.boundary_conditions");
        for (size_t i = 0; i < bcs->size(); ++i) {
            const json& bc = (*bcs)[i];
            const std::string path = "$.boundary_conditions[" + std::to_string(i) + "]";
            if (!bc.is_object()) throw_parse("expected object at " + path);
            const json* node = find_key(bc, "node");
            const json* value = find_key(bc, "value");
            if (!node) throw_parse("missing required key at " + path + ".node");
            if (!value) throw_parse("missing required key at " + path + ".value");
            const int idx = require_int(*node, path + ".node");
            if (idx < 0 || idx >= static_cast<int>(mesh.nodes.size())) {
                throw_validation("boundary condition " + std::to_string(i) + " node index " +
                                 std::to_string(idx) + " out of range [0, " +
                                 std::to_string(mesh.nodes.size()) + ")");
            }
            mesh.boundary_conditions.push_back({idx, require_number(*value, path + ".value")});
        }
    }

    // Geometry check: positive Jacobian determinant at every quadrature point.
    // condition_number walks all points and rejects singular/inverted maps.
    for (size_t i = 0; i < mesh.elements.size(); ++i) {
        try {
            (void)condition_number(element_geometry(mesh, i));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Geometry) {
                throw_geometry("element " + std::to_string(i) + ": " + e.what());
            }
            throw;
        }
    }

    return mesh;
}

std::string mesh_to_json(const Mesh& mesh) {
    ordered_json doc;
    doc["nodes"] = json::array();
    for (const auto& p : mesh.nodes) {
        json node = json::array();
        for (int d = 0; d < mesh.dim; ++d) node.push_back(p[static_cast<size_t>(d)]);
        doc["nodes"].push_back(node);
    }
    doc["elements"] = json::array();
    for (const auto& el : mesh.elements) {
        ordered_json e;
        e["type"] = element_type_token(el.type);
        e["nodes"] = el.nodes;
        e["coeff"] = el.coeff;
        doc["elements"].push_back(e);
    }
    doc["boundary_conditions"] = json::array();
    for (const auto& bc : mesh.boundary_conditions) {
        doc["boundary_conditions"].push_back({{"node", bc.node}, {"value", bc.value}});
    }
    doc["material_properties"] = {{"default_coeff", mesh.default_coeff}};
    return doc.dump(2) + "\n";
}

}  // namespace mgua
