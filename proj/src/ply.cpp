#include <cstring>
#include <fstream>
#include <sstream>

#include "svt/errors.hpp"
#include "svt/mesh.hpp"

namespace svt {

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("ply: truncated payload");
    return v;
}

}  // namespace

void export_ply(std::ostream& os, const TriangleMesh& mesh) {
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "element vertex " << mesh.vertices.size() << "\n";
    os << "property float x\nproperty float y\nproperty float z\n";
    os << "element face " << mesh.triangles.size() << "\n";
    os << "property list uchar uint vertex_indices\n";
    os << "end_header\n";
    for (const auto& v : mesh.vertices) {
        put(os, static_cast<float>(v[0]));
        put(os, static_cast<float>(v[1]));
        put(os, static_cast<float>(v[2]));
    }
    for (const auto& t : mesh.triangles) {
        put<uint8_t>(os, 3);
        put(os, t[0]);
        put(os, t[1]);
        put(os, t[2]);
    }
    if (!os) throw IoError("ply: write failed");
}

TriangleMesh import_ply(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "ply") throw IoError("ply: bad magic");
    size_t n_vertices = 0, n_faces = 0;
    bool binary_le = false;
    std::string element;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            binary_le = (fmt == "binary_little_endian");
        } else if (tok == "element") {
            ls >> element;
            if (element == "vertex")
                ls >> n_vertices;
            else if (element == "face")
                ls >> n_faces;
            else
                throw IoError("ply: unsupported element " + element);
        } else if (tok == "end_header") {
            break;
        } else if (tok == "comment" || tok == "property") {
            continue;
        } else {
            throw IoError("ply: unexpected header line: " + line);
        }
    }
    if (!binary_le) throw IoError("ply: only binary little-endian files are supported");

    TriangleMesh mesh;
    mesh.vertices.reserve(n_vertices);
    for (size_t i = 0; i < n_vertices; ++i) {
        const double x = get<float>(is);
        const double y = get<float>(is);
        const double z = get<float>(is);
        mesh.vertices.push_back({x, y, z});
    }
    mesh.triangles.reserve(n_faces);
    for (size_t i = 0; i < n_faces; ++i) {
        const uint8_t count = get<uint8_t>(is);
        if (count != 3) throw IoError("ply: non-triangle face");
        const uint32_t a = get<uint32_t>(is);
        const uint32_t b = get<uint32_t>(is);
        const uint32_t c = get<uint32_t>(is);
        mesh.triangles.push_back({a, b, c});
    }
    mesh.validate();
    return mesh;
}

void save_ply_file(const std::string& path, const TriangleMesh& mesh) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("ply: cannot open " + path + " for writing");
    export_ply(f, mesh);
}

TriangleMesh load_ply_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("ply: cannot open " + path);
    return import_ply(f);
}

void export_xyz(std::ostream& os, const std::vector<std::array<double, 3>>& points) {
    os.precision(9);
    for (const auto& p : points) os << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
    if (!os) throw IoError("xyz: write failed");
}

}  // namespace svt
