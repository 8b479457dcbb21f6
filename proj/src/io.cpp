#include "pcunet/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pcunet::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace fs = std::filesystem;

namespace {

enum class ElementType { Float32, Float64, UInt8, Int16, UInt16, Int32 };

std::size_t element_size(ElementType t) {
    switch (t) {
        case ElementType::Float32: return 4;
        case ElementType::Float64: return 8;
        case ElementType::UInt8: return 1;
        case ElementType::Int16: return 2;
        case ElementType::UInt16: return 2;
        case ElementType::Int32: return 4;
    }
    return 1;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& field) {
    double v = 0.0;
    auto* first = s.data();
    if (!s.empty() && s.front() == '+') ++first;
    auto res = std::from_chars(first, s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ParseError("cannot parse number '" + std::string(s) + "' in field " + field);
    }
    return v;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower_ext(const fs::path& p) {
    auto e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

// Raw bytes plus everything needed to interpret them.
struct RawVolume {
    GridGeometry geometry;
    ElementType type = ElementType::Float32;
    std::vector<char> bytes;
};

void validate_geometry_fields(const GridGeometry& g) {
    for (int a = 0; a < 3; ++a) {
        if (g.shape[a] < 1) throw ParseError("field DimSize/shape: components must be >= 1");
        if (!(g.spacing[a] > 0.0) || !std::isfinite(g.spacing[a])) {
            throw ParseError("field ElementSpacing/spacing: components must be finite and > 0");
        }
        if (!std::isfinite(g.origin[a])) throw ParseError("field Offset/origin: non-finite");
    }
}

AnyVolume to_volume(RawVolume raw) {
    const std::size_t n = raw.geometry.voxel_count();
    if (raw.bytes.size() != n * element_size(raw.type)) {
        throw ParseError("data size " + std::to_string(raw.bytes.size()) + " bytes does not match " +
                         std::to_string(n) + " voxels");
    }
    if (raw.type == ElementType::UInt8) {
        std::vector<std::uint8_t> v(n);
        std::memcpy(v.data(), raw.bytes.data(), n);
        if (std::all_of(v.begin(), v.end(), [](std::uint8_t x) { return x <= 1; })) {
            return MaskVolume(raw.geometry, std::move(v));
        }
        return VoxelVolume(raw.geometry, std::vector<float>(v.begin(), v.end()));
    }
    std::vector<float> out(n);
    auto convert = [&]<typename T>(T) {
        std::vector<T> tmp(n);
        std::memcpy(tmp.data(), raw.bytes.data(), n * sizeof(T));
        std::transform(tmp.begin(), tmp.end(), out.begin(), [](T x) { return static_cast<float>(x); });
    };
    switch (raw.type) {
        case ElementType::Float32: convert(float{}); break;
        case ElementType::Float64: convert(double{}); break;
        case ElementType::Int16: convert(std::int16_t{}); break;
        case ElementType::UInt16: convert(std::uint16_t{}); break;
        case ElementType::Int32: convert(std::int32_t{}); break;
        case ElementType::UInt8: break;
    }
    if (!std::all_of(out.begin(), out.end(), [](float x) { return std::isfinite(x); })) {
        throw ParseError("volume data contains non-finite values");
    }
    return VoxelVolume(raw.geometry, std::move(out));
}

std::vector<char> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ElementType parse_meta_type(const std::string& s) {
    static const std::map<std::string, ElementType> types{
        {"MET_FLOAT", ElementType::Float32}, {"MET_DOUBLE", ElementType::Float64},
        {"MET_UCHAR", ElementType::UInt8},   {"MET_SHORT", ElementType::Int16},
        {"MET_USHORT", ElementType::UInt16}, {"MET_INT", ElementType::Int32}};
    auto it = types.find(s);
    if (it == types.end()) throw ParseError("field ElementType: unsupported type '" + s + "'");
    return it->second;
}

Vec3 parse_vec3(const std::string& value, const std::string& field) {
    auto toks = split_ws(value);
    if (toks.size() != 3) throw ParseError("field " + field + ": expected 3 components");
    return {parse_double(toks[0], field), parse_double(toks[1], field), parse_double(toks[2], field)};
}

RawVolume read_metaimage(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::map<std::string, std::string> fields;
    std::string line;
    bool have_data_file = false;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (trim(line).empty()) continue;
            throw ParseError("malformed MetaImage header line: '" + line + "'");
        }
        const auto key = trim(line.substr(0, eq));
        fields[key] = trim(line.substr(eq + 1));
        if (key == "ElementDataFile") {
            have_data_file = true;
            break;
        }
    }
    if (!have_data_file) throw ParseError("field ElementDataFile: missing");

    auto get = [&](const std::string& key) -> const std::string& {
        auto it = fields.find(key);
        if (it == fields.end()) throw ParseError("field " + key + ": missing");
        return it->second;
    };

    if (get("NDims") != "3") throw ParseError("field NDims: only 3D volumes are supported");
    if (auto it = fields.find("CompressedData"); it != fields.end() && it->second == "True") {
        throw ParseError("field CompressedData: compressed MetaImage is not supported");
    }
    for (const char* key : {"BinaryDataByteOrderMSB", "ElementByteOrderMSB"}) {
        if (auto it = fields.find(key); it != fields.end() && it->second == "True") {
            throw ParseError(std::string("field ") + key + ": big-endian data is not supported");
        }
    }
    for (const char* key : {"TransformMatrix", "Orientation", "Rotation"}) {
        auto it = fields.find(key);
        if (it == fields.end()) continue;
        auto toks = split_ws(it->second);
        if (toks.size() != 9) throw ParseError(std::string("field ") + key + ": expected 9 values");
        for (int i = 0; i < 9; ++i) {
            const double expect = (i % 4 == 0) ? 1.0 : 0.0;
            if (std::abs(parse_double(toks[i], key) - expect) > 1e-9) {
                throw ParseError(std::string("field ") + key +
                                 ": rotated or oblique orientations are not supported");
            }
        }
    }

    RawVolume raw;
    auto dims = split_ws(get("DimSize"));
    if (dims.size() != 3) throw ParseError("field DimSize: expected 3 components");
    for (int a = 0; a < 3; ++a) {
        const double d = parse_double(dims[a], "DimSize");
        if (d != std::floor(d)) throw ParseError("field DimSize: non-integer size");
        raw.geometry.shape[a] = static_cast<std::int64_t>(d);
    }
    raw.geometry.spacing = fields.contains("ElementSpacing")
                               ? parse_vec3(fields["ElementSpacing"], "ElementSpacing")
                               : Vec3{1.0, 1.0, 1.0};
    const std::string origin_key = fields.contains("Offset") ? "Offset"
                                   : fields.contains("Origin") ? "Origin"
                                                               : "Position";
    raw.geometry.origin =
        fields.contains(origin_key) ? parse_vec3(fields[origin_key], origin_key) : Vec3{0, 0, 0};
    validate_geometry_fields(raw.geometry);
    raw.type = parse_meta_type(get("ElementType"));

    const std::size_t expected = raw.geometry.voxel_count() * element_size(raw.type);
    const auto& data_file = get("ElementDataFile");
    if (data_file == "LOCAL") {
        raw.bytes.resize(expected);
        in.read(raw.bytes.data(), static_cast<std::streamsize>(expected));
        if (static_cast<std::size_t>(in.gcount()) != expected) {
            throw ParseError("MetaImage data truncated: expected " + std::to_string(expected) +
                             " bytes");
        }
    } else {
        raw.bytes = read_file_bytes(path.parent_path() / data_file);
    }
    return raw;
}

RawVolume read_raw_with_sidecar(const fs::path& path) {
    auto sidecar = path;
    sidecar.replace_extension(".json");
    std::ifstream in(sidecar);
    if (!in) throw ParseError("missing JSON sidecar " + sidecar.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("sidecar " + sidecar.string() + ": " + e.what());
    }
    RawVolume raw;
    auto read3 = [&](const char* field) {
        if (!j.contains(field) || !j[field].is_array() || j[field].size() != 3) {
            throw ParseError(std::string("field ") + field + ": expected array of 3 numbers");
        }
        Vec3 v{};
        for (int a = 0; a < 3; ++a) {
            if (!j[field][a].is_number()) throw ParseError(std::string("field ") + field + ": not a number");
            v[a] = j[field][a].get<double>();
        }
        return v;
    };
    const Vec3 shape = read3("shape");
    for (int a = 0; a < 3; ++a) {
        if (shape[a] != std::floor(shape[a])) throw ParseError("field shape: non-integer size");
        raw.geometry.shape[a] = static_cast<std::int64_t>(shape[a]);
    }
    raw.geometry.spacing = read3("spacing");
    raw.geometry.origin = read3("origin");
    validate_geometry_fields(raw.geometry);
    const auto dtype = j.value("dtype", std::string{});
    if (dtype == "float32") {
        raw.type = ElementType::Float32;
    } else if (dtype == "uint8") {
        raw.type = ElementType::UInt8;
    } else {
        throw ParseError("field dtype: expected \"float32\" or \"uint8\", got \"" + dtype + "\"");
    }
    raw.bytes = read_file_bytes(path);
    return raw;
}

RawVolume read_any(const fs::path& path) {
    const auto ext = lower_ext(path);
    if (ext == ".mha" || ext == ".mhd") return read_metaimage(path);
    if (ext == ".raw") return read_raw_with_sidecar(path);
    throw ParseError("unsupported volume extension '" + ext + "' (use .mha, .mhd or .raw)");
}

void write_bytes(std::ostream& out, const void* data, std::size_t n, const fs::path& path) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw Error("write failed: " + path.string());
}

template <typename T>
void write_volume(const GridGeometry& g, std::span<const T> data, ElementType type,
                  const fs::path& path) {
    const auto ext = lower_ext(path);
    const std::size_t nbytes = data.size() * sizeof(T);
    auto vec_str = [](const Vec3& v) {
        return format_double(v[0]) + " " + format_double(v[1]) + " " + format_double(v[2]);
    };
    if (ext == ".mha" || ext == ".mhd") {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot open for writing: " + path.string());
        const bool local = ext == ".mha";
        auto raw_path = path;
        raw_path.replace_extension(".raw");
        out << "ObjectType = Image\n"
            << "NDims = 3\n"
            << "BinaryData = True\n"
            << "BinaryDataByteOrderMSB = False\n"
            << "CompressedData = False\n"
            << "TransformMatrix = 1 0 0 0 1 0 0 0 1\n"
            << "Offset = " << vec_str(g.origin) << "\n"
            << "ElementSpacing = " << vec_str(g.spacing) << "\n"
            << "DimSize = " << g.shape[0] << " " << g.shape[1] << " " << g.shape[2] << "\n"
            << "ElementType = " << (type == ElementType::UInt8 ? "MET_UCHAR" : "MET_FLOAT") << "\n"
            << "ElementDataFile = " << (local ? std::string("LOCAL") : raw_path.filename().string())
            << "\n";
        if (local) {
            write_bytes(out, data.data(), nbytes, path);
        } else {
            std::ofstream rout(raw_path, std::ios::binary);
            if (!rout) throw Error("cannot open for writing: " + raw_path.string());
            write_bytes(rout, data.data(), nbytes, raw_path);
        }
        return;
    }
    if (ext == ".raw") {
        nlohmann::json j;
        j["shape"] = {g.shape[0], g.shape[1], g.shape[2]};
        j["spacing"] = {g.spacing[0], g.spacing[1], g.spacing[2]};
        j["origin"] = {g.origin[0], g.origin[1], g.origin[2]};
        j["dtype"] = type == ElementType::UInt8 ? "uint8" : "float32";
        auto sidecar = path;
        sidecar.replace_extension(".json");
        std::ofstream jout(sidecar);
        if (!jout) throw Error("cannot open for writing: " + sidecar.string());
        jout << j.dump(2) << "\n";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot open for writing: " + path.string());
        write_bytes(out, data.data(), nbytes, path);
        return;
    }
    throw Error("unsupported volume extension '" + ext + "' (use .mha, .mhd or .raw)");
}

}  // namespace

AnyVolume load_volume(const fs::path& path) { return to_volume(read_any(path)); }

VoxelVolume load_image(const fs::path& path) {
    auto v = load_volume(path);
    if (auto* img = std::get_if<VoxelVolume>(&v)) return std::move(*img);
    const auto& m = std::get<MaskVolume>(v);
    return VoxelVolume(m.geometry(), std::vector<float>(m.data().begin(), m.data().end()));
}

MaskVolume load_mask(const fs::path& path) {
    auto v = load_volume(path);
    if (auto* m = std::get_if<MaskVolume>(&v)) return std::move(*m);
    throw ParseError(path.string() + ": mask must be uint8 with values in {0,1}");
}

void save_volume(const VoxelVolume& volume, const fs::path& path) {
    write_volume(volume.geometry(), volume.data(), ElementType::Float32, path);
}

void save_volume(const MaskVolume& mask, const fs::path& path) {
    write_volume(mask.geometry(), mask.data(), ElementType::UInt8, path);
}

PointCloud load_cloud(const fs::path& path) {
    const auto ext = lower_ext(path);
    std::vector<Vec3> pts;
    if (ext == ".pcu") {
        const auto bytes = read_file_bytes(path);
        if (bytes.size() < 16 || std::memcmp(bytes.data(), "PCU1", 4) != 0) {
            throw ParseError(path.string() + ": missing PCU1 header");
        }
        std::uint32_t n = 0;
        std::memcpy(&n, bytes.data() + 4, 4);
        if (bytes.size() != 16 + static_cast<std::size_t>(n) * 12) {
            throw ParseError(path.string() + ": size does not match point count " + std::to_string(n));
        }
        pts.resize(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            float xyz[3];
            std::memcpy(xyz, bytes.data() + 16 + i * 12, 12);
            pts[i] = {xyz[0], xyz[1], xyz[2]};
        }
    } else if (ext == ".xyz" || ext == ".txt") {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open " + path.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto toks = split_ws(line);
            if (toks.empty()) continue;
            if (toks.size() != 3) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 'x y z'");
            }
            const std::string where = "point at line " + std::to_string(lineno);
            pts.push_back({parse_double(toks[0], where), parse_double(toks[1], where),
                           parse_double(toks[2], where)});
        }
    } else {
        throw ParseError("unsupported cloud extension '" + ext + "' (use .xyz, .txt or .pcu)");
    }
    if (pts.empty()) throw ParseError("cloud must contain >= 1 point");
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (double v : pts[i]) {
            if (!std::isfinite(v)) {
                throw ParseError(path.string() + ": non-finite coordinate in point " + std::to_string(i));
            }
        }
    }
    return PointCloud(std::move(pts));
}

void save_cloud(const PointCloud& cloud, const fs::path& path) {
    if (cloud.empty()) throw InvariantError("cloud must contain >= 1 point");
    const auto ext = lower_ext(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    if (ext == ".pcu") {
        const std::uint32_t header[4] = {0, static_cast<std::uint32_t>(cloud.size()), 0, 0};
        write_bytes(out, "PCU1", 4, path);
        write_bytes(out, &header[1], 12, path);
        for (const auto& p : cloud.points()) {
            const float xyz[3] = {static_cast<float>(p[0]), static_cast<float>(p[1]),
                                  static_cast<float>(p[2])};
            write_bytes(out, xyz, sizeof(xyz), path);
        }
    } else if (ext == ".xyz" || ext == ".txt") {
        for (const auto& p : cloud.points()) {
            out << format_double(p[0]) << ' ' << format_double(p[1]) << ' ' << format_double(p[2])
                << '\n';
        }
        if (!out) throw Error("write failed: " + path.string());
    } else {
        throw Error("unsupported cloud extension '" + ext + "' (use .xyz, .txt or .pcu)");
    }
}

void save_mesh_obj(const TriangleMesh& mesh, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    for (const auto& v : mesh.vertices()) {
        out << "v " << format_double(v[0]) << ' ' << format_double(v[1]) << ' ' << format_double(v[2])
            << '\n';
    }
    for (const auto& f : mesh.faces()) {
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
    if (!out) throw Error("write failed: " + path.string());
}

TriangleMesh load_mesh_obj(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<Vec3> verts;
    std::vector<Face> faces;
    std::string line;
    while (std::getline(in, line)) {
        auto toks = split_ws(line);
        if (toks.empty() || toks[0].starts_with('#')) continue;
        if (toks[0] == "v" && toks.size() >= 4) {
            verts.push_back({parse_double(toks[1], "v"), parse_double(toks[2], "v"),
                             parse_double(toks[3], "v")});
        } else if (toks[0] == "f" && toks.size() == 4) {
            Face f{};
            for (int k = 0; k < 3; ++k) {
                // "i", "i/t" and "i/t/n" all start with the vertex index.
                const auto idx = parse_double(toks[k + 1].substr(0, toks[k + 1].find('/')), "f");
                if (idx < 1) throw ParseError("OBJ face index must be >= 1");
                f[k] = static_cast<std::uint32_t>(idx) - 1;
            }
            faces.push_back(f);
        }
    }
    try {
        return TriangleMesh(std::move(verts), std::move(faces));
    } catch (const InvariantError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace pcunet::io
