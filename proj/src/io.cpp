#include "cbctcad/io.hpp"

#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "cbctcad/errors.hpp"
#include "cbctcad/rng.hpp"

namespace cbctcad {
namespace {

namespace fs = std::filesystem;

// All raw payloads are little-endian float32; this code targets LE hosts.
static_assert(std::endian::native == std::endian::little,
              "raw volume IO assumes a little-endian host");

std::pair<fs::path, fs::path> volume_pair(const fs::path& path) {
    fs::path stem = path;
    if (stem.extension() == ".raw" || stem.extension() == ".json") {
        stem.replace_extension();
    }
    fs::path raw = stem;
    raw += ".raw";
    fs::path side = stem;
    side += ".json";
    return {raw, side};
}

void write_bytes(const fs::path& path, const void* data, std::size_t n) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) throw IoError("short write: " + path.string());
}

std::vector<char> read_bytes(const fs::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open for reading: " + path.string());
    const std::streamsize n = f.tellg();
    f.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(n));
    f.read(buf.data(), n);
    if (!f) throw IoError("short read: " + path.string());
    return buf;
}

constexpr char kModelMagic[4] = {'C', 'B', 'C', 'M'};
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

fs::path resolve_output_path(const fs::path& path) {
    if (path.is_absolute()) return path;
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
        return fs::path(root) / path;
    }
    return path;
}

void write_volume(const fs::path& path, const Volume& vol) {
    vol.validate();
    const auto [raw, side] = volume_pair(path);
    if (raw.has_parent_path()) fs::create_directories(raw.parent_path());
    write_bytes(raw, vol.data.data(), vol.data.size() * sizeof(float));
    Json j;
    j["dims"] = vol.dims;
    j["spacing_mm"] = vol.spacing_mm;
    j["origin_mm"] = vol.origin_mm;
    j["dtype"] = "float32";
    j["byte_order"] = "little";
    j["index_order"] = "x-fastest";
    j["raw_file"] = raw.filename().string();
    write_json_file(side, j);
}

Volume read_volume(const fs::path& path) {
    const auto [raw, side] = volume_pair(path);
    const Json j = read_json_file(side);
    Volume vol;
    try {
        vol.dims = j.at("dims").get<std::array<int, 3>>();
        vol.spacing_mm = j.at("spacing_mm").get<std::array<double, 3>>();
        vol.origin_mm = j.at("origin_mm").get<std::array<double, 3>>();
        if (j.at("dtype").get<std::string>() != "float32") {
            throw IoError("volume sidecar: unsupported dtype");
        }
    } catch (const Json::exception& e) {
        throw IoError("volume sidecar " + side.string() + ": " + e.what());
    }
    const auto bytes = read_bytes(raw);
    const std::size_t expected = static_cast<std::size_t>(vol.dims[0]) * vol.dims[1] *
                                 vol.dims[2] * sizeof(float);
    if (bytes.size() != expected) {
        throw IoError("volume " + raw.string() + ": expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(bytes.size()));
    }
    vol.data.resize(bytes.size() / sizeof(float));
    std::memcpy(vol.data.data(), bytes.data(), bytes.size());
    try {
        vol.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError("volume " + raw.string() + ": " + e.what());
    }
    return vol;
}

Json geometry_to_json(const ConeBeamGeometry& geom) {
    Json j;
    j["sod_mm"] = geom.sod_mm;
    j["oid_mm"] = geom.oid_mm;
    j["detector_mm"] = geom.detector_mm;
    j["detector_px"] = geom.detector_px;
    j["angles_deg"] = geom.angles_deg;
    return j;
}

ConeBeamGeometry geometry_from_json(const Json& j) {
    ConeBeamGeometry g;
    try {
        g.sod_mm = j.at("sod_mm").get<double>();
        g.oid_mm = j.at("oid_mm").get<double>();
        g.detector_mm = j.at("detector_mm").get<double>();
        g.detector_px = j.at("detector_px").get<int>();
        g.angles_deg = j.at("angles_deg").get<std::vector<double>>();
    } catch (const Json::exception& e) {
        throw IoError(std::string("geometry json: ") + e.what());
    }
    g.validate();
    return g;
}

void write_geometry(const fs::path& path, const ConeBeamGeometry& geom) {
    write_json_file(path, geometry_to_json(geom));
}

ConeBeamGeometry read_geometry(const fs::path& path) {
    return geometry_from_json(read_json_file(path));
}

void write_projections(const fs::path& path, const ProjectionSet& projections) {
    projections.validate();
    const auto [raw, side] = volume_pair(path);
    if (raw.has_parent_path()) fs::create_directories(raw.parent_path());
    std::ofstream f(raw, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + raw.string());
    for (const Image& v : projections.views) {
        f.write(reinterpret_cast<const char*>(v.data.data()),
                static_cast<std::streamsize>(v.data.size() * sizeof(float)));
    }
    if (!f) throw IoError("short write: " + raw.string());
    Json j;
    j["n_views"] = projections.views.size();
    j["detector_px"] = projections.geom.detector_px;
    j["dtype"] = "float32";
    j["byte_order"] = "little";
    j["layout"] = "view-major, row-major views";
    j["geometry"] = geometry_to_json(projections.geom);
    j["raw_file"] = raw.filename().string();
    write_json_file(side, j);
}

ProjectionSet read_projections(const fs::path& path) {
    const auto [raw, side] = volume_pair(path);
    const Json j = read_json_file(side);
    ProjectionSet set;
    std::size_t n_views = 0;
    try {
        set.geom = geometry_from_json(j.at("geometry"));
        n_views = j.at("n_views").get<std::size_t>();
    } catch (const Json::exception& e) {
        throw IoError("projections sidecar " + side.string() + ": " + e.what());
    }
    const int px = set.geom.detector_px;
    const auto bytes = read_bytes(raw);
    const std::size_t view_bytes = static_cast<std::size_t>(px) * px * sizeof(float);
    if (bytes.size() != n_views * view_bytes) {
        throw IoError("projections " + raw.string() + ": size mismatch");
    }
    set.views.assign(n_views, Image(px, px));
    for (std::size_t i = 0; i < n_views; ++i) {
        std::memcpy(set.views[i].data.data(), bytes.data() + i * view_bytes, view_bytes);
    }
    set.validate();
    return set;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
    Json j;
    j["format"] = "cbctcad-manifest-v1";
    Json cases = Json::array();
    for (const auto& e : manifest.entries) {
        Json c;
        c["id"] = e.id;
        c["seed"] = e.seed;
        c["labels"] = {{"left", e.labels[0]}, {"right", e.labels[1]}};
        c["key_slice_range"] = e.key_slice_range;
        c["clean_stem"] = e.clean_stem;
        c["pcbct_stem"] = e.pcbct_stem;
        cases.push_back(std::move(c));
    }
    j["cases"] = std::move(cases);
    j["extra"] = manifest.extra.is_null() ? Json::object() : manifest.extra;
    write_json_file(path, j);
}

Manifest read_manifest(const fs::path& path) {
    const Json j = read_json_file(path);
    Manifest m;
    try {
        if (j.at("format").get<std::string>() != "cbctcad-manifest-v1") {
            throw IoError("manifest " + path.string() + ": unknown format tag");
        }
        for (const auto& c : j.at("cases")) {
            ManifestEntry e;
            e.id = c.at("id").get<std::string>();
            e.seed = c.at("seed").get<std::uint64_t>();
            e.labels[0] = c.at("labels").at("left").get<std::string>();
            e.labels[1] = c.at("labels").at("right").get<std::string>();
            e.key_slice_range = c.at("key_slice_range").get<std::array<int, 2>>();
            e.clean_stem = c.at("clean_stem").get<std::string>();
            e.pcbct_stem = c.at("pcbct_stem").get<std::string>();
            m.entries.push_back(std::move(e));
        }
        m.extra = j.value("extra", Json::object());
    } catch (const Json::exception& e) {
        throw IoError("manifest " + path.string() + ": " + e.what());
    }
    return m;
}

void write_model(const fs::path& path, const ModelFile& model) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    const std::string header = model.header.dump();
    const std::uint32_t version = model.version;
    const std::uint64_t header_len = header.size();
    const std::uint64_t param_count = model.params.size();
    f.write(kModelMagic, 4);
    f.write(reinterpret_cast<const char*>(&version), sizeof(version));
    f.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    f.write(reinterpret_cast<const char*>(&param_count), sizeof(param_count));
    f.write(reinterpret_cast<const char*>(model.params.data()),
            static_cast<std::streamsize>(model.params.size() * sizeof(double)));
    if (!f) throw IoError("short write: " + path.string());
}

ModelFile read_model(const fs::path& path) {
    const auto bytes = read_bytes(path);
    std::size_t off = 0;
    const auto need = [&](std::size_t n) {
        if (off + n > bytes.size()) {
            throw IoError("model file " + path.string() + ": truncated");
        }
    };
    need(4);
    if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
        throw IoError("model file " + path.string() + ": bad magic");
    }
    off += 4;
    ModelFile m;
    need(sizeof(std::uint32_t));
    std::memcpy(&m.version, bytes.data() + off, sizeof(std::uint32_t));
    off += sizeof(std::uint32_t);
    if (m.version != kModelVersion) {
        throw IoError("model file " + path.string() + ": unsupported version " +
                      std::to_string(m.version));
    }
    std::uint64_t header_len = 0;
    need(sizeof(header_len));
    std::memcpy(&header_len, bytes.data() + off, sizeof(header_len));
    off += sizeof(header_len);
    need(header_len);
    try {
        m.header = Json::parse(bytes.data() + off, bytes.data() + off + header_len);
    } catch (const Json::exception& e) {
        throw IoError("model file " + path.string() + ": header parse: " + e.what());
    }
    off += header_len;
    std::uint64_t param_count = 0;
    need(sizeof(param_count));
    std::memcpy(&param_count, bytes.data() + off, sizeof(param_count));
    off += sizeof(param_count);
    need(param_count * sizeof(double));
    m.params.resize(param_count);
    std::memcpy(m.params.data(), bytes.data() + off, param_count * sizeof(double));
    return m;
}

void write_json_file(const fs::path& path, const Json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << j.dump(2) << '\n';
    if (!f) throw IoError("short write: " + path.string());
}

Json read_json_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open for reading: " + path.string());
    try {
        return Json::parse(f);
    } catch (const Json::exception& e) {
        throw IoError("json parse " + path.string() + ": " + e.what());
    }
}

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << text;
    if (!f) throw IoError("short write: " + path.string());
}

std::string hash_bytes_hex(const void* data, std::size_t n_bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n_bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string hash_volume_hex(const Volume& vol) {
    return hash_bytes_hex(vol.data.data(), vol.data.size() * sizeof(float));
}

}  // namespace cbctcad
