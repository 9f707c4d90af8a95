#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbctcad/geometry.hpp"
#include "cbctcad/phantom.hpp"
#include "cbctcad/projector.hpp"

namespace cbctcad {

// Serialized artifacts use ordered JSON with a stable key order so repeated
// runs are byte-identical.
using Json = nlohmann::ordered_json;

// Environment variable that, when set, prefixes every relative output path.
inline constexpr const char* kOutputRootEnv = "CBCTCAD_OUTPUT_ROOT";
std::filesystem::path resolve_output_path(const std::filesystem::path& path);

// Volumes are stored as <stem>.raw (float32 little-endian, x-fastest) plus a
// <stem>.json sidecar describing dims/spacing/origin. `path` may name the
// stem, the .raw, or the .json file.
void write_volume(const std::filesystem::path& path, const Volume& vol);
Volume read_volume(const std::filesystem::path& path);

Json geometry_to_json(const ConeBeamGeometry& geom);
ConeBeamGeometry geometry_from_json(const Json& j);
void write_geometry(const std::filesystem::path& path, const ConeBeamGeometry& geom);
ConeBeamGeometry read_geometry(const std::filesystem::path& path);

// Projection stacks: <stem>.raw (views * px * px float32 LE, view-major) plus
// a sidecar embedding the acquisition geometry.
void write_projections(const std::filesystem::path& path, const ProjectionSet& projections);
ProjectionSet read_projections(const std::filesystem::path& path);

// Dataset manifest: per-case ids, seeds, per-side labels, key-slice range,
// and relative artifact stems.
struct ManifestEntry {
    std::string id;
    std::uint64_t seed = 0;
    std::array<std::string, 2> labels;           // left, right
    std::array<int, 2> key_slice_range{0, 0};
    std::string clean_stem;                      // relative to the manifest dir
    std::string pcbct_stem;                      // may be empty before synthesis
};
struct Manifest {
    std::vector<ManifestEntry> entries;
    Json extra;  // generation parameters, free-form but stable
};
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

// Versioned binary model container: "CBCM" magic, format version, a JSON
// header (kind, class order, feature spec, shapes), then float64 parameters.
struct ModelFile {
    std::uint32_t version = 1;
    Json header;
    std::vector<double> params;
};
void write_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile read_model(const std::filesystem::path& path);  // throws IoError

void write_json_file(const std::filesystem::path& path, const Json& j);
Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// FNV-1a 64-bit over raw bytes, rendered as 16 hex digits; used to fingerprint
// inputs in diagnosis reports.
std::string hash_bytes_hex(const void* data, std::size_t n_bytes);
std::string hash_volume_hex(const Volume& vol);

}  // namespace cbctcad
