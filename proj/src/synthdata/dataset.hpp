#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synthdata/banding.hpp"
#include "synthdata/bend.hpp"

namespace chromo::synthdata {

// One manifest record; paths are relative to the dataset directory.
struct PairRecord {
    std::string source_path;   // bent chromosome PNG
    std::string driving_path;  // straight chromosome PNG
    std::string flow_path;     // dense backward flow (GTFL)
    int type_label = 0;        // in [0, num_types)
};

struct DatasetConfig {
    int n_pairs = 10;
    int num_types = 7;
    uint64_t seed = 1;
    std::string out_dir;
    float max_offset = 20.f;  // lateral bend amplitude bound (px)
    int stations = 5;         // bend control stations over the image height
    int spline_order = 3;
    float blur_sigma = 1.2f;  // banding softness
};

// The banding identity of a type label. A pure function of the label (not of
// any dataset seed) so that independently seeded train/test datasets share
// the same classes; per-pair variation is layered on top during generation.
BandingProfile type_signature(int type, float blur_sigma);

// Generates n_pairs (bent source, straight driving, gt flow) triples under
// out_dir plus a manifest.jsonl, one JSON record per pair. Deterministic in
// the config. Returns the written records. I/O failure -> DataError.
std::vector<PairRecord> make_dataset(const DatasetConfig& cfg);

// Reads dir/manifest.jsonl. Missing or malformed manifest -> DataError.
std::vector<PairRecord> load_manifest(const std::string& dir);

}  // namespace chromo::synthdata
