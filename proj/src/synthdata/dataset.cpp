#include "synthdata/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/gtfl.hpp"
#include "core/pngio.hpp"
#include "core/rng.hpp"

namespace fs = std::filesystem;

namespace chromo::synthdata {

namespace {

// Seed for the type-identity streams; deliberately a constant so labels mean
// the same banding class in every dataset.
constexpr uint64_t kTypeSeed = 0x7C0DE5u;

std::string pair_name(int i, const char* suffix) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "pair_%04d_%s", i, suffix);
    return buf;
}

}  // namespace

BandingProfile type_signature(int type, float blur_sigma) {
    Rng r = Rng(kTypeSeed).child("type-signature", static_cast<uint64_t>(type));
    BandingProfile p;
    p.num_bands = 3 + type % 5;
    p.chromosome_length = 140 + 12 * (type % 6);
    p.chromosome_width = 24 + 4 * (type % 4);
    p.blur_sigma = blur_sigma;
    std::vector<double> shares(static_cast<size_t>(p.num_bands));
    double total = 0;
    for (auto& s : shares) {
        s = r.uniform(0.6, 1.4);
        total += s;
    }
    p.band_intensities.resize(static_cast<size_t>(p.num_bands));
    p.band_widths.resize(static_cast<size_t>(p.num_bands));
    for (int b = 0; b < p.num_bands; ++b) {
        p.band_intensities[static_cast<size_t>(b)] = static_cast<float>(r.uniform(0.55, 1.0));
        p.band_widths[static_cast<size_t>(b)] = std::max(
            1, static_cast<int>(shares[static_cast<size_t>(b)] / total * 0.55 *
                                p.chromosome_length));
    }
    return p;
}

std::vector<PairRecord> make_dataset(const DatasetConfig& cfg) {
    if (cfg.n_pairs < 0) throw ConfigError("make_dataset: n_pairs must be >= 0");
    if (cfg.num_types < 1) throw ConfigError("make_dataset: num_types must be >= 1");
    if (cfg.stations < 1) throw ConfigError("make_dataset: stations must be >= 1");
    if (cfg.out_dir.empty()) throw ConfigError("make_dataset: out_dir not set");

    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw DataError("make_dataset: cannot create " + cfg.out_dir + ": " + ec.message());

    const Rng root(cfg.seed);
    std::vector<PairRecord> records;
    records.reserve(static_cast<size_t>(cfg.n_pairs));

    for (int i = 0; i < cfg.n_pairs; ++i) {
        const int type = i % cfg.num_types;
        Rng pr = root.child("pair", static_cast<uint64_t>(i));

        // type identity plus bounded per-pair variation
        BandingProfile prof = type_signature(type, cfg.blur_sigma);
        prof.chromosome_length += static_cast<int>(pr.randint(-8, 8));
        prof.chromosome_width += static_cast<int>(pr.randint(-2, 2));
        const double rescale = 0.55 * prof.chromosome_length / prof.num_bands;
        for (int b = 0; b < prof.num_bands; ++b) {
            float& inten = prof.band_intensities[static_cast<size_t>(b)];
            inten = std::clamp(inten + static_cast<float>(pr.uniform(-0.04, 0.04)), 0.35f, 1.0f);
            int& w = prof.band_widths[static_cast<size_t>(b)];
            w = std::max(1, std::min(w, static_cast<int>(rescale * 1.4)));
        }
        validate_profile(prof);

        const uint64_t stain_seed = pr.next_u64();
        const Image straight = gen_straight(prof, stain_seed);

        // draw bends until one is non-degenerate, shrinking the amplitude if
        // rejections persist; deterministic because draws come from pr
        BendSpec spec;
        spec.interpolation = cfg.spline_order;
        spec.control_offsets.resize(static_cast<size_t>(cfg.stations));
        double amp = cfg.max_offset;
        Image bent(0, 0);
        Flow flow(0, 0);
        bool made = false;
        for (int attempt = 0; attempt < 24 && !made; ++attempt) {
            for (auto& o : spec.control_offsets)
                o = static_cast<float>(pr.uniform(-amp, amp));
            try {
                auto out = bend(straight, spec);
                bent = std::move(out.first);
                flow = std::move(out.second);
                made = true;
            } catch (const DegenerateBendError&) {
                amp *= 0.8;
            } catch (const ConfigError&) {
                amp *= 0.8;  // axis left the image; try a gentler draw
            }
        }
        if (!made) throw DataError("make_dataset: no valid bend for pair " + std::to_string(i));

        PairRecord rec;
        rec.source_path = pair_name(i, "src.png");
        rec.driving_path = pair_name(i, "drv.png");
        rec.flow_path = pair_name(i, "flow.gtfl");
        rec.type_label = type;
        write_png_gray8(fs::path(cfg.out_dir) / rec.source_path, bent);
        write_png_gray8(fs::path(cfg.out_dir) / rec.driving_path, straight);
        save_flow(fs::path(cfg.out_dir) / rec.flow_path, flow);
        records.push_back(std::move(rec));
    }

    std::ofstream mf(fs::path(cfg.out_dir) / "manifest.jsonl", std::ios::binary);
    if (!mf) throw DataError("make_dataset: cannot write manifest in " + cfg.out_dir);
    for (const auto& rec : records) {
        nlohmann::ordered_json j;
        j["source_path"] = rec.source_path;
        j["driving_path"] = rec.driving_path;
        j["flow_path"] = rec.flow_path;
        j["type_label"] = rec.type_label;
        mf << j.dump() << "\n";
    }
    mf.close();
    if (!mf) throw DataError("make_dataset: manifest write failed in " + cfg.out_dir);
    return records;
}

std::vector<PairRecord> load_manifest(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.jsonl", std::ios::binary);
    if (!mf) throw DataError("load_manifest: no manifest.jsonl in " + dir);
    std::vector<PairRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(mf, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            PairRecord rec;
            rec.source_path = j.at("source_path").get<std::string>();
            rec.driving_path = j.at("driving_path").get<std::string>();
            rec.flow_path = j.at("flow_path").get<std::string>();
            rec.type_label = j.at("type_label").get<int>();
            records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("load_manifest: bad record at line " + std::to_string(lineno) +
                            ": " + e.what());
        }
    }
    return records;
}

}  // namespace chromo::synthdata
