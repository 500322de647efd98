#include "cli/commands.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "core/errors.hpp"
#include "core/pngio.hpp"
#include "core/rng.hpp"
#include "slmatch/slmatch.hpp"

namespace chromo::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

// provenance echo: the run directory always records the exact config used
void write_echo(const RunConfig& cfg, const std::string& run_dir) {
    write_text(fs::path(run_dir) / "config.json", cfg.to_json());
}

std::vector<synthdata::PairRecord> load_records(const std::string& data_dir) {
    return synthdata::load_manifest(data_dir);
}

std::vector<training::TrainPair> load_pairs(const std::string& data_dir,
                                            const std::vector<synthdata::PairRecord>& records) {
    std::vector<training::TrainPair> pairs;
    pairs.reserve(records.size());
    for (const auto& r : records)
        pairs.push_back({read_png_gray8((fs::path(data_dir) / r.source_path).string()),
                         read_png_gray8((fs::path(data_dir) / r.driving_path).string())});
    return pairs;
}

slmatch::CandidatePool driving_pool(const RunConfig& cfg, const std::string& data_dir,
                                    const std::vector<synthdata::PairRecord>& records) {
    std::vector<std::pair<std::string, Image>> images;
    images.reserve(records.size());
    for (const auto& r : records)
        images.emplace_back(r.driving_path,
                            read_png_gray8((fs::path(data_dir) / r.driving_path).string()));
    return slmatch::make_pool(std::move(images), cfg.match.tau, cfg.match.window);
}

Image straighten_one(const training::Trainer& tr, const Image& source, const Image& driving) {
    nn::NoGradGuard ng;
    const auto out = tr.generator().generate(source, driving);
    return from_tensor(out.image.val());
}

std::string metric_str(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    if (out_dir.empty()) throw ConfigError("gen-data: output directory is required");
    synthdata::DatasetConfig dc = cfg.data;
    dc.out_dir = out_dir;
    fs::create_directories(out_dir);
    write_echo(cfg, out_dir);
    const auto records = synthdata::make_dataset(dc);
    return static_cast<int>(records.size());
}

training::TrainResult cmd_train(const RunConfig& cfg, const std::string& data_dir,
                                const std::string& run_dir, const std::string& resume) {
    const auto records = load_records(data_dir);
    const auto pairs = load_pairs(data_dir, records);
    fs::create_directories(run_dir);
    write_echo(cfg, run_dir);
    return training::train_loop(cfg.train, pairs, run_dir, resume);
}

void cmd_match(const RunConfig& cfg, const std::string& data_dir, const std::string& run_dir) {
    const auto records = load_records(data_dir);
    fs::create_directories(run_dir);
    write_echo(cfg, run_dir);
    const auto pool = driving_pool(cfg, data_dir, records);

    json matches = json::array();
    for (const auto& r : records) {
        const Image src = read_png_gray8((fs::path(data_dir) / r.source_path).string());
        const slmatch::MatchResult m = slmatch::select_driving(r.source_path, src, pool, {},
                                                               cfg.match.tau, cfg.match.window);
        json row;
        row["source_id"] = m.source_id;
        row["chosen_id"] = m.chosen_id;
        json top = json::array();
        for (size_t i = 0; i < m.top3_ids.size(); ++i) {
            json c;
            c["id"] = m.top3_ids[i];
            c["phase1"] = m.phase1_scores[i];
            c["phase2"] = m.phase2_scores[i];
            top.push_back(std::move(c));
        }
        row["top3"] = std::move(top);
        matches.push_back(std::move(row));
    }
    write_text(fs::path(run_dir) / "reports" / "match.json", matches.dump(2) + "\n");
}

void cmd_straighten(const RunConfig& cfg, const std::string& checkpoint,
                    const std::string& data_dir, const std::string& run_dir,
                    const std::string& driving_mode) {
    if (driving_mode != "sl" && driving_mode != "random")
        throw ConfigError("straighten: driving mode must be 'sl' or 'random'");
    auto [tr, epoch] = training::Trainer::restore(checkpoint);
    (void)epoch;
    const auto records = load_records(data_dir);
    fs::create_directories(run_dir);
    write_echo(cfg, run_dir);
    const auto pool = driving_pool(cfg, data_dir, records);
    if (pool.entries.empty()) throw SelectionError("straighten: empty driving pool");

    const Rng pick_root(Rng::derive(cfg.train.seed, "straighten"));
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        const Image src = read_png_gray8((fs::path(data_dir) / rec.source_path).string());

        size_t idx = 0;
        json sidecar;
        sidecar["source_id"] = rec.source_path;
        sidecar["driving_mode"] = driving_mode;
        if (driving_mode == "sl") {
            const slmatch::MatchResult m = slmatch::select_driving(
                rec.source_path, src, pool, {}, cfg.match.tau, cfg.match.window);
            while (idx < pool.entries.size() && pool.entries[idx].image_id != m.chosen_id) ++idx;
            sidecar["chosen_driving_id"] = m.chosen_id;
            sidecar["top3_ids"] = m.top3_ids;
            sidecar["phase1_scores"] = m.phase1_scores;
            sidecar["phase2_scores"] = m.phase2_scores;
        } else {
            Rng r = pick_root.child("pick", static_cast<uint64_t>(i));
            idx = static_cast<size_t>(
                r.randint(0, static_cast<int64_t>(pool.entries.size()) - 1));
            sidecar["chosen_driving_id"] = pool.entries[idx].image_id;
            sidecar["top3_ids"] = json::array();
            sidecar["phase1_scores"] = json::array();
            sidecar["phase2_scores"] = json::array();
        }

        const Image out = straighten_one(tr, src, pool.entries[idx].image);
        const fs::path png = fs::path(run_dir) / "images" / rec.source_path;
        fs::create_directories(png.parent_path());
        write_png_gray8(png.string(), out);
        std::string stem = rec.source_path;
        if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".png")
            stem.resize(stem.size() - 4);
        write_text(fs::path(run_dir) / "images" / (stem + ".json"), sidecar.dump(2) + "\n");
    }
}

evaluation::SuiteReport cmd_evaluate(const RunConfig& cfg, const std::string& straightened_dir,
                                     const std::string& reference_dir,
                                     const std::string& labels_path, const std::string& run_dir) {
    fs::create_directories(run_dir);
    write_echo(cfg, run_dir);

    std::map<std::string, int> labels;
    if (!labels_path.empty()) {
        std::ifstream in(labels_path);
        if (!in) throw DataError("evaluate: cannot read labels " + labels_path);
        json doc = json::parse(in, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw DataError("evaluate: labels must be a JSON object {file: type}");
        for (const auto& [k, v] : doc.items()) {
            if (!v.is_number_integer())
                throw DataError("evaluate: label for '" + k + "' must be an integer");
            labels[k] = v.get<int>();
        }
    }

    const evaluation::SuiteReport rep = evaluation::evaluate_suite(
        straightened_dir, reference_dir, labels.empty() ? nullptr : &labels, cfg.eval);
    const fs::path csv = fs::path(run_dir) / "reports" / "evaluation.csv";
    fs::create_directories(csv.parent_path());
    evaluation::write_report_csv(rep, csv.string());
    return rep;
}

void cmd_ablate(const RunConfig& cfg, const std::string& data_dir, const std::string& run_dir,
                const std::vector<int>& vit_arms, bool include_basic) {
    if (vit_arms.empty() && !include_basic)
        throw ConfigError("ablate: no arms requested");
    const auto records = load_records(data_dir);
    const auto pairs = load_pairs(data_dir, records);
    fs::create_directories(run_dir);
    write_echo(cfg, run_dir);

    // shared reference directory: the known straight targets, named like the
    // straightened outputs so the suite can align the two
    const fs::path ref_dir = fs::path(run_dir) / "reference";
    fs::create_directories(ref_dir);
    for (size_t i = 0; i < records.size(); ++i)
        write_png_gray8((ref_dir / records[i].source_path).string(), pairs[i].driving);

    // labels enable DCA only when every class can fill the evaluation folds
    std::map<std::string, int> labels;
    std::map<int, int> class_count;
    for (const auto& r : records) {
        labels[r.source_path] = r.type_label;
        ++class_count[r.type_label];
    }
    bool labels_usable = !labels.empty();
    for (const auto& [cls, n] : class_count) {
        (void)cls;
        if (n < cfg.eval.k_folds) labels_usable = false;
    }

    struct Arm {
        std::string name;
        bool basic = false;
        int blocks = 0;
    };
    std::vector<Arm> arms;
    if (include_basic) arms.push_back({"patchgan", true, 0});
    for (int n : vit_arms) arms.push_back({"vit" + std::to_string(n), false, n});

    std::string csv = "arm,blocks,fid,lpips_a,lpips_v,dca\n";
    double basic_fid = std::numeric_limits<double>::quiet_NaN();
    double best_vit_fid = std::numeric_limits<double>::quiet_NaN();
    std::string best_vit;
    for (const auto& arm : arms) {
        training::TrainConfig tc = cfg.train;
        tc.basic_patch = arm.basic;
        if (!arm.basic) tc.blocks = arm.blocks;
        const fs::path arm_dir = fs::path(run_dir) / "arms" / arm.name;
        const training::TrainResult res = training::train_loop(tc, pairs, arm_dir.string());

        auto [tr, epoch] = training::Trainer::restore(res.final_checkpoint);
        (void)epoch;
        const fs::path img_dir = arm_dir / "images";
        fs::create_directories(img_dir);
        for (size_t i = 0; i < records.size(); ++i)
            write_png_gray8((img_dir / records[i].source_path).string(),
                            straighten_one(tr, pairs[i].source, pairs[i].driving));

        const evaluation::SuiteReport rep = evaluation::evaluate_suite(
            img_dir.string(), ref_dir.string(), labels_usable ? &labels : nullptr, cfg.eval);
        csv += arm.name + "," + std::to_string(arm.blocks) + "," + metric_str(rep.fid) + "," +
               metric_str(rep.lpips_a) + "," + metric_str(rep.lpips_v) + "," +
               metric_str(rep.dca) + "\n";
        if (arm.basic) {
            basic_fid = rep.fid;
        } else if (!(rep.fid >= best_vit_fid)) {  // NaN-safe min
            best_vit_fid = rep.fid;
            best_vit = arm.name;
        }
    }
    write_text(fs::path(run_dir) / "reports" / "ablation.csv", csv);

    if (std::isfinite(basic_fid) && std::isfinite(best_vit_fid)) {
        std::cout << "directional check (informational): best ViT arm " << best_vit << " FID "
                  << metric_str(best_vit_fid) << (best_vit_fid < basic_fid ? " < " : " >= ")
                  << "PatchGAN FID " << metric_str(basic_fid) << "\n";
    }
}

}  // namespace chromo::cli
