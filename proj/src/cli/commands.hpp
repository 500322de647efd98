#pragma once
// Pipeline commands behind the batch entry point. Each one writes its
// outputs under a run directory with a fixed layout — config echo at the
// root, then checkpoints/, images/, reports/ — and is deterministic in
// (config, inputs), so reruns are byte-identical and idempotent.

#include <string>
#include <vector>

#include "cli/config.hpp"
#include "evaluation/suite.hpp"
#include "training/train.hpp"

namespace chromo::cli {

// Synthesizes the (bent, straight, flow) dataset under out_dir.
// Returns the number of pairs written.
int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir);

// Trains on the manifest under data_dir; run layout appears under run_dir.
// resume continues from an existing checkpoint of the same config.
training::TrainResult cmd_train(const RunConfig& cfg, const std::string& data_dir,
                                const std::string& run_dir, const std::string& resume = {});

// SL-matches every source against the driving pool; writes
// reports/match.json with the per-source rankings and choices.
void cmd_match(const RunConfig& cfg, const std::string& data_dir, const std::string& run_dir);

// Straightens every source with the checkpointed generator. driving_mode
// "sl" picks the driving image by SL-matching, "random" by a seeded uniform
// draw (the comparison arm). Writes images/<source>.png plus a JSON sidecar
// per image with the chosen driving id and phase scores.
void cmd_straighten(const RunConfig& cfg, const std::string& checkpoint,
                    const std::string& data_dir, const std::string& run_dir,
                    const std::string& driving_mode = "sl");

// Scores straightened_dir against reference_dir (same file names); labels
// (optional JSON {filename: type}) additionally enable DCA and the trained
// FID extractor. Writes reports/evaluation.csv.
evaluation::SuiteReport cmd_evaluate(const RunConfig& cfg, const std::string& straightened_dir,
                                     const std::string& reference_dir,
                                     const std::string& labels_path, const std::string& run_dir);

// Trains one model per ViT depth in vit_arms plus (optionally) the basic
// patch-discriminator arm, evaluates each on the dataset, and writes one
// comparative reports/ablation.csv.
void cmd_ablate(const RunConfig& cfg, const std::string& data_dir, const std::string& run_dir,
                const std::vector<int>& vit_arms = {4, 8, 12, 16}, bool include_basic = true);

}  // namespace chromo::cli
