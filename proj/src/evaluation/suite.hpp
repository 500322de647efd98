#pragma once

#include <map>
#include <string>
#include <vector>

#include "evaluation/dca.hpp"

namespace chromo::evaluation {

struct PerImageScore {
    std::string id;  // file name, shared by both directories
    double lpips_a = 0;
    double lpips_v = 0;
};

struct SuiteReport {
    double fid = 0;
    double lpips_a = 0;  // means of the per-image columns
    double lpips_v = 0;
    double dca = -1;  // negative = not computed (labels unavailable)
    std::vector<PerImageScore> per_image;
};

// Scores a directory of straightened PNGs against the aligned reference
// directory (same file names). FID features come from the penultimate layer
// of a type classifier trained on the reference images when labels are
// given (or the supplied extractor); without labels a frozen backbone powers
// FID and the DCA column is skipped. Misaligned directories -> EvalError.
SuiteReport evaluate_suite(const std::string& straightened_dir, const std::string& reference_dir,
                           const std::map<std::string, int>* type_labels = nullptr,
                           const DcaConfig& dca_cfg = {},
                           const TypeClassifier* fid_extractor = nullptr);

// One summary row plus one row per image. The header states the desk-scale
// caveat: backbones are synthetic substitutes, so absolute values are not
// comparable to published clinical numbers.
void write_report_csv(const SuiteReport& r, const std::string& path);

}  // namespace chromo::evaluation
