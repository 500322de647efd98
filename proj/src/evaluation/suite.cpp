#include "evaluation/suite.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/errors.hpp"
#include "core/pngio.hpp"
#include "core/rng.hpp"
#include "evaluation/backbone.hpp"
#include "evaluation/fid.hpp"

namespace fs = std::filesystem;

namespace chromo::evaluation {

namespace {

std::vector<std::string> png_ids(const std::string& dir) {
    if (!fs::is_directory(dir)) throw EvalError("evaluate_suite: not a directory: " + dir);
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace

SuiteReport evaluate_suite(const std::string& straightened_dir, const std::string& reference_dir,
                           const std::map<std::string, int>* type_labels,
                           const DcaConfig& dca_cfg, const TypeClassifier* fid_extractor) {
    const std::vector<std::string> ids = png_ids(straightened_dir);
    const std::vector<std::string> ref_ids = png_ids(reference_dir);
    if (ids != ref_ids) {
        std::string detail = "evaluate_suite: directories are not aligned";
        for (size_t i = 0; i < std::max(ids.size(), ref_ids.size()); ++i) {
            const std::string a = i < ids.size() ? ids[i] : "<missing>";
            const std::string b = i < ref_ids.size() ? ref_ids[i] : "<missing>";
            if (a != b) {
                detail += ": " + a + " vs " + b;
                break;
            }
        }
        throw EvalError(detail);
    }
    if (ids.empty()) throw EvalError("evaluate_suite: no images in " + straightened_dir);

    std::vector<Image> straightened, reference;
    straightened.reserve(ids.size());
    reference.reserve(ids.size());
    for (const auto& id : ids) {
        straightened.push_back(read_png_gray8((fs::path(straightened_dir) / id).string()));
        reference.push_back(read_png_gray8((fs::path(reference_dir) / id).string()));
    }

    SuiteReport rep;
    const FeatureBackbone bb_a(kBackboneA), bb_v(kBackboneV);
    for (size_t i = 0; i < ids.size(); ++i) {
        PerImageScore s;
        s.id = ids[i];
        s.lpips_a = perceptual_distance(straightened[i], reference[i], bb_a);
        s.lpips_v = perceptual_distance(straightened[i], reference[i], bb_v);
        rep.lpips_a += s.lpips_a;
        rep.lpips_v += s.lpips_v;
        rep.per_image.push_back(std::move(s));
    }
    rep.lpips_a /= static_cast<double>(ids.size());
    rep.lpips_v /= static_cast<double>(ids.size());

    // labels aligned to ids, when provided
    std::vector<int> labels;
    if (type_labels) {
        labels.reserve(ids.size());
        for (const auto& id : ids) {
            auto it = type_labels->find(id);
            if (it == type_labels->end())
                throw EvalError("evaluate_suite: no type label for " + id);
            labels.push_back(it->second);
        }
    }

    std::vector<Tensor<float>> feats_s, feats_r;
    feats_s.reserve(ids.size());
    feats_r.reserve(ids.size());
    if (fid_extractor || type_labels) {
        TypeClassifier trained(1, 0);
        const TypeClassifier* clf = fid_extractor;
        if (!clf) {
            // train the FID feature extractor on the reference images
            std::vector<Tensor<float>> inputs;
            inputs.reserve(ids.size());
            for (const auto& im : reference) inputs.push_back(dca_input(im, dca_cfg.input_size));
            std::vector<int> all_idx(ids.size());
            for (size_t i = 0; i < all_idx.size(); ++i) all_idx[i] = static_cast<int>(i);
            int num_classes = 1;
            for (int l : labels) num_classes = std::max(num_classes, l + 1);
            trained = train_type_classifier(inputs, labels, all_idx, num_classes, 30, dca_cfg.lr,
                                            Rng::derive(dca_cfg.seed, "fid-extractor"));
            clf = &trained;
        }
        for (const auto& im : straightened)
            feats_s.push_back(clf->penultimate(dca_input(im, dca_cfg.input_size)));
        for (const auto& im : reference)
            feats_r.push_back(clf->penultimate(dca_input(im, dca_cfg.input_size)));
    } else {
        const FeatureBackbone bb_f(kBackboneFid);
        for (const auto& im : straightened) feats_s.push_back(bb_f.embed(im));
        for (const auto& im : reference) feats_r.push_back(bb_f.embed(im));
    }
    rep.fid = fid(feature_rows(feats_r), feature_rows(feats_s));

    if (type_labels) rep.dca = downstream_accuracy(straightened, labels, dca_cfg);
    return rep;
}

void write_report_csv(const SuiteReport& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw EvalError("write_report_csv: cannot write " + path);
    out << "# Desk-scale metrics: frozen synthetic backbones replace the published pretrained\n"
           "# ones; absolute values are NOT comparable to clinical results - only orderings\n"
           "# within this artifact are meaningful.\n";
    out << "kind,id,FID,LPIPS_A,LPIPS_V,DCA_small\n";
    char buf[256];
    if (r.dca >= 0)
        std::snprintf(buf, sizeof(buf), "summary,,%.9g,%.9g,%.9g,%.9g\n", r.fid, r.lpips_a,
                      r.lpips_v, r.dca);
    else
        std::snprintf(buf, sizeof(buf), "summary,,%.9g,%.9g,%.9g,\n", r.fid, r.lpips_a,
                      r.lpips_v);
    out << buf;
    for (const auto& s : r.per_image) {
        std::snprintf(buf, sizeof(buf), "image,%s,,%.9g,%.9g,\n", s.id.c_str(), s.lpips_a,
                      s.lpips_v);
        out << buf;
    }
    out.close();
    if (!out) throw EvalError("write_report_csv: write failed for " + path);
}

}  // namespace chromo::evaluation
