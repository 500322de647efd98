#include "training/train.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <utility>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace chromo::training {

namespace fs = std::filesystem;
using json = nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("training: epochs must be at least 1");
    if (batch_size != 1) throw ConfigError("training: only batch size 1 is supported");
    if (!(lr_gen > 0.f) || !(lr_disc > 0.f))
        throw ConfigError("training: learning rates must be positive");
    if (!(lr_decay_gamma > 0.f) || lr_decay_gamma > 1.f)
        throw ConfigError("training: decay gamma must lie in (0, 1]");
    int prev = 0;
    for (int m : milestones) {
        if (m <= prev) throw ConfigError("training: milestones must be strictly increasing");
        if (m >= epochs) throw ConfigError("training: milestones must lie before the last epoch");
        prev = m;
    }
    if (val_fold < 0 || val_fold >= 5) throw ConfigError("training: val fold must lie in [0, 5)");
    if (w_adversarial < 0.f || w_perceptual < 0.f || w_equivariance < 0.f)
        throw ConfigError("training: loss weights must be non-negative");
    motiongen::MotionGenConfig g;
    g.image_size = image_size;
    g.regions = regions;
    g.validate();
    if (!basic_patch) {
        vitpatch::VitPatchConfig v;
        v.image_size = image_size;
        v.patch = patch;
        v.dim = dim;
        v.blocks = blocks;
        v.validate();
    }
}

std::string TrainConfig::to_json() const {
    json j;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["lr_gen"] = lr_gen;
    j["lr_disc"] = lr_disc;
    j["milestones"] = milestones;
    j["lr_decay_gamma"] = lr_decay_gamma;
    j["seed"] = seed;
    j["blocks"] = blocks;
    j["patch"] = patch;
    j["dim"] = dim;
    j["regions"] = regions;
    j["image_size"] = image_size;
    j["w_adversarial"] = w_adversarial;
    j["w_perceptual"] = w_perceptual;
    j["w_equivariance"] = w_equivariance;
    j["val_fold"] = val_fold;
    j["basic_patch"] = basic_patch;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        TrainConfig c;
        c.epochs = j.at("epochs").get<int>();
        c.batch_size = j.at("batch_size").get<int>();
        c.lr_gen = j.at("lr_gen").get<float>();
        c.lr_disc = j.at("lr_disc").get<float>();
        c.milestones = j.at("milestones").get<std::vector<int>>();
        c.lr_decay_gamma = j.at("lr_decay_gamma").get<float>();
        c.seed = j.at("seed").get<uint64_t>();
        c.blocks = j.at("blocks").get<int>();
        c.patch = j.at("patch").get<int>();
        c.dim = j.at("dim").get<int>();
        c.regions = j.at("regions").get<int>();
        c.image_size = j.at("image_size").get<int>();
        c.w_adversarial = j.at("w_adversarial").get<float>();
        c.w_perceptual = j.at("w_perceptual").get<float>();
        c.w_equivariance = j.at("w_equivariance").get<float>();
        c.val_fold = j.at("val_fold").get<int>();
        c.basic_patch = j.at("basic_patch").get<bool>();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("training config: ") + e.what());
    }
}

std::pair<nn::Var<float>, nn::Var<float>> adversarial_losses(const nn::Var<float>& real_scores,
                                                             const nn::Var<float>& fake_scores) {
    if (!real_scores.val().same_shape(fake_scores.val()))
        throw DataError("adversarial_losses: score maps must share a shape");
    for (float v : real_scores.val().data)
        if (!std::isfinite(v)) throw NumericError("adversarial_losses: non-finite real score");
    for (float v : fake_scores.val().data)
        if (!std::isfinite(v)) throw NumericError("adversarial_losses: non-finite fake score");
    const auto ones = Tensor<float>::full(real_scores.val().shape, 1.f);
    const auto zeros = Tensor<float>::zeros(fake_scores.val().shape);
    const auto loss_d = nn::mul_scalar(
        nn::add(nn::bce_mean(real_scores, ones), nn::bce_mean(fake_scores, zeros)), 0.5f);
    const auto loss_g = nn::bce_mean(fake_scores, ones);
    return {loss_d, loss_g};
}

std::pair<std::vector<int>, std::vector<int>> split_folds(int n, int val_fold) {
    if (n < 1) throw ConfigError("training: dataset is empty");
    if (val_fold < 0 || val_fold >= 5) throw ConfigError("training: val fold must lie in [0, 5)");
    const int lo = static_cast<int>(static_cast<int64_t>(val_fold) * n / 5);
    const int hi = static_cast<int>(static_cast<int64_t>(val_fold + 1) * n / 5);
    std::pair<std::vector<int>, std::vector<int>> out;
    for (int i = 0; i < n; ++i) (i >= lo && i < hi ? out.second : out.first).push_back(i);
    return out;
}

namespace {

motiongen::MotionGenerator make_generator(const TrainConfig& cfg) {
    cfg.validate();
    motiongen::MotionGenConfig g;
    g.image_size = cfg.image_size;
    g.regions = cfg.regions;
    return motiongen::MotionGenerator(g, Rng::derive(cfg.seed, "generator"));
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg), gen_(make_generator(cfg_)), backbone_(evaluation::kBackboneTrain),
      adam_g_(0.5f, 0.999f), adam_d_(0.5f, 0.999f) {
    if (cfg_.basic_patch) {
        basic_ = vitpatch::BasicPatchDiscriminator(Rng::derive(cfg_.seed, "discriminator"));
    } else {
        vitpatch::VitPatchConfig v;
        v.image_size = cfg_.image_size;
        v.patch = cfg_.patch;
        v.dim = cfg_.dim;
        v.blocks = cfg_.blocks;
        vit_ = vitpatch::VitPatchDiscriminator(v, Rng::derive(cfg_.seed, "discriminator"));
    }
}

nn::ParamRegistry<float>& Trainer::disc_params() {
    return cfg_.basic_patch ? basic_.params() : vit_.params();
}

const nn::ParamRegistry<float>& Trainer::disc_params() const {
    return cfg_.basic_patch ? basic_.params() : vit_.params();
}

nn::Var<float> Trainer::disc_forward(const nn::Var<float>& pair) const {
    return cfg_.basic_patch ? basic_.forward(pair) : vit_.forward(pair);
}

StepLosses Trainer::train_step(const TrainPair& pair, const motiongen::SpatialTransform& t,
                               float lr_g, float lr_d, bool measure_d_progress) {
    const auto out = gen_.generate(pair.source, pair.driving);
    const auto src = nn::constant(to_tensor(pair.source));
    const auto drv = nn::constant(to_tensor(pair.driving));

    // discriminator update on the real pair and the frozen fake
    const auto real_pair = vitpatch::paired_input<float>(src, drv);
    const auto fake_pair = vitpatch::paired_input<float>(src, out.image.detach());
    const auto d_losses = adversarial_losses(disc_forward(real_pair), disc_forward(fake_pair));

    StepLosses losses;
    losses.loss_d = d_losses.first.item();
    if (!std::isfinite(losses.loss_d)) throw NumericError("train: discriminator loss diverged");
    disc_params().zero_grads();
    d_losses.first.backward();
    adam_d_.step(disc_params().items(), lr_d);
    if (measure_d_progress) {
        nn::NoGradGuard ng;
        losses.loss_d_after =
            adversarial_losses(disc_forward(real_pair), disc_forward(fake_pair)).first.item();
    }

    // generator update against the refreshed discriminator
    const auto live = disc_forward(vitpatch::paired_input<float>(src, out.image));
    const auto loss_adv = nn::bce_mean(live, Tensor<float>::full(live.val().shape, 1.f));
    const auto loss_perc = motiongen::perceptual_loss(out.pyramid, drv, backbone_);
    const auto eq = motiongen::equivariance_loss(gen_, pair.driving, t);
    const auto total = nn::add(nn::mul_scalar(loss_adv, cfg_.w_adversarial),
                               nn::add(nn::mul_scalar(loss_perc, cfg_.w_perceptual),
                                       nn::mul_scalar(eq.total, cfg_.w_equivariance)));
    losses.loss_g_adv = loss_adv.item();
    losses.loss_perc = loss_perc.item();
    losses.loss_equiv = eq.total.item();
    if (!std::isfinite(total.item())) throw NumericError("train: generator loss diverged");
    gen_.params().zero_grads();
    disc_params().zero_grads();  // adversarial pass-through gradients, discarded
    total.backward();
    adam_g_.step(gen_.params().items(), lr_g);
    return losses;
}

StepLosses Trainer::eval_losses(const TrainPair& pair, const motiongen::SpatialTransform& t) const {
    nn::NoGradGuard ng;
    const auto out = gen_.generate(pair.source, pair.driving);
    const auto src = nn::constant(to_tensor(pair.source));
    const auto drv = nn::constant(to_tensor(pair.driving));
    const auto d_losses = adversarial_losses(
        disc_forward(vitpatch::paired_input<float>(src, drv)),
        disc_forward(vitpatch::paired_input<float>(src, out.image)));
    StepLosses losses;
    losses.loss_d = d_losses.first.item();
    losses.loss_g_adv = d_losses.second.item();
    losses.loss_perc = motiongen::perceptual_loss(out.pyramid, drv, backbone_).item();
    losses.loss_equiv = motiongen::equivariance_loss(gen_, pair.driving, t).total.item();
    return losses;
}

float Trainer::val_perceptual(const std::vector<TrainPair>& val) const {
    if (val.empty()) return std::numeric_limits<float>::quiet_NaN();
    nn::NoGradGuard ng;
    double sum = 0;
    for (const auto& p : val) {
        const auto out = gen_.generate(p.source, p.driving);
        sum += motiongen::perceptual_loss(out.pyramid, nn::constant(to_tensor(p.driving)),
                                          backbone_)
                   .item();
    }
    return static_cast<float>(sum / static_cast<double>(val.size()));
}

void Trainer::save(const std::string& path, int epoch, float best_val, int best_epoch) const {
    Checkpoint ck;
    for (const auto& [n, p] : gen_.params().items()) ck.tensors["gen." + n] = p.val();
    for (const auto& [n, p] : disc_params().items()) ck.tensors["disc." + n] = p.val();
    const auto dump_opt = [&ck](const nn::Adam<float>& opt, const std::string& prefix) {
        for (const auto& [n, slot] : opt.slots()) {
            ck.tensors[prefix + ".m." + n] = slot.m;
            ck.tensors[prefix + ".v." + n] = slot.v;
        }
    };
    dump_opt(adam_g_, "optg");
    dump_opt(adam_d_, "optd");

    json meta;
    meta["format_version"] = 1;
    meta["epoch"] = epoch;
    meta["best_epoch"] = best_epoch;
    if (std::isfinite(best_val))
        meta["best_val"] = best_val;
    else
        meta["best_val"] = nullptr;
    meta["adam_gen_steps"] = adam_g_.steps();
    meta["adam_disc_steps"] = adam_d_.steps();
    meta["config"] = json::parse(cfg_.to_json());
    ck.meta_json = meta.dump();
    save_checkpoint(path, ck);
}

std::pair<Trainer, int> Trainer::restore(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    json meta;
    try {
        meta = json::parse(ck.meta_json);
        if (meta.at("format_version").get<int>() != 1)
            throw DataError("checkpoint: unsupported format version");
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: bad metadata: ") + e.what());
    }
    Trainer tr(TrainConfig::from_json(meta.at("config").dump()));

    const auto load_params = [&ck](nn::ParamRegistry<float>& reg, const std::string& prefix) {
        for (const auto& [n, p] : reg.items()) {
            const auto it = ck.tensors.find(prefix + n);
            if (it == ck.tensors.end())
                throw DataError("checkpoint: missing tensor " + prefix + n);
            if (!it->second.same_shape(p.val()))
                throw DataError("checkpoint: shape mismatch for " + prefix + n);
            p.val_mut() = it->second;
        }
    };
    load_params(tr.gen_.params(), "gen.");
    load_params(tr.disc_params(), "disc.");

    const auto load_opt = [&ck](nn::Adam<float>& opt, const std::string& prefix,
                                const nn::ParamRegistry<float>& reg) {
        for (const auto& [n, p] : reg.items()) {
            (void)p;
            const auto im = ck.tensors.find(prefix + ".m." + n);
            const auto iv = ck.tensors.find(prefix + ".v." + n);
            if (im != ck.tensors.end() && iv != ck.tensors.end())
                opt.set_slot(n, im->second, iv->second);
        }
    };
    load_opt(tr.adam_g_, "optg", tr.gen_.params());
    load_opt(tr.adam_d_, "optd", tr.disc_params());
    try {
        tr.adam_g_.set_steps(meta.at("adam_gen_steps").get<int64_t>());
        tr.adam_d_.set_steps(meta.at("adam_disc_steps").get<int64_t>());
        return {std::move(tr), meta.at("epoch").get<int>()};
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: bad metadata: ") + e.what());
    }
}

namespace {

std::string format_row(int epoch, const StepLosses& avg, float lr_g, float lr_d, float val_p) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", epoch, avg.loss_d,
                  avg.loss_g_adv, avg.loss_perc, avg.loss_equiv, lr_g, lr_d, val_p);
    return buf;
}

constexpr const char* kCsvHeader =
    "epoch,loss_D,loss_G_adv,loss_perc,loss_equiv,lr_gen,lr_disc,val_perceptual";

}  // namespace

TrainResult train_loop(const TrainConfig& cfg, const std::vector<TrainPair>& pairs,
                       const std::string& out_dir, const std::string& resume_from) {
    cfg.validate();
    if (pairs.empty()) throw ConfigError("training: dataset is empty");
    const fs::path run(out_dir);
    std::error_code ec;
    fs::create_directories(run / "checkpoints", ec);
    if (ec) throw DataError("training: cannot create run directory " + out_dir);
    const std::string csv_path = (run / "metrics.csv").string();

    const auto [train_idx, val_idx] = split_folds(static_cast<int>(pairs.size()), cfg.val_fold);
    if (train_idx.empty()) throw ConfigError("training: training fold is empty");
    std::vector<TrainPair> val;
    val.reserve(val_idx.size());
    for (int i : val_idx) val.push_back(pairs[static_cast<size_t>(i)]);

    int start_epoch = 0;
    float best_val = std::numeric_limits<float>::quiet_NaN();
    int best_epoch = 0;
    std::vector<std::string> rows;
    std::optional<Trainer> tr;

    if (!resume_from.empty()) {
        auto [restored, epoch] = Trainer::restore(resume_from);
        if (restored.config().to_json() != cfg.to_json())
            throw ConfigError("training: resume config does not match the checkpoint");
        tr.emplace(std::move(restored));
        start_epoch = epoch;
        // keep the metric rows up to the resume point; later ones are re-run
        std::ifstream in(csv_path);
        std::string line;
        bool header = true;
        while (std::getline(in, line)) {
            if (header) {
                header = false;
                continue;
            }
            if (line.empty()) continue;
            const int row_epoch = std::atoi(line.c_str());
            if (row_epoch > start_epoch) continue;
            rows.push_back(line);
            const auto comma = line.rfind(',');
            const float vp = std::strtof(line.c_str() + comma + 1, nullptr);
            if (row_epoch >= 1 && std::isfinite(vp) && (!std::isfinite(best_val) || vp < best_val)) {
                best_val = vp;
                best_epoch = row_epoch;
            }
        }
    } else {
        tr.emplace(cfg);
    }

    const auto write_csv = [&] {
        std::ofstream f(csv_path, std::ios::trunc);
        if (!f) throw DataError("training: cannot write " + csv_path);
        f << kCsvHeader << "\n";
        for (const auto& r : rows) f << r << "\n";
    };

    const Rng equiv_root(Rng::derive(cfg.seed, "equivariance"));

    if (start_epoch == 0) {
        // pre-training snapshot so convergence is measured against a baseline
        StepLosses acc;
        for (size_t j = 0; j < train_idx.size(); ++j) {
            Rng rs = equiv_root.child("eval", static_cast<uint64_t>(j));
            const StepLosses l =
                tr->eval_losses(pairs[static_cast<size_t>(train_idx[j])],
                                motiongen::sample_transform(rs));
            acc.loss_d += l.loss_d;
            acc.loss_g_adv += l.loss_g_adv;
            acc.loss_perc += l.loss_perc;
            acc.loss_equiv += l.loss_equiv;
        }
        const float n = static_cast<float>(train_idx.size());
        acc.loss_d /= n;
        acc.loss_g_adv /= n;
        acc.loss_perc /= n;
        acc.loss_equiv /= n;
        rows.push_back(format_row(0, acc,
                                  nn::multistep_lr(cfg.lr_gen, cfg.milestones, cfg.lr_decay_gamma, 0),
                                  nn::multistep_lr(cfg.lr_disc, cfg.milestones, cfg.lr_decay_gamma, 0),
                                  tr->val_perceptual(val)));
        write_csv();
    }

    std::string final_ckpt = resume_from;
    for (int e = start_epoch; e < cfg.epochs; ++e) {
        const float lr_g = nn::multistep_lr(cfg.lr_gen, cfg.milestones, cfg.lr_decay_gamma, e);
        const float lr_d = nn::multistep_lr(cfg.lr_disc, cfg.milestones, cfg.lr_decay_gamma, e);
        StepLosses acc;
        for (size_t j = 0; j < train_idx.size(); ++j) {
            Rng rs = equiv_root.child("epoch", static_cast<uint64_t>(e))
                         .child("step", static_cast<uint64_t>(j));
            const StepLosses l = tr->train_step(pairs[static_cast<size_t>(train_idx[j])],
                                                motiongen::sample_transform(rs), lr_g, lr_d);
            acc.loss_d += l.loss_d;
            acc.loss_g_adv += l.loss_g_adv;
            acc.loss_perc += l.loss_perc;
            acc.loss_equiv += l.loss_equiv;
        }
        const float n = static_cast<float>(train_idx.size());
        acc.loss_d /= n;
        acc.loss_g_adv /= n;
        acc.loss_perc /= n;
        acc.loss_equiv /= n;

        const float vp = tr->val_perceptual(val);
        if (std::isfinite(vp) && (!std::isfinite(best_val) || vp < best_val)) {
            best_val = vp;
            best_epoch = e + 1;
        }
        rows.push_back(format_row(e + 1, acc, lr_g, lr_d, vp));
        write_csv();

        final_ckpt = (run / "checkpoints" / ("ckpt_epoch_" + std::to_string(e + 1))).string();
        tr->save(final_ckpt, e + 1, best_val, best_epoch);
        // keep the last three plus every tenth epoch
        for (int k = 1; k <= e - 2; ++k) {
            if (k % 10 == 0) continue;
            fs::remove(run / "checkpoints" / ("ckpt_epoch_" + std::to_string(k)), ec);
        }
    }

    TrainResult res;
    res.final_checkpoint = final_ckpt;
    res.metrics_csv = csv_path;
    res.best_epoch = best_epoch;
    res.best_val = best_val;
    return res;
}

}  // namespace chromo::training
