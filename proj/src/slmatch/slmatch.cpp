#include "slmatch/slmatch.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "core/errors.hpp"
#include "evaluation/backbone.hpp"

namespace chromo::slmatch {

namespace {
constexpr double kEps = 1.0;  // px
}

CandidatePool make_pool(std::vector<std::pair<std::string, Image>> images, float tau,
                        int window) {
    CandidatePool pool;
    pool.entries.reserve(images.size());
    std::set<std::string> seen;
    for (auto& [id, im] : images) {
        if (!seen.insert(id).second)
            throw SelectionError("make_pool: duplicate image_id " + id);
        PoolEntry e;
        e.image_id = id;
        e.profile = morphometry::measure(im, tau, window);
        if (!std::isfinite(e.profile.length) || !std::isfinite(e.profile.width))
            throw SelectionError("make_pool: non-finite profile for " + id);
        e.image = std::move(im);
        pool.entries.push_back(std::move(e));
    }
    return pool;
}

double phase1_score(const morphometry::MorphometryProfile& source,
                    const morphometry::MorphometryProfile& candidate) {
    return std::abs(candidate.length - source.length) / std::max(source.length, kEps) +
           std::abs(candidate.width - source.width) / std::max(source.width, kEps);
}

std::vector<ScoredCandidate> phase1_rank(const morphometry::MorphometryProfile& source,
                                         const CandidatePool& pool) {
    if (pool.entries.empty()) throw SelectionError("phase1_rank: empty candidate pool");
    std::vector<ScoredCandidate> ranked;
    ranked.reserve(pool.entries.size());
    for (size_t i = 0; i < pool.entries.size(); ++i)
        ranked.push_back({i, phase1_score(source, pool.entries[i].profile)});
    std::sort(ranked.begin(), ranked.end(),
              [&](const ScoredCandidate& a, const ScoredCandidate& b) {
                  if (a.score != b.score) return a.score < b.score;
                  const double da = std::abs(pool.entries[a.index].profile.length - source.length);
                  const double db = std::abs(pool.entries[b.index].profile.length - source.length);
                  if (da != db) return da < db;
                  return pool.entries[a.index].image_id < pool.entries[b.index].image_id;
              });
    if (ranked.size() > 3) ranked.resize(3);
    return ranked;
}

size_t phase2_select(const Image& source, const CandidatePool& pool,
                     const std::vector<ScoredCandidate>& candidates,
                     const PerceptualMetric& perceptual, std::vector<double>* scores_out) {
    if (candidates.empty() || candidates.size() > 3)
        throw SelectionError("phase2_select: expected 1-3 candidates, got " +
                             std::to_string(candidates.size()));
    const PerceptualMetric metric =
        perceptual ? perceptual : PerceptualMetric(evaluation::lpips_pair_score);

    std::vector<double> dist;
    dist.reserve(candidates.size());
    for (const auto& c : candidates)
        dist.push_back(metric(source, pool.entries[c.index].image));
    if (scores_out) *scores_out = dist;

    size_t best = 0;
    for (size_t i = 1; i < candidates.size(); ++i) {
        const PoolEntry& ei = pool.entries[candidates[i].index];
        const PoolEntry& eb = pool.entries[candidates[best].index];
        if (dist[i] != dist[best]) {
            if (dist[i] < dist[best]) best = i;
        } else if (ei.profile.length != eb.profile.length) {
            if (ei.profile.length > eb.profile.length) best = i;  // prefer the larger body
        } else if (ei.image_id < eb.image_id) {
            best = i;
        }
    }
    return candidates[best].index;
}

MatchResult select_driving(const std::string& source_id, const Image& source,
                           const CandidatePool& pool, const PerceptualMetric& perceptual,
                           float tau, int window) {
    const morphometry::MorphometryProfile prof = morphometry::measure(source, tau, window);
    const std::vector<ScoredCandidate> top = phase1_rank(prof, pool);

    MatchResult r;
    r.source_id = source_id;
    for (const auto& t : top) {
        r.top3_ids.push_back(pool.entries[t.index].image_id);
        r.phase1_scores.push_back(t.score);
    }
    const size_t chosen = phase2_select(source, pool, top, perceptual, &r.phase2_scores);
    r.chosen_id = pool.entries[chosen].image_id;
    return r;
}

}  // namespace chromo::slmatch
