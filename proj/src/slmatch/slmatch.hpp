#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "core/image.hpp"
#include "morphometry/morphometry.hpp"

namespace chromo::slmatch {

// Driving-candidate pool: profiles are measured once at construction and the
// pool is immutable afterwards, so many sources can be matched in parallel.
struct PoolEntry {
    std::string image_id;
    Image image;
    morphometry::MorphometryProfile profile;
};

struct CandidatePool {
    std::vector<PoolEntry> entries;
};

// Measures every image; duplicate ids or non-finite profiles -> SelectionError.
CandidatePool make_pool(std::vector<std::pair<std::string, Image>> images,
                        float tau = morphometry::kDefaultTau,
                        int window = morphometry::kDefaultWindow);

struct ScoredCandidate {
    size_t index = 0;  // into pool.entries
    double score = 0;
};

// Any symmetric image distance; the default (empty function) is the
// two-backbone LPIPS mean from the evaluation module.
using PerceptualMetric = std::function<double(const Image&, const Image&)>;

struct MatchResult {
    std::string source_id;
    std::vector<std::string> top3_ids;  // phase-1 ranking order, <= 3
    std::string chosen_id;
    std::vector<double> phase1_scores;  // aligned with top3_ids
    std::vector<double> phase2_scores;  // aligned with top3_ids
};

// Combined size dissimilarity: |dlen|/max(len_s, eps) + |dwid|/max(wid_s, eps)
// with eps = 1 px guarding degenerate (empty-mask) sources.
double phase1_score(const morphometry::MorphometryProfile& source,
                    const morphometry::MorphometryProfile& candidate);

// The min(3, |pool|) lowest-score candidates, ascending. Ties break by
// smaller |dlen|, then lexicographically smaller image_id. Empty pool ->
// SelectionError.
std::vector<ScoredCandidate> phase1_rank(const morphometry::MorphometryProfile& source,
                                         const CandidatePool& pool);

// Argmin of the perceptual distance over 1-3 phase-1 candidates. Ties break
// by larger candidate length, then smaller image_id. Fills scores_out (one
// distance per candidate, aligned) when given.
size_t phase2_select(const Image& source, const CandidatePool& pool,
                     const std::vector<ScoredCandidate>& candidates,
                     const PerceptualMetric& perceptual = {},
                     std::vector<double>* scores_out = nullptr);

// phase1_rank then phase2_select; deterministic and pool-order independent.
// tau/window must match the ones the pool was measured with.
MatchResult select_driving(const std::string& source_id, const Image& source,
                           const CandidatePool& pool, const PerceptualMetric& perceptual = {},
                           float tau = morphometry::kDefaultTau,
                           int window = morphometry::kDefaultWindow);

}  // namespace chromo::slmatch
