#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "doctest.h"
#include "evaluation/backbone.hpp"
#include "slmatch/slmatch.hpp"

using namespace chromo;
using namespace chromo::slmatch;

namespace {

// solid vertical bar with per-pixel texture so perceptual distances differ
Image bar(int len, int wid, uint64_t seed, int canvas = 48) {
    Rng rng(seed);
    Image im(canvas, canvas);
    const int y0 = (canvas - len) / 2, x0 = (canvas - wid) / 2;
    for (int y = y0; y < y0 + len; ++y)
        for (int x = x0; x < x0 + wid; ++x)
            im.at(y, x) = 0.5f + 0.5f * static_cast<float>(rng.uniform());
    return im;
}

CandidatePool random_pool(Rng& rng, int n) {
    std::vector<std::pair<std::string, Image>> imgs;
    for (int i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "c%03d", i);
        imgs.emplace_back(id, bar(static_cast<int>(rng.randint(10, 40)),
                                  static_cast<int>(rng.randint(3, 12)), rng.next_u64()));
    }
    return make_pool(std::move(imgs));
}

// exhaustive reference: score every entry, single lexicographic sort, then
// re-evaluate both backbones explicitly over the survivors
std::string brute_force_choice(const Image& src, const CandidatePool& pool,
                               std::vector<std::string>* top_ids = nullptr) {
    const auto sp = morphometry::measure(src);
    std::vector<std::tuple<double, double, std::string, size_t>> rows;
    for (size_t i = 0; i < pool.entries.size(); ++i) {
        const auto& p = pool.entries[i].profile;
        const double dlen = std::abs(p.length - sp.length);
        const double score = dlen / std::max(sp.length, 1.0) +
                             std::abs(p.width - sp.width) / std::max(sp.width, 1.0);
        rows.emplace_back(score, dlen, pool.entries[i].image_id, i);
    }
    std::sort(rows.begin(), rows.end());
    rows.resize(std::min<size_t>(3, rows.size()));

    static const evaluation::FeatureBackbone bba(evaluation::kBackboneA);
    static const evaluation::FeatureBackbone bbv(evaluation::kBackboneV);
    std::vector<std::tuple<double, double, std::string>> ranked;
    for (const auto& [score, dlen, id, idx] : rows) {
        if (top_ids) top_ids->push_back(id);
        const Image& cand = pool.entries[idx].image;
        const double d = 0.5 * (evaluation::perceptual_distance(src, cand, bba) +
                                evaluation::perceptual_distance(src, cand, bbv));
        ranked.emplace_back(d, -pool.entries[idx].profile.length, id);
    }
    return std::get<2>(*std::min_element(ranked.begin(), ranked.end()));
}

}  // namespace

TEST_CASE("an exact-size duplicate of the source ranks first with score zero") {
    const Image src = bar(24, 7, 1);
    const CandidatePool pool = make_pool({{"big", bar(36, 9, 2)},
                                          {"dup", bar(24, 7, 3)},
                                          {"thin", bar(24, 4, 4)}});
    const auto top = phase1_rank(morphometry::measure(src), pool);
    REQUIRE(top.size() == 3);
    CHECK(pool.entries[top[0].index].image_id == "dup");
    CHECK(top[0].score == 0.0);
    CHECK(top[1].score > 0.0);
}

TEST_CASE("phase 1 handles small pools and rejects an empty one") {
    const auto prof = morphometry::measure(bar(20, 6, 5));
    CHECK(phase1_rank(prof, make_pool({{"a", bar(18, 6, 6)}, {"b", bar(30, 9, 7)}})).size() == 2);
    CHECK(phase1_rank(prof, make_pool({{"a", bar(18, 6, 6)}})).size() == 1);

    CandidatePool big = make_pool({{"a", bar(18, 6, 6)},
                                   {"b", bar(30, 9, 7)},
                                   {"c", bar(22, 5, 8)},
                                   {"d", bar(20, 7, 9)},
                                   {"e", bar(26, 6, 10)}});
    CHECK(phase1_rank(prof, big).size() == 3);

    CHECK_THROWS_AS(phase1_rank(prof, CandidatePool{}), SelectionError);
    CHECK_THROWS_AS(make_pool({{"a", bar(10, 4, 1)}, {"a", bar(12, 5, 2)}}), SelectionError);
}

TEST_CASE("phase 1 agrees with an exhaustive sort on random pools") {
    Rng rng(101);
    for (int trial = 0; trial < 10; ++trial) {
        const CandidatePool pool = random_pool(rng, 50);
        const Image src = bar(static_cast<int>(rng.randint(10, 40)),
                              static_cast<int>(rng.randint(3, 12)), rng.next_u64());
        const auto sp = morphometry::measure(src);

        std::vector<std::tuple<double, double, std::string>> rows;
        for (const auto& e : pool.entries) {
            const double dlen = std::abs(e.profile.length - sp.length);
            rows.emplace_back(dlen / std::max(sp.length, 1.0) +
                                  std::abs(e.profile.width - sp.width) / std::max(sp.width, 1.0),
                              dlen, e.image_id);
        }
        std::sort(rows.begin(), rows.end());

        const auto top = phase1_rank(sp, pool);
        REQUIRE(top.size() == 3);
        for (size_t k = 0; k < 3; ++k) {
            CHECK(pool.entries[top[k].index].image_id == std::get<2>(rows[k]));
            CHECK(top[k].score == std::get<0>(rows[k]));
        }
    }
}

TEST_CASE("phase 2 picks the perceptually closest candidate") {
    const Image src = bar(24, 7, 31);
    const CandidatePool pool = make_pool({{"same", bar(24, 7, 31)},   // pixel-identical
                                          {"noisy", bar(24, 7, 32)},
                                          {"other", bar(24, 7, 33)}});
    const std::vector<ScoredCandidate> all = {{0, 0.0}, {1, 0.0}, {2, 0.0}};
    std::vector<double> scores;
    const size_t chosen = phase2_select(src, pool, all, {}, &scores);
    CHECK(pool.entries[chosen].image_id == "same");
    REQUIRE(scores.size() == 3);
    CHECK(scores[0] == 0.0);
    CHECK(scores[1] > 0.0);

    // a single candidate is returned unconditionally
    CHECK(phase2_select(src, pool, {{2, 0.0}}) == 2);
}

TEST_CASE("phase 2 ties break by larger length then smaller id") {
    const PerceptualMetric flat = [](const Image&, const Image&) { return 1.0; };
    const CandidatePool pool =
        make_pool({{"b", bar(20, 6, 41)}, {"a", bar(20, 6, 42)}, {"c", bar(10, 6, 43)}});
    const Image src = bar(20, 6, 44);
    const std::vector<ScoredCandidate> cands = {{0, 0.0}, {1, 0.0}, {2, 0.0}};
    const size_t chosen = phase2_select(src, pool, cands, flat);
    CHECK(pool.entries[chosen].image_id == "a");  // longest pair {a,b}, id breaks

    CHECK_THROWS_AS(phase2_select(src, pool, {}, flat), SelectionError);
    const std::vector<ScoredCandidate> four = {{0, 0.}, {1, 0.}, {2, 0.}, {0, 0.}};
    CHECK_THROWS_AS(phase2_select(src, pool, four, flat), SelectionError);
}

TEST_CASE("the source is selected whenever it sits in the pool") {
    Rng rng(51);
    const Image src = bar(22, 6, 999);

    CandidatePool solo = make_pool({{"self", src}});
    CHECK(select_driving("s", src, solo).chosen_id == "self");

    std::vector<std::pair<std::string, Image>> imgs;
    for (int i = 0; i < 12; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "c%03d", i);
        imgs.emplace_back(id, bar(static_cast<int>(rng.randint(10, 40)),
                                  static_cast<int>(rng.randint(3, 12)), rng.next_u64()));
    }
    imgs.emplace_back("self", src);
    const MatchResult r = select_driving("s", src, make_pool(std::move(imgs)));
    CHECK(r.chosen_id == "self");
    CHECK(r.source_id == "s");
    REQUIRE(r.top3_ids.size() == 3);
    CHECK(std::count(r.top3_ids.begin(), r.top3_ids.end(), r.chosen_id) == 1);
    CHECK(r.phase2_scores.size() == r.top3_ids.size());
}

TEST_CASE("an empty-mask source still selects via the epsilon guard") {
    const Image blank(48, 48);  // measure() -> length 0, width 0
    const CandidatePool pool =
        make_pool({{"a", bar(12, 4, 61)}, {"b", bar(20, 8, 62)}, {"c", bar(30, 10, 63)}});
    const MatchResult r = select_driving("blank", blank, pool);
    CHECK(!r.chosen_id.empty());
    // with eps = 1 the score degenerates to length + width
    const auto top = phase1_rank(morphometry::measure(blank), pool);
    for (const auto& t : top) {
        const auto& p = pool.entries[t.index].profile;
        CHECK(t.score == p.length + p.width);
    }
    CHECK(pool.entries[top[0].index].image_id == "a");  // smallest body first
}

TEST_CASE("matching is deterministic and pool-order invariant") {
    Rng rng(71);
    std::vector<std::pair<std::string, Image>> imgs;
    for (int i = 0; i < 20; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "c%03d", i);
        imgs.emplace_back(id, bar(static_cast<int>(rng.randint(10, 40)),
                                  static_cast<int>(rng.randint(3, 12)), rng.next_u64()));
    }
    const Image src = bar(25, 7, 777);

    auto run = [&](const std::vector<std::pair<std::string, Image>>& order) {
        return select_driving("s", src, make_pool(std::vector(order)));
    };
    const MatchResult base = run(imgs);
    const MatchResult again = run(imgs);
    CHECK(again.chosen_id == base.chosen_id);
    CHECK(again.top3_ids == base.top3_ids);
    CHECK(again.phase1_scores == base.phase1_scores);
    CHECK(again.phase2_scores == base.phase2_scores);

    Rng shuffler(72);
    for (int s = 0; s < 5; ++s) {
        auto shuffled = imgs;
        shuffler.shuffle(shuffled);
        const MatchResult r = run(shuffled);
        CHECK(r.chosen_id == base.chosen_id);
        CHECK(r.top3_ids == base.top3_ids);
        CHECK(r.phase1_scores == base.phase1_scores);
        CHECK(r.phase2_scores == base.phase2_scores);
    }
}

TEST_CASE("select_driving agrees with brute force on randomized instances") {
    Rng rng(81);
    for (int trial = 0; trial < 20; ++trial) {
        const CandidatePool pool = random_pool(rng, 12);
        const Image src = bar(static_cast<int>(rng.randint(10, 40)),
                              static_cast<int>(rng.randint(3, 12)), rng.next_u64());

        std::vector<std::string> want_top;
        const std::string want = brute_force_choice(src, pool, &want_top);
        const MatchResult got = select_driving("s", src, pool);

        CHECK(got.chosen_id == want);
        CHECK(got.top3_ids == want_top);
        CHECK(std::count(got.top3_ids.begin(), got.top3_ids.end(), got.chosen_id) == 1);
    }
}
