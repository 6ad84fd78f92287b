#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "reference.hpp"
#include "ropegraph/errors.hpp"
#include "ropegraph/keypoints.hpp"

using namespace ropegraph;

namespace {

Image scrambled_image(std::uint64_t seed, Topology t = Topology::Chain) {
    const RopeState s = scramble(init_state(t, 32, 0.02, 0), 6, seed, SimConfig{});
    return render(s, 64, 64, 3.0);
}

KeypointSet random_keypoints(int k, Rng& rng, int h = 64, int w = 64) {
    KeypointSet kp;
    for (int i = 0; i < k; ++i)
        kp.points.push_back({static_cast<int>(rng.below(static_cast<std::uint64_t>(h))),
                             static_cast<int>(rng.below(static_cast<std::uint64_t>(w)))});
    return kp;
}

}  // namespace

TEST_CASE("blank image has no keypoints") {
    CHECK_THROWS_AS(extract_keypoints(Image(64, 64, 0.0), 16), InsufficientForeground);
    Image few(8, 8, 0.0);
    few.at(1, 1) = few.at(2, 2) = 1.0;
    CHECK_THROWS_AS(extract_keypoints(few, 3), InsufficientForeground);
    CHECK(extract_keypoints(few, 2).size() == 2);
}

TEST_CASE("horizontal rope: two keypoints are the endpoints") {
    RopeState s = init_state(Topology::Chain, 32, 0.02, 0);
    const Image img = render(s, 64, 64, 3.0);
    const KeypointSet kp = extract_keypoints(img, 2);
    REQUIRE(kp.size() == 2);
    const auto brute = ref::brute_fps(img, 2, 0.5);
    CHECK(kp.points == brute);
    // The leftmost and rightmost foreground columns.
    int lo = 64, hi = -1;
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c)
            if (img.at(r, c) > 0.5) {
                lo = std::min(lo, c);
                hi = std::max(hi, c);
            }
    CHECK(kp.points[0].col - lo <= 2);
    CHECK(hi - kp.points[1].col <= 2);
}

TEST_CASE("FPS matches the brute-force oracle and is deterministic") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const Image img = scrambled_image(seed, seed % 2 ? Topology::Ring : Topology::Chain);
        const KeypointSet kp = extract_keypoints(img, 16);
        CHECK(kp.points == ref::brute_fps(img, 16, 0.5));
        CHECK(kp == extract_keypoints(img, 16));
        for (const Pixel& p : kp.points) CHECK(img.at(p) > 0.5);
    }
}

TEST_CASE("keypoints_from_state subsamples units") {
    const RopeState s = scramble(init_state(Topology::Ring, 32, 0.02, 0), 5, 3, SimConfig{});
    const KeypointSet kp = keypoints_from_state(s, 16, 64, 64);
    REQUIRE(kp.size() == 16);
    for (int i = 0; i < 16; ++i) CHECK(kp.points[static_cast<std::size_t>(i)] == world_to_pixel(s.units[static_cast<std::size_t>(2 * i)], 64, 64));
    const KeypointSet all = keypoints_from_state(s, 32, 64, 64);
    for (std::size_t i = 0; i < 32; ++i) CHECK(all.points[i] == world_to_pixel(s.units[i], 64, 64));
    CHECK_THROWS_AS(keypoints_from_state(s, 33, 64, 64), InsufficientUnits);

    // Every keypoint lies within the stroke thickness of a drawn pixel.
    const Image img = render(s, 64, 64, 3.0);
    for (const Pixel& p : kp.points) {
        double best = 1e9;
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c)
                if (img.at(r, c) > 0.0) best = std::min(best, std::hypot(r - p.row, c - p.col));
        CHECK(best <= 3.0);
    }
}

TEST_CASE("three collinear points form a complete graph") {
    const KeypointSet kp{{{10, 10}, {10, 20}, {10, 30}}};
    const RepGraph g = build_graph(kp, 64, 64);
    const auto brute = ref::brute_adjacency(kp.points);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            CHECK(g.edge(i, j) == 1.0);
            CHECK(brute[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] == 1);
        }
}

TEST_CASE("graph features are normalized coordinates") {
    const KeypointSet kp{{{32, 16}, {0, 0}, {63, 63}}};
    const RepGraph g = build_graph(kp, 64, 64);
    CHECK(g.feature(0, 0) == 0.5);
    CHECK(g.feature(0, 1) == 0.25);
    CHECK(g.feature(1, 0) == 0.0);
    CHECK(g.feature(2, 1) == 63.0 / 64.0);
}

TEST_CASE("adjacency matches brute force, is symmetric, degrees in [3, K]") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 3 + static_cast<int>(rng.below(14));
        const KeypointSet kp = random_keypoints(k, rng);
        const RepGraph g = build_graph(kp, 64, 64);
        const auto brute = ref::brute_adjacency(kp.points);
        for (int i = 0; i < k; ++i) {
            double deg = 0.0;
            for (int j = 0; j < k; ++j) {
                CHECK(g.edge(i, j) == brute[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
                CHECK(g.edge(i, j) == g.edge(j, i));
                deg += g.edge(i, j);
            }
            CHECK(g.edge(i, i) == 1.0);
            CHECK(deg >= 3.0);
            CHECK(deg <= k);
        }
    }
}

TEST_CASE("adjacency is invariant to uniform coordinate scaling") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const KeypointSet kp = random_keypoints(10, rng, 30, 30);
        KeypointSet big = kp;
        for (Pixel& p : big.points) p = {2 * p.row, 2 * p.col};
        CHECK(build_graph(kp, 64, 64).adjacency == build_graph(big, 64, 64).adjacency);
    }
}

TEST_CASE("duplicate keypoints are valid neighbours") {
    const KeypointSet kp{{{5, 5}, {5, 5}, {40, 40}, {41, 41}}};
    const RepGraph g = build_graph(kp, 64, 64);
    CHECK(g.edge(0, 1) == 1.0);
    CHECK_THROWS_AS(build_graph(KeypointSet{{{1, 1}, {2, 2}}}, 64, 64), DegenerateGraph);
}

TEST_CASE("intensity scaling leaves the graph unchanged") {
    const Image img = scrambled_image(3);
    Image dim = img;
    for (double& v : dim.values) v *= 0.8;
    CHECK(build_graph(extract_keypoints(img, 16), 64, 64) == build_graph(extract_keypoints(dim, 16, 0.5), 64, 64));
}

TEST_CASE("gaussian mask peak and one-sigma value") {
    const KeypointSet kp{{{32, 32}}};
    const Image m = gaussian_mask(kp, 64, 64, {3.0, 0.0});
    CHECK(m.at(32, 32) == 1.0);
    CHECK(m.at(32, 35) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
    CHECK(m.at(29, 32) == doctest::Approx(0.6065306597).epsilon(1e-9));
    const Image t = gaussian_mask(kp, 64, 64, {3.0, 3.0});
    CHECK(t.at(32, 41) == doctest::Approx(std::exp(-4.5)).epsilon(1e-15));
    CHECK(t.at(32, 42) == 0.0);
    CHECK(t.at(39, 39) == 0.0);
}

TEST_CASE("multi-keypoint mask is the per-pixel max of single masks") {
    Rng rng(13);
    for (double trunc : {0.0, 3.0}) {
        const KeypointSet kp = random_keypoints(16, rng);
        const Image m = gaussian_mask(kp, 64, 64, {3.0, trunc});
        Image want(64, 64, 0.0);
        for (const Pixel& p : kp.points)
            for (int r = 0; r < 64; ++r)
                for (int c = 0; c < 64; ++c) {
                    const double d = std::hypot(r - p.row, c - p.col);
                    if (trunc > 0.0 && d > trunc * 3.0) continue;
                    want.at(r, c) = std::max(want.at(r, c), std::exp(-d * d / 18.0));
                }
        for (std::size_t i = 0; i < want.values.size(); ++i) CHECK(m.values[i] == doctest::Approx(want.values[i]).epsilon(1e-14));
        for (double v : m.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        for (const Pixel& p : kp.points) CHECK(m.at(p) == 1.0);
    }
}

TEST_CASE("mask is non-increasing in distance to the nearest keypoint") {
    Rng rng(14);
    const KeypointSet kp = random_keypoints(5, rng);
    const Image m = gaussian_mask(kp, 64, 64, {3.0, 0.0});
    std::vector<std::pair<int, double>> samples;
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            int best = 1 << 30;
            for (const Pixel& p : kp.points) best = std::min(best, (r - p.row) * (r - p.row) + (c - p.col) * (c - p.col));
            samples.emplace_back(best, m.at(r, c));
        }
    std::sort(samples.begin(), samples.end());
    for (std::size_t i = 1; i < samples.size(); ++i) CHECK(samples[i].second <= samples[i - 1].second);
    CHECK_THROWS_AS(gaussian_mask(kp, 64, 64, {0.0, 3.0}), ConfigError);
}

TEST_CASE("greedy alignment") {
    const KeypointSet cur{{{0, 0}, {10, 0}, {20, 0}}};
    const KeypointSet goal{{{21, 1}, {1, 1}, {11, 0}}};
    const KeypointSet a = align_keypoints(cur, goal);
    CHECK(a.points == std::vector<Pixel>{{1, 1}, {11, 0}, {21, 1}});
    // Aligning a set with a permutation of itself recovers it.
    Rng rng(15);
    const KeypointSet kp = random_keypoints(16, rng);
    KeypointSet perm = kp;
    std::reverse(perm.points.begin(), perm.points.end());
    CHECK(align_keypoints(kp, perm) == kp);
    CHECK_THROWS_AS(align_keypoints(cur, KeypointSet{{{0, 0}}}), ShapeMismatch);
}
