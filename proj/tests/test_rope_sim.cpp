#include <doctest.h>

#include <cmath>

#include "reference.hpp"
#include "ropegraph/errors.hpp"
#include "ropegraph/rope_sim.hpp"

using namespace ropegraph;

namespace {

RopeState two_unit_chain() {
    RopeState s;
    s.topology = Topology::Chain;
    s.link_length = 0.1;
    s.units = {{0.5, 0.5}, {0.4, 0.5}};
    return s;
}

// Smallest distance from (x, y) (pixel units) to any stroked segment.
double distance_to_polyline(const RopeState& s, double x, double y, int h, int w) {
    double best = 1e300;
    const std::size_t n = s.units.size();
    for (std::size_t i = 0; i < s.link_count(); ++i) {
        const Vec2 a{s.units[i].x * w, s.units[i].y * h};
        const Vec2 b{s.units[(i + 1) % n].x * w, s.units[(i + 1) % n].y * h};
        const Vec2 d = b - a;
        double t = ((x - a.x) * d.x + (y - a.y) * d.y) / squared_norm(d);
        t = std::clamp(t, 0.0, 1.0);
        best = std::min(best, norm(Vec2{x, y} - (a + t * d)));
    }
    return best;
}

}  // namespace

TEST_CASE("canonical chain is centered and collinear") {
    const RopeState s = init_state(Topology::Chain, 3, 0.1, 123);
    REQUIRE(s.units.size() == 3);
    CHECK(s.units[0].x == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(s.units[1].x == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.units[2].x == doctest::Approx(0.6).epsilon(1e-15));
    for (const Vec2& u : s.units) CHECK(u.y == 0.5);
}

TEST_CASE("canonical ring is a centered regular polygon") {
    const RopeState s = init_state(Topology::Ring, 4, 0.1, 0);
    REQUIRE(s.units.size() == 4);
    Vec2 c{};
    for (const Vec2& u : s.units) c = c + 0.25 * u;
    CHECK(c.x == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(c.y == doctest::Approx(0.5).epsilon(1e-12));
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(norm(s.units[i] - s.units[(i + 1) % 4]) == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(norm(s.units[i] - c) == doctest::Approx(0.1 / std::sqrt(2.0)).epsilon(1e-12));
    }
    CHECK(max_link_deviation(s) < 1e-12);
}

TEST_CASE("init_state is deterministic and rejects bad geometry") {
    CHECK(init_state(Topology::Ring, 32, 0.02, 1) == init_state(Topology::Ring, 32, 0.02, 1));
    CHECK(init_state(Topology::Chain, 32, 0.02, 1) == init_state(Topology::Chain, 32, 0.02, 9));
    CHECK_THROWS_AS(init_state(Topology::Chain, 2, 0.1, 0), InvalidGeometry);
    CHECK_THROWS_AS(init_state(Topology::Chain, 20, 0.1, 0), InvalidGeometry);
    CHECK_THROWS_AS(init_state(Topology::Ring, 40, 0.1, 0), InvalidGeometry);
    CHECK_THROWS_AS(init_state(Topology::Chain, 5, 0.0, 0), InvalidGeometry);
}

TEST_CASE("pixel mapping") {
    CHECK(world_to_pixel({0.0, 0.0}, 64, 64) == Pixel{0, 0});
    CHECK(world_to_pixel({0.25, 0.5}, 64, 64) == Pixel{32, 16});
    CHECK(world_to_pixel({1.0, 1.0}, 64, 64) == Pixel{63, 63});
    CHECK(world_to_pixel({-0.5, 2.0}, 64, 32) == Pixel{63, 0});
    const Vec2 c = pixel_to_world({32, 16}, 64, 64);
    CHECK(c.x == (16 + 0.5) / 64);
    CHECK(c.y == (32 + 0.5) / 64);
    for (int r = 0; r < 64; r += 7)
        for (int col = 0; col < 48; col += 5) CHECK(world_to_pixel(pixel_to_world({r, col}, 64, 48), 64, 48) == Pixel{r, col});
}

TEST_CASE("two-unit drag matches the hand-solved projection") {
    const auto [s, grasped] = apply_pick_place(two_unit_chain(), {0.5, 0.5}, {0.8, 0.5}, SimConfig{});
    CHECK(grasped);
    CHECK(s.units[0].x == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(s.units[0].y == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.units[1].x == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(s.units[1].y == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(norm(s.units[0] - s.units[1]) == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("zero-displacement grasp leaves the state unchanged") {
    const RopeState s = scramble(init_state(Topology::Ring, 32, 0.02, 0), 5, 17, SimConfig{});
    for (std::size_t i : {0u, 7u, 31u}) {
        const auto [out, grasped] = apply_pick_place(s, s.units[i], s.units[i], SimConfig{});
        CHECK(grasped);
        for (std::size_t j = 0; j < s.units.size(); ++j) CHECK(norm(out.units[j] - s.units[j]) < 1e-6);
    }
}

TEST_CASE("a missed grasp is an exact no-op") {
    const RopeState s = init_state(Topology::Chain, 32, 0.02, 0);
    const auto [out, grasped] = apply_pick_place(s, {0.5, 0.9}, {0.1, 0.1}, SimConfig{});
    CHECK_FALSE(grasped);
    CHECK(out == s);
}

TEST_CASE("grasp picks the nearest unit, lowest index on ties") {
    RopeState s;
    s.topology = Topology::Chain;
    s.link_length = 0.03125;
    s.units = {{0.46875, 0.5}, {0.5, 0.5}, {0.53125, 0.5}};
    // Exactly halfway between units 1 and 2.
    const auto [out, grasped] = apply_pick_place(s, {0.515625, 0.5}, {0.515625, 0.5}, SimConfig{});
    CHECK(grasped);
    CHECK(out.units[1].x == doctest::Approx(0.515625).epsilon(1e-12));
    CHECK(out.units[1].y == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pick or place outside the workspace is rejected") {
    const RopeState s = init_state(Topology::Chain, 8, 0.02, 0);
    CHECK_THROWS_AS(apply_pick_place(s, {-0.1, 0.5}, {0.5, 0.5}, SimConfig{}), OutOfWorkspace);
    CHECK_THROWS_AS(apply_pick_place(s, {0.5, 0.5}, {0.5, 1.2}, SimConfig{}), OutOfWorkspace);
}

TEST_CASE("scramble: identity at k=0, deterministic, constraints hold") {
    const SimConfig cfg;
    for (Topology t : {Topology::Chain, Topology::Ring}) {
        const RopeState s0 = init_state(t, 32, 0.02, 0);
        CHECK(scramble(s0, 0, 5, cfg) == s0);
        const RopeState a = scramble(s0, 8, 99, cfg);
        CHECK(a == scramble(s0, 8, 99, cfg));
        CHECK_FALSE(a == scramble(s0, 8, 100, cfg));
        CHECK(a.topology == t);
        CHECK(a.units.size() == 32);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const RopeState s = scramble(s0, 4 + static_cast<int>(seed % 9), seed, cfg);
            CHECK(max_link_deviation(s) <= 1e-3 * s.link_length);
            CHECK_NOTHROW(validate(s));
        }
    }
}

TEST_CASE("constraints hold after every pick-and-place") {
    Rng rng(4);
    RopeState s = init_state(Topology::Ring, 32, 0.02, 0);
    for (int k = 0; k < 30; ++k) {
        const Vec2 pick = s.units[rng.below(s.units.size())];
        const Vec2 place{rng.uniform(), rng.uniform()};
        s = apply_pick_place(s, pick, place, SimConfig{}).state;
        CHECK(max_link_deviation(s) <= 1e-3 * s.link_length);
        for (const Vec2& u : s.units) {
            CHECK(u.x >= 0.0);
            CHECK(u.x <= 1.0);
            CHECK(u.y >= 0.0);
            CHECK(u.y <= 1.0);
        }
    }
}

TEST_CASE("render: horizontal chain matches the scanline rasterizer") {
    for (double y : {0.5, 0.503, 0.71}) {
        RopeState s = init_state(Topology::Chain, 32, 0.02, 0);
        for (Vec2& u : s.units) u.y = y;
        const Image img = render(s, 64, 64, 3.0);
        const Image want = ref::scanline_render(s.units, false, 64, 64, 3.0);
        CHECK(img == want);
        // One horizontal band about `thickness` rows high.
        int rows = 0;
        for (int r = 0; r < 64; ++r) {
            bool any = false;
            for (int c = 0; c < 64; ++c) any = any || img.at(r, c) > 0.0;
            rows += any ? 1 : 0;
        }
        CHECK(rows >= 3);
        CHECK(rows <= 4);
    }
}

TEST_CASE("render: scrambled states match the scanline rasterizer") {
    for (Topology t : {Topology::Chain, Topology::Ring}) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const RopeState s = scramble(init_state(t, 32, 0.02, 0), 6, seed, SimConfig{});
            const Image img = render(s, 64, 64, 3.0);
            const Image want = ref::scanline_render(s.units, t == Topology::Ring, 64, 64, 3.0);
            int disagreements = 0;
            for (int r = 0; r < 64; ++r)
                for (int c = 0; c < 64; ++c) {
                    if (img.at(r, c) == want.at(r, c)) continue;
                    // Only pixel centers on the stroke boundary may differ by rounding.
                    CHECK(std::fabs(distance_to_polyline(s, c + 0.5, r + 0.5, 64, 64) - 1.5) < 1e-9);
                    ++disagreements;
                }
            CHECK(disagreements <= 2);
        }
    }
}

TEST_CASE("render is binary and deterministic") {
    const RopeState s = scramble(init_state(Topology::Ring, 32, 0.02, 0), 7, 3, SimConfig{});
    const Image a = render(s, 64, 64, 3.0);
    CHECK(a == render(s, 64, 64, 3.0));
    for (double v : a.values) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("validate rejects malformed states and configs") {
    RopeState s = init_state(Topology::Chain, 4, 0.1, 0);
    s.units[2].x = 1.5;
    CHECK_THROWS_AS(validate(s), InvalidGeometry);
    s = init_state(Topology::Chain, 4, 0.1, 0);
    s.units.resize(1);
    CHECK_THROWS_AS(validate(s), InvalidGeometry);
    SimConfig cfg;
    cfg.grasp_radius = 0.0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = SimConfig{};
    cfg.pbd_iterations = 0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
}
