#include "ropegraph/rope_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ropegraph/errors.hpp"
#include "ropegraph/random.hpp"

namespace ropegraph {

double norm(Vec2 v) { return std::hypot(v.x, v.y); }
double squared_norm(Vec2 v) { return v.x * v.x + v.y * v.y; }

const char* to_string(Topology t) { return t == Topology::Chain ? "chain" : "ring"; }

Topology topology_from_string(const std::string& s) {
    if (s == "chain" || s == "rope") return Topology::Chain;
    if (s == "ring" || s == "rope-ring") return Topology::Ring;
    throw ConfigError("unknown topology '" + s + "'");
}

std::size_t RopeState::link_count() const {
    if (units.size() < 2) return 0;
    return topology == Topology::Ring ? units.size() : units.size() - 1;
}

namespace {

bool in_workspace(Vec2 p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; }

Vec2 clamp_to_workspace(Vec2 p) { return {std::clamp(p.x, 0.0, 1.0), std::clamp(p.y, 0.0, 1.0)}; }

// Projects one distance constraint unless it is already within `slack`.
// Inverse masses are 0 (pinned) or 1.
void project_link(Vec2& a, Vec2& b, double rest, double slack, double wa, double wb) {
    const double wsum = wa + wb;
    if (wsum == 0.0) return;
    Vec2 d = b - a;
    double len = norm(d);
    const double c = len - rest;
    if (std::abs(c) <= slack) return;
    Vec2 n = len > 0.0 ? (1.0 / len) * d : Vec2{1.0, 0.0};
    a = clamp_to_workspace(a + (wa / wsum * c) * n);
    b = clamp_to_workspace(b - (wb / wsum * c) * n);
}

// One symmetric Gauss-Seidel sweep: forward then backward over links, so
// corrections propagate in both directions along the rope. Links already
// within `slack` are left alone, so a satisfied rope is a fixed point.
void sweep(RopeState& s, int pinned, double slack) {
    const std::size_t n = s.units.size();
    const std::size_t links = s.link_count();
    auto project = [&](std::size_t i) {
        const std::size_t j = (i + 1) % n;
        const double wi = static_cast<int>(i) == pinned ? 0.0 : 1.0;
        const double wj = static_cast<int>(j) == pinned ? 0.0 : 1.0;
        project_link(s.units[i], s.units[j], s.link_length, slack, wi, wj);
    };
    for (std::size_t i = 0; i < links; ++i) project(i);
    for (std::size_t i = links; i-- > 0;) project(i);
}

}  // namespace

void validate(const RopeState& state) {
    if (state.units.size() < 2) throw InvalidGeometry("rope needs at least 2 units");
    if (!(state.link_length > 0.0)) throw InvalidGeometry("link length must be positive");
    for (const Vec2& p : state.units) {
        if (!in_workspace(p)) throw InvalidGeometry("unit outside workspace");
    }
}

double max_link_deviation(const RopeState& state) {
    double worst = 0.0;
    const std::size_t n = state.units.size();
    for (std::size_t i = 0; i < state.link_count(); ++i) {
        const double d = norm(state.units[(i + 1) % n] - state.units[i]);
        worst = std::max(worst, std::abs(d - state.link_length));
    }
    return worst;
}

Pixel world_to_pixel(Vec2 p, int height, int width) {
    const int row = static_cast<int>(std::floor(p.y * height));
    const int col = static_cast<int>(std::floor(p.x * width));
    return {std::clamp(row, 0, height - 1), std::clamp(col, 0, width - 1)};
}

Vec2 pixel_to_world(Pixel px, int height, int width) {
    return {(px.col + 0.5) / width, (px.row + 0.5) / height};
}

double Image::diagonal() const {
    return std::sqrt(static_cast<double>(height) * height + static_cast<double>(width) * width);
}

void validate(const SimConfig& config) {
    if (!(config.grasp_radius > 0.0)) throw ConfigError("grasp_radius must be > 0");
    if (config.pbd_iterations < 1) throw ConfigError("pbd_iterations must be >= 1");
    if (config.drag_substeps < 1) throw ConfigError("drag_substeps must be >= 1");
    if (!(config.render_thickness > 0.0)) throw ConfigError("render_thickness must be > 0");
    if (!(config.scramble_margin >= 0.0 && config.scramble_margin < 0.5))
        throw ConfigError("scramble_margin must be in [0, 0.5)");
    if (!(config.relax_tolerance > 0.0)) throw ConfigError("relax_tolerance must be > 0");
}

RopeState init_state(Topology topology, int n_units, double link_length, std::uint64_t /*seed*/) {
    // The canonical layout is seed-independent.
    if (n_units < 3) throw InvalidGeometry("n_units must be >= 3");
    if (!(link_length > 0.0)) throw InvalidGeometry("link_length must be > 0");

    RopeState s;
    s.topology = topology;
    s.link_length = link_length;
    s.units.reserve(static_cast<std::size_t>(n_units));
    if (topology == Topology::Chain) {
        if ((n_units - 1) * link_length > 1.0) throw InvalidGeometry("chain longer than workspace");
        const double mid = 0.5 * (n_units - 1);
        for (int i = 0; i < n_units; ++i) {
            s.units.push_back({0.5 + (i - mid) * link_length, 0.5});
        }
    } else {
        const double step = 2.0 * std::numbers::pi / n_units;
        const double radius = link_length / (2.0 * std::sin(0.5 * step));
        if (2.0 * radius > 1.0) throw InvalidGeometry("ring wider than workspace");
        // Offset by half a step so one side is horizontal (a square for n=4).
        for (int i = 0; i < n_units; ++i) {
            const double angle = (i + 0.5) * step;
            s.units.push_back({0.5 + radius * std::cos(angle), 0.5 + radius * std::sin(angle)});
        }
    }
    return s;
}

void relax(RopeState& state, int pinned, const SimConfig& config) {
    const double tol = config.relax_tolerance * state.link_length;
    for (int it = 0; it < config.max_relax_sweeps; ++it) {
        if (max_link_deviation(state) <= tol) return;
        sweep(state, pinned, tol);
    }
}

PickPlaceResult apply_pick_place(const RopeState& state, Vec2 pick, Vec2 place, const SimConfig& config) {
    if (!in_workspace(pick) || !in_workspace(place)) throw OutOfWorkspace("pick/place point outside workspace");

    int grasped = -1;
    double best = config.grasp_radius * config.grasp_radius;
    for (std::size_t i = 0; i < state.units.size(); ++i) {
        const double d2 = squared_norm(state.units[i] - pick);
        if (d2 <= best && (grasped < 0 || d2 < best)) {
            best = d2;
            grasped = static_cast<int>(i);
        }
    }
    if (grasped < 0) return {state, false};

    PickPlaceResult out{state, true};
    RopeState& s = out.state;
    const Vec2 start = s.units[static_cast<std::size_t>(grasped)];
    const double slack = config.relax_tolerance * s.link_length;
    for (int step = 1; step <= config.drag_substeps; ++step) {
        const double t = static_cast<double>(step) / config.drag_substeps;
        s.units[static_cast<std::size_t>(grasped)] = step == config.drag_substeps ? place : start + t * (place - start);
        for (int it = 0; it < config.pbd_iterations; ++it) sweep(s, grasped, slack);
    }
    relax(s, grasped, config);
    return out;
}

RopeState scramble(const RopeState& state, int k_actions, std::uint64_t seed, const SimConfig& config) {
    Rng rng(seed);
    RopeState s = state;
    const double lo = config.scramble_margin;
    const double hi = 1.0 - config.scramble_margin;
    for (int k = 0; k < k_actions; ++k) {
        const auto unit = static_cast<std::size_t>(rng.below(s.units.size()));
        const Vec2 drop{rng.uniform(lo, hi), rng.uniform(lo, hi)};
        s = apply_pick_place(s, s.units[unit], drop, config).state;
    }
    return s;
}

namespace {

double point_segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    const double dx = bx - ax;
    const double dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

}  // namespace

Image render(const RopeState& state, int height, int width, double thickness) {
    Image img(height, width, 0.0);
    const double half = 0.5 * thickness;
    const std::size_t n = state.units.size();
    auto stroke = [&](Vec2 a, Vec2 b) {
        // Pixel space: x along columns, y along rows, pixel centers at +0.5.
        const double ax = a.x * width, ay = a.y * height;
        const double bx = b.x * width, by = b.y * height;
        const int r0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - half - 1)));
        const int r1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(ay, by) + half + 1)));
        const int c0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - half - 1)));
        const int c1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(ax, bx) + half + 1)));
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                if (point_segment_distance(c + 0.5, r + 0.5, ax, ay, bx, by) <= half) img.at(r, c) = 1.0;
            }
        }
    };
    if (n == 1) stroke(state.units[0], state.units[0]);
    for (std::size_t i = 0; i < state.link_count(); ++i) stroke(state.units[i], state.units[(i + 1) % n]);
    return img;
}

}  // namespace ropegraph
