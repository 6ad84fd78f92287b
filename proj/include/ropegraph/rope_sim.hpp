#pragma once

// Planar rope / rope-ring simulator: canonical layouts, random scrambling,
// pick-and-place dynamics via position-based distance constraints, and a
// top-down rasterizer.

#include <cstdint>
#include <string>
#include <vector>

namespace ropegraph {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2, Vec2) = default;
};

double norm(Vec2 v);
double squared_norm(Vec2 v);

enum class Topology : std::uint8_t { Chain = 0, Ring = 1 };

const char* to_string(Topology t);
Topology topology_from_string(const std::string& s);

// Ordered unit positions in the unit-square workspace. Consecutive units (and
// the last/first pair for a ring) are linked by a distance constraint.
struct RopeState {
    Topology topology = Topology::Chain;
    std::vector<Vec2> units;
    double link_length = 0.0;

    std::size_t size() const { return units.size(); }
    std::size_t link_count() const;
    friend bool operator==(const RopeState&, const RopeState&) = default;
};

// Throws InvalidGeometry if the state has fewer than 2 units, a non-positive
// link length, or a unit outside the workspace.
void validate(const RopeState& state);

// max over links of |distance - link_length|.
double max_link_deviation(const RopeState& state);

struct Pixel {
    int row = 0;
    int col = 0;
    friend bool operator==(Pixel, Pixel) = default;
    friend auto operator<=>(Pixel, Pixel) = default;
};

struct PickPlaceAction {
    Pixel pick;
    Pixel place;
    friend bool operator==(const PickPlaceAction&, const PickPlaceAction&) = default;
};

// The single world<->pixel mapping used everywhere:
// row = floor(y * H), col = floor(x * W), clamped into the image.
Pixel world_to_pixel(Vec2 p, int height, int width);
// Center of the pixel in world units.
Vec2 pixel_to_world(Pixel px, int height, int width);

struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // row-major, each in [0, 1]

    Image() = default;
    Image(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
    double at(Pixel p) const { return at(p.row, p.col); }
    bool contains(Pixel p) const { return p.row >= 0 && p.row < height && p.col >= 0 && p.col < width; }
    double diagonal() const;
    friend bool operator==(const Image&, const Image&) = default;
};

struct SimConfig {
    double grasp_radius = 0.04;
    int pbd_iterations = 40;
    int drag_substeps = 8;
    double render_thickness = 3.0;
    // Random placements during scrambling stay this far from the border.
    double scramble_margin = 0.15;
    // After the drag, sweeps continue until every link is within
    // relax_tolerance * link_length, up to max_relax_sweeps.
    double relax_tolerance = 1e-4;
    int max_relax_sweeps = 20000;
};

void validate(const SimConfig& config);

// Canonical layout: a horizontal centered chain, or a centered regular
// polygon with side link_length.
RopeState init_state(Topology topology, int n_units, double link_length, std::uint64_t seed);

struct PickPlaceResult {
    RopeState state;
    bool grasped = false;
};

// Grasps the unit nearest to `pick` (if within grasp_radius), drags it to
// `place` in substeps with constraint projection after each.
PickPlaceResult apply_pick_place(const RopeState& state, Vec2 pick, Vec2 place, const SimConfig& config);

// Applies k random pick-and-place actions: unit chosen uniformly, drop point
// uniform in the margin-inset workspace.
RopeState scramble(const RopeState& state, int k_actions, std::uint64_t seed, const SimConfig& config);

// Gauss-Seidel projection of all links (and the workspace bounds) until the
// state satisfies the tolerance in `config`. `pinned` (or -1) stays fixed.
void relax(RopeState& state, int pinned, const SimConfig& config);

// Each link drawn as a stroke of the given pixel thickness; 1.0 foreground.
Image render(const RopeState& state, int height, int width, double thickness);

}  // namespace ropegraph
