#pragma once

// Keypoints, the two-nearest-neighbour representation graph, and Gaussian
// keypoint masks.

#include <vector>

#include "ropegraph/rope_sim.hpp"

namespace ropegraph {

struct KeypointSet {
    std::vector<Pixel> points;
    std::size_t size() const { return points.size(); }
    friend bool operator==(const KeypointSet&, const KeypointSet&) = default;
};

struct RepGraph {
    int num_vertices = 0;
    // num_vertices x 2, row-major: (row / H, col / W).
    std::vector<double> features;
    // num_vertices x num_vertices, symmetric 0/1 with unit diagonal.
    std::vector<double> adjacency;

    double feature(int v, int f) const { return features[static_cast<std::size_t>(v) * 2 + f]; }
    double edge(int i, int j) const { return adjacency[static_cast<std::size_t>(i) * num_vertices + j]; }
    friend bool operator==(const RepGraph&, const RepGraph&) = default;
};

// Farthest-point sampling over pixels with intensity > threshold. Seeded at
// the lexicographically smallest foreground pixel; ties go to the first pixel
// in row-major order.
KeypointSet extract_keypoints(const Image& image, int k, double intensity_threshold = 0.5);

// Units at indices round(i * N / K), mapped to pixels.
KeypointSet keypoints_from_state(const RopeState& state, int k, int height, int width);

// Features are normalized coordinates; each vertex links to its two nearest
// other vertices (ties by lower index), then the matrix is symmetrized and
// self-loops are added.
RepGraph build_graph(const KeypointSet& keypoints, int height, int width);

struct MaskOptions {
    double sigma = 3.0;
    // Values beyond truncate_sigmas * sigma from every keypoint are exactly 0.
    // Non-positive disables truncation.
    double truncate_sigmas = 3.0;
};

// mask(p) = max_k exp(-|p - k|^2 / (2 sigma^2)), truncated per options.
Image gaussian_mask(const KeypointSet& keypoints, int height, int width, MaskOptions options = {});

// Reorders `goal` so that goal[i] is greedily matched to current[i]: all
// (current, goal) pairs are visited in order of increasing distance and
// accepted when both ends are still free.
KeypointSet align_keypoints(const KeypointSet& current, const KeypointSet& goal);

}  // namespace ropegraph
