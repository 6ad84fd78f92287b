#include "ropegraph/keypoints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "ropegraph/errors.hpp"

namespace ropegraph {

namespace {

long long squared_pixel_distance(Pixel a, Pixel b) {
    const long long dr = a.row - b.row;
    const long long dc = a.col - b.col;
    return dr * dr + dc * dc;
}

}  // namespace

KeypointSet extract_keypoints(const Image& image, int k, double intensity_threshold) {
    if (k < 1) throw ConfigError("keypoint count must be >= 1");
    std::vector<Pixel> foreground;
    for (int r = 0; r < image.height; ++r) {
        for (int c = 0; c < image.width; ++c) {
            if (image.at(r, c) > intensity_threshold) foreground.push_back({r, c});
        }
    }
    if (foreground.size() < static_cast<std::size_t>(k)) {
        throw InsufficientForeground("image has " + std::to_string(foreground.size()) +
                                     " foreground pixels, need " + std::to_string(k));
    }

    KeypointSet out;
    out.points.reserve(static_cast<std::size_t>(k));
    out.points.push_back(foreground.front());
    std::vector<long long> min_d2(foreground.size());
    for (std::size_t i = 0; i < foreground.size(); ++i) min_d2[i] = squared_pixel_distance(foreground[i], out.points[0]);

    while (out.points.size() < static_cast<std::size_t>(k)) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < foreground.size(); ++i) {
            if (min_d2[i] > min_d2[best]) best = i;
        }
        const Pixel chosen = foreground[best];
        out.points.push_back(chosen);
        for (std::size_t i = 0; i < foreground.size(); ++i) {
            min_d2[i] = std::min(min_d2[i], squared_pixel_distance(foreground[i], chosen));
        }
    }
    return out;
}

KeypointSet keypoints_from_state(const RopeState& state, int k, int height, int width) {
    const long long n = static_cast<long long>(state.units.size());
    if (k < 1) throw ConfigError("keypoint count must be >= 1");
    if (n < k) {
        throw InsufficientUnits("state has " + std::to_string(n) + " units, need " + std::to_string(k));
    }
    KeypointSet out;
    for (long long i = 0; i < k; ++i) {
        // round(i * n / k), halves rounded up
        const long long idx = (2 * i * n + k) / (2LL * k);
        out.points.push_back(world_to_pixel(state.units[static_cast<std::size_t>(idx)], height, width));
    }
    return out;
}

RepGraph build_graph(const KeypointSet& keypoints, int height, int width) {
    const int k = static_cast<int>(keypoints.size());
    if (k < 3) throw DegenerateGraph("graph needs at least 3 keypoints");
    RepGraph g;
    g.num_vertices = k;
    g.features.resize(static_cast<std::size_t>(k) * 2);
    g.adjacency.assign(static_cast<std::size_t>(k) * k, 0.0);
    for (int v = 0; v < k; ++v) {
        const Pixel p = keypoints.points[static_cast<std::size_t>(v)];
        g.features[static_cast<std::size_t>(v) * 2] = static_cast<double>(p.row) / height;
        g.features[static_cast<std::size_t>(v) * 2 + 1] = static_cast<double>(p.col) / width;
    }
    auto link = [&](int i, int j) {
        g.adjacency[static_cast<std::size_t>(i) * k + j] = 1.0;
        g.adjacency[static_cast<std::size_t>(j) * k + i] = 1.0;
    };
    for (int i = 0; i < k; ++i) {
        std::vector<std::pair<long long, int>> others;
        for (int j = 0; j < k; ++j) {
            if (j != i) others.emplace_back(squared_pixel_distance(keypoints.points[i], keypoints.points[j]), j);
        }
        std::partial_sort(others.begin(), others.begin() + 2, others.end());
        link(i, others[0].second);
        link(i, others[1].second);
        link(i, i);
    }
    return g;
}

Image gaussian_mask(const KeypointSet& keypoints, int height, int width, MaskOptions options) {
    if (!(options.sigma > 0.0)) throw ConfigError("mask sigma must be > 0");
    Image mask(height, width, 0.0);
    const double inv_two_var = 1.0 / (2.0 * options.sigma * options.sigma);
    const double cutoff = options.truncate_sigmas > 0.0 ? options.truncate_sigmas * options.sigma
                                                        : std::numeric_limits<double>::infinity();
    const double cutoff2 = cutoff * cutoff;
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            double value = 0.0;
            for (const Pixel& kp : keypoints.points) {
                const auto d2 = static_cast<double>(squared_pixel_distance({r, c}, kp));
                if (d2 > cutoff2) continue;
                value = std::max(value, std::exp(-d2 * inv_two_var));
            }
            mask.at(r, c) = value;
        }
    }
    return mask;
}

KeypointSet align_keypoints(const KeypointSet& current, const KeypointSet& goal) {
    const std::size_t n = current.size();
    if (goal.size() != n) throw ShapeMismatch("keypoint sets differ in size");
    std::vector<std::tuple<long long, std::size_t, std::size_t>> pairs;
    pairs.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            pairs.emplace_back(squared_pixel_distance(current.points[i], goal.points[j]), i, j);
        }
    }
    std::sort(pairs.begin(), pairs.end());
    std::vector<bool> used_current(n, false), used_goal(n, false);
    KeypointSet out;
    out.points.resize(n);
    for (const auto& [d2, i, j] : pairs) {
        if (used_current[i] || used_goal[j]) continue;
        used_current[i] = used_goal[j] = true;
        out.points[i] = goal.points[j];
    }
    return out;
}

}  // namespace ropegraph
