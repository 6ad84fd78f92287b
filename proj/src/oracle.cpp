#include "ropegraph/oracle.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ropegraph/errors.hpp"

namespace ropegraph {

namespace {

void check_sizes(std::span<const Vec2> current, std::span<const Vec2> goal) {
    if (current.size() != goal.size()) {
        throw ShapeMismatch("current has " + std::to_string(current.size()) + " units, goal has " +
                            std::to_string(goal.size()));
    }
    if (current.size() < 2) throw ShapeMismatch("need at least 2 units");
}

}  // namespace

std::vector<std::vector<int>> correspondence_family(std::size_t n, Topology topology, OracleOptions options) {
    const int count = static_cast<int>(n);
    std::vector<std::vector<int>> family;
    auto shifted = [&](int shift, bool reversed) {
        std::vector<int> remap(n);
        for (int j = 0; j < count; ++j) {
            remap[j] = reversed ? ((shift - j) % count + count) % count : (shift + j) % count;
        }
        return remap;
    };
    if (topology == Topology::Chain) {
        family.push_back(shifted(0, false));
        family.push_back(shifted(count - 1, true));
    } else {
        for (int i = 0; i < count; ++i) family.push_back(shifted(i, false));
        if (options.ring_reversal) {
            for (int i = 0; i < count; ++i) family.push_back(shifted(i, true));
        }
    }
    return family;
}

double remapped_mse(std::span<const Vec2> current, std::span<const Vec2> goal, std::span<const int> remap) {
    double sum = 0.0;
    for (std::size_t j = 0; j < goal.size(); ++j) {
        sum += squared_norm(current[static_cast<std::size_t>(remap[j])] - goal[j]);
    }
    return sum / static_cast<double>(goal.size());
}

Correspondence best_correspondence(std::span<const Vec2> current, std::span<const Vec2> goal, Topology topology,
                                   OracleOptions options) {
    check_sizes(current, goal);
    Correspondence best;
    best.mse = std::numeric_limits<double>::infinity();
    for (auto& remap : correspondence_family(current.size(), topology, options)) {
        const double mse = remapped_mse(current, goal, remap);
        if (mse < best.mse) {
            best.mse = mse;
            best.remap = std::move(remap);
        }
    }
    return best;
}

WorldAction oracle_action(std::span<const Vec2> current, std::span<const Vec2> goal, Topology topology,
                          OracleOptions options) {
    const Correspondence corr = best_correspondence(current, goal, topology, options);
    std::size_t worst = 0;
    double worst_d2 = -1.0;
    for (std::size_t j = 0; j < goal.size(); ++j) {
        const double d2 = squared_norm(current[static_cast<std::size_t>(corr.remap[j])] - goal[j]);
        if (d2 > worst_d2) {
            worst_d2 = d2;
            worst = j;
        }
    }
    return {current[static_cast<std::size_t>(corr.remap[worst])], goal[worst]};
}

CompletionDistance completion_distance(std::span<const Vec2> current, std::span<const Vec2> goal, Topology topology,
                                       int height, int width, OracleOptions options) {
    const Correspondence corr = best_correspondence(current, goal, topology, options);
    CompletionDistance out;
    for (std::size_t j = 0; j < goal.size(); ++j) {
        const Vec2 d = current[static_cast<std::size_t>(corr.remap[j])] - goal[j];
        out.world += norm(d);
        out.pixels += std::hypot(d.x * width, d.y * height);
    }
    const double n = static_cast<double>(goal.size());
    out.world /= n;
    out.pixels /= n;
    return out;
}

}  // namespace ropegraph
