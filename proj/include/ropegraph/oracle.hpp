#pragma once

// Scripted demonstrator with access to ground-truth unit positions: find the
// unit ordering that best aligns the current configuration with the goal,
// then move the worst-placed unit onto its goal position.

#include <span>
#include <vector>

#include "ropegraph/rope_sim.hpp"

namespace ropegraph {

struct OracleOptions {
    // Also consider reversed traversals of a ring (2N candidates instead of N).
    bool ring_reversal = false;
};

struct Correspondence {
    // current[remap[j]] is matched with goal[j].
    std::vector<int> remap;
    double mse = 0.0;
};

// All candidate remaps for the topology, in tie-break order.
std::vector<std::vector<int>> correspondence_family(std::size_t n, Topology topology, OracleOptions options = {});

// Mean squared Euclidean distance between current[remap[j]] and goal[j].
double remapped_mse(std::span<const Vec2> current, std::span<const Vec2> goal, std::span<const int> remap);

Correspondence best_correspondence(std::span<const Vec2> current, std::span<const Vec2> goal, Topology topology,
                                   OracleOptions options = {});

struct WorldAction {
    Vec2 pick;
    Vec2 place;
};

WorldAction oracle_action(std::span<const Vec2> current, std::span<const Vec2> goal, Topology topology,
                          OracleOptions options = {});

struct CompletionDistance {
    double world = 0.0;
    double pixels = 0.0;
};

// Mean Euclidean distance between corresponding units under the best
// correspondence; `pixels` scales x by width and y by height.
CompletionDistance completion_distance(std::span<const Vec2> current, std::span<const Vec2> goal, Topology topology,
                                       int height, int width, OracleOptions options = {});

inline CompletionDistance completion_distance(const RopeState& current, const RopeState& goal, int height, int width,
                                              OracleOptions options = {}) {
    return completion_distance(current.units, goal.units, current.topology, height, width, options);
}

}  // namespace ropegraph
