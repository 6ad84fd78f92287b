#pragma once

// Task generation, oracle demonstrations and the on-disk dataset layout:
//
//   <dir>/manifest.txt           one line per episode: id topology split length
//   <dir>/episodes/<id>.gtep     one binary episode per task (see serialization.hpp)

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ropegraph/training.hpp"

namespace ropegraph {

// Defaults for the standard dataset (command-line `gen` and the acceptance run).
inline constexpr int kDefaultTaskCount = 400;
inline constexpr std::uint64_t kDefaultDatasetSeed = 0;
// Seed for fresh evaluation tasks, disjoint from kDefaultDatasetSeed.
inline constexpr std::uint64_t kHeldOutTaskSeed = 1000003;

struct TaskConfig {
    int n_units = 32;
    double link_length = 0.02;
    int min_scramble = 4;
    int max_scramble = 12;
    EnvConfig env;
    SuccessCriterion criterion = SuccessCriterion::defaults(64, 64);
};

void validate(const TaskConfig& config);

// Initial and goal are independent scrambles of the canonical layout. The
// attempt index is bumped until the pair is not already complete.
Task make_task(std::uint32_t id, Topology topology, std::uint64_t task_seed, const TaskConfig& config,
               int first_attempt = 0, int* attempt_used = nullptr);

// The first round(n * topology_mix) tasks are chains, the rest rings. Task i
// is seeded from (seed, i).
std::vector<Task> generate_tasks(int n_tasks, double topology_mix, std::uint64_t seed, const TaskConfig& config);

struct EpisodeStep {
    Image image;
    std::vector<Vec2> units;
    PickPlaceAction action;
    friend bool operator==(const EpisodeStep&, const EpisodeStep&) = default;
};

struct Episode {
    std::uint32_t task_id = 0;
    Topology topology = Topology::Chain;
    double link_length = 0.0;
    int height = 0;
    int width = 0;
    Image goal_image;
    std::vector<Vec2> goal_units;
    std::vector<EpisodeStep> steps;
    // Configuration after the last action.
    Image final_image;
    std::vector<Vec2> final_units;

    std::size_t n_units() const { return goal_units.size(); }
    friend bool operator==(const Episode&, const Episode&) = default;
};

// Runs the oracle from task.initial, acting through the pixel grid. Returns
// the recorded episode and whether it completed within the criterion.
std::pair<Episode, bool> record_oracle_episode(const Task& task, const TaskConfig& config);

struct DemonstrationSet {
    std::vector<Episode> episodes;
    // Tasks actually used (re-scrambled where the first attempt failed).
    std::vector<Task> tasks;
    std::vector<std::string> log;
};

// Failed episodes are discarded and their task re-scrambled, at most
// max_retries times per task; tasks that never complete are dropped (and logged).
DemonstrationSet generate_demonstrations(const std::vector<Task>& tasks, const TaskConfig& config,
                                         int max_retries = 20);

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };
const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct ManifestEntry {
    std::uint32_t id = 0;
    Topology topology = Topology::Chain;
    Split split = Split::Train;
    int length = 0;
    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

// Per topology, in id order: first 80% train, next 10% val, rest test.
std::vector<ManifestEntry> assign_splits(const std::vector<Episode>& episodes);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

std::filesystem::path episode_path(const std::filesystem::path& dir, std::uint32_t id);

void write_dataset(const std::filesystem::path& dir, const std::vector<Episode>& episodes);

struct Dataset {
    std::vector<ManifestEntry> manifest;
    std::vector<Episode> episodes;  // manifest order
};

Dataset load_dataset(const std::filesystem::path& dir);

// Episodes matching split and (optionally) topology.
std::vector<const Episode*> select(const Dataset& ds, Split split, const Topology* topology = nullptr);

std::vector<Transition> transitions_of(const Episode& episode);
std::vector<Transition> transitions_of(const std::vector<const Episode*>& episodes);
Task task_of(const Episode& episode);
RopeState state_of(const Episode& episode, std::size_t step);

}  // namespace ropegraph
