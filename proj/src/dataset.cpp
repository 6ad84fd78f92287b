#include "ropegraph/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ropegraph/errors.hpp"
#include "ropegraph/serialization.hpp"

namespace ropegraph {

void validate(const TaskConfig& c) {
    if (c.n_units < 3) throw ConfigError("n_units must be >= 3");
    if (!(c.link_length > 0.0)) throw ConfigError("link_length must be > 0");
    if (c.min_scramble < 0 || c.max_scramble < c.min_scramble) throw ConfigError("bad scramble range");
    if (c.env.height < 1 || c.env.width < 1) throw ConfigError("resolution must be positive");
    validate(c.env.sim);
    validate(c.criterion);
}

Task make_task(std::uint32_t id, Topology topology, std::uint64_t task_seed, const TaskConfig& config,
               int first_attempt, int* attempt_used) {
    const RopeState canonical = init_state(topology, config.n_units, config.link_length, task_seed);
    const double threshold = config.criterion.threshold_pixels(config.env.height, config.env.width);
    for (int attempt = first_attempt;; ++attempt) {
        Rng rng(derive_seed(task_seed, static_cast<std::uint64_t>(attempt)));
        const int k_initial = rng.between(config.min_scramble, config.max_scramble);
        const int k_goal = rng.between(config.min_scramble, config.max_scramble);
        const std::uint64_t s_initial = rng.next();
        const std::uint64_t s_goal = rng.next();
        Task t;
        t.id = id;
        t.topology = topology;
        t.seed = task_seed;
        t.initial = scramble(canonical, k_initial, s_initial, config.env.sim);
        t.goal = scramble(canonical, k_goal, s_goal, config.env.sim);
        if (completion_distance(t.initial, t.goal, config.env.height, config.env.width).pixels > threshold) {
            if (attempt_used) *attempt_used = attempt;
            return t;
        }
    }
}

std::vector<Task> generate_tasks(int n_tasks, double topology_mix, std::uint64_t seed, const TaskConfig& config) {
    if (n_tasks < 1) throw ConfigError("n_tasks must be >= 1");
    if (!(topology_mix >= 0.0 && topology_mix <= 1.0)) throw ConfigError("topology_mix must be in [0, 1]");
    validate(config);
    const auto n_chain = static_cast<std::uint32_t>(std::llround(n_tasks * topology_mix));
    std::vector<Task> tasks;
    tasks.reserve(static_cast<std::size_t>(n_tasks));
    for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(n_tasks); ++i) {
        const Topology topo = i < n_chain ? Topology::Chain : Topology::Ring;
        tasks.push_back(make_task(i, topo, derive_seed(seed, i), config));
    }
    return tasks;
}

std::pair<Episode, bool> record_oracle_episode(const Task& task, const TaskConfig& config) {
    const int h = config.env.height, w = config.env.width;
    const double thickness = config.env.sim.render_thickness;
    const double threshold = config.criterion.threshold_pixels(h, w);

    Episode ep;
    ep.task_id = task.id;
    ep.topology = task.topology;
    ep.link_length = task.initial.link_length;
    ep.height = h;
    ep.width = w;
    ep.goal_image = render(task.goal, h, w, thickness);
    ep.goal_units = task.goal.units;

    RopeState state = task.initial;
    bool success = false;
    for (int step = 0;; ++step) {
        if (completion_distance(state, task.goal, h, w).pixels <= threshold) {
            success = true;
            break;
        }
        if (step == config.criterion.max_actions) break;
        const WorldAction a = oracle_action(state.units, task.goal.units, state.topology);
        const PickPlaceAction px{world_to_pixel(a.pick, h, w), world_to_pixel(a.place, h, w)};
        ep.steps.push_back({render(state, h, w, thickness), state.units, px});
        state = apply_pick_place(state, pixel_to_world(px.pick, h, w), pixel_to_world(px.place, h, w),
                                 config.env.sim)
                    .state;
    }
    ep.final_image = render(state, h, w, thickness);
    ep.final_units = state.units;
    return {std::move(ep), success};
}

DemonstrationSet generate_demonstrations(const std::vector<Task>& tasks, const TaskConfig& config, int max_retries) {
    validate(config);
    DemonstrationSet out;
    for (const Task& original : tasks) {
        Task task = original;
        int attempt = 0;
        for (int retry = 0;; ++retry) {
            auto [episode, ok] = record_oracle_episode(task, config);
            if (ok) {
                out.episodes.push_back(std::move(episode));
                out.tasks.push_back(task);
                break;
            }
            if (retry == max_retries) {
                out.log.push_back("task " + std::to_string(task.id) + ": dropped after " +
                                  std::to_string(max_retries) + " re-scrambles");
                break;
            }
            out.log.push_back("task " + std::to_string(task.id) + ": oracle did not finish within " +
                              std::to_string(config.criterion.max_actions) + " actions, re-scrambling");
            task = make_task(task.id, task.topology, task.seed, config, attempt + 1, &attempt);
        }
    }
    return out;
}

const char* to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw ConfigError("unknown split '" + s + "'");
}

std::vector<ManifestEntry> assign_splits(const std::vector<Episode>& episodes) {
    std::vector<ManifestEntry> entries;
    for (Topology topo : {Topology::Chain, Topology::Ring}) {
        std::vector<const Episode*> group;
        for (const Episode& e : episodes)
            if (e.topology == topo) group.push_back(&e);
        std::sort(group.begin(), group.end(), [](const Episode* a, const Episode* b) { return a->task_id < b->task_id; });
        const std::size_t n = group.size();
        const std::size_t n_train = n * 8 / 10;
        const std::size_t n_val = n / 10;
        for (std::size_t i = 0; i < n; ++i) {
            const Split split = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
            entries.push_back({group[i]->task_id, topo, split, static_cast<int>(group[i]->steps.size())});
        }
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
    std::ostringstream os;
    for (const ManifestEntry& e : entries) {
        os << e.id << ' ' << to_string(e.topology) << ' ' << to_string(e.split) << ' ' << e.length << '\n';
    }
    write_file(path, os.str());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::istringstream is(read_file(path));
    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestEntry e;
        std::string topo, split;
        if (!(ls >> e.id >> topo >> split >> e.length)) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed manifest line");
        }
        e.topology = topology_from_string(topo);
        e.split = split_from_string(split);
        entries.push_back(e);
    }
    return entries;
}

std::filesystem::path episode_path(const std::filesystem::path& dir, std::uint32_t id) {
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << id << ".gtep";
    return dir / "episodes" / name.str();
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Episode>& episodes) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "episodes", ec);
    if (ec) throw IoError(dir.string() + ": " + ec.message());
    for (const Episode& e : episodes) write_episode(e, episode_path(dir, e.task_id));
    write_manifest(dir / "manifest.txt", assign_splits(episodes));
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    ds.manifest = read_manifest(dir / "manifest.txt");
    for (const ManifestEntry& e : ds.manifest) ds.episodes.push_back(read_episode(episode_path(dir, e.id)));
    return ds;
}

std::vector<const Episode*> select(const Dataset& ds, Split split, const Topology* topology) {
    std::vector<const Episode*> out;
    for (std::size_t i = 0; i < ds.manifest.size(); ++i) {
        if (ds.manifest[i].split != split) continue;
        if (topology && ds.manifest[i].topology != *topology) continue;
        out.push_back(&ds.episodes[i]);
    }
    return out;
}

std::vector<Transition> transitions_of(const Episode& e) {
    std::vector<Transition> out;
    for (const EpisodeStep& s : e.steps) {
        out.push_back({s.image, e.goal_image, s.action, e.topology, s.units, e.goal_units});
    }
    return out;
}

std::vector<Transition> transitions_of(const std::vector<const Episode*>& episodes) {
    std::vector<Transition> out;
    for (const Episode* e : episodes) {
        auto t = transitions_of(*e);
        out.insert(out.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
    }
    return out;
}

RopeState state_of(const Episode& e, std::size_t step) {
    RopeState s;
    s.topology = e.topology;
    s.link_length = e.link_length;
    s.units = step < e.steps.size() ? e.steps[step].units : e.final_units;
    return s;
}

Task task_of(const Episode& e) {
    Task t;
    t.id = e.task_id;
    t.topology = e.topology;
    t.initial = state_of(e, 0);
    t.goal.topology = e.topology;
    t.goal.link_length = e.link_length;
    t.goal.units = e.goal_units;
    return t;
}

}  // namespace ropegraph
