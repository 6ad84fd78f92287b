// ropegraph: dataset generation, training, evaluation and inspection.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "ropegraph/config.hpp"
#include "ropegraph/dataset.hpp"
#include "ropegraph/errors.hpp"
#include "ropegraph/serialization.hpp"

namespace fs = std::filesystem;
using namespace ropegraph;

namespace {

struct GenOptions {
    int n_tasks = kDefaultTaskCount;
    std::uint64_t seed = kDefaultDatasetSeed;
    std::string out;
    int resolution = 64;
    double topology_mix = 0.5;
    int n_units = 32;
    double link_length = 0.02;
    int min_scramble = 4;
    int max_scramble = 12;
};

TaskConfig task_config(int resolution, int n_units, double link_length, int min_scramble, int max_scramble) {
    TaskConfig cfg;
    cfg.n_units = n_units;
    cfg.link_length = link_length;
    cfg.min_scramble = min_scramble;
    cfg.max_scramble = max_scramble;
    cfg.env.height = cfg.env.width = resolution;
    cfg.criterion = SuccessCriterion::defaults(resolution, resolution);
    return cfg;
}

int run_gen(const GenOptions& o) {
    const TaskConfig cfg = task_config(o.resolution, o.n_units, o.link_length, o.min_scramble, o.max_scramble);
    const std::vector<Task> tasks = generate_tasks(o.n_tasks, o.topology_mix, o.seed, cfg);
    const DemonstrationSet demos = generate_demonstrations(tasks, cfg);
    for (const std::string& line : demos.log) std::cerr << line << '\n';
    write_dataset(o.out, demos.episodes);
    std::cout << "wrote " << demos.episodes.size() << " episodes to " << o.out << '\n';
    return 0;
}

std::optional<Topology> topology_filter(const std::string& name) {
    if (name == "all") return std::nullopt;
    return topology_from_string(name);
}

std::vector<Transition> split_transitions(const Dataset& ds, Split split, std::optional<Topology> topo) {
    return transitions_of(select(ds, split, topo ? &*topo : nullptr));
}

struct TrainOptions {
    std::string data;
    std::string config;
    std::string checkpoint_out;
    std::string log;
};

int run_train(const TrainOptions& o) {
    TrainSettings s = o.config.empty() ? TrainSettings{} : load_train_settings(o.config);
    const Dataset ds = load_dataset(o.data);
    if (ds.episodes.empty()) throw ConfigError(o.data + ": no episodes");
    s.hyper.height = ds.episodes.front().height;
    s.hyper.width = ds.episodes.front().width;
    const std::vector<Transition> train = split_transitions(ds, Split::Train, s.topology);
    const std::vector<Transition> val = split_transitions(ds, Split::Val, s.topology);
    std::cerr << "training on " << train.size() << " transitions, validating on " << val.size() << '\n';

    std::ofstream log_file;
    if (!o.log.empty()) {
        log_file.open(o.log, std::ios::binary);
        if (!log_file) throw IoError(o.log + ": cannot open for writing");
    }
    const TrainResult result =
        train_imitation(train, val, s.train, init_params(s.hyper, s.init_seed), [&](const LogRecord& r) {
            write_log_record(std::cout, r);
            std::cout.flush();
            if (log_file) {
                write_log_record(log_file, r);
                log_file.flush();
            }
        });
    save_checkpoint(result.params, o.checkpoint_out);
    std::cerr << "saved " << o.checkpoint_out << " after " << result.steps_run << " steps\n";
    return 0;
}

struct EvalOptions {
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    std::string topology = "chain";
};

int run_eval(const EvalOptions& o) {
    const ModelParams params = load_checkpoint(o.checkpoint);
    const Dataset ds = load_dataset(o.data);
    const std::vector<Transition> test =
        split_transitions(ds, split_from_string(o.split), topology_filter(o.topology));
    if (test.empty()) throw ConfigError("no transitions in the selected split");
    const ImitationErrors e = eval_errors(params, test);
    std::printf("transitions %zu\ne_pick %.9g\ne_place %.9g\n", test.size(), e.e_pick, e.e_place);
    return 0;
}

struct RolloutOptions {
    std::string checkpoint;
    std::string tasks;
    std::string split = "test";
    int n_tasks = 0;
    std::uint64_t seed = kHeldOutTaskSeed;
    std::string topology = "chain";
    int max_actions = 20;
    std::string policy = "model";
    std::uint64_t policy_seed = 0;
    std::string trace;
};

int run_rollout(const RolloutOptions& o) {
    std::vector<Task> tasks;
    EnvConfig env;
    const std::optional<Topology> topo = topology_filter(o.topology);
    if (!o.tasks.empty()) {
        const Dataset ds = load_dataset(o.tasks);
        for (const Episode* e : select(ds, split_from_string(o.split), topo ? &*topo : nullptr)) {
            tasks.push_back(task_of(*e));
            env.height = e->height;
            env.width = e->width;
        }
    } else {
        if (o.n_tasks < 1) throw ConfigError("give --tasks DIR or --n-tasks N");
        // Fresh tasks; the topology mix is all one kind unless "all" was asked for.
        const double mix = !topo ? 0.5 : (*topo == Topology::Chain ? 1.0 : 0.0);
        tasks = generate_tasks(o.n_tasks, mix, o.seed, TaskConfig{});
    }
    if (tasks.empty()) throw ConfigError("no tasks selected");

    std::optional<ModelParams> params;
    Policy policy;
    if (o.policy == "model") {
        if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required for the model policy");
        params = load_checkpoint(o.checkpoint);
        env.height = params->hyper.height;
        env.width = params->hyper.width;
        policy = model_policy(*params);
    } else if (o.policy == "random") {
        policy = random_policy(env.height, env.width);
    } else if (o.policy == "oracle") {
        policy = oracle_policy(env.height, env.width);
    } else {
        throw ConfigError("unknown policy '" + o.policy + "'");
    }
    SuccessCriterion criterion = SuccessCriterion::defaults(env.height, env.width);
    criterion.max_actions = o.max_actions;

    std::ofstream trace;
    if (!o.trace.empty()) {
        trace.open(o.trace, std::ios::binary);
        if (!trace) throw IoError(o.trace + ": cannot open for writing");
    }
    int wins = 0;
    for (const Task& t : tasks) {
        const RolloutResult r = rollout(policy, t, criterion, env, o.policy_seed);
        wins += r.success ? 1 : 0;
        std::printf("task %u %s success %d actions %d distance %.4f\n", t.id, to_string(t.topology), r.success ? 1 : 0,
                    r.actions_used, r.distances.back());
        if (trace) {
            trace << "task " << t.id << '\n';
            for (std::size_t i = 0; i < r.actions.size(); ++i) {
                const PickPlaceAction& a = r.actions[i];
                trace << "  " << i << " pick " << a.pick.row << ' ' << a.pick.col << " place " << a.place.row << ' '
                      << a.place.col << " grasped " << (r.grasped[i] ? 1 : 0) << " distance_after "
                      << r.distances[i + 1] << '\n';
            }
        }
    }
    std::printf("success_rate %.4f (%d/%zu)\n", static_cast<double>(wins) / static_cast<double>(tasks.size()), wins,
                tasks.size());
    return 0;
}

std::string step_name(const char* prefix, std::size_t i, const char* suffix) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%02zu%s", prefix, i, suffix);
    return buf;
}

struct OracleDemoOptions {
    std::uint64_t task_seed = 0;
    std::string topology = "chain";
    std::string out = "oracle_demo";
    int resolution = 64;
};

int run_oracle_demo(const OracleDemoOptions& o) {
    const TaskConfig cfg = task_config(o.resolution, 32, 0.02, 4, 12);
    const Task task = make_task(0, topology_from_string(o.topology), o.task_seed, cfg);
    const auto [episode, ok] = record_oracle_episode(task, cfg);
    fs::create_directories(o.out);
    write_pgm(episode.goal_image, fs::path(o.out) / "goal.pgm");
    for (std::size_t i = 0; i < episode.steps.size(); ++i) {
        const EpisodeStep& s = episode.steps[i];
        write_pgm(s.image, fs::path(o.out) / step_name("step_", i, ".pgm"));
        const double d = completion_distance(s.units, episode.goal_units, episode.topology, o.resolution, o.resolution).pixels;
        std::printf("step %zu distance %.4f pick %d %d place %d %d\n", i, d, s.action.pick.row, s.action.pick.col,
                    s.action.place.row, s.action.place.col);
    }
    write_pgm(episode.final_image, fs::path(o.out) / "final.pgm");
    const double d = completion_distance(episode.final_units, episode.goal_units, episode.topology, o.resolution, o.resolution).pixels;
    std::printf("final distance %.4f success %d actions %zu\n", d, ok ? 1 : 0, episode.steps.size());
    return ok ? 0 : 2;
}

struct RenderOptions {
    std::string episode;
    int step = 0;
    std::string checkpoint;
    std::string out = "render";
};

Image normalized(const Image& img) {
    Image out = img;
    const double peak = *std::max_element(img.values.begin(), img.values.end());
    if (peak > 0.0)
        for (double& v : out.values) v /= peak;
    return out;
}

// Goal image dimmed under the current image.
Image overlay(const Image& current, const Image& goal) {
    Image out = current;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = std::max(current.values[i], 0.4 * goal.values[i]);
    return out;
}

int run_render(const RenderOptions& o) {
    const Episode e = read_episode(o.episode);
    if (o.step < 0 || static_cast<std::size_t>(o.step) >= e.steps.size()) {
        throw ConfigError("step " + std::to_string(o.step) + " out of range (episode has " +
                          std::to_string(e.steps.size()) + ")");
    }
    const EpisodeStep& s = e.steps[static_cast<std::size_t>(o.step)];
    const fs::path dir(o.out);
    fs::create_directories(dir);
    write_pgm(s.image, dir / "image.pgm");
    write_pgm(e.goal_image, dir / "goal.pgm");
    write_pgm(overlay(s.image, e.goal_image), dir / "overlay.pgm");
    if (o.checkpoint.empty()) {
        const ModelHyper hyper;
        const PreparedInput in = prepare_input(s.image, e.goal_image, hyper);
        write_pgm(normalized(in.current_mask), dir / "mask.pgm");
        write_pgm(normalized(in.goal_mask), dir / "goal_mask.pgm");
    } else {
        const ModelParams params = load_checkpoint(o.checkpoint);
        ActTrace t;
        const PickPlaceAction a = act(s.image, e.goal_image, params, &t);
        write_pgm(normalized(t.input.current_mask), dir / "mask.pgm");
        write_pgm(normalized(t.input.goal_mask), dir / "goal_mask.pgm");
        write_pgm(t.pick.q, dir / "pick_heatmap.pgm");
        write_pgm(t.place.q, dir / "place_heatmap.pgm");
        std::printf("model pick %d %d place %d %d\n", a.pick.row, a.pick.col, a.place.row, a.place.col);
    }
    std::printf("oracle pick %d %d place %d %d\n", s.action.pick.row, s.action.pick.col, s.action.place.row,
                s.action.place.col);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-conditioned pick-and-place workbench for ropes and rings"};
    app.require_subcommand(1);

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate tasks and oracle demonstrations");
    gen_cmd->add_option("--n-tasks", gen.n_tasks, "Number of tasks")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--seed", gen.seed, "Global seed");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--resolution", gen.resolution, "Image height and width")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--topology-mix", gen.topology_mix, "Fraction of chain tasks")->check(CLI::Range(0.0, 1.0));
    gen_cmd->add_option("--n-units", gen.n_units, "Units per rope");
    gen_cmd->add_option("--link-length", gen.link_length, "Rest length between units");
    gen_cmd->add_option("--min-scramble", gen.min_scramble, "Fewest random drags per configuration");
    gen_cmd->add_option("--max-scramble", gen.max_scramble, "Most random drags per configuration");

    TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "Train the policy by imitation");
    train_cmd->add_option("--data", train.data, "Dataset directory")->required();
    train_cmd->add_option("--config", train.config, "key=value config file");
    train_cmd->add_option("--checkpoint-out", train.checkpoint_out, "Checkpoint path")->required();
    train_cmd->add_option("--log", train.log, "Also write the training log here");

    EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "Imitation error on a dataset split");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint path")->required();
    eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
    eval_cmd->add_option("--split", eval.split, "train, val or test");
    eval_cmd->add_option("--topology", eval.topology, "chain, ring or all");

    RolloutOptions roll;
    auto* roll_cmd = app.add_subcommand("rollout", "Closed-loop rollouts in the simulator");
    roll_cmd->add_option("--checkpoint", roll.checkpoint, "Checkpoint path");
    roll_cmd->add_option("--tasks", roll.tasks, "Dataset directory whose split supplies the tasks");
    roll_cmd->add_option("--split", roll.split, "Split used with --tasks");
    roll_cmd->add_option("--n-tasks", roll.n_tasks, "Generate this many fresh tasks instead");
    roll_cmd->add_option("--seed", roll.seed, "Seed for fresh tasks");
    roll_cmd->add_option("--topology", roll.topology, "chain, ring or all");
    roll_cmd->add_option("--max-actions", roll.max_actions, "Action budget per task")->check(CLI::PositiveNumber);
    roll_cmd->add_option("--policy", roll.policy, "model, random or oracle");
    roll_cmd->add_option("--policy-seed", roll.policy_seed, "Seed for the random policy");
    roll_cmd->add_option("--trace", roll.trace, "Write per-step traces here");

    OracleDemoOptions demo;
    auto* demo_cmd = app.add_subcommand("oracle-demo", "Run the oracle on one task and dump step images");
    demo_cmd->add_option("--task-seed", demo.task_seed, "Task seed")->required();
    demo_cmd->add_option("--topology", demo.topology, "chain or ring");
    demo_cmd->add_option("--out", demo.out, "Output directory");
    demo_cmd->add_option("--resolution", demo.resolution, "Image height and width")->check(CLI::PositiveNumber);

    RenderOptions render_opts;
    auto* render_cmd = app.add_subcommand("render", "Dump an episode step with masks and heatmaps");
    render_cmd->add_option("--episode", render_opts.episode, "Episode file")->required();
    render_cmd->add_option("--step", render_opts.step, "Step index");
    render_cmd->add_option("--checkpoint", render_opts.checkpoint, "Add model heatmaps from this checkpoint");
    render_cmd->add_option("--out", render_opts.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
    }

    try {
        if (*gen_cmd) return run_gen(gen);
        if (*train_cmd) return run_train(train);
        if (*eval_cmd) return run_eval(eval);
        if (*roll_cmd) return run_rollout(roll);
        if (*demo_cmd) return run_oracle_demo(demo);
        if (*render_cmd) return run_render(render_opts);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
