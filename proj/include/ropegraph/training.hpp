#pragma once

// Imitation training, imitation-error metrics and closed-loop rollouts.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "ropegraph/model.hpp"
#include "ropegraph/oracle.hpp"
#include "ropegraph/random.hpp"
#include "ropegraph/rope_sim.hpp"

namespace ropegraph {

struct Transition {
    Image current;
    Image goal;
    PickPlaceAction action;  // oracle pixels
    Topology topology = Topology::Chain;
    std::vector<Vec2> current_units;
    std::vector<Vec2> goal_units;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int batch_size = 8;
    int steps = 2000;
    std::uint64_t seed = 1;
    int validate_every = 100;
    // Stop once the mean training loss over the last `validate_every` steps
    // falls below this value (<= 0 disables).
    double target_loss = 0.0;
    // Global gradient-norm clip (<= 0 disables).
    double clip_norm = 0.0;
    // Transitions used per validation pass (0 = all).
    int validation_limit = 0;
    // Train on every symmetry of the image grid (see dihedral_augment).
    bool augment = false;
    // Return the parameters with the lowest validation loss seen at a
    // validation point instead of the last ones.
    bool keep_best = false;
    // Anneal the learning rate to zero over `steps` along a half cosine.
    bool cosine_decay = false;
};

void validate(const TrainConfig& config);

struct LogRecord {
    int step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double e_pick = 0.0;
    double e_place = 0.0;
};

// One line per record: "step <n> train_loss <x> val_loss <x> e_pick <x> e_place <x>".
void write_log_record(std::ostream& os, const LogRecord& record);

struct TrainResult {
    ModelParams params;
    std::vector<LogRecord> log;
    int steps_run = 0;
    double final_train_loss = 0.0;
};

// The transition under each symmetry of the pixel grid: the 8 rotations and
// reflections for a square image, the 4 flips otherwise. Images, oracle
// pixels and unit positions are mapped together; the identity comes first.
std::vector<Transition> dihedral_augment(const std::vector<Transition>& transitions);

// Model inputs for a transition, computed once and reused every epoch.
struct PreparedTransition {
    PreparedInput input;
    PickPlaceAction target;
};

std::vector<PreparedTransition> prepare_transitions(const std::vector<Transition>& transitions, const ModelHyper& hyper);

// Mean imitation loss (no gradients).
double evaluate_loss(const ModelParams& params, const std::vector<PreparedTransition>& data);

// Loss and parameter gradients summed over a batch.
struct BatchGradient {
    double loss = 0.0;
    std::vector<ad::Array> grads;
};
BatchGradient batch_gradient(const ModelParams& params, const std::vector<PreparedTransition>& data,
                             const std::vector<std::size_t>& batch);

// Mini-batch SGD with momentum on the sum of pick and place spatial
// cross-entropies. Deterministic for a given seed. `on_record`, if set, sees
// each log record as it is produced. Throws TrainingDiverged on a non-finite
// loss.
TrainResult train_imitation(const std::vector<Transition>& train, const std::vector<Transition>& val,
                            const TrainConfig& config, ModelParams initial,
                            const std::function<void(const LogRecord&)>& on_record = {});

struct ImitationErrors {
    double e_pick = 0.0;
    double e_place = 0.0;
};

// |p - o| / sqrt(w^2 + h^2) in pixels.
double normalized_pixel_error(Pixel predicted, Pixel oracle, int height, int width);

// Mean normalized errors of act() against the stored oracle actions.
ImitationErrors eval_errors(const ModelParams& params, const std::vector<Transition>& test);

// ---------------------------------------------------------------------------
// Rollouts

struct SuccessCriterion {
    int max_actions = 20;
    // Completion threshold as a fraction of the image diagonal.
    double alpha = 0.0;

    static SuccessCriterion defaults(int height, int width);
    double threshold_pixels(int height, int width) const;
};

void validate(const SuccessCriterion& criterion);

struct Task {
    std::uint32_t id = 0;
    Topology topology = Topology::Chain;
    RopeState initial;
    RopeState goal;
    std::uint64_t seed = 0;
};

struct PolicyInput {
    const Image& current;
    const Image& goal;
    const RopeState& current_state;
    const RopeState& goal_state;
    Rng& rng;
};

using Policy = std::function<PickPlaceAction(const PolicyInput&)>;

Policy oracle_policy(int height, int width, OracleOptions options = {});
Policy random_policy(int height, int width);
Policy model_policy(const ModelParams& params);

struct EnvConfig {
    int height = 64;
    int width = 64;
    SimConfig sim;
};

struct RolloutResult {
    bool success = false;
    int actions_used = 0;
    // Completion distance in pixels before each action and after the last.
    std::vector<double> distances;
    std::vector<PickPlaceAction> actions;
    std::vector<bool> grasped;
};

// Acts until the completion distance is within criterion or max_actions are
// spent. A policy that throws a library Error on some step wastes that step.
RolloutResult rollout(const Policy& policy, const Task& task, const SuccessCriterion& criterion, const EnvConfig& env,
                      std::uint64_t policy_seed = 0);

struct SuccessSummary {
    double rate = 0.0;
    std::vector<RolloutResult> results;
};

SuccessSummary success_rate(const Policy& policy, const std::vector<Task>& tasks, const SuccessCriterion& criterion,
                            const EnvConfig& env, std::uint64_t policy_seed = 0);

}  // namespace ropegraph
