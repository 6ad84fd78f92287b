#include "ropegraph/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "ropegraph/errors.hpp"

namespace ropegraph {

void validate(const TrainConfig& c) {
    if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.steps < 1) throw ConfigError("steps must be >= 1");
    if (c.validate_every < 1) throw ConfigError("validate_every must be >= 1");
    if (c.validation_limit < 0) throw ConfigError("validation_limit must be >= 0");
}

void write_log_record(std::ostream& os, const LogRecord& r) {
    const auto flags = os.flags();
    const auto precision = os.precision(9);
    os << "step " << r.step << " train_loss " << r.train_loss << " val_loss " << r.val_loss << " e_pick " << r.e_pick
       << " e_place " << r.e_place << '\n';
    os.flags(flags);
    os.precision(precision);
}

std::vector<PreparedTransition> prepare_transitions(const std::vector<Transition>& transitions,
                                                    const ModelHyper& hyper) {
    std::vector<PreparedTransition> out;
    out.reserve(transitions.size());
    for (const Transition& t : transitions) {
        out.push_back({prepare_input(t.current, t.goal, hyper), t.action});
    }
    return out;
}

double evaluate_loss(const ModelParams& params, const std::vector<PreparedTransition>& data) {
    if (data.empty()) return 0.0;
    double total = 0.0;
    for (const PreparedTransition& t : data) {
        ad::Tape tape;
        ParamVars vars = bind_params(tape, params, false);
        total += imitation_loss(tape, vars, t.input, params.hyper, t.target.pick, t.target.place).total.value()[0];
    }
    return total / static_cast<double>(data.size());
}

BatchGradient batch_gradient(const ModelParams& params, const std::vector<PreparedTransition>& data,
                             const std::vector<std::size_t>& batch) {
    BatchGradient out;
    for (std::size_t idx : batch) {
        const PreparedTransition& t = data[idx];
        ad::Tape tape;
        ParamVars vars = bind_params(tape, params, true);
        LossTerms loss = imitation_loss(tape, vars, t.input, params.hyper, t.target.pick, t.target.place);
        tape.backward(loss.total);
        out.loss += loss.total.value()[0];
        std::vector<ad::Array> grads = collect_grads(tape, vars);
        if (out.grads.empty()) {
            out.grads = std::move(grads);
        } else {
            for (std::size_t p = 0; p < grads.size(); ++p)
                for (std::size_t i = 0; i < grads[p].size(); ++i) out.grads[p][i] += grads[p][i];
        }
    }
    return out;
}

namespace {

std::vector<Transition> head(const std::vector<Transition>& v, int limit) {
    if (limit <= 0 || static_cast<std::size_t>(limit) >= v.size()) return v;
    return {v.begin(), v.begin() + limit};
}

}  // namespace

namespace {

// Symmetry t: bit 2 transposes, bit 0 flips rows, bit 1 flips columns.
Pixel map_pixel(Pixel p, int t, int height, int width) {
    if (t & 4) std::swap(p.row, p.col);
    if (t & 1) p.row = height - 1 - p.row;
    if (t & 2) p.col = width - 1 - p.col;
    return p;
}

Vec2 map_point(Vec2 v, int t) {
    if (t & 4) std::swap(v.x, v.y);
    if (t & 1) v.y = 1.0 - v.y;
    if (t & 2) v.x = 1.0 - v.x;
    return v;
}

Image map_image(const Image& img, int t) {
    Image out(img.height, img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            const Pixel q = map_pixel({r, c}, t, img.height, img.width);
            out.at(q.row, q.col) = img.at(r, c);
        }
    return out;
}

}  // namespace

std::vector<Transition> dihedral_augment(const std::vector<Transition>& transitions) {
    std::vector<Transition> out;
    for (const Transition& tr : transitions) {
        const int h = tr.current.height, w = tr.current.width;
        const int count = h == w ? 8 : 4;
        for (int t = 0; t < count; ++t) {
            Transition m;
            m.current = map_image(tr.current, t);
            m.goal = map_image(tr.goal, t);
            m.action = {map_pixel(tr.action.pick, t, h, w), map_pixel(tr.action.place, t, h, w)};
            m.topology = tr.topology;
            for (Vec2 v : tr.current_units) m.current_units.push_back(map_point(v, t));
            for (Vec2 v : tr.goal_units) m.goal_units.push_back(map_point(v, t));
            out.push_back(std::move(m));
        }
    }
    return out;
}

TrainResult train_imitation(const std::vector<Transition>& train, const std::vector<Transition>& val,
                            const TrainConfig& config, ModelParams initial,
                            const std::function<void(const LogRecord&)>& on_record) {
    validate(config);
    if (train.empty()) throw ConfigError("training set is empty");
    validate(initial.hyper);

    TrainResult result;
    result.params = std::move(initial);
    const ModelHyper& hyper = result.params.hyper;
    const std::vector<PreparedTransition> data =
        prepare_transitions(config.augment ? dihedral_augment(train) : train, hyper);
    const std::vector<Transition> val_subset = head(val, config.validation_limit);
    const std::vector<PreparedTransition> val_data = prepare_transitions(val_subset, hyper);

    std::vector<ad::Array*> params = parameter_list(result.params);
    std::vector<ad::Array> velocity;
    for (const ad::Array* p : params) velocity.emplace_back(p->shape(), 0.0);

    Rng rng(config.seed);
    std::vector<std::size_t> order(data.size());
    std::size_t cursor = order.size();
    auto next_index = [&]() {
        if (cursor == order.size()) {
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
            cursor = 0;
        }
        return order[cursor++];
    };

    double window_loss = 0.0;
    int window_steps = 0;
    double best_val = std::numeric_limits<double>::infinity();
    ModelParams best;
    for (int step = 1; step <= config.steps; ++step) {
        std::vector<std::size_t> batch(static_cast<std::size_t>(config.batch_size));
        for (std::size_t& b : batch) b = next_index();

        BatchGradient bg = batch_gradient(result.params, data, batch);
        const double scale = 1.0 / static_cast<double>(batch.size());
        const double loss = bg.loss * scale;
        if (!std::isfinite(loss)) throw TrainingDiverged("non-finite loss at step " + std::to_string(step));

        double norm2 = 0.0;
        for (ad::Array& g : bg.grads)
            for (double& v : g.values()) {
                v *= scale;
                norm2 += v * v;
            }
        double clip = 1.0;
        if (config.clip_norm > 0.0 && norm2 > config.clip_norm * config.clip_norm) {
            clip = config.clip_norm / std::sqrt(norm2);
        }
        double lr = config.learning_rate;
        if (config.cosine_decay) lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * (step - 1) / config.steps));
        for (std::size_t p = 0; p < params.size(); ++p) {
            ad::Array& w = *params[p];
            ad::Array& vel = velocity[p];
            const ad::Array& g = bg.grads[p];
            for (std::size_t i = 0; i < w.size(); ++i) {
                vel[i] = config.momentum * vel[i] + clip * g[i];
                w[i] -= lr * vel[i];
            }
        }

        window_loss += loss;
        ++window_steps;
        result.steps_run = step;
        const bool last = step == config.steps;
        if (step % config.validate_every == 0 || last) {
            LogRecord rec;
            rec.step = step;
            rec.train_loss = window_loss / window_steps;
            if (!val_data.empty()) {
                rec.val_loss = evaluate_loss(result.params, val_data);
                const ImitationErrors e = eval_errors(result.params, val_subset);
                rec.e_pick = e.e_pick;
                rec.e_place = e.e_place;
                if (config.keep_best && rec.val_loss < best_val) {
                    best_val = rec.val_loss;
                    best = result.params;
                }
            }
            result.log.push_back(rec);
            if (on_record) on_record(rec);
            result.final_train_loss = rec.train_loss;
            window_loss = 0.0;
            window_steps = 0;
            if (config.target_loss > 0.0 && rec.train_loss < config.target_loss) break;
        }
    }
    if (std::isfinite(best_val)) result.params = std::move(best);
    return result;
}

double normalized_pixel_error(Pixel predicted, Pixel oracle, int height, int width) {
    const double dr = predicted.row - oracle.row;
    const double dc = predicted.col - oracle.col;
    return std::hypot(dr, dc) / std::sqrt(static_cast<double>(width) * width + static_cast<double>(height) * height);
}

ImitationErrors eval_errors(const ModelParams& params, const std::vector<Transition>& test) {
    ImitationErrors e;
    if (test.empty()) return e;
    for (const Transition& t : test) {
        const PickPlaceAction a = act(t.current, t.goal, params);
        e.e_pick += normalized_pixel_error(a.pick, t.action.pick, t.current.height, t.current.width);
        e.e_place += normalized_pixel_error(a.place, t.action.place, t.current.height, t.current.width);
    }
    e.e_pick /= static_cast<double>(test.size());
    e.e_place /= static_cast<double>(test.size());
    return e;
}

// ---------------------------------------------------------------------------
// Rollouts

SuccessCriterion SuccessCriterion::defaults(int height, int width) {
    SuccessCriterion c;
    c.max_actions = 20;
    c.alpha = 10.0 / std::sqrt(static_cast<double>(height) * height + static_cast<double>(width) * width);
    return c;
}

double SuccessCriterion::threshold_pixels(int height, int width) const {
    return alpha * std::sqrt(static_cast<double>(height) * height + static_cast<double>(width) * width);
}

void validate(const SuccessCriterion& c) {
    if (c.max_actions < 1) throw ConfigError("max_actions must be >= 1");
    if (!(c.alpha > 0.0)) throw ConfigError("alpha must be > 0");
}

Policy oracle_policy(int height, int width, OracleOptions options) {
    return [height, width, options](const PolicyInput& in) {
        const WorldAction a =
            oracle_action(in.current_state.units, in.goal_state.units, in.current_state.topology, options);
        return PickPlaceAction{world_to_pixel(a.pick, height, width), world_to_pixel(a.place, height, width)};
    };
}

Policy random_policy(int height, int width) {
    return [height, width](const PolicyInput& in) {
        PickPlaceAction a;
        a.pick = {in.rng.between(0, height - 1), in.rng.between(0, width - 1)};
        a.place = {in.rng.between(0, height - 1), in.rng.between(0, width - 1)};
        return a;
    };
}

Policy model_policy(const ModelParams& params) {
    return [&params](const PolicyInput& in) { return act(in.current, in.goal, params); };
}

RolloutResult rollout(const Policy& policy, const Task& task, const SuccessCriterion& criterion, const EnvConfig& env,
                      std::uint64_t policy_seed) {
    validate(criterion);
    const int h = env.height, w = env.width;
    const double threshold = criterion.threshold_pixels(h, w);
    Rng rng(derive_seed(policy_seed, task.id));
    const Image goal_image = render(task.goal, h, w, env.sim.render_thickness);

    RolloutResult out;
    RopeState state = task.initial;
    for (int step = 0;; ++step) {
        const double d = completion_distance(state, task.goal, h, w).pixels;
        out.distances.push_back(d);
        if (d <= threshold) {
            out.success = true;
            break;
        }
        if (step == criterion.max_actions) break;
        ++out.actions_used;
        const Image current_image = render(state, h, w, env.sim.render_thickness);
        PickPlaceAction action;
        try {
            action = policy(PolicyInput{current_image, goal_image, state, task.goal, rng});
        } catch (const Error&) {
            out.actions.push_back({});
            out.grasped.push_back(false);
            continue;
        }
        PickPlaceResult next =
            apply_pick_place(state, pixel_to_world(action.pick, h, w), pixel_to_world(action.place, h, w), env.sim);
        out.actions.push_back(action);
        out.grasped.push_back(next.grasped);
        state = std::move(next.state);
    }
    return out;
}

SuccessSummary success_rate(const Policy& policy, const std::vector<Task>& tasks, const SuccessCriterion& criterion,
                            const EnvConfig& env, std::uint64_t policy_seed) {
    if (tasks.empty()) throw ConfigError("task set is empty");
    SuccessSummary s;
    int wins = 0;
    for (const Task& t : tasks) {
        s.results.push_back(rollout(policy, t, criterion, env, policy_seed));
        wins += s.results.back().success ? 1 : 0;
    }
    s.rate = static_cast<double>(wins) / static_cast<double>(tasks.size());
    return s;
}

}  // namespace ropegraph
