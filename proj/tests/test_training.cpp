#include <doctest.h>

#include <cmath>
#include <sstream>

#include "reference.hpp"
#include "ropegraph/errors.hpp"
#include "ropegraph/serialization.hpp"
#include "ropegraph/training.hpp"

using namespace ropegraph;

namespace {

ModelHyper tiny_hyper() {
    ModelHyper h;
    h.height = h.width = 16;
    h.keypoints = 4;
    h.crop = 4;
    h.feature_channels = 2;
    h.fcn_hidden = 6;
    h.fcn_layers = 3;
    h.gcn_hidden = 8;
    h.gcn_out = 8;
    h.mask_sigma = 2.0;
    return h;
}

// Transitions on 16x16 renders whose targets are keypoints of each image.
std::vector<Transition> tiny_transitions(int n, std::uint64_t seed) {
    const ModelHyper h = tiny_hyper();
    std::vector<Transition> out;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        Transition t;
        const RopeState a = scramble(init_state(Topology::Chain, 32, 0.02, 0), 6, rng.next(), SimConfig{});
        const RopeState b = scramble(init_state(Topology::Chain, 32, 0.02, 0), 6, rng.next(), SimConfig{});
        t.current = render(a, 16, 16, 2.0);
        t.goal = render(b, 16, 16, 2.0);
        const PreparedInput in = prepare_input(t.current, t.goal, h);
        t.action = {in.current_keypoints.points[rng.below(4)], in.goal_keypoints.points[rng.below(4)]};
        t.current_units = a.units;
        t.goal_units = b.units;
        out.push_back(std::move(t));
    }
    return out;
}

Task chain_task(std::uint32_t id, std::uint64_t seed) {
    Task t;
    t.id = id;
    t.topology = Topology::Chain;
    const RopeState s0 = init_state(Topology::Chain, 32, 0.02, 0);
    t.initial = scramble(s0, 6, seed, SimConfig{});
    t.goal = scramble(s0, 6, seed + 1000, SimConfig{});
    t.seed = seed;
    return t;
}

}  // namespace

TEST_CASE("normalized pixel error") {
    CHECK(normalized_pixel_error({10, 10}, {13, 14}, 64, 64) == doctest::Approx(5.0 / std::sqrt(8192.0)).epsilon(1e-15));
    CHECK(5.0 / std::sqrt(8192.0) == doctest::Approx(0.05524).epsilon(1e-4));
    CHECK(normalized_pixel_error({0, 0}, {63, 63}, 64, 64) <= 1.0);
    CHECK(normalized_pixel_error({7, 7}, {7, 7}, 64, 64) == 0.0);
}

TEST_CASE("eval_errors: exact predictions and a (3, 4) pick offset") {
    const ModelHyper h = tiny_hyper();
    const ModelParams p = init_params(h, 3);
    std::vector<Transition> data = tiny_transitions(4, 5);
    for (Transition& t : data) t.action = act(t.current, t.goal, p);
    const ImitationErrors zero = eval_errors(p, data);
    CHECK(zero.e_pick == 0.0);
    CHECK(zero.e_place == 0.0);

    std::vector<Transition> one{data[0]};
    const PickPlaceAction a = one[0].action;
    one[0].action.pick = {a.pick.row + (a.pick.row >= 8 ? -3 : 3), a.pick.col + (a.pick.col >= 8 ? -4 : 4)};
    const ImitationErrors e = eval_errors(p, one);
    CHECK(e.e_pick == doctest::Approx(5.0 / std::sqrt(512.0)).epsilon(1e-15));
    CHECK(e.e_place == 0.0);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(validate(c));
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = TrainConfig{};
    c.momentum = 1.0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = TrainConfig{};
    c.batch_size = 0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    CHECK_THROWS_AS(train_imitation({}, {}, TrainConfig{}, init_params(tiny_hyper(), 1)), ConfigError);
}

TEST_CASE("log record format") {
    std::ostringstream os;
    write_log_record(os, {200, 1.5, 2.25, 0.125, 0.0625});
    CHECK(os.str() == "step 200 train_loss 1.5 val_loss 2.25 e_pick 0.125 e_place 0.0625\n");
}

TEST_CASE("training is deterministic and reduces the loss") {
    const auto train = tiny_transitions(10, 7);
    const auto val = tiny_transitions(3, 8);
    TrainConfig c;
    c.steps = 300;
    c.validate_every = 100;
    c.learning_rate = 1e-2;
    const ModelParams init = init_params(tiny_hyper(), 9);
    const double before = evaluate_loss(init, prepare_transitions(train, tiny_hyper()));
    std::vector<LogRecord> seen;
    const TrainResult a = train_imitation(train, val, c, init, [&](const LogRecord& r) { seen.push_back(r); });
    const TrainResult b = train_imitation(train, val, c, init);
    CHECK(a.params == b.params);
    CHECK(a.steps_run == 300);
    REQUIRE(a.log.size() == 3);
    CHECK(seen.size() == 3);
    CHECK(a.log.back().step == 300);
    CHECK(evaluate_loss(a.params, prepare_transitions(train, tiny_hyper())) < before);
    for (const LogRecord& r : a.log) {
        CHECK(r.e_pick >= 0.0);
        CHECK(r.e_pick <= 1.0);
        CHECK(r.e_place >= 0.0);
        CHECK(r.e_place <= 1.0);
    }
    c.seed = 2;
    CHECK_FALSE(train_imitation(train, val, c, init).params == a.params);
}

TEST_CASE("overfit set: loss falls below target, windows non-increasing") {
    const auto train = tiny_transitions(10, 11);
    TrainConfig c;
    c.steps = 5000;
    c.validate_every = 100;
    c.learning_rate = 1e-2;
    c.target_loss = 0.1;
    const TrainResult r = train_imitation(train, {}, c, init_params(tiny_hyper(), 12));
    CHECK(r.final_train_loss < 0.1);
    CHECK(r.steps_run < 5000);
    CHECK(evaluate_loss(r.params, prepare_transitions(train, tiny_hyper())) < 0.1);
    int increases = 0;
    for (std::size_t i = 1; i < r.log.size(); ++i) increases += r.log[i].train_loss > r.log[i - 1].train_loss ? 1 : 0;
    CHECK(increases <= static_cast<int>(r.log.size()) / 10);

    // A model fitted to its own data imitates it exactly.
    std::vector<Transition> relabeled = train;
    for (Transition& t : relabeled) t.action = act(t.current, t.goal, r.params);
    CHECK(eval_errors(r.params, relabeled).e_pick == 0.0);
}

TEST_CASE("dihedral augmentation maps images, actions and units together") {
    const auto base = tiny_transitions(2, 17);
    const auto aug = dihedral_augment(base);
    REQUIRE(aug.size() == 16);
    CHECK(aug[0].current == base[0].current);
    CHECK(aug[0].action == base[0].action);
    CHECK(aug[8].goal == base[1].goal);
    for (int t = 0; t < 8; ++t) {
        const Transition& m = aug[static_cast<std::size_t>(t)];
        // Every pixel lands on its mapped position, computed directly here.
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 16; ++c) {
                int rr = r, cc = c;
                if (t & 4) std::swap(rr, cc);
                if (t & 1) rr = 15 - rr;
                if (t & 2) cc = 15 - cc;
                CHECK(m.current.at(rr, cc) == base[0].current.at(r, c));
                CHECK(m.goal.at(rr, cc) == base[0].goal.at(r, c));
            }
        CHECK(m.current.at(m.action.pick) == base[0].current.at(base[0].action.pick));
        // Unit positions still fall on the pixels the mapped image was drawn from.
        for (std::size_t u = 0; u < m.current_units.size(); ++u) {
            const Pixel want = world_to_pixel(base[0].current_units[u], 16, 16);
            int rr = want.row, cc = want.col;
            if (t & 4) std::swap(rr, cc);
            if (t & 1) rr = 15 - rr;
            if (t & 2) cc = 15 - cc;
            const Pixel got = world_to_pixel(m.current_units[u], 16, 16);
            CHECK(std::abs(got.row - rr) <= 1);
            CHECK(std::abs(got.col - cc) <= 1);
        }
        for (int s = 0; s < t; ++s) CHECK_FALSE(aug[static_cast<std::size_t>(s)].current == m.current);
    }
    std::vector<Transition> wide(1);
    wide[0].current = wide[0].goal = Image(4, 6, 0.0);
    CHECK(dihedral_augment(wide).size() == 4);
}

TEST_CASE("keep_best returns the parameters at the best validation point") {
    const auto train = tiny_transitions(6, 19);
    const auto val = tiny_transitions(3, 20);
    TrainConfig c;
    c.steps = 200;
    c.validate_every = 20;
    c.learning_rate = 1e-2;
    c.keep_best = true;
    const ModelParams init = init_params(tiny_hyper(), 21);
    const TrainResult r = train_imitation(train, val, c, init);
    std::size_t best = 0;
    for (std::size_t i = 1; i < r.log.size(); ++i)
        if (r.log[i].val_loss < r.log[best].val_loss) best = i;
    CHECK(evaluate_loss(r.params, prepare_transitions(val, tiny_hyper())) == r.log[best].val_loss);
    // Same parameters as a plain run stopped at that step.
    c.keep_best = false;
    c.steps = r.log[best].step;
    CHECK(train_imitation(train, val, c, init).params == r.params);
    // Augmented training is deterministic too.
    c.augment = true;
    CHECK(train_imitation(train, val, c, init).params == train_imitation(train, val, c, init).params);
}

TEST_CASE("cosine decay: the first step uses the full rate") {
    const auto train = tiny_transitions(4, 23);
    TrainConfig c;
    c.steps = 1;
    c.batch_size = 2;
    c.learning_rate = 1e-2;
    const ModelParams init = init_params(tiny_hyper(), 24);
    const ModelParams plain = train_imitation(train, {}, c, init).params;
    c.cosine_decay = true;
    CHECK(train_imitation(train, {}, c, init).params == plain);
    // Over two steps the second update is scaled by (1 + cos(pi / 2)) / 2 = 0.5.
    c.steps = 2;
    c.cosine_decay = false;
    TrainConfig half = c;
    const ModelParams full2 = train_imitation(train, {}, c, init).params;
    half.cosine_decay = true;
    const ModelParams decayed = train_imitation(train, {}, half, init).params;
    auto a = parameter_list(plain), b = parameter_list(full2), d = parameter_list(decayed);
    for (std::size_t p = 0; p < a.size(); ++p)
        for (std::size_t i = 0; i < a[p]->size(); ++i) {
            const double step2 = (*b[p])[i] - (*a[p])[i];
            CHECK((*d[p])[i] - (*a[p])[i] == doctest::Approx(0.5 * step2).epsilon(1e-9));
        }
}

TEST_CASE("divergence is reported") {
    TrainConfig c;
    c.steps = 50;
    c.learning_rate = 1e8;
    CHECK_THROWS_AS(train_imitation(tiny_transitions(4, 13), {}, c, init_params(tiny_hyper(), 14)), TrainingDiverged);
}

TEST_CASE("checkpoint round trip preserves evaluation") {
    const auto data = tiny_transitions(3, 15);
    TrainConfig c;
    c.steps = 20;
    c.validate_every = 10;
    const TrainResult r = train_imitation(data, {}, c, init_params(tiny_hyper(), 16));
    const ModelParams back = decode_checkpoint(encode_checkpoint(r.params));
    CHECK(back == r.params);
    for (const Transition& t : data) CHECK(act(t.current, t.goal, back) == act(t.current, t.goal, r.params));
}

TEST_CASE("batch gradient matches finite differences of the summed loss") {
    const ModelHyper h = tiny_hyper();
    ModelParams p = init_params(h, 17);
    const auto data = prepare_transitions(tiny_transitions(3, 18), h);
    const BatchGradient g = batch_gradient(p, data, {0, 2, 2});
    auto f = [&] { return batch_gradient(p, data, {0, 2, 2}).loss; };
    const auto params = parameter_list(p);
    // Spot-check the last pick layer and the GCN weights.
    CHECK(ref::fd_check(*params[4], f, g.grads[4]) < 1e-4);
    CHECK(ref::fd_check(*params[19], f, g.grads[19]) < 1e-4);
}

TEST_CASE("success criterion defaults") {
    const SuccessCriterion c = SuccessCriterion::defaults(64, 64);
    CHECK(c.max_actions == 20);
    CHECK(c.alpha == doctest::Approx(10.0 / std::sqrt(8192.0)).epsilon(1e-15));
    CHECK(c.threshold_pixels(64, 64) == doctest::Approx(10.0).epsilon(1e-12));
    SuccessCriterion bad = c;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("rollout: immediate success and all-immediate success rate") {
    Task t = chain_task(1, 3);
    t.initial = t.goal;
    const RolloutResult r = rollout(random_policy(64, 64), t, SuccessCriterion::defaults(64, 64), EnvConfig{});
    CHECK(r.success);
    CHECK(r.actions_used == 0);
    CHECK(r.distances.size() == 1);
    const SuccessSummary s = success_rate(random_policy(64, 64), {t, t, t}, SuccessCriterion::defaults(64, 64), EnvConfig{});
    CHECK(s.rate == 1.0);
    CHECK_THROWS_AS(success_rate(random_policy(64, 64), {}, SuccessCriterion::defaults(64, 64), EnvConfig{}), ConfigError);
}

TEST_CASE("rollout: a failing policy wastes steps and the trace is complete") {
    const Task t = chain_task(2, 5);
    SuccessCriterion c = SuccessCriterion::defaults(64, 64);
    c.alpha = 1e-6;
    c.max_actions = 5;
    const Policy broken = [](const PolicyInput&) -> PickPlaceAction { throw NoSupport("none"); };
    const RolloutResult r = rollout(broken, t, c, EnvConfig{});
    CHECK_FALSE(r.success);
    CHECK(r.actions_used == 5);
    CHECK(r.distances.size() == 6);
    for (double d : r.distances) CHECK(d == r.distances[0]);
}

TEST_CASE("rollout: random policy is seeded per task") {
    const Task t = chain_task(3, 7);
    const SuccessCriterion c = SuccessCriterion::defaults(64, 64);
    const RolloutResult a = rollout(random_policy(64, 64), t, c, EnvConfig{}, 4);
    const RolloutResult b = rollout(random_policy(64, 64), t, c, EnvConfig{}, 4);
    CHECK(a.actions == b.actions);
    CHECK(a.distances == b.distances);
    CHECK_FALSE(rollout(random_policy(64, 64), t, c, EnvConfig{}, 5).actions == a.actions);
}

TEST_CASE("rollout: oracle reduces the distance when one end is displaced") {
    // Goal is a straight chain; the initial state swings the first unit about
    // the second, so exactly one unit is out of place.
    Task t;
    t.goal = init_state(Topology::Chain, 32, 0.02, 0);
    t.initial = t.goal;
    const Vec2 pivot = t.goal.units[1];
    t.initial.units[0] = {pivot.x, pivot.y - 0.02};
    SuccessCriterion c = SuccessCriterion::defaults(64, 64);
    c.alpha = 1e-6;
    c.max_actions = 1;
    const RolloutResult r = rollout(oracle_policy(64, 64), t, c, EnvConfig{});
    REQUIRE(r.distances.size() == 2);
    CHECK(r.distances[1] < r.distances[0]);
    CHECK(r.grasped[0]);
}

TEST_CASE("oracle policy solves generated tasks and evaluation is read-only") {
    std::vector<Task> tasks;
    for (std::uint32_t i = 0; i < 5; ++i) tasks.push_back(chain_task(i, 50 + i));
    const SuccessSummary s = success_rate(oracle_policy(64, 64), tasks, SuccessCriterion::defaults(64, 64), EnvConfig{});
    CHECK(s.rate >= 0.8);
    for (const RolloutResult& r : s.results) CHECK(r.distances.size() == static_cast<std::size_t>(r.actions_used) + 1);

    ModelHyper h;
    const ModelParams p = init_params(h, 1);
    const ModelParams copy = p;
    success_rate(model_policy(p), {tasks[0]}, SuccessCriterion::defaults(64, 64), EnvConfig{});
    CHECK(p == copy);
}
