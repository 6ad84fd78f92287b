#include "ropegraph/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ropegraph/errors.hpp"
#include "ropegraph/random.hpp"

namespace ropegraph {

using ad::Array;
using ad::Tape;
using ad::Var;

void validate(const ModelHyper& h) {
    if (h.height < 1 || h.width < 1) throw ConfigError("image size must be positive");
    if (h.keypoints < 3) throw ConfigError("need at least 3 keypoints");
    if (h.crop < 1 || h.feature_channels < 1 || h.fcn_hidden < 1 || h.gcn_hidden < 1 || h.gcn_out < 1) {
        throw ConfigError("model widths must be positive");
    }
    if (h.fcn_layers < 1) throw ConfigError("fcn_layers must be >= 1");
    if (h.kernel < 1 || h.kernel % 2 == 0) throw ConfigError("fcn kernel size must be odd");
    if (h.dilation_growth < 1) throw ConfigError("dilation_growth must be >= 1");
    if (h.keypoints * h.gcn_out != h.crop * h.crop * h.feature_channels) {
        throw ConfigError("graph code length " + std::to_string(h.keypoints * h.gcn_out) +
                          " does not match crop volume " + std::to_string(h.crop * h.crop * h.feature_channels));
    }
    if (!(h.mask_sigma > 0.0)) throw ConfigError("mask_sigma must be > 0");
}

namespace {

std::vector<ConvLayer> init_fcn(const ModelHyper& h, int out_channels, Rng& rng) {
    std::vector<ConvLayer> layers;
    int in = 2;
    for (int l = 0; l < h.fcn_layers; ++l) {
        const int out = l + 1 == h.fcn_layers ? out_channels : h.fcn_hidden;
        ConvLayer layer{Array({out, in, h.kernel, h.kernel}), Array({out}, 0.0)};
        const double scale = std::sqrt(2.0 / (in * h.kernel * h.kernel));
        for (double& v : layer.kernels.values()) v = scale * rng.normal();
        layers.push_back(std::move(layer));
        in = out;
    }
    return layers;
}

Array glorot(int rows, int cols, Rng& rng) {
    Array a({rows, cols});
    const double scale = std::sqrt(2.0 / (rows + cols));
    for (double& v : a.values()) v = scale * rng.normal();
    return a;
}

void check_same_size(const Image& a, const Image& b, const char* what) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeMismatch(std::string(what) + ": image sizes differ");
    }
}

Array stack_images(const Image& current, const Image& goal) {
    check_same_size(current, goal, "stack");
    Array out({2, current.height, current.width});
    std::copy(current.values.begin(), current.values.end(), out.data());
    std::copy(goal.values.begin(), goal.values.end(), out.data() + current.values.size());
    return out;
}

Array graph_features(const RepGraph& g) { return Array({g.num_vertices, 2}, g.features); }
Array graph_adjacency(const RepGraph& g) { return Array({g.num_vertices, g.num_vertices}, g.adjacency); }

}  // namespace

ModelParams init_params(const ModelHyper& hyper, std::uint64_t seed) {
    validate(hyper);
    Rng rng(seed);
    ModelParams p;
    p.hyper = hyper;
    p.pick_fcn = init_fcn(hyper, 1, rng);
    p.query_fcn = init_fcn(hyper, hyper.feature_channels, rng);
    p.key_fcn = init_fcn(hyper, hyper.feature_channels, rng);
    p.gcn_w1 = glorot(2, hyper.gcn_hidden, rng);
    p.gcn_w2 = glorot(hyper.gcn_hidden, hyper.gcn_out, rng);
    return p;
}

std::vector<Array*> parameter_list(ModelParams& params) {
    std::vector<Array*> out;
    for (auto* fcn : {&params.pick_fcn, &params.query_fcn, &params.key_fcn}) {
        for (ConvLayer& l : *fcn) {
            out.push_back(&l.kernels);
            out.push_back(&l.bias);
        }
    }
    out.push_back(&params.gcn_w1);
    out.push_back(&params.gcn_w2);
    return out;
}

std::vector<const Array*> parameter_list(const ModelParams& params) {
    auto mutable_list = parameter_list(const_cast<ModelParams&>(params));
    return {mutable_list.begin(), mutable_list.end()};
}

PreparedInput prepare_input(const Image& current, const Image& goal, const ModelHyper& hyper) {
    check_same_size(current, goal, "prepare_input");
    PreparedInput in;
    in.stacked = stack_images(current, goal);
    in.current_keypoints = extract_keypoints(current, hyper.keypoints, hyper.foreground_threshold);
    in.goal_keypoints = extract_keypoints(goal, hyper.keypoints, hyper.foreground_threshold);
    if (hyper.align_goal_keypoints) in.goal_keypoints = align_keypoints(in.current_keypoints, in.goal_keypoints);
    in.current_graph = build_graph(in.current_keypoints, current.height, current.width);
    in.goal_graph = build_graph(in.goal_keypoints, goal.height, goal.width);
    const MaskOptions mask{hyper.mask_sigma, hyper.mask_truncate};
    in.current_mask = gaussian_mask(in.current_keypoints, current.height, current.width, mask);
    in.goal_mask = gaussian_mask(in.goal_keypoints, goal.height, goal.width, mask);
    return in;
}

// ---------------------------------------------------------------------------
// Differentiable building blocks

ParamVars bind_params(Tape& tape, const ModelParams& params, bool trainable) {
    auto bind = [&](const Array& a) { return trainable ? tape.variable(a) : tape.constant(a); };
    ParamVars v;
    for (const ConvLayer& l : params.pick_fcn) v.pick.emplace_back(bind(l.kernels), bind(l.bias));
    for (const ConvLayer& l : params.query_fcn) v.query.emplace_back(bind(l.kernels), bind(l.bias));
    for (const ConvLayer& l : params.key_fcn) v.key.emplace_back(bind(l.kernels), bind(l.bias));
    v.gcn_w1 = bind(params.gcn_w1);
    v.gcn_w2 = bind(params.gcn_w2);
    return v;
}

std::vector<Array> collect_grads(Tape& tape, const ParamVars& vars) {
    std::vector<Array> out;
    for (const auto* fcn : {&vars.pick, &vars.query, &vars.key}) {
        for (const auto& [k, b] : *fcn) {
            out.push_back(tape.grad(k));
            out.push_back(tape.grad(b));
        }
    }
    out.push_back(tape.grad(vars.gcn_w1));
    out.push_back(tape.grad(vars.gcn_w2));
    return out;
}

Var fcn_forward(Var input, const std::vector<std::pair<Var, Var>>& layers, int dilation_growth) {
    Var x = input;
    int dilation = 1;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        x = ad::conv2d(x, layers[l].first, layers[l].second, ad::Padding::Same, dilation);
        dilation *= dilation_growth;
        if (l + 1 < layers.size()) x = ad::relu(x);
    }
    return x;
}

Var encode_graph(Tape& tape, const RepGraph& graph, const ParamVars& vars, const ModelHyper& hyper) {
    if (graph.num_vertices != hyper.keypoints) {
        throw ConfigError("graph has " + std::to_string(graph.num_vertices) + " vertices, model expects " +
                          std::to_string(hyper.keypoints));
    }
    const Array adjacency = graph_adjacency(graph);
    Var h = tape.constant(graph_features(graph));
    h = ad::gcn_layer(h, adjacency, vars.gcn_w1, ad::Activation::ReLU);
    h = ad::gcn_layer(h, adjacency, vars.gcn_w2, ad::Activation::Identity);
    // K x F row-major is already node-major.
    return ad::reshape(h, {hyper.keypoints * hyper.gcn_out});
}

Var code_as_kernel(Var code, const ModelHyper& hyper) {
    Var hwc = ad::reshape(code, {hyper.crop, hyper.crop, hyper.feature_channels});
    return ad::permute3(hwc, {2, 0, 1});
}

Array log_mask(const Image& mask) {
    constexpr double floor_value = 1e-12;
    Array out({mask.height, mask.width});
    for (std::size_t i = 0; i < mask.values.size(); ++i) out[i] = std::log(std::max(mask.values[i], floor_value));
    return out;
}

LossTerms imitation_loss(Tape& tape, const ParamVars& vars, const PreparedInput& input, const ModelHyper& hyper,
                         Pixel pick_target, Pixel place_target) {
    const int h = input.stacked.dim(1);
    const int w = input.stacked.dim(2);
    Var x = tape.constant(input.stacked);

    Var pick_logits = ad::reshape(fcn_forward(x, vars.pick, hyper.dilation_growth), {h, w});
    pick_logits = ad::add(pick_logits, tape.constant(log_mask(input.current_mask)));
    Var pick_loss = ad::spatial_softmax_ce(pick_logits, static_cast<std::size_t>(pick_target.row) * w + pick_target.col);

    Var query = fcn_forward(x, vars.query, hyper.dilation_growth);
    Var key = fcn_forward(x, vars.key, hyper.dilation_growth);
    Var k_t = encode_graph(tape, input.current_graph, vars, hyper);
    Var k_g = encode_graph(tape, input.goal_graph, vars, hyper);
    Var k_q = ad::crop(query, pick_target.row, pick_target.col, hyper.crop);
    Var k_s = ad::add(k_q, ad::sub(code_as_kernel(k_g, hyper), code_as_kernel(k_t, hyper)));
    Var response = ad::reshape(ad::correlate(key, k_s), {h, w});
    response = ad::add(response, tape.constant(log_mask(input.goal_mask)));
    Var place_loss = ad::spatial_softmax_ce(response, static_cast<std::size_t>(place_target.row) * w + place_target.col);

    return {ad::add(pick_loss, place_loss), pick_loss, place_loss};
}

// ---------------------------------------------------------------------------
// Inference

Image masked_scores(const Array& response, const Image& mask) {
    if (response.size() != mask.values.size()) throw ShapeMismatch("response and mask sizes differ");
    double best = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t i = 0; i < response.size(); ++i) {
        if (mask.values[i] > 0.0) {
            any = true;
            best = std::max(best, response[i] + std::log(mask.values[i]));
        }
    }
    if (!any) throw NoSupport("mask is zero everywhere");
    Image q(mask.height, mask.width, 0.0);
    for (std::size_t i = 0; i < response.size(); ++i) {
        if (mask.values[i] > 0.0) q.values[i] = mask.values[i] * std::exp(response[i] - best);
    }
    return q;
}

Pixel argmax_pixel(const Image& scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.values.size(); ++i) {
        if (scores.values[i] > scores.values[best]) best = i;
    }
    return {static_cast<int>(best / scores.width), static_cast<int>(best % scores.width)};
}

Array encode_graph(const RepGraph& graph, const ModelParams& params) {
    Tape tape;
    ParamVars vars = bind_params(tape, params, false);
    return encode_graph(tape, graph, vars, params.hyper).value();
}

PickOutput forward_pick(const Image& current, const Image& goal, const Image& current_mask, const ModelParams& params) {
    check_same_size(current, current_mask, "forward_pick");
    Tape tape;
    ParamVars vars = bind_params(tape, params, false);
    Var logits = fcn_forward(tape.constant(stack_images(current, goal)), vars.pick, params.hyper.dilation_growth);
    PickOutput out;
    out.q = masked_scores(logits.value(), current_mask);
    out.pick = argmax_pixel(out.q);
    return out;
}

PlaceOutput forward_place(const Image& current, const Image& goal, Pixel pick, const Array& current_code,
                          const Array& goal_code, const Image& goal_mask, const ModelParams& params) {
    const ModelHyper& h = params.hyper;
    check_same_size(current, goal_mask, "forward_place");
    if (!current.contains(pick)) throw OutOfWorkspace("pick pixel outside image");
    const std::size_t code_len = static_cast<std::size_t>(h.crop) * h.crop * h.feature_channels;
    if (current_code.size() != code_len || goal_code.size() != code_len) {
        throw ConfigError("graph code length does not match crop volume");
    }
    Tape tape;
    ParamVars vars = bind_params(tape, params, false);
    Var x = tape.constant(stack_images(current, goal));
    Var query = fcn_forward(x, vars.query, h.dilation_growth);
    Var key = fcn_forward(x, vars.key, h.dilation_growth);
    Var k_q = ad::crop(query, pick.row, pick.col, h.crop);
    Var k_t = code_as_kernel(tape.constant(current_code.reshaped({static_cast<int>(code_len)})), h);
    Var k_g = code_as_kernel(tape.constant(goal_code.reshaped({static_cast<int>(code_len)})), h);
    Var k_s = ad::add(k_q, ad::sub(k_g, k_t));
    Var response = ad::correlate(key, k_s);

    PlaceOutput out;
    out.q = masked_scores(response.value(), goal_mask);
    out.place = argmax_pixel(out.q);
    out.kernel = k_s.value();
    out.query_crop = k_q.value();
    out.response = response.value();
    return out;
}

PickPlaceAction act(const Image& current, const Image& goal, const ModelParams& params, ActTrace* trace) {
    ActTrace local;
    ActTrace& t = trace ? *trace : local;
    t.input = prepare_input(current, goal, params.hyper);
    t.current_code = encode_graph(t.input.current_graph, params);
    t.goal_code = encode_graph(t.input.goal_graph, params);
    t.pick = forward_pick(current, goal, t.input.current_mask, params);
    t.place = forward_place(current, goal, t.pick.pick, t.current_code, t.goal_code, t.input.goal_mask, params);
    return {t.pick.pick, t.place.place};
}

}  // namespace ropegraph
