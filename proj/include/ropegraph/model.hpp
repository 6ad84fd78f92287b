#pragma once

// Graph-conditioned pick-and-place policy.
//
// Three parallel fully convolutional heads read the stacked current/goal
// images. The pick head's scores are gated by the current keypoint mask. The
// place head crops a c x c x D window of the query map at the pick pixel,
// adds the difference of the goal and current graph codes (each a two-layer
// GCN over the keypoint graph, flattened node-major and read as c x c x D),
// and cross-correlates the resulting kernel with the key map; the response
// is gated by the goal keypoint mask.
//
// Scores are made strictly positive with exp() before masking, so pixels
// outside a mask's support are exactly zero and can never be selected.

#include <cstdint>
#include <vector>

#include "ropegraph/autodiff.hpp"
#include "ropegraph/keypoints.hpp"
#include "ropegraph/rope_sim.hpp"

namespace ropegraph {

struct ModelHyper {
    int height = 64;
    int width = 64;
    int keypoints = 16;
    int crop = 8;               // c
    int feature_channels = 4;   // D
    int fcn_hidden = 16;
    int fcn_layers = 4;
    int kernel = 3;
    int dilation_growth = 1;    // layer l of each FCN uses dilation growth^l
    int gcn_hidden = 32;
    int gcn_out = 16;           // keypoints * gcn_out == crop * crop * feature_channels
    double mask_sigma = 3.0;
    double mask_truncate = 3.0;
    double foreground_threshold = 0.5;
    bool align_goal_keypoints = true;

    friend bool operator==(const ModelHyper&, const ModelHyper&) = default;
};

// Throws ConfigError on inconsistent sizes, including a GCN code length that
// cannot be read as a c x c x D kernel.
void validate(const ModelHyper& hyper);

struct ConvLayer {
    ad::Array kernels;  // out x in x k x k
    ad::Array bias;     // out
    friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct ModelParams {
    ModelHyper hyper;
    std::vector<ConvLayer> pick_fcn;
    std::vector<ConvLayer> query_fcn;
    std::vector<ConvLayer> key_fcn;
    ad::Array gcn_w1;  // 2 x gcn_hidden, ReLU
    ad::Array gcn_w2;  // gcn_hidden x gcn_out, identity

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// He-normal convolution kernels, zero biases, Glorot-normal GCN weights.
ModelParams init_params(const ModelHyper& hyper, std::uint64_t seed);

// Every trainable array in a fixed order (pick, query, key layers as
// kernels/bias pairs, then the two GCN weights).
std::vector<ad::Array*> parameter_list(ModelParams& params);
std::vector<const ad::Array*> parameter_list(const ModelParams& params);

// Everything derived from an observation pair that does not depend on the
// weights: stacked input, keypoints, graphs and masks.
struct PreparedInput {
    ad::Array stacked;  // 2 x H x W: current, goal
    KeypointSet current_keypoints;
    KeypointSet goal_keypoints;  // aligned to current order when enabled
    RepGraph current_graph;
    RepGraph goal_graph;
    Image current_mask;
    Image goal_mask;
};

PreparedInput prepare_input(const Image& current, const Image& goal, const ModelHyper& hyper);

// Flattened node-major 2-layer GCN encoding, length keypoints * gcn_out.
ad::Array encode_graph(const RepGraph& graph, const ModelParams& params);

struct PickOutput {
    Image q;  // Q_pick
    Pixel pick;
};

struct PlaceOutput {
    Image q;  // Q_place
    Pixel place;
    ad::Array kernel;  // K_s, D x c x c
    ad::Array query_crop;  // K_q, D x c x c
    ad::Array response;    // pre-mask cross-correlation, 1 x H x W
};

PickOutput forward_pick(const Image& current, const Image& goal, const Image& current_mask, const ModelParams& params);

PlaceOutput forward_place(const Image& current, const Image& goal, Pixel pick, const ad::Array& current_code,
                          const ad::Array& goal_code, const Image& goal_mask, const ModelParams& params);

struct ActTrace {
    PreparedInput input;
    ad::Array current_code;
    ad::Array goal_code;
    PickOutput pick;
    PlaceOutput place;
};

PickPlaceAction act(const Image& current, const Image& goal, const ModelParams& params, ActTrace* trace = nullptr);

// Masked, exp-transformed scores normalized so the best in-support pixel is 1:
// q = M * exp(r - m) with m = max over support of (r + log M). Throws
// NoSupport if the mask is zero everywhere.
Image masked_scores(const ad::Array& response, const Image& mask);

// First pixel in row-major order with the largest value.
Pixel argmax_pixel(const Image& scores);

// ---------------------------------------------------------------------------
// Differentiable pieces, shared by inference and training.

struct ParamVars {
    std::vector<std::pair<ad::Var, ad::Var>> pick, query, key;
    ad::Var gcn_w1, gcn_w2;
};

// Records the parameters on the tape, as variables when `trainable`.
ParamVars bind_params(ad::Tape& tape, const ModelParams& params, bool trainable);

// Parameter gradients in parameter_list order.
std::vector<ad::Array> collect_grads(ad::Tape& tape, const ParamVars& vars);

ad::Var fcn_forward(ad::Var input, const std::vector<std::pair<ad::Var, ad::Var>>& layers, int dilation_growth = 1);
ad::Var encode_graph(ad::Tape& tape, const RepGraph& graph, const ParamVars& vars, const ModelHyper& hyper);
// Graph code (flat, node-major) read as c x c x D and permuted to D x c x c.
ad::Var code_as_kernel(ad::Var code, const ModelHyper& hyper);

// log of a mask with zeros floored, added to raw responses so a spatial
// softmax over the sum is proportional to the masked scores.
ad::Array log_mask(const Image& mask);

struct LossTerms {
    ad::Var total;
    ad::Var pick;
    ad::Var place;
};

// Sum of spatial cross-entropies of the masked pick and place scores against
// oracle pixels. The query crop is taken at the oracle pick pixel.
LossTerms imitation_loss(ad::Tape& tape, const ParamVars& vars, const PreparedInput& input, const ModelHyper& hyper,
                         Pixel pick_target, Pixel place_target);

}  // namespace ropegraph
