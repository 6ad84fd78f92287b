#pragma once

// key=value training configuration shared by the command-line tool and the
// Python bindings.
//
//   learning_rate momentum batch_size steps seed validate_every target_loss
//   clip_norm validation_limit augment keep_best cosine_decay
//                                  optimizer settings (TrainConfig; flags 0/1)
//   init_seed                      parameter initialization seed
//   topology                       chain | ring | all (training subset)
//   keypoints crop feature_channels fcn_hidden fcn_layers dilation_growth
//   gcn_hidden gcn_out mask_sigma mask_truncate
//                                  model shape (ModelHyper)
//
// Image size is taken from the data, not the config. Keys left out keep the
// values of the default run below.

#include <cstdint>
#include <optional>
#include <string>

#include "ropegraph/model.hpp"
#include "ropegraph/training.hpp"

namespace ropegraph {

// The default training run: 4000 steps of batch 8 at learning rate 1e-3 with
// grid-symmetry augmentation, cosine decay and best-validation selection, on
// 5-layer FCNs with doubling dilation and a 4 x 4 x 16 place kernel.
TrainConfig default_run_config();
ModelHyper default_run_hyper();

struct TrainSettings {
    TrainConfig train = default_run_config();
    ModelHyper hyper = default_run_hyper();
    std::uint64_t init_seed = 1;
    std::optional<Topology> topology = Topology::Chain;  // nullopt trains on both
};

// Throws ConfigError on unknown keys or unparsable values.
TrainSettings parse_train_settings(const std::string& text);
TrainSettings load_train_settings(const std::string& path);

}  // namespace ropegraph
