#pragma once

#include "hydra/model/config.hpp"

namespace hydra::fixtures {

/// Smallest config that still exercises every branch; a training step
/// takes well under a millisecond.
inline model::RunConfig tiny_config() {
    model::RunConfig c;
    c.feat_h = 2;
    c.feat_w = 3;
    c.downsample = 4;
    c.image_pool = 2;
    c.depth_bins = 4;
    c.d_min = 2.0;
    c.d_step = 3.0;
    c.grid_n = 4;
    c.grid_res = 3.0;
    c.nz = 2;
    c.channels = 4;
    c.radar_channels = 4;
    c.heads = 2;
    c.rdc_points = 2;
    c.occ_channels = 2;
    c.radar_noise = false;
    c.steps = 3;
    return c;
}

}  // namespace hydra::fixtures
