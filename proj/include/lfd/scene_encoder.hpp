#pragma once

#include "lfd/nn.hpp"

namespace lfd {

// Convolutional stem + learned-query cross-attention pooling that compresses
// the observation stack into fixed-length scene and history tokens, plus the
// command embedding table standing in for a text prompt.
struct SceneEncoderConfig {
    int bev_h = 48, bev_w = 48;
    int c_cur = 4;    // channels of the current frame
    int c_hist = 8;   // channels of the stacked history frames
    int conv1 = 12, conv2 = 24;
    int m_s = 8;      // scene tokens
    int m_h = 4;      // history tokens
    int dim = 128;
    int commands = 6;

    int grid_tokens() const {
        const int g = ((bev_h + 1) / 2) / 4;  // stride-2 then stride-4 stem
        return g * g;
    }
};

void scene_encoder_init(ParamStore& store, const SceneEncoderConfig& cfg, Rng& rng);

struct SceneTokens {
    Var x_s;  // m_s x dim
    Var x_h;  // m_h x dim
};

// bev_cur: (H*W) x c_cur, bev_hist: (H*W) x c_hist.
SceneTokens encode_scene(Tape& tape, TapeParams& p, const SceneEncoderConfig& cfg,
                         const Mat& bev_cur, const Mat& bev_hist);

// 1 x dim row from the learned command table; throws on out-of-range ids.
Var embed_command(Tape& tape, TapeParams& p, const SceneEncoderConfig& cfg, int command);

}  // namespace lfd
