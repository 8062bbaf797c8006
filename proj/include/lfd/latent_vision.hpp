#pragma once

#include <cstdint>
#include <vector>

#include "lfd/nn.hpp"

namespace lfd {

// Frozen random convolutional teacher over forward-view rasters. Targets are
// layer-normalized per token; no gradients ever flow into these parameters.
struct TeacherConfig {
    int front_h = 32, front_w = 32;
    int c1 = 8;
    int c_v = 32;
    int n_tokens = 16;  // must tile the 4x4 conv grid: 1, 2, 4, 8 or 16
    std::uint64_t seed = 7;
};

struct TeacherParams {
    TeacherConfig cfg;
    Mat conv1_w, conv1_b;
    Mat conv2_w, conv2_b;
};

TeacherParams make_teacher(const TeacherConfig& cfg);

// Deterministic content hash of the teacher (config + weights), recorded in
// checkpoints so evaluation can detect a mismatched teacher.
std::uint64_t teacher_hash(const TeacherParams& t);

// front raster (front_h*front_w values in [0,1]) -> n_tokens x c_v targets,
// each row normalized to mean 0 / variance 1.
Mat teacher_encode(const std::vector<double>& front, const TeacherParams& t);

// ---- vision decoder + loss ---------------------------------------------------

void vision_decoder_init(ParamStore& store, int dim, int c_v, Rng& rng);

// Single linear projection (no activation): N x dim -> N x c_v.
Var decode_latent(TapeParams& p, Var h_frame);

struct VisionLossVars {
    Var total;
    double cosine = 0.0;  // mean(1 - cos) over all F*N rows
    double reg = 0.0;     // mean |diff| over all elements
    std::vector<double> frame_cosine;
    std::vector<double> frame_reg;
};

// w_c * cosine + w_r * L1, means taken flat over all frames/tokens. Predicted
// rows with near-zero norm fall back to an eps=1e-8 norm floor.
VisionLossVars vision_loss(Tape& tape, const std::vector<Var>& v_pred,
                           const std::vector<Mat>& v_gt, double w_c, double w_r);

}  // namespace lfd
