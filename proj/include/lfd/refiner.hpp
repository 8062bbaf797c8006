#pragma once

#include "lfd/nn.hpp"

namespace lfd {

// Second decoding stage: motion states become queries, future-frame
// embeddings become keys/values, and cross-attention blocks refine the states
// before base+offset trajectory heads.
struct RefinerConfig {
    int dim = 128;
    int c_r = 64;
    int frames = 6;
    int commands = 6;
    int blocks = 2;
    int ff_mult = 4;
};

void refiner_init(ParamStore& store, const RefinerConfig& cfg, Rng& rng);

// F x c_r queries from the F x 2*dim ego states (linear + layernorm + GELU).
Var project_query(TapeParams& p, Var s_ego);

// Per-frame mean-pool over the N token rows, then separate key/value
// projections; each result is F x c_r.
struct KvVars {
    Var k_fut, v_fut;
};
KvVars project_kv(Tape& tape, TapeParams& p, const std::vector<Var>& h_frames);

struct RefineVars {
    Var s_star;                   // F x c_r
    std::vector<Mat> attention;   // per block, rows sum to 1
};
RefineVars refine(Tape& tape, TapeParams& p, const RefinerConfig& cfg, Var q_ego, Var k_fut,
                  Var v_fut);

struct FinalTrajVars {
    Var base;    // F x 2K
    Var offset;  // F x 2K
    Var tau_f;   // base + offset
};
// Two structurally identical MLP heads; the offset head's final layer is
// zero-initialized so refinement starts at the base trajectory.
FinalTrajVars decode_final(Tape& tape, TapeParams& p, const RefinerConfig& cfg, Var s_star);

}  // namespace lfd
