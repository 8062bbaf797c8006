#pragma once

#include "lfd/nn.hpp"

namespace lfd {

// First decoding stage: planning embedding -> Gaussian latent -> GRU-decoded
// per-timestep motion states -> K coarse trajectory proposals.
struct PlannerConfig {
    int dim = 128;
    int c_z = 8;
    int frames = 6;
    int commands = 6;
    int gru_layers = 2;
    int dis_h1 = 128;
    int dis_h2 = 64;
};

void planner_init(ParamStore& store, const PlannerConfig& cfg, Rng& rng);

struct GaussianVars {
    Var mu;       // 1 x c_z
    Var log_std;  // 1 x c_z
};

// gt_traj (F x 2) conditions the distribution in training mode and must be
// null at inference; the gt block of the input is zeroed in that case.
GaussianVars planner_distribution(Tape& tape, TapeParams& p, const PlannerConfig& cfg, Var h_p,
                                  const Mat* gt_traj);

// Reparameterized draw; rng == nullptr takes the mode (z = mu).
Var planner_sample(Tape& tape, Var mu, Var log_std, Rng* rng);

// F x 2*dim states; the trailing dim columns of every row equal h_p.
Var planner_decode_states(Tape& tape, TapeParams& p, const PlannerConfig& cfg, Var z, Var h_p);

// F x 2K coarse proposals; columns (2k, 2k+1) hold waypoints of mode k.
Var planner_coarse(Tape& tape, TapeParams& p, const PlannerConfig& cfg, Var s_ego);

}  // namespace lfd
