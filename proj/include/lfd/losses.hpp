#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lfd/model.hpp"

namespace lfd {

struct PlanLossConfig {
    double w_mse = 1.0, w_bd = 0.1, w_col = 0.1;
    double m_bd = 0.2;   // boundary margin, meters
    double m_col = 1.0;  // collision margin, meters
};

struct PlanLossVars {
    Var total;
    double mse = 0.0, bd = 0.0, col = 0.0;
};

// Supervises only the command-indexed mode of the F x 2K set: mean squared
// waypoint error, a hinge on the drivable-region signed distance, and a hinge
// on distance to each agent at the matching timestep.
PlanLossVars plan_loss(Tape& tape, Var traj_modes, int command, const Mat& gt_traj,
                       const LocalMap& map_local, const Mat& agent_futures, int num_agents,
                       const PlanLossConfig& cfg, int frames, int commands);

// Signed distance of each waypoint row to the drivable-region boundary
// (positive inside); exposed for tests of the hinge geometry.
Var map_signed_distance(Tape& tape, Var points, const LocalMap& map_local);

// Teacher-forced cross entropy of the template ids at the template positions.
Var template_ce_loss(Var logits, int ctx_len, const std::vector<int>& template_ids);

struct LossWeights {
    double w_c = 1.0;  // cosine term of the vision loss
    double w_r = 1.0;  // L1 term
    PlanLossConfig plan;
};

// Named loss terms; absent terms (e.g. l_vis under m_base) simply do not
// appear. total is always the sum of the terms present.
struct LossBreakdown {
    std::vector<std::pair<std::string, double>> terms;
    double total = 0.0;

    bool has(const std::string& name) const;
    double get(const std::string& name) const;  // 0 when absent
};

// Optional auxiliary supervision hook (defaults to zero contribution).
using AuxLossHook = std::function<Var(Tape&, const EpisodeData&)>;

struct EpisodeLossVars {
    Var total;
    LossBreakdown breakdown;
    Model::Forward fwd;
};

EpisodeLossVars episode_loss(Tape& tape, TapeParams& p, Model& model, const EpisodeData& ep,
                             const LossWeights& w, bool training, Rng* z_rng,
                             const AuxLossHook* aux = nullptr);

}  // namespace lfd
