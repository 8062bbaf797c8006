#pragma once

#include <string>
#include <vector>

#include "lfd/backbone.hpp"
#include "lfd/latent_vision.hpp"
#include "lfd/nn.hpp"
#include "lfd/planner.hpp"
#include "lfd/refiner.hpp"
#include "lfd/scene_encoder.hpp"
#include "lfd/tokens.hpp"
#include "lfd/world.hpp"

namespace lfd {

enum class Variant { kBase, kVis, kOne, kFull };

Variant variant_from_name(const std::string& name);
std::string variant_name(Variant v);

struct ModelConfig {
    int dim = 128;
    int layers = 4;
    int heads = 4;
    int n_img = 16;
    int frames = 6;
    int commands = 6;
    int c_v = 32;
    int c_z = 8;
    int c_r = 64;
    int m_s = 8;
    int m_h = 4;
    int base_vocab = 16;
    int max_seq = 192;
    int conv1 = 12;
    int conv2 = 24;
    int teacher_c1 = 8;
    std::uint64_t teacher_seed = 7;
    Variant variant = Variant::kFull;
    bool detach_refiner_frames = false;
    WorldParams world;

    SceneEncoderConfig scene_cfg() const;
    BackboneConfig backbone_cfg(int vocab_size) const;
    PlannerConfig planner_cfg() const;
    RefinerConfig refiner_cfg() const;
    TeacherConfig teacher_cfg() const;
};

// Per-episode tensors in the layout the forward pass consumes.
struct EpisodeData {
    Mat bev_cur;   // (H*W) x c_cur
    Mat bev_hist;  // (H*W) x c_hist
    int command = 0;
    Mat gt_traj;   // F x 2
    std::vector<Mat> teacher_targets;  // F frames of N x c_v
    LocalMap map_local;
    Mat agent_futures;  // (num_agents*F) x 2
    int num_agents = 0;
};

struct Model {
    ModelConfig cfg;
    SpecialVocab vocab;
    OutputTemplate tmpl;       // F-frame placeholder template
    OutputTemplate base_tmpl;  // planning token only (kBase decoding)
    TeacherParams teacher;
    ParamStore params;

    static Model init(const ModelConfig& cfg, std::uint64_t param_seed);

    const OutputTemplate& active_template() const {
        return cfg.variant == Variant::kBase ? base_tmpl : tmpl;
    }

    struct Forward {
        Var hidden, logits;
        int ctx_len = 0;
        Var h_p;
        std::vector<Var> h_frames;
        std::vector<Var> v_pred;
        Var mu, log_std, z;
        Var s_ego;
        Var tau_c;  // F x 2K
        bool has_final = false;
        Var base, offset, tau_f;  // F x 2K when has_final
        std::vector<Mat> attention;
    };
    // training=true feeds gt conditioning into the distribution generator;
    // z_rng=nullptr decodes from the mode (z = mu).
    Forward forward(Tape& tape, TapeParams& p, const EpisodeData& ep, bool training,
                    Rng* z_rng);
};

EpisodeData prepare_episode(const Episode& ep, const ModelConfig& cfg,
                            const TeacherParams& teacher);

// Scene+command context rows as a plain matrix (for the inference engine).
Mat build_context(Model& model, const EpisodeData& ep);

// Command-selected (x, y) waypoints from an F x 2K mode matrix.
Mat select_mode(const Mat& modes, int command);

struct TrajPrediction {
    Mat tau_c;  // F x 2, command-selected
    Mat tau_f;  // F x 2 when has_final
    bool has_final = false;
};
TrajPrediction predict_trajectories(Model& model, const EpisodeData& ep);

// Closed-loop wrapper: renders arrive from the simulator, the model plans.
Policy make_model_policy(Model& model);

}  // namespace lfd
