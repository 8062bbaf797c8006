#include "lfd/model.hpp"

#include <stdexcept>

namespace lfd {

Variant variant_from_name(const std::string& name) {
    if (name == "m_base") return Variant::kBase;
    if (name == "m_vis") return Variant::kVis;
    if (name == "m_one") return Variant::kOne;
    if (name == "full") return Variant::kFull;
    throw std::invalid_argument("unknown variant: " + name);
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::kBase: return "m_base";
        case Variant::kVis: return "m_vis";
        case Variant::kOne: return "m_one";
        case Variant::kFull: return "full";
    }
    throw std::invalid_argument("unknown variant");
}

SceneEncoderConfig ModelConfig::scene_cfg() const {
    SceneEncoderConfig s;
    s.bev_h = world.bev_h;
    s.bev_w = world.bev_w;
    s.c_cur = world.bev_channels;
    s.c_hist = world.bev_channels * world.history_steps;
    s.conv1 = conv1;
    s.conv2 = conv2;
    s.m_s = m_s;
    s.m_h = m_h;
    s.dim = dim;
    s.commands = commands;
    return s;
}

BackboneConfig ModelConfig::backbone_cfg(int vocab_size) const {
    BackboneConfig b;
    b.dim = dim;
    b.layers = layers;
    b.heads = heads;
    b.max_seq = max_seq;
    b.vocab = vocab_size;
    return b;
}

PlannerConfig ModelConfig::planner_cfg() const {
    PlannerConfig p;
    p.dim = dim;
    p.c_z = c_z;
    p.frames = frames;
    p.commands = commands;
    p.dis_h1 = dim;
    p.dis_h2 = std::max(4, dim / 2);
    return p;
}

RefinerConfig ModelConfig::refiner_cfg() const {
    RefinerConfig r;
    r.dim = dim;
    r.c_r = c_r;
    r.frames = frames;
    r.commands = commands;
    return r;
}

TeacherConfig ModelConfig::teacher_cfg() const {
    TeacherConfig t;
    t.front_h = world.front_h;
    t.front_w = world.front_w;
    t.c1 = teacher_c1;
    t.c_v = c_v;
    t.n_tokens = n_img;
    t.seed = teacher_seed;
    return t;
}

Model Model::init(const ModelConfig& cfg, std::uint64_t param_seed) {
    if (cfg.frames != cfg.world.frames) {
        throw std::invalid_argument("model frames must match world frames");
    }
    Model m;
    m.cfg = cfg;
    m.vocab = make_special_vocab(cfg.base_vocab, cfg.n_img);
    m.tmpl = build_output_template(cfg.frames, cfg.n_img, m.vocab);
    m.base_tmpl.token_ids = {m.vocab.waypoint_ego_id};
    m.base_tmpl.planning_pos = 0;
    m.teacher = make_teacher(cfg.teacher_cfg());

    Rng rng(Rng::mix(param_seed, 0xb00755ull));
    scene_encoder_init(m.params, cfg.scene_cfg(), rng);
    backbone_init(m.params, cfg.backbone_cfg(m.vocab.total_vocab_size()), rng);
    vision_decoder_init(m.params, cfg.dim, cfg.c_v, rng);
    planner_init(m.params, cfg.planner_cfg(), rng);
    refiner_init(m.params, cfg.refiner_cfg(), rng);
    // one-stage wiring: planning embedding attends the future frames before
    // the generative planner
    create_linear(m.params, "mone.q_proj", cfg.dim, cfg.c_r, rng);
    create_layernorm(m.params, "mone.q_proj.ln", cfg.c_r);
    create_linear(m.params, "mone.back", cfg.c_r, cfg.dim, rng);
    return m;
}

Model::Forward Model::forward(Tape& tape, TapeParams& p, const EpisodeData& ep, bool training,
                              Rng* z_rng) {
    Forward out;
    const SceneEncoderConfig scfg = cfg.scene_cfg();
    const SceneTokens scene = encode_scene(tape, p, scfg, ep.bev_cur, ep.bev_hist);
    const Var x_q = embed_command(tape, p, scfg, ep.command);
    Var context = concat_rows({x_q, scene.x_s, scene.x_h});

    const OutputTemplate& t = active_template();
    const PrefillVars pre =
        backbone_prefill(tape, p, cfg.backbone_cfg(vocab.total_vocab_size()), context, t.token_ids);
    out.hidden = pre.hidden;
    out.logits = pre.logits;
    out.ctx_len = pre.context_len;
    out.h_p = extract_planning_embedding(pre.hidden, t, pre.context_len);

    if (cfg.variant != Variant::kBase) {
        out.h_frames = extract_frame_embeddings(pre.hidden, t, pre.context_len);
        out.v_pred.reserve(out.h_frames.size());
        for (const Var& f : out.h_frames) out.v_pred.push_back(decode_latent(p, f));
    }

    Var h_eff = out.h_p;
    const RefinerConfig rcfg = cfg.refiner_cfg();
    if (cfg.variant == Variant::kOne) {
        const KvVars kv = project_kv(tape, p, out.h_frames);
        Var q1 = gelu(layernorm_affine(p, linear(p, out.h_p, "mone.q_proj"), "mone.q_proj.ln"));
        RefineVars r = refine(tape, p, rcfg, q1, kv.k_fut, kv.v_fut);
        out.attention = r.attention;
        h_eff = add(out.h_p, linear(p, r.s_star, "mone.back"));
    }

    const PlannerConfig pcfg = cfg.planner_cfg();
    const GaussianVars dis =
        planner_distribution(tape, p, pcfg, h_eff, training ? &ep.gt_traj : nullptr);
    out.mu = dis.mu;
    out.log_std = dis.log_std;
    out.z = planner_sample(tape, dis.mu, dis.log_std, z_rng);
    out.s_ego = planner_decode_states(tape, p, pcfg, out.z, h_eff);
    out.tau_c = planner_coarse(tape, p, pcfg, out.s_ego);

    if (cfg.variant == Variant::kFull) {
        std::vector<Var> frames = out.h_frames;
        if (cfg.detach_refiner_frames) {
            for (Var& f : frames) f = make_const(tape, f.v());
        }
        const KvVars kv = project_kv(tape, p, frames);
        Var q_ego = project_query(p, out.s_ego);
        RefineVars r = refine(tape, p, rcfg, q_ego, kv.k_fut, kv.v_fut);
        out.attention = r.attention;
        const FinalTrajVars fin = decode_final(tape, p, rcfg, r.s_star);
        out.base = fin.base;
        out.offset = fin.offset;
        out.tau_f = fin.tau_f;
        out.has_final = true;
    }
    return out;
}

EpisodeData prepare_episode(const Episode& ep, const ModelConfig& cfg,
                            const TeacherParams& teacher) {
    const WorldParams& wp = cfg.world;
    const int px = wp.bev_h * wp.bev_w;
    const int frames = wp.history_steps + 1;
    const int c = wp.bev_channels;
    EpisodeData d;
    d.bev_cur = Mat(px, c);
    d.bev_hist = Mat(px, c * wp.history_steps);
    for (int i = 0; i < px; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * frames * c;
        for (int ch = 0; ch < c; ++ch) {
            d.bev_cur(i, ch) = static_cast<double>(ep.obs_bev[base + static_cast<std::size_t>(ch)]);
        }
        for (int f = 1; f < frames; ++f) {
            for (int ch = 0; ch < c; ++ch) {
                d.bev_hist(i, (f - 1) * c + ch) =
                    static_cast<double>(ep.obs_bev[base + static_cast<std::size_t>(f * c + ch)]);
            }
        }
    }
    d.command = ep.command;
    d.gt_traj = ep.gt_traj;
    d.map_local.lanes = ep.map_local;
    d.agent_futures = ep.agent_futures;
    d.num_agents = ep.num_agents;

    const int fpx = wp.front_h * wp.front_w;
    if (static_cast<int>(ep.future_front.size()) == wp.frames * fpx) {
        d.teacher_targets.reserve(static_cast<std::size_t>(wp.frames));
        for (int j = 0; j < wp.frames; ++j) {
            std::vector<double> raster(static_cast<std::size_t>(fpx));
            for (int i = 0; i < fpx; ++i) {
                raster[static_cast<std::size_t>(i)] =
                    static_cast<double>(ep.future_front[static_cast<std::size_t>(j * fpx + i)]);
            }
            d.teacher_targets.push_back(teacher_encode(raster, teacher));
        }
    }
    return d;
}

Mat build_context(Model& model, const EpisodeData& ep) {
    Tape tape;
    TapeParams p(tape, model.params);
    const SceneEncoderConfig scfg = model.cfg.scene_cfg();
    const SceneTokens scene = encode_scene(tape, p, scfg, ep.bev_cur, ep.bev_hist);
    const Var x_q = embed_command(tape, p, scfg, ep.command);
    return concat_rows({x_q, scene.x_s, scene.x_h}).v();
}

Mat select_mode(const Mat& modes, int command) {
    Mat out(modes.rows(), 2);
    out.col(0) = modes.col(2 * command);
    out.col(1) = modes.col(2 * command + 1);
    return out;
}

TrajPrediction predict_trajectories(Model& model, const EpisodeData& ep) {
    Tape tape;
    TapeParams p(tape, model.params);
    Model::Forward f = model.forward(tape, p, ep, /*training=*/false, /*z_rng=*/nullptr);
    TrajPrediction out;
    out.tau_c = select_mode(f.tau_c.v(), ep.command);
    if (f.has_final) {
        out.tau_f = select_mode(f.tau_f.v(), ep.command);
        out.has_final = true;
    }
    return out;
}

Policy make_model_policy(Model& model) {
    return [&model](const std::vector<double>& obs, int command, const WorldState&) {
        const WorldParams& wp = model.cfg.world;
        Episode ep;
        ep.obs_bev.assign(obs.begin(), obs.end());  // same quantization as the dataset
        ep.gt_traj = Mat::Zero(wp.frames, 2);
        ep.agent_futures = Mat(0, 2);
        ep.command = command;
        EpisodeData d = prepare_episode(ep, model.cfg, model.teacher);
        const TrajPrediction pred = predict_trajectories(model, d);
        return pred.has_final ? pred.tau_f : pred.tau_c;
    };
}

}  // namespace lfd
