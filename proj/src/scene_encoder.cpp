#include "lfd/scene_encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace lfd {

namespace {

ConvSpec stem_conv1(const SceneEncoderConfig& cfg, int in_c) {
    ConvSpec s;
    s.in_h = cfg.bev_h;
    s.in_w = cfg.bev_w;
    s.in_c = in_c;
    s.kh = s.kw = 5;
    s.out_c = cfg.conv1;
    s.stride = 2;
    s.pad = 2;
    return s;
}

ConvSpec stem_conv2(const SceneEncoderConfig& cfg, const ConvSpec& c1) {
    ConvSpec s;
    s.in_h = c1.out_h();
    s.in_w = c1.out_w();
    s.in_c = cfg.conv1;
    s.kh = s.kw = 4;
    s.out_c = cfg.conv2;
    s.stride = 4;
    s.pad = 0;
    return s;
}

void create_stem(ParamStore& store, const SceneEncoderConfig& cfg, const std::string& prefix,
                 int in_c, int queries, Rng& rng) {
    const ConvSpec c1 = stem_conv1(cfg, in_c);
    const ConvSpec c2 = stem_conv2(cfg, c1);
    create_linear(store, prefix + ".conv1", c1.kh * c1.kw * c1.in_c, c1.out_c, rng);
    create_linear(store, prefix + ".conv2", c2.kh * c2.kw * c2.in_c, c2.out_c, rng);
    create_linear(store, prefix + ".tok", cfg.conv2, cfg.dim, rng);
    init_normal(store.create(prefix + ".tok_pos", c2.out_h() * c2.out_w(), cfg.dim), rng, 0.02);
    init_normal(store.create(prefix + ".queries", queries, cfg.dim), rng, 0.02);
    create_linear(store, prefix + ".att_k", cfg.dim, cfg.dim, rng);
    create_linear(store, prefix + ".att_v", cfg.dim, cfg.dim, rng);
    create_linear(store, prefix + ".att_o", cfg.dim, cfg.dim, rng);
}

// conv stem -> grid tokens -> learned-query attention pooling
Var pool_stem(Tape& tape, TapeParams& p, const SceneEncoderConfig& cfg, const std::string& prefix,
              const Mat& raster, int in_c) {
    if (raster.rows() != cfg.bev_h * cfg.bev_w || raster.cols() != in_c) {
        throw std::invalid_argument("encode_scene: raster shape mismatch for " + prefix);
    }
    const ConvSpec c1 = stem_conv1(cfg, in_c);
    const ConvSpec c2 = stem_conv2(cfg, c1);
    Var x = make_const(tape, raster);
    Var h1 = tanh_v(conv2d(x, p[prefix + ".conv1.w"], p[prefix + ".conv1.b"], c1));
    Var h2 = tanh_v(conv2d(h1, p[prefix + ".conv2.w"], p[prefix + ".conv2.b"], c2));
    Var tokens = add(linear(p, h2, prefix + ".tok"), p[prefix + ".tok_pos"]);
    Var q = p[prefix + ".queries"];
    Var k = linear(p, tokens, prefix + ".att_k");
    Var v = linear(p, tokens, prefix + ".att_v");
    Var scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(cfg.dim)));
    Var probs = softmax_rows(scores);
    return linear(p, matmul(probs, v), prefix + ".att_o");
}

}  // namespace

void scene_encoder_init(ParamStore& store, const SceneEncoderConfig& cfg, Rng& rng) {
    create_stem(store, cfg, "enc.cur", cfg.c_cur, cfg.m_s, rng);
    create_stem(store, cfg, "enc.hist", cfg.c_hist, cfg.m_h, rng);
    init_normal(store.create("enc.cmd.table", cfg.commands, cfg.dim), rng, 0.25);
}

SceneTokens encode_scene(Tape& tape, TapeParams& p, const SceneEncoderConfig& cfg,
                         const Mat& bev_cur, const Mat& bev_hist) {
    SceneTokens out;
    out.x_s = pool_stem(tape, p, cfg, "enc.cur", bev_cur, cfg.c_cur);
    out.x_h = pool_stem(tape, p, cfg, "enc.hist", bev_hist, cfg.c_hist);
    return out;
}

Var embed_command(Tape& tape, TapeParams& p, const SceneEncoderConfig& cfg, int command) {
    if (command < 0 || command >= cfg.commands) {
        throw std::invalid_argument("embed_command: command out of range: " +
                                    std::to_string(command));
    }
    (void)tape;
    return gather_rows(p["enc.cmd.table"], {command});
}

}  // namespace lfd
