#include "lfd/refiner.hpp"

#include <cmath>

namespace lfd {

void refiner_init(ParamStore& store, const RefinerConfig& cfg, Rng& rng) {
    create_linear(store, "ref.q_proj", 2 * cfg.dim, cfg.c_r, rng);
    create_layernorm(store, "ref.q_proj.ln", cfg.c_r);
    create_linear(store, "ref.k_proj", cfg.dim, cfg.c_r, rng);
    create_layernorm(store, "ref.k_proj.ln", cfg.c_r);
    create_linear(store, "ref.v_proj", cfg.dim, cfg.c_r, rng);
    create_layernorm(store, "ref.v_proj.ln", cfg.c_r);
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string pre = "ref.b" + std::to_string(b);
        create_layernorm(store, pre + ".ln1", cfg.c_r);
        create_linear(store, pre + ".q", cfg.c_r, cfg.c_r, rng);
        create_linear(store, pre + ".k", cfg.c_r, cfg.c_r, rng);
        create_linear(store, pre + ".v", cfg.c_r, cfg.c_r, rng);
        create_linear(store, pre + ".o", cfg.c_r, cfg.c_r, rng);
        create_layernorm(store, pre + ".ln2", cfg.c_r);
        create_linear(store, pre + ".ff1", cfg.c_r, cfg.c_r * cfg.ff_mult, rng);
        create_linear(store, pre + ".ff2", cfg.c_r * cfg.ff_mult, cfg.c_r, rng);
    }
    create_linear(store, "ref.base.fc", cfg.c_r, cfg.c_r, rng);
    create_layernorm(store, "ref.base.ln", cfg.c_r);
    create_linear(store, "ref.base.out", cfg.c_r, 2 * cfg.commands, rng);
    create_linear(store, "ref.off.fc", cfg.c_r, cfg.c_r, rng);
    create_layernorm(store, "ref.off.ln", cfg.c_r);
    create_linear(store, "ref.off.out", cfg.c_r, 2 * cfg.commands, rng, /*zero_init=*/true);
}

Var project_query(TapeParams& p, Var s_ego) {
    return gelu(layernorm_affine(p, linear(p, s_ego, "ref.q_proj"), "ref.q_proj.ln"));
}

KvVars project_kv(Tape& tape, TapeParams& p, const std::vector<Var>& h_frames) {
    std::vector<Var> pooled;
    pooled.reserve(h_frames.size());
    for (const Var& f : h_frames) pooled.push_back(mean_rows(f));
    Var frames = concat_rows(pooled);  // F x dim
    (void)tape;
    KvVars out;
    out.k_fut = gelu(layernorm_affine(p, linear(p, frames, "ref.k_proj"), "ref.k_proj.ln"));
    out.v_fut = gelu(layernorm_affine(p, linear(p, frames, "ref.v_proj"), "ref.v_proj.ln"));
    return out;
}

RefineVars refine(Tape& tape, TapeParams& p, const RefinerConfig& cfg, Var q_ego, Var k_fut,
                  Var v_fut) {
    (void)tape;
    RefineVars out;
    Var x = q_ego;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.c_r));
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string pre = "ref.b" + std::to_string(b);
        Var h = layernorm_affine(p, x, pre + ".ln1");
        Var q = linear(p, h, pre + ".q");
        Var k = linear(p, k_fut, pre + ".k");
        Var v = linear(p, v_fut, pre + ".v");
        Var probs = softmax_rows(scale(matmul_nt(q, k), inv_sqrt));
        out.attention.push_back(probs.v());
        x = add(x, linear(p, matmul(probs, v), pre + ".o"));
        Var h2 = layernorm_affine(p, x, pre + ".ln2");
        Var ff = linear(p, gelu(linear(p, h2, pre + ".ff1")), pre + ".ff2");
        x = add(x, ff);
    }
    out.s_star = x;
    return out;
}

FinalTrajVars decode_final(Tape& tape, TapeParams& p, const RefinerConfig& cfg, Var s_star) {
    (void)tape;
    (void)cfg;
    FinalTrajVars out;
    Var hb = gelu(layernorm_affine(p, linear(p, s_star, "ref.base.fc"), "ref.base.ln"));
    out.base = linear(p, hb, "ref.base.out");
    Var ho = gelu(layernorm_affine(p, linear(p, s_star, "ref.off.fc"), "ref.off.ln"));
    out.offset = linear(p, ho, "ref.off.out");
    out.tau_f = add(out.base, out.offset);
    return out;
}

}  // namespace lfd
