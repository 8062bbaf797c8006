#include "lfd/planner.hpp"

#include <stdexcept>

namespace lfd {

void planner_init(ParamStore& store, const PlannerConfig& cfg, Rng& rng) {
    const int in = cfg.dim + 2 * cfg.frames;
    create_linear(store, "dis.fc1", in, cfg.dis_h1, rng);
    create_linear(store, "dis.fc2", cfg.dis_h1, cfg.dis_h1, rng);
    create_linear(store, "dis.fc3", cfg.dis_h1, cfg.dis_h2, rng);
    create_linear(store, "dis.out", cfg.dis_h2, 2 * cfg.c_z, rng);

    for (int l = 0; l < cfg.gru_layers; ++l) {
        const int in_l = l == 0 ? cfg.c_z : cfg.dim;
        const std::string pre = "gru.l" + std::to_string(l);
        for (const char* gate : {"r", "z", "n"}) {
            create_linear(store, pre + ".i" + gate, in_l, cfg.dim, rng);
            create_linear(store, pre + ".h" + gate, cfg.dim, cfg.dim, rng);
        }
    }
    create_linear(store, "state.fc1", cfg.dim, cfg.dim, rng);
    create_linear(store, "state.fc2", cfg.dim, cfg.dim, rng);
    create_linear(store, "state.fc3", cfg.dim, cfg.dim, rng);

    create_linear(store, "coarse.fc1", 2 * cfg.dim, cfg.dim, rng);
    create_linear(store, "coarse.fc2", cfg.dim, cfg.dim, rng);
    create_linear(store, "coarse.out", cfg.dim, 2 * cfg.commands, rng);
}

GaussianVars planner_distribution(Tape& tape, TapeParams& p, const PlannerConfig& cfg, Var h_p,
                                  const Mat* gt_traj) {
    Mat cond = Mat::Zero(1, 2 * cfg.frames);
    if (gt_traj != nullptr) {
        if (gt_traj->rows() != cfg.frames || gt_traj->cols() != 2) {
            throw std::invalid_argument("planner_distribution: gt shape mismatch");
        }
        for (int j = 0; j < cfg.frames; ++j) {
            cond(0, 2 * j) = (*gt_traj)(j, 0);
            cond(0, 2 * j + 1) = (*gt_traj)(j, 1);
        }
    }
    Var x = concat_cols({h_p, make_const(tape, cond)});
    x = relu(linear(p, x, "dis.fc1"));
    x = relu(linear(p, x, "dis.fc2"));
    x = relu(linear(p, x, "dis.fc3"));
    x = mean_rows(x);  // single row; kept for shape symmetry with the stack
    Var out = linear(p, x, "dis.out");
    GaussianVars g;
    g.mu = slice_cols(out, 0, cfg.c_z);
    g.log_std = slice_cols(out, cfg.c_z, cfg.c_z);
    return g;
}

Var planner_sample(Tape& tape, Var mu, Var log_std, Rng* rng) {
    if (rng == nullptr) return mu;
    Mat eps(1, mu.cols());
    for (int i = 0; i < eps.cols(); ++i) eps(0, i) = rng->normal();
    return add(mu, hadamard(exp_v(log_std), make_const(tape, eps)));
}

Var planner_decode_states(Tape& tape, TapeParams& p, const PlannerConfig& cfg, Var z, Var h_p) {
    // repeated latent as the input sequence, zero initial hidden state
    std::vector<Var> hs;
    std::vector<Var> h(static_cast<std::size_t>(cfg.gru_layers),
                       make_const(tape, Mat::Zero(1, cfg.dim)));
    for (int t = 0; t < cfg.frames; ++t) {
        Var x = z;
        for (int l = 0; l < cfg.gru_layers; ++l) {
            const std::string pre = "gru.l" + std::to_string(l);
            Var prev = h[static_cast<std::size_t>(l)];
            Var r = sigmoid(add(linear(p, x, pre + ".ir"), linear(p, prev, pre + ".hr")));
            Var u = sigmoid(add(linear(p, x, pre + ".iz"), linear(p, prev, pre + ".hz")));
            Var n = tanh_v(add(linear(p, x, pre + ".in"),
                               hadamard(r, linear(p, prev, pre + ".hn"))));
            Var hnew = add(hadamard(one_minus(u), n), hadamard(u, prev));
            h[static_cast<std::size_t>(l)] = hnew;
            x = hnew;
        }
        hs.push_back(x);
    }
    Var seq = concat_rows(hs);  // F x dim
    Var m = relu(linear(p, seq, "state.fc1"));
    m = relu(linear(p, m, "state.fc2"));
    m = linear(p, m, "state.fc3");
    return concat_cols({m, repeat_row(h_p, cfg.frames)});
}

Var planner_coarse(Tape& tape, TapeParams& p, const PlannerConfig& cfg, Var s_ego) {
    (void)tape;
    Var x = relu(linear(p, s_ego, "coarse.fc1"));
    x = relu(linear(p, x, "coarse.fc2"));
    return linear(p, x, "coarse.out");
}

}  // namespace lfd
