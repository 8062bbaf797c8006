#include "lfd/latent_vision.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace lfd {

namespace {

// naive conv over (h*w) x c inputs, same layout as the tape op
Mat conv_plain(const Mat& x, const Mat& w, const Mat& b, int in_h, int in_w, int in_c, int kh,
               int kw, int out_c, int stride, int pad) {
    const int oh = (in_h + 2 * pad - kh) / stride + 1;
    const int ow = (in_w + 2 * pad - kw) / stride + 1;
    Mat out(oh * ow, out_c);
    out.rowwise() = b.row(0);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const int orow = oy * ow + ox;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= in_h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride + kx - pad;
                    if (ix < 0 || ix >= in_w) continue;
                    out.row(orow) +=
                        x.row(iy * in_w + ix) * w.middleRows((ky * kw + kx) * in_c, in_c);
                }
            }
        }
    }
    return out;
}

void token_tiling(int n_tokens, int& tile_rows, int& tile_cols) {
    // partition the 4x4 grid into n_tokens tiles
    switch (n_tokens) {
        case 16: tile_rows = 4; tile_cols = 4; return;
        case 8: tile_rows = 4; tile_cols = 2; return;
        case 4: tile_rows = 2; tile_cols = 2; return;
        case 2: tile_rows = 2; tile_cols = 1; return;
        case 1: tile_rows = 1; tile_cols = 1; return;
        default:
            throw std::invalid_argument("teacher: n_tokens must be 1, 2, 4, 8 or 16");
    }
}

}  // namespace

TeacherParams make_teacher(const TeacherConfig& cfg) {
    int tr, tc;
    token_tiling(cfg.n_tokens, tr, tc);
    TeacherParams t;
    t.cfg = cfg;
    Rng rng(Rng::mix(cfg.seed, 0x7eac4e8));
    t.conv1_w = Mat(5 * 5 * 1, cfg.c1);
    t.conv1_b = Mat::Zero(1, cfg.c1);
    t.conv2_w = Mat(4 * 4 * cfg.c1, cfg.c_v);
    t.conv2_b = Mat::Zero(1, cfg.c_v);
    init_xavier(t.conv1_w, rng);
    init_normal(t.conv1_b, rng, 0.1);
    init_xavier(t.conv2_w, rng);
    init_normal(t.conv2_b, rng, 0.1);
    return t;
}

std::uint64_t teacher_hash(const TeacherParams& t) {
    std::uint64_t h = 0x9e3779b97f4a7c15ull ^ (static_cast<std::uint64_t>(t.cfg.c_v) << 32) ^
                      (static_cast<std::uint64_t>(t.cfg.n_tokens) << 16) ^
                      static_cast<std::uint64_t>(t.cfg.c1);
    auto mix_mat = [&h](const Mat& m) {
        for (int i = 0; i < m.size(); ++i) {
            std::uint64_t bits;
            const double v = m.data()[i];
            static_assert(sizeof(bits) == sizeof(v));
            std::memcpy(&bits, &v, sizeof(bits));
            h ^= bits + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        }
    };
    mix_mat(t.conv1_w);
    mix_mat(t.conv1_b);
    mix_mat(t.conv2_w);
    mix_mat(t.conv2_b);
    return h;
}

Mat teacher_encode(const std::vector<double>& front, const TeacherParams& t) {
    const TeacherConfig& cfg = t.cfg;
    if (static_cast<int>(front.size()) != cfg.front_h * cfg.front_w) {
        throw std::invalid_argument("teacher_encode: raster size mismatch");
    }
    Mat x(cfg.front_h * cfg.front_w, 1);
    for (int i = 0; i < x.rows(); ++i) x(i, 0) = front[static_cast<std::size_t>(i)];

    Mat h1 = conv_plain(x, t.conv1_w, t.conv1_b, cfg.front_h, cfg.front_w, 1, 5, 5, cfg.c1, 2, 2);
    h1 = h1.array().tanh().matrix();
    const int h1_side = cfg.front_h / 2;
    Mat h2 = conv_plain(h1, t.conv2_w, t.conv2_b, h1_side, h1_side, cfg.c1, 4, 4, cfg.c_v, 4, 0);
    h2 = h2.array().tanh().matrix();
    const int grid = h1_side / 4;  // 4 for 32x32 rasters

    int tr, tc;
    token_tiling(cfg.n_tokens, tr, tc);
    const int block_r = grid / tr, block_c = grid / tc;
    Mat tokens = Mat::Zero(cfg.n_tokens, cfg.c_v);
    for (int ty = 0; ty < tr; ++ty) {
        for (int tx = 0; tx < tc; ++tx) {
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(cfg.c_v);
            for (int by = 0; by < block_r; ++by) {
                for (int bx = 0; bx < block_c; ++bx) {
                    acc += h2.row((ty * block_r + by) * grid + tx * block_c + bx);
                }
            }
            tokens.row(ty * tc + tx) = acc / static_cast<double>(block_r * block_c);
        }
    }
    // per-token layer normalization
    for (int i = 0; i < tokens.rows(); ++i) {
        const double mu = tokens.row(i).mean();
        const double var = (tokens.row(i).array() - mu).square().mean();
        tokens.row(i) = ((tokens.row(i).array() - mu) / std::sqrt(var + 1e-12)).matrix();
    }
    return tokens;
}

void vision_decoder_init(ParamStore& store, int dim, int c_v, Rng& rng) {
    create_linear(store, "vis.proj", dim, c_v, rng);
}

Var decode_latent(TapeParams& p, Var h_frame) {
    return add_rowvec(matmul(h_frame, p["vis.proj.w"]), p["vis.proj.b"]);
}

VisionLossVars vision_loss(Tape& tape, const std::vector<Var>& v_pred,
                           const std::vector<Mat>& v_gt, double w_c, double w_r) {
    if (v_pred.size() != v_gt.size() || v_pred.empty()) {
        throw std::invalid_argument("vision_loss: frame count mismatch");
    }
    const int frames = static_cast<int>(v_pred.size());
    const int rows = v_pred.front().rows();
    const int cols = v_pred.front().cols();

    VisionLossVars out;
    Var cos_sum, reg_sum;
    for (int f = 0; f < frames; ++f) {
        if (v_pred[(std::size_t)f].rows() != rows || v_gt[(std::size_t)f].rows() != rows ||
            v_gt[(std::size_t)f].cols() != cols) {
            throw std::invalid_argument("vision_loss: shape mismatch");
        }
        Var c = cosine_distance_sum(v_pred[(std::size_t)f], v_gt[(std::size_t)f], 1e-8);
        Var diff = sub(v_pred[(std::size_t)f], make_const(tape, v_gt[(std::size_t)f]));
        Var r = sum_all(abs_v(diff));
        out.frame_cosine.push_back(c.v()(0, 0) / rows);
        out.frame_reg.push_back(r.v()(0, 0) / (rows * cols));
        cos_sum = f == 0 ? c : add(cos_sum, c);
        reg_sum = f == 0 ? r : add(reg_sum, r);
    }
    Var cos_mean = scale(cos_sum, 1.0 / static_cast<double>(frames * rows));
    Var reg_mean = scale(reg_sum, 1.0 / static_cast<double>(frames * rows * cols));
    out.cosine = cos_mean.v()(0, 0);
    out.reg = reg_mean.v()(0, 0);
    out.total = add(scale(cos_mean, w_c), scale(reg_mean, w_r));
    return out;
}

}  // namespace lfd
