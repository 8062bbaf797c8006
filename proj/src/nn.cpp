#include "lfd/nn.hpp"

#include <cmath>

namespace lfd {

void init_normal(Mat& m, Rng& rng, double stddev) {
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) m(i, j) = stddev * rng.normal();
}

void init_xavier(Mat& m, Rng& rng) {
    const double s = std::sqrt(2.0 / static_cast<double>(m.rows() + m.cols()));
    init_normal(m, rng, s);
}

void create_linear(ParamStore& s, const std::string& prefix, int in, int out, Rng& rng,
                   bool zero_init) {
    Mat& w = s.create(prefix + ".w", in, out);
    s.create(prefix + ".b", 1, out);
    if (!zero_init) init_xavier(w, rng);
}

void create_layernorm(ParamStore& s, const std::string& prefix, int width) {
    s.create(prefix + ".g", 1, width).setOnes();
    s.create(prefix + ".b", 1, width);
}

void AdamState::step(ParamStore& params, const ParamStore& grads, const AdamConfig& cfg) {
    ++t;
    double scale = 1.0;
    if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (const std::string& name : params.names()) sq += grads.at(name).squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (const std::string& name : params.names()) {
        const Mat g = grads.at(name) * scale;
        Mat& mm = m.at(name);
        Mat& vv = v.at(name);
        mm = cfg.beta1 * mm + (1.0 - cfg.beta1) * g;
        vv = cfg.beta2 * vv + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        Mat mhat = mm / bc1;
        Mat vhat = vv / bc2;
        params.at(name) -= cfg.lr * (mhat.array() / (vhat.array().sqrt() + cfg.eps)).matrix();
    }
}

}  // namespace lfd
