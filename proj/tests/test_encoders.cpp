#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lfd/latent_vision.hpp"
#include "lfd/scene_encoder.hpp"

using namespace lfd;

namespace {

Mat random_mat(int r, int c, Rng& rng, double scl = 1.0) {
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = scl * rng.normal();
    return m;
}

SceneEncoderConfig small_cfg() {
    SceneEncoderConfig cfg;
    cfg.bev_h = cfg.bev_w = 16;
    cfg.c_cur = 2;
    cfg.c_hist = 4;
    cfg.conv1 = 4;
    cfg.conv2 = 6;
    cfg.m_s = 3;
    cfg.m_h = 2;
    cfg.dim = 8;
    cfg.commands = 4;
    return cfg;
}

}  // namespace

TEST_CASE("scene encoder: shapes, determinism, finiteness") {
    SceneEncoderConfig cfg = small_cfg();
    ParamStore store;
    Rng rng(3);
    scene_encoder_init(store, cfg, rng);

    Rng data_rng(5);
    Mat cur = random_mat(cfg.bev_h * cfg.bev_w, cfg.c_cur, data_rng);
    Mat hist = random_mat(cfg.bev_h * cfg.bev_w, cfg.c_hist, data_rng);

    Tape t1;
    TapeParams p1(t1, store);
    SceneTokens s1 = encode_scene(t1, p1, cfg, cur, hist);
    CHECK(s1.x_s.rows() == cfg.m_s);
    CHECK(s1.x_s.cols() == cfg.dim);
    CHECK(s1.x_h.rows() == cfg.m_h);
    CHECK(s1.x_s.v().allFinite());
    CHECK(s1.x_h.v().allFinite());

    Tape t2;
    TapeParams p2(t2, store);
    SceneTokens s2 = encode_scene(t2, p2, cfg, cur, hist);
    CHECK((s1.x_s.v() - s2.x_s.v()).norm() == 0.0);
    CHECK((s1.x_h.v() - s2.x_h.v()).norm() == 0.0);

    Mat cur2 = cur;
    cur2(40, 0) += 0.5;
    Tape t3;
    TapeParams p3(t3, store);
    SceneTokens s3 = encode_scene(t3, p3, cfg, cur2, hist);
    CHECK((s1.x_s.v() - s3.x_s.v()).norm() > 0.0);

    Tape t4;
    TapeParams p4(t4, store);
    CHECK_THROWS_AS(encode_scene(t4, p4, cfg, Mat::Zero(5, cfg.c_cur), hist),
                    std::invalid_argument);
}

TEST_CASE("command embeddings: distinct rows, range checks, determinism") {
    SceneEncoderConfig cfg = small_cfg();
    ParamStore store;
    Rng rng(9);
    scene_encoder_init(store, cfg, rng);
    Tape t;
    TapeParams p(t, store);
    Var c0 = embed_command(t, p, cfg, 0);
    Var c1 = embed_command(t, p, cfg, 1);
    CHECK((c0.v() - c1.v()).norm() > 1e-6);
    Var c3a = embed_command(t, p, cfg, 3);
    Var c3b = embed_command(t, p, cfg, 3);
    CHECK((c3a.v() - c3b.v()).norm() == 0.0);
    CHECK_THROWS_AS(embed_command(t, p, cfg, cfg.commands), std::invalid_argument);
    CHECK_THROWS_AS(embed_command(t, p, cfg, -1), std::invalid_argument);
}

TEST_CASE("scene encoder gradient matches finite differences on a scalar probe") {
    SceneEncoderConfig cfg = small_cfg();
    ParamStore store;
    Rng rng(11);
    scene_encoder_init(store, cfg, rng);
    Rng data_rng(13);
    Mat cur = random_mat(cfg.bev_h * cfg.bev_w, cfg.c_cur, data_rng);
    Mat hist = random_mat(cfg.bev_h * cfg.bev_w, cfg.c_hist, data_rng);

    // analytic gradients for a few parameters
    Tape t;
    TapeParams p(t, store);
    SceneTokens s = encode_scene(t, p, cfg, cur, hist);
    Var loss = add(sum_all(square(s.x_s)), sum_all(square(s.x_h)));
    t.backward(loss.id);
    ParamStore grads = store.zeros_like();
    p.accumulate_grads(grads);

    auto value = [&]() {
        Tape tt;
        TapeParams pp(tt, store);
        SceneTokens ss = encode_scene(tt, pp, cfg, cur, hist);
        return add(sum_all(square(ss.x_s)), sum_all(square(ss.x_h))).v()(0, 0);
    };
    const double h = 1e-6;
    for (const std::string& name : {std::string("enc.cur.conv1.w"), std::string("enc.cur.queries"),
                                    std::string("enc.hist.att_o.w"), std::string("enc.cur.tok_pos")}) {
        Mat& m = store.at(name);
        double worst = 0.0;
        for (int probe_i = 0; probe_i < 5; ++probe_i) {
            Rng pick(100 + probe_i);
            const int i = static_cast<int>(pick.uniform_int(static_cast<std::uint64_t>(m.rows())));
            const int j = static_cast<int>(pick.uniform_int(static_cast<std::uint64_t>(m.cols())));
            const double keep = m(i, j);
            m(i, j) = keep + h;
            const double fp = value();
            m(i, j) = keep - h;
            const double fm = value();
            m(i, j) = keep;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = grads.at(name)(i, j);
            worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}));
        }
        INFO(name, " worst rel err ", worst);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("teacher: row normalization, determinism, sensitivity, frozen hash") {
    TeacherConfig cfg;
    cfg.seed = 21;
    TeacherParams t = make_teacher(cfg);

    std::vector<double> raster(32 * 32, 0.0);
    raster[5 * 32 + 7] = 1.0;
    raster[20 * 32 + 13] = 0.3;
    Mat v1 = teacher_encode(raster, t);
    REQUIRE(v1.rows() == 16);
    REQUIRE(v1.cols() == 32);
    for (int i = 0; i < v1.rows(); ++i) {
        CHECK(std::abs(v1.row(i).mean()) < 1e-10);
        CHECK(v1.row(i).array().square().mean() == doctest::Approx(1.0).epsilon(1e-4));
    }
    Mat v2 = teacher_encode(raster, t);
    CHECK((v1 - v2).norm() == 0.0);

    std::vector<double> raster2 = raster;
    raster2[9 * 32 + 30] = 1.0;  // one extra occupied cell
    Mat v3 = teacher_encode(raster2, t);
    CHECK((v1 - v3).norm() > 1e-9);

    TeacherParams same = make_teacher(cfg);
    CHECK(teacher_hash(same) == teacher_hash(t));
    TeacherConfig other = cfg;
    other.seed = 22;
    CHECK(teacher_hash(make_teacher(other)) != teacher_hash(t));

    CHECK_THROWS_AS(teacher_encode(std::vector<double>(100, 0.0), t), std::invalid_argument);
}

TEST_CASE("teacher token tiling supports reduced token counts") {
    for (int n : {1, 2, 4, 8, 16}) {
        TeacherConfig cfg;
        cfg.n_tokens = n;
        cfg.c_v = 6;
        TeacherParams t = make_teacher(cfg);
        std::vector<double> raster(32 * 32, 0.0);
        raster[40] = 1.0;
        Mat v = teacher_encode(raster, t);
        CHECK(v.rows() == n);
        CHECK(v.cols() == 6);
    }
    TeacherConfig bad;
    bad.n_tokens = 5;
    CHECK_THROWS_AS(make_teacher(bad), std::invalid_argument);
}

TEST_CASE("decode_latent: hand example and linearity") {
    ParamStore store;
    Rng rng(31);
    vision_decoder_init(store, 2, 1, rng);
    store.at("vis.proj.w") << 1.0, -1.0;
    store.at("vis.proj.b") << 0.5;

    Tape t;
    TapeParams p(t, store);
    Mat h(1, 2);
    h << 2.0, 3.0;
    Var out = decode_latent(p, make_const(t, h));
    CHECK(out.v()(0, 0) == doctest::Approx(-0.5));

    // zero weights -> zero output
    store.at("vis.proj.w").setZero();
    store.at("vis.proj.b").setZero();
    Tape t2;
    TapeParams p2(t2, store);
    CHECK(decode_latent(p2, make_const(t2, h)).v()(0, 0) == 0.0);

    // linearity with b = 0
    ParamStore s3;
    Rng rng3(37);
    vision_decoder_init(s3, 4, 3, rng3);
    s3.at("vis.proj.b").setZero();
    Rng dr(41);
    Mat h1 = random_mat(5, 4, dr), h2 = random_mat(5, 4, dr);
    const double a = 0.7, b = -1.3;
    Tape t3;
    TapeParams p3(t3, s3);
    Mat lhs = decode_latent(p3, make_const(t3, Mat(a * h1 + b * h2))).v();
    Mat rhs = a * decode_latent(p3, make_const(t3, h1)).v() +
              b * decode_latent(p3, make_const(t3, h2)).v();
    CHECK((lhs - rhs).norm() < 1e-9);
}

TEST_CASE("vision loss: exact cases and bounds") {
    Rng rng(51);
    const int frames = 3, n = 4, cv = 5;
    std::vector<Mat> gt;
    for (int f = 0; f < frames; ++f) {
        Mat g = random_mat(n, cv, rng);
        // row-normalize like teacher targets
        for (int i = 0; i < n; ++i) {
            const double mu = g.row(i).mean();
            const double sd = std::sqrt((g.row(i).array() - mu).square().mean());
            g.row(i) = ((g.row(i).array() - mu) / sd).matrix();
        }
        gt.push_back(g);
    }

    SUBCASE("pred == gt gives zero loss") {
        Tape t;
        std::vector<Var> pred;
        for (const Mat& g : gt) pred.push_back(make_leaf(t, g));
        VisionLossVars v = vision_loss(t, pred, gt, 1.0, 1.0);
        CHECK(v.total.v()(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("pred == -gt gives cosine 2 and reg mean|2 gt|") {
        Tape t;
        std::vector<Var> pred;
        std::vector<Mat> neg;
        double reg_expect = 0.0;
        for (const Mat& g : gt) {
            neg.push_back(Mat(-g));
            reg_expect += (2.0 * g).cwiseAbs().sum();
        }
        reg_expect /= frames * n * cv;
        for (const Mat& m : neg) pred.push_back(make_leaf(t, m));
        const double w_c = 0.8, w_r = 1.7;
        VisionLossVars v = vision_loss(t, pred, gt, w_c, w_r);
        CHECK(v.cosine == doctest::Approx(2.0).epsilon(1e-9));
        CHECK(v.reg == doctest::Approx(reg_expect).epsilon(1e-9));
        CHECK(v.total.v()(0, 0) == doctest::Approx(w_c * 2.0 + w_r * reg_expect).epsilon(1e-9));
    }
    SUBCASE("cosine term stays within [0, 2]") {
        for (int trial = 0; trial < 20; ++trial) {
            Tape t;
            std::vector<Var> pred;
            for (int f = 0; f < frames; ++f) pred.push_back(make_leaf(t, random_mat(n, cv, rng, 2.0)));
            VisionLossVars v = vision_loss(t, pred, gt, 1.0, 0.0);
            CHECK(v.cosine >= 0.0);
            CHECK(v.cosine <= 2.0);
            CHECK(v.reg >= 0.0);
        }
    }
    SUBCASE("zero-norm predicted row uses the eps floor without error") {
        Tape t;
        std::vector<Var> pred;
        std::vector<Mat> zero_first;
        for (int f = 0; f < frames; ++f) {
            Mat m = random_mat(n, cv, rng);
            m.row(0).setZero();
            zero_first.push_back(m);
        }
        for (const Mat& m : zero_first) pred.push_back(make_leaf(t, m));
        VisionLossVars v = vision_loss(t, pred, gt, 1.0, 1.0);
        CHECK(std::isfinite(v.total.v()(0, 0)));
        t.backward(v.total.id);  // gradient must stay finite too
        for (const Var& pv : pred) CHECK(t.grad(pv.id).allFinite());
    }
}

TEST_CASE("vision loss gradient matches finite differences") {
    Rng rng(61);
    const int frames = 2, n = 3, cv = 4;
    std::vector<Mat> gt;
    for (int f = 0; f < frames; ++f) {
        Mat g = random_mat(n, cv, rng);
        for (int i = 0; i < n; ++i) {
            const double mu = g.row(i).mean();
            const double sd = std::sqrt((g.row(i).array() - mu).square().mean());
            g.row(i) = ((g.row(i).array() - mu) / sd).matrix();
        }
        gt.push_back(g);
    }
    Mat p0 = random_mat(n, cv, rng);
    Mat p1 = random_mat(n, cv, rng);

    Tape t;
    Var v0 = make_leaf(t, p0);
    Var v1 = make_leaf(t, p1);
    VisionLossVars loss = vision_loss(t, {v0, v1}, gt, 1.3, 0.7);
    t.backward(loss.total.id);
    Mat analytic = t.grad(v0.id);

    const double h = 1e-6;
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < cv; ++j) {
            Mat pp = p0;
            pp(i, j) += h;
            Tape ta;
            VisionLossVars la = vision_loss(ta, {make_leaf(ta, pp), make_leaf(ta, p1)}, gt, 1.3, 0.7);
            pp(i, j) -= 2 * h;
            Tape tb;
            VisionLossVars lb = vision_loss(tb, {make_leaf(tb, pp), make_leaf(tb, p1)}, gt, 1.3, 0.7);
            const double fd = (la.total.v()(0, 0) - lb.total.v()(0, 0)) / (2 * h);
            worst = std::max(worst,
                             std::abs(fd - analytic(i, j)) /
                                 std::max({std::abs(fd), std::abs(analytic(i, j)), 1e-8}));
        }
    }
    CHECK(worst < 1e-4);
}
