#include "lfd/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace lfd {

namespace {

std::string ln(int layer, const char* which) {
    return "bb.l" + std::to_string(layer) + "." + which;
}

}  // namespace

void backbone_init(ParamStore& store, const BackboneConfig& cfg, Rng& rng) {
    if (cfg.dim % cfg.heads != 0) throw std::invalid_argument("backbone: dim % heads != 0");
    if (cfg.vocab <= 0) throw std::invalid_argument("backbone: vocab not set");
    init_normal(store.create("bb.tok", cfg.vocab, cfg.dim), rng, 0.02);
    init_normal(store.create("bb.pos", cfg.max_seq, cfg.dim), rng, 0.02);
    for (int l = 0; l < cfg.layers; ++l) {
        create_layernorm(store, ln(l, "ln1"), cfg.dim);
        create_linear(store, ln(l, "q"), cfg.dim, cfg.dim, rng);
        create_linear(store, ln(l, "k"), cfg.dim, cfg.dim, rng);
        create_linear(store, ln(l, "v"), cfg.dim, cfg.dim, rng);
        create_linear(store, ln(l, "o"), cfg.dim, cfg.dim, rng);
        create_layernorm(store, ln(l, "ln2"), cfg.dim);
        create_linear(store, ln(l, "ff1"), cfg.dim, cfg.dim * cfg.ff_mult, rng);
        create_linear(store, ln(l, "ff2"), cfg.dim * cfg.ff_mult, cfg.dim, rng);
    }
    create_layernorm(store, "bb.lnf", cfg.dim);
    create_linear(store, "bb.unembed", cfg.dim, cfg.vocab, rng);
}

PrefillVars backbone_prefill(Tape& tape, TapeParams& p, const BackboneConfig& cfg, Var context,
                             const std::vector<int>& template_ids) {
    const int ctx = context.rows();
    const int total = ctx + static_cast<int>(template_ids.size());
    if (total > cfg.max_seq) {
        throw std::invalid_argument("backbone: sequence length " + std::to_string(total) +
                                    " exceeds max_seq " + std::to_string(cfg.max_seq));
    }
    Var tok_rows = gather_rows(p["bb.tok"], template_ids);
    Var x = concat_rows({context, tok_rows});
    x = add(x, slice_rows(p["bb.pos"], 0, total));

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
    for (int l = 0; l < cfg.layers; ++l) {
        Var h = layernorm_affine(p, x, ln(l, "ln1"));
        Var q = linear(p, h, ln(l, "q"));
        Var k = linear(p, h, ln(l, "k"));
        Var v = linear(p, h, ln(l, "v"));
        std::vector<Var> heads;
        heads.reserve(static_cast<std::size_t>(cfg.heads));
        for (int hd = 0; hd < cfg.heads; ++hd) {
            const int c0 = hd * cfg.head_dim();
            Var qh = slice_cols(q, c0, cfg.head_dim());
            Var kh = slice_cols(k, c0, cfg.head_dim());
            Var vh = slice_cols(v, c0, cfg.head_dim());
            Var probs = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), /*causal=*/true, 0);
            heads.push_back(matmul(probs, vh));
        }
        Var ctx_out = linear(p, concat_cols(heads), ln(l, "o"));
        x = add(x, ctx_out);
        Var h2 = layernorm_affine(p, x, ln(l, "ln2"));
        Var ff = linear(p, gelu(linear(p, h2, ln(l, "ff1"))), ln(l, "ff2"));
        x = add(x, ff);
    }
    PrefillVars out;
    out.hidden = layernorm_affine(p, x, "bb.lnf");
    out.logits = linear(p, out.hidden, "bb.unembed");
    out.context_len = ctx;
    out.total_len = total;
    return out;
}

std::vector<Var> extract_frame_embeddings(Var hidden, const OutputTemplate& tmpl, int context_len) {
    std::vector<Var> frames;
    frames.reserve(tmpl.frame_spans.size());
    for (const auto& [begin, end] : tmpl.frame_spans) {
        frames.push_back(slice_rows(hidden, context_len + begin, end - begin));
    }
    return frames;
}

Var extract_planning_embedding(Var hidden, const OutputTemplate& tmpl, int context_len) {
    return slice_rows(hidden, context_len + tmpl.planning_pos, 1);
}

// ---- plain engine ------------------------------------------------------------

BackboneInfer::BackboneInfer(const ParamStore& store, const BackboneConfig& cfg) : cfg_(cfg) {
    tok_ = &store.at("bb.tok");
    pos_ = &store.at("bb.pos");
    lnfg_ = &store.at("bb.lnf.g");
    lnfb_ = &store.at("bb.lnf.b");
    uw_ = &store.at("bb.unembed.w");
    ub_ = &store.at("bb.unembed.b");
    for (int l = 0; l < cfg.layers; ++l) {
        LayerW w;
        w.ln1g = &store.at(ln(l, "ln1.g"));
        w.ln1b = &store.at(ln(l, "ln1.b"));
        w.qw = &store.at(ln(l, "q.w"));
        w.qb = &store.at(ln(l, "q.b"));
        w.kw = &store.at(ln(l, "k.w"));
        w.kb = &store.at(ln(l, "k.b"));
        w.vw = &store.at(ln(l, "v.w"));
        w.vb = &store.at(ln(l, "v.b"));
        w.ow = &store.at(ln(l, "o.w"));
        w.ob = &store.at(ln(l, "o.b"));
        w.ln2g = &store.at(ln(l, "ln2.g"));
        w.ln2b = &store.at(ln(l, "ln2.b"));
        w.f1w = &store.at(ln(l, "ff1.w"));
        w.f1b = &store.at(ln(l, "ff1.b"));
        w.f2w = &store.at(ln(l, "ff2.w"));
        w.f2b = &store.at(ln(l, "ff2.b"));
        layers_.push_back(w);
    }
}

namespace {

void layernorm_inplace(Mat& x, const Mat& g, const Mat& b) {
    for (int i = 0; i < x.rows(); ++i) {
        const double mu = x.row(i).mean();
        const double var = (x.row(i).array() - mu).square().mean();
        const double is = 1.0 / std::sqrt(var + 1e-5);
        x.row(i) = (((x.row(i).array() - mu) * is) * g.row(0).array() + b.row(0).array()).matrix();
    }
}

Mat gelu_mat(const Mat& x) {
    return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244)); });
}

void softmax_row_inplace(Eigen::Ref<Eigen::RowVectorXd> row) {
    const double m = row.maxCoeff();
    Eigen::RowVectorXd e = (row.array() - m).exp().matrix();
    row = e / e.sum();
}

}  // namespace

Mat BackboneInfer::run_rows(const Mat& x_in, Cache& cache) const {
    const int n = static_cast<int>(x_in.rows());
    const int dh = cfg_.head_dim();
    const int base = cache.len;
    Mat x = x_in;
    if (cache.k.empty()) {
        cache.k.assign(static_cast<std::size_t>(cfg_.layers), Mat(cfg_.max_seq, cfg_.dim));
        cache.v.assign(static_cast<std::size_t>(cfg_.layers), Mat(cfg_.max_seq, cfg_.dim));
    }
    for (int l = 0; l < cfg_.layers; ++l) {
        const LayerW& w = layers_[static_cast<std::size_t>(l)];
        Mat h = x;
        layernorm_inplace(h, *w.ln1g, *w.ln1b);
        Mat q = (h * *w.qw).rowwise() + w.qb->row(0);
        Mat k = (h * *w.kw).rowwise() + w.kb->row(0);
        Mat v = (h * *w.vw).rowwise() + w.vb->row(0);
        cache.k[static_cast<std::size_t>(l)].middleRows(base, n) = k;
        cache.v[static_cast<std::size_t>(l)].middleRows(base, n) = v;
        Mat ctx(n, cfg_.dim);
        for (int hd = 0; hd < cfg_.heads; ++hd) {
            const int c0 = hd * dh;
            for (int i = 0; i < n; ++i) {
                const int keys = base + i + 1;
                Eigen::RowVectorXd scores =
                    (q.row(i).segment(c0, dh) *
                     cache.k[static_cast<std::size_t>(l)].block(0, c0, keys, dh).transpose()) /
                    std::sqrt(static_cast<double>(dh));
                softmax_row_inplace(scores);
                ctx.row(i).segment(c0, dh) =
                    scores * cache.v[static_cast<std::size_t>(l)].block(0, c0, keys, dh);
            }
        }
        x.noalias() += (ctx * *w.ow).rowwise() + w.ob->row(0);
        Mat h2 = x;
        layernorm_inplace(h2, *w.ln2g, *w.ln2b);
        Mat ff = gelu_mat((h2 * *w.f1w).rowwise() + w.f1b->row(0));
        x.noalias() += (ff * *w.f2w).rowwise() + w.f2b->row(0);
    }
    cache.len += n;
    layernorm_inplace(x, *lnfg_, *lnfb_);
    return x;
}

BackboneInfer::Out BackboneInfer::prefill(const Mat& context,
                                          const std::vector<int>& template_ids) const {
    const int ctx = static_cast<int>(context.rows());
    const int total = ctx + static_cast<int>(template_ids.size());
    if (total > cfg_.max_seq) throw std::invalid_argument("backbone: sequence exceeds max_seq");
    Mat x(total, cfg_.dim);
    x.topRows(ctx) = context;
    for (std::size_t i = 0; i < template_ids.size(); ++i) {
        x.row(ctx + static_cast<int>(i)) = tok_->row(template_ids[i]);
    }
    x += pos_->topRows(total);
    Cache cache;
    Out out;
    out.hidden = run_rows(x, cache);
    out.logits = (out.hidden * *uw_).rowwise() + ub_->row(0);
    return out;
}

BackboneInfer::GenResult BackboneInfer::generate(const Mat& context, const SpecialVocab& vocab,
                                                 int max_steps,
                                                 const std::vector<int>* forced) const {
    const int ctx = static_cast<int>(context.rows());
    GenResult res;
    Cache cache;
    Mat x0 = context + pos_->topRows(ctx);
    Mat hidden(ctx + max_steps, cfg_.dim);
    hidden.topRows(ctx) = run_rows(x0, cache);

    Eigen::RowVectorXd logits = hidden.row(ctx - 1) * *uw_ + ub_->row(0);
    for (int step = 0; step < max_steps; ++step) {
        int next;
        if (forced != nullptr) {
            if (step >= static_cast<int>(forced->size())) break;
            next = (*forced)[static_cast<std::size_t>(step)];
        } else {
            int arg = 0;
            logits.maxCoeff(&arg);
            next = arg;
        }
        if (ctx + static_cast<int>(res.ids.size()) + 1 > cfg_.max_seq) break;
        res.ids.push_back(next);
        Mat row = tok_->row(next) + pos_->row(ctx + step);
        Mat h = run_rows(row, cache);
        hidden.row(ctx + step) = h.row(0);
        if (next == vocab.waypoint_ego_id) {
            res.complete = true;
            break;
        }
        logits = h.row(0) * *uw_ + ub_->row(0);
    }
    res.hidden = hidden.topRows(ctx + static_cast<int>(res.ids.size()));
    return res;
}

}  // namespace lfd
