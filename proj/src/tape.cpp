#include "lfd/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace lfd {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

bool any_requires(std::initializer_list<Var> vars) {
    for (const Var& v : vars) {
        if (v.tape->requires_grad(v.id)) return true;
    }
    return false;
}

template <typename F>
Var unary_elementwise(Var a, Mat out, F dfn) {
    Tape& t = *a.tape;
    bool req = t.requires_grad(a.id);
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, a, dfn](Tape& tp) {
            tp.add_grad(a.id, tp.grad(id).cwiseProduct(dfn(tp.value(a.id), tp.value(id))));
        });
    }
    return Var{&t, id};
}

}  // namespace

Var matmul(Var a, Var b) {
    Tape& t = *a.tape;
    bool req = any_requires({a, b});
    int id = t.op(a.v() * b.v(), req);
    if (req) {
        t.set_back(id, [id, a, b](Tape& tp) {
            const Mat& g = tp.grad(id);
            if (tp.requires_grad(a.id)) tp.add_grad(a.id, g * tp.value(b.id).transpose());
            if (tp.requires_grad(b.id)) tp.add_grad(b.id, tp.value(a.id).transpose() * g);
        });
    }
    return Var{&t, id};
}

Var matmul_nt(Var a, Var b) {
    Tape& t = *a.tape;
    bool req = any_requires({a, b});
    int id = t.op(a.v() * b.v().transpose(), req);
    if (req) {
        t.set_back(id, [id, a, b](Tape& tp) {
            const Mat& g = tp.grad(id);
            if (tp.requires_grad(a.id)) tp.add_grad(a.id, g * tp.value(b.id));
            if (tp.requires_grad(b.id)) tp.add_grad(b.id, g.transpose() * tp.value(a.id));
        });
    }
    return Var{&t, id};
}

Var add(Var a, Var b) {
    Tape& t = *a.tape;
    bool req = any_requires({a, b});
    int id = t.op(a.v() + b.v(), req);
    if (req) {
        t.set_back(id, [id, a, b](Tape& tp) {
            tp.add_grad(a.id, tp.grad(id));
            tp.add_grad(b.id, tp.grad(id));
        });
    }
    return Var{&t, id};
}

Var sub(Var a, Var b) {
    Tape& t = *a.tape;
    bool req = any_requires({a, b});
    int id = t.op(a.v() - b.v(), req);
    if (req) {
        t.set_back(id, [id, a, b](Tape& tp) {
            tp.add_grad(a.id, tp.grad(id));
            tp.add_grad(b.id, -tp.grad(id));
        });
    }
    return Var{&t, id};
}

Var hadamard(Var a, Var b) {
    Tape& t = *a.tape;
    bool req = any_requires({a, b});
    int id = t.op(a.v().cwiseProduct(b.v()), req);
    if (req) {
        t.set_back(id, [id, a, b](Tape& tp) {
            const Mat& g = tp.grad(id);
            if (tp.requires_grad(a.id)) tp.add_grad(a.id, g.cwiseProduct(tp.value(b.id)));
            if (tp.requires_grad(b.id)) tp.add_grad(b.id, g.cwiseProduct(tp.value(a.id)));
        });
    }
    return Var{&t, id};
}

Var scale(Var a, double s) {
    Tape& t = *a.tape;
    bool req = t.requires_grad(a.id);
    int id = t.op(a.v() * s, req);
    if (req) {
        t.set_back(id, [id, a, s](Tape& tp) { tp.add_grad(a.id, tp.grad(id) * s); });
    }
    return Var{&t, id};
}

Var add_scalar(Var a, double s) {
    Tape& t = *a.tape;
    bool req = t.requires_grad(a.id);
    int id = t.op(Mat((a.v().array() + s).matrix()), req);
    if (req) {
        t.set_back(id, [id, a](Tape& tp) { tp.add_grad(a.id, tp.grad(id)); });
    }
    return Var{&t, id};
}

Var add_rowvec(Var x, Var row) {
    Tape& t = *x.tape;
    bool req = any_requires({x, row});
    Mat out = x.v();
    out.rowwise() += row.v().row(0);
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, x, row](Tape& tp) {
            const Mat& g = tp.grad(id);
            tp.add_grad(x.id, g);
            tp.add_grad(row.id, g.colwise().sum());
        });
    }
    return Var{&t, id};
}

Var mul_rowvec(Var x, Var row) {
    Tape& t = *x.tape;
    bool req = any_requires({x, row});
    Mat out = (x.v().array().rowwise() * row.v().row(0).array()).matrix();
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, x, row](Tape& tp) {
            const Mat& g = tp.grad(id);
            if (tp.requires_grad(x.id)) {
                tp.add_grad(x.id, (g.array().rowwise() * tp.value(row.id).row(0).array()).matrix());
            }
            if (tp.requires_grad(row.id)) {
                tp.add_grad(row.id, (g.cwiseProduct(tp.value(x.id))).colwise().sum());
            }
        });
    }
    return Var{&t, id};
}

Var relu(Var a) {
    return unary_elementwise(a, a.v().cwiseMax(0.0), [](const Mat& x, const Mat&) {
        return Mat(((x.array() > 0.0).cast<double>()).matrix());
    });
}

Var gelu(Var a) {
    Mat out = a.v().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
    return unary_elementwise(a, std::move(out), [](const Mat& x, const Mat&) {
        return Mat(x.unaryExpr([](double v) {
            double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            return phi + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
        }));
    });
}

Var tanh_v(Var a) {
    return unary_elementwise(a, Mat(a.v().array().tanh().matrix()), [](const Mat&, const Mat& y) {
        return Mat((1.0 - y.array().square()).matrix());
    });
}

Var sigmoid(Var a) {
    Mat out = a.v().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    return unary_elementwise(a, std::move(out), [](const Mat&, const Mat& y) {
        return Mat((y.array() * (1.0 - y.array())).matrix());
    });
}

Var exp_v(Var a) {
    return unary_elementwise(a, Mat(a.v().array().exp().matrix()), [](const Mat&, const Mat& y) { return y; });
}

Var abs_v(Var a) {
    return unary_elementwise(a, a.v().cwiseAbs(), [](const Mat& x, const Mat&) {
        return Mat(x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }));
    });
}

Var square(Var a) {
    return unary_elementwise(a, Mat(a.v().array().square().matrix()), [](const Mat& x, const Mat&) {
        return Mat((2.0 * x.array()).matrix());
    });
}

Var one_minus(Var a) {
    Tape& t = *a.tape;
    bool req = t.requires_grad(a.id);
    int id = t.op(Mat((1.0 - a.v().array()).matrix()), req);
    if (req) {
        t.set_back(id, [id, a](Tape& tp) { tp.add_grad(a.id, -tp.grad(id)); });
    }
    return Var{&t, id};
}

Var slice_rows(Var a, int r0, int n) {
    Tape& t = *a.tape;
    bool req = t.requires_grad(a.id);
    int id = t.op(a.v().middleRows(r0, n), req);
    if (req) {
        t.set_back(id, [id, a, r0](Tape& tp) {
            tp.add_grad_block(a.id, r0, 0, tp.grad(id));
        });
    }
    return Var{&t, id};
}

Var slice_cols(Var a, int c0, int n) {
    Tape& t = *a.tape;
    bool req = t.requires_grad(a.id);
    int id = t.op(a.v().middleCols(c0, n), req);
    if (req) {
        t.set_back(id, [id, a, c0](Tape& tp) {
            tp.add_grad_block(a.id, 0, c0, tp.grad(id));
        });
    }
    return Var{&t, id};
}

Var concat_rows(const std::vector<Var>& parts) {
    Tape& t = *parts.front().tape;
    int rows = 0;
    const int cols = parts.front().cols();
    bool req = false;
    for (const Var& p : parts) {
        rows += p.rows();
        req = req || t.requires_grad(p.id);
    }
    Mat out(rows, cols);
    int r = 0;
    for (const Var& p : parts) {
        out.middleRows(r, p.rows()) = p.v();
        r += p.rows();
    }
    int id = t.op(std::move(out), req);
    if (req) {
        std::vector<Var> ps = parts;
        t.set_back(id, [id, ps](Tape& tp) {
            const Mat& g = tp.grad(id);
            int r0 = 0;
            for (const Var& p : ps) {
                const int n = static_cast<int>(tp.value(p.id).rows());
                tp.add_grad(p.id, g.middleRows(r0, n));
                r0 += n;
            }
        });
    }
    return Var{&t, id};
}

Var concat_cols(const std::vector<Var>& parts) {
    Tape& t = *parts.front().tape;
    int cols = 0;
    const int rows = parts.front().rows();
    bool req = false;
    for (const Var& p : parts) {
        cols += p.cols();
        req = req || t.requires_grad(p.id);
    }
    Mat out(rows, cols);
    int c = 0;
    for (const Var& p : parts) {
        out.middleCols(c, p.cols()) = p.v();
        c += p.cols();
    }
    int id = t.op(std::move(out), req);
    if (req) {
        std::vector<Var> ps = parts;
        t.set_back(id, [id, ps](Tape& tp) {
            const Mat& g = tp.grad(id);
            int c0 = 0;
            for (const Var& p : ps) {
                const int n = static_cast<int>(tp.value(p.id).cols());
                tp.add_grad(p.id, g.middleCols(c0, n));
                c0 += n;
            }
        });
    }
    return Var{&t, id};
}

Var repeat_row(Var row, int n) {
    Tape& t = *row.tape;
    bool req = t.requires_grad(row.id);
    Mat out = row.v().row(0).replicate(n, 1);
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, row](Tape& tp) {
            tp.add_grad(row.id, tp.grad(id).colwise().sum());
        });
    }
    return Var{&t, id};
}

Var mean_rows(Var a) {
    Tape& t = *a.tape;
    bool req = t.requires_grad(a.id);
    const int n = a.rows();
    Mat out = a.v().colwise().mean();
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, a, n](Tape& tp) {
            tp.add_grad(a.id, (tp.grad(id) / static_cast<double>(n)).replicate(n, 1));
        });
    }
    return Var{&t, id};
}

Var sum_all(Var a) {
    Tape& t = *a.tape;
    bool req = t.requires_grad(a.id);
    Mat out(1, 1);
    out(0, 0) = a.v().sum();
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, a](Tape& tp) {
            const Mat& v = tp.value(a.id);
            tp.add_grad(a.id, Mat::Constant(v.rows(), v.cols(), tp.grad(id)(0, 0)));
        });
    }
    return Var{&t, id};
}

Var mean_all(Var a) {
    Var s = sum_all(a);
    return scale(s, 1.0 / (static_cast<double>(a.rows()) * static_cast<double>(a.cols())));
}

Var row_l2norm(Var a, double eps) {
    Tape& t = *a.tape;
    bool req = t.requires_grad(a.id);
    Mat out = (a.v().rowwise().squaredNorm().array() + eps).sqrt().matrix();
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, a](Tape& tp) {
            const Mat& g = tp.grad(id);
            const Mat& x = tp.value(a.id);
            const Mat& y = tp.value(id);
            Mat gx = x;
            for (int i = 0; i < x.rows(); ++i) {
                gx.row(i) = g(i, 0) * x.row(i) / y(i, 0);
            }
            tp.add_grad(a.id, gx);
        });
    }
    return Var{&t, id};
}

Var softmax_rows(Var scores, bool causal, int offset) {
    Tape& t = *scores.tape;
    bool req = t.requires_grad(scores.id);
    Mat s = scores.v();
    if (causal) {
        for (int i = 0; i < s.rows(); ++i) {
            for (int j = i + offset + 1; j < s.cols(); ++j) s(i, j) = -kInf;
        }
    }
    Mat out(s.rows(), s.cols());
    for (int i = 0; i < s.rows(); ++i) {
        const double m = s.row(i).maxCoeff();
        Eigen::ArrayXd e = (s.row(i).array() - m).exp();
        out.row(i) = (e / e.sum()).matrix();
    }
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, scores](Tape& tp) {
            const Mat& y = tp.value(id);
            const Mat& g = tp.grad(id);
            Mat gs(y.rows(), y.cols());
            for (int i = 0; i < y.rows(); ++i) {
                const double dot = g.row(i).dot(y.row(i));
                gs.row(i) = ((g.row(i).array() - dot) * y.row(i).array()).matrix();
            }
            tp.add_grad(scores.id, gs);
        });
    }
    return Var{&t, id};
}

Var layernorm_rows(Var x, double eps) {
    Tape& t = *x.tape;
    bool req = t.requires_grad(x.id);
    const Mat& v = x.v();
    const int cols = static_cast<int>(v.cols());
    Mat out(v.rows(), cols);
    Mat invstd(v.rows(), 1);
    for (int i = 0; i < v.rows(); ++i) {
        const double mu = v.row(i).mean();
        const double var = (v.row(i).array() - mu).square().mean();
        const double is = 1.0 / std::sqrt(var + eps);
        invstd(i, 0) = is;
        out.row(i) = ((v.row(i).array() - mu) * is).matrix();
    }
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, x, invstd, cols](Tape& tp) {
            const Mat& y = tp.value(id);
            const Mat& g = tp.grad(id);
            Mat gx(y.rows(), cols);
            const double n = static_cast<double>(cols);
            for (int i = 0; i < y.rows(); ++i) {
                const double gsum = g.row(i).sum();
                const double gydot = g.row(i).dot(y.row(i));
                gx.row(i) = ((invstd(i, 0) / n) *
                             (n * g.row(i).array() - gsum - y.row(i).array() * gydot)).matrix();
            }
            tp.add_grad(x.id, gx);
        });
    }
    return Var{&t, id};
}

Var gather_rows(Var table, std::vector<int> ids) {
    Tape& t = *table.tape;
    bool req = t.requires_grad(table.id);
    const Mat& v = table.v();
    Mat out(static_cast<int>(ids.size()), v.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<int>(i)) = v.row(ids[i]);
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, table, ids = std::move(ids)](Tape& tp) {
            const Mat& g = tp.grad(id);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                tp.add_grad_block(table.id, ids[i], 0, g.row(static_cast<int>(i)));
            }
        });
    }
    return Var{&t, id};
}

Var cross_entropy_rows(Var logits, std::vector<int> targets) {
    Tape& t = *logits.tape;
    bool req = t.requires_grad(logits.id);
    const Mat& v = logits.v();
    if (static_cast<int>(targets.size()) != v.rows()) {
        throw std::invalid_argument("cross_entropy_rows: target count != logit rows");
    }
    double total = 0.0;
    for (int i = 0; i < v.rows(); ++i) {
        const double m = v.row(i).maxCoeff();
        const double lse = m + std::log((v.row(i).array() - m).exp().sum());
        total += lse - v(i, targets[static_cast<std::size_t>(i)]);
    }
    Mat out(1, 1);
    out(0, 0) = total / static_cast<double>(v.rows());
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, logits, targets = std::move(targets)](Tape& tp) {
            const double g = tp.grad(id)(0, 0);
            const Mat& v = tp.value(logits.id);
            const double inv_n = 1.0 / static_cast<double>(v.rows());
            Mat gl(v.rows(), v.cols());
            for (int i = 0; i < v.rows(); ++i) {
                const double m = v.row(i).maxCoeff();
                Eigen::ArrayXd e = (v.row(i).array() - m).exp();
                gl.row(i) = ((e / e.sum()) * (g * inv_n)).matrix();
                gl(i, targets[static_cast<std::size_t>(i)]) -= g * inv_n;
            }
            tp.add_grad(logits.id, gl);
        });
    }
    return Var{&t, id};
}

Var cosine_distance_sum(Var pred, const Mat& gt, double eps) {
    Tape& t = *pred.tape;
    bool req = t.requires_grad(pred.id);
    const Mat& p = pred.v();
    double total = 0.0;
    for (int i = 0; i < p.rows(); ++i) {
        const double na = std::max(p.row(i).norm(), eps);
        const double nb = std::max(gt.row(i).norm(), eps);
        total += 1.0 - p.row(i).dot(gt.row(i)) / (na * nb);
    }
    Mat out(1, 1);
    out(0, 0) = total;
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, pred, gt, eps](Tape& tp) {
            const double g = tp.grad(id)(0, 0);
            const Mat& p = tp.value(pred.id);
            Mat gp(p.rows(), p.cols());
            for (int i = 0; i < p.rows(); ++i) {
                const double raw = p.row(i).norm();
                const double na = std::max(raw, eps);
                const double nb = std::max(gt.row(i).norm(), eps);
                Eigen::RowVectorXd d = gt.row(i) / (na * nb);
                if (raw > eps) {
                    const double cosv = p.row(i).dot(gt.row(i)) / (na * nb);
                    d -= cosv * p.row(i) / (na * na);
                }
                gp.row(i) = -g * d;
            }
            tp.add_grad(pred.id, gp);
        });
    }
    return Var{&t, id};
}

Var conv2d(Var x, Var w, Var b, const ConvSpec& spec) {
    Tape& t = *x.tape;
    bool req = any_requires({x, w, b});
    const Mat& xv = x.v();
    if (xv.rows() != spec.in_h * spec.in_w || xv.cols() != spec.in_c) {
        throw std::invalid_argument("conv2d: input shape mismatch");
    }
    const int oh = spec.out_h();
    const int ow = spec.out_w();
    const int patch = spec.kh * spec.kw * spec.in_c;
    Mat cols(oh * ow, patch);
    cols.setZero();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const int orow = oy * ow + ox;
            for (int ky = 0; ky < spec.kh; ++ky) {
                const int iy = oy * spec.stride + ky - spec.pad;
                if (iy < 0 || iy >= spec.in_h) continue;
                for (int kx = 0; kx < spec.kw; ++kx) {
                    const int ix = ox * spec.stride + kx - spec.pad;
                    if (ix < 0 || ix >= spec.in_w) continue;
                    cols.block(orow, (ky * spec.kw + kx) * spec.in_c, 1, spec.in_c) =
                        xv.row(iy * spec.in_w + ix);
                }
            }
        }
    }
    Mat out = cols * w.v();
    out.rowwise() += b.v().row(0);
    int id = t.op(std::move(out), req);
    if (req) {
        t.set_back(id, [id, x, w, b, spec, cols = std::move(cols)](Tape& tp) {
            const Mat& g = tp.grad(id);
            tp.add_grad(b.id, g.colwise().sum());
            if (tp.requires_grad(w.id)) tp.add_grad(w.id, cols.transpose() * g);
            if (tp.requires_grad(x.id)) {
                Mat gcols = g * tp.value(w.id).transpose();
                Mat gx = Mat::Zero(spec.in_h * spec.in_w, spec.in_c);
                const int ow = spec.out_w();
                const int oh = spec.out_h();
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        const int orow = oy * ow + ox;
                        for (int ky = 0; ky < spec.kh; ++ky) {
                            const int iy = oy * spec.stride + ky - spec.pad;
                            if (iy < 0 || iy >= spec.in_h) continue;
                            for (int kx = 0; kx < spec.kw; ++kx) {
                                const int ix = ox * spec.stride + kx - spec.pad;
                                if (ix < 0 || ix >= spec.in_w) continue;
                                gx.row(iy * spec.in_w + ix) +=
                                    gcols.block(orow, (ky * spec.kw + kx) * spec.in_c, 1, spec.in_c);
                            }
                        }
                    }
                }
                tp.add_grad(x.id, gx);
            }
        });
    }
    return Var{&t, id};
}

}  // namespace lfd
