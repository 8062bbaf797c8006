#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <vector>

namespace lfd {

using Mat = Eigen::MatrixXd;

// Reverse-mode autodiff over matrix-valued nodes. One Tape is built per
// forward pass; backward() walks the node list in reverse. Leaves either
// reference external storage (parameters, which outlive the tape) or own a
// copy (data constants, which carry no gradient).
class Tape {
public:
    struct Node {
        Mat owned;
        const Mat* ext = nullptr;  // set for ref leaves, else value is `owned`
        Mat grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::function<void(Tape&)> back;  // empty for leaves
    };

    // Leaf referencing external storage (no copy). Gradients accumulate on
    // the node; caller must keep `external` alive until the tape is dropped.
    int leaf(const Mat& external, bool requires_grad = true) {
        Node n;
        n.ext = &external;
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Leaf owning a copy; never receives gradient.
    int constant(Mat m) {
        Node n;
        n.owned = std::move(m);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int op(Mat value, bool requires_grad) {
        Node n;
        n.owned = std::move(value);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Backward closures need the output node id, so they are attached after
    // the node exists.
    void set_back(int id, std::function<void(Tape&)> back) {
        nodes_[id].back = std::move(back);
    }

    const Mat& value(int id) const {
        const Node& n = nodes_[id];
        return n.ext ? *n.ext : n.owned;
    }
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }

    const Mat& grad(int id) const { return nodes_[id].grad; }
    bool has_grad(int id) const { return nodes_[id].has_grad; }

    template <typename Expr>
    void add_grad(int id, const Expr& g) {
        Node& n = nodes_[id];
        if (!n.requires_grad) return;
        if (!n.has_grad) {
            n.grad = g;
            n.has_grad = true;
        } else {
            n.grad += g;
        }
    }

    // Accumulates into a sub-block without materializing a full-size
    // gradient on the caller side (slices, concats, gathers).
    template <typename Expr>
    void add_grad_block(int id, int r0, int c0, const Expr& g) {
        Node& n = nodes_[id];
        if (!n.requires_grad) return;
        if (!n.has_grad) {
            const Mat& v = value(id);
            n.grad = Mat::Zero(v.rows(), v.cols());
            n.has_grad = true;
        }
        n.grad.block(r0, c0, g.rows(), g.cols()) += g;
    }

    // Seeds d(root)/d(root) = 1 (root must be 1x1) and propagates.
    void backward(int root) {
        nodes_[root].grad = Mat::Ones(1, 1);
        nodes_[root].has_grad = true;
        for (int i = root; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.has_grad && n.back) n.back(*this);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<Node> nodes_;
};

// Lightweight handle used by the op library below.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
    const Mat& v() const { return tape->value(id); }
    int rows() const { return static_cast<int>(v().rows()); }
    int cols() const { return static_cast<int>(v().cols()); }
};

inline Var make_leaf(Tape& t, const Mat& external, bool requires_grad = true) {
    return Var{&t, t.leaf(external, requires_grad)};
}
// Leaves reference external storage; a temporary would dangle.
Var make_leaf(Tape&, Mat&&, bool = true) = delete;
inline Var make_const(Tape& t, Mat m) { return Var{&t, t.constant(std::move(m))}; }

// ---- core ops ----------------------------------------------------------

Var matmul(Var a, Var b);              // a * b
Var matmul_nt(Var a, Var b);           // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var add_rowvec(Var x, Var row);        // broadcast 1xC row over all rows of x
Var mul_rowvec(Var x, Var row);        // broadcast multiply
Var relu(Var a);
Var gelu(Var a);                       // exact erf form
Var tanh_v(Var a);
Var sigmoid(Var a);
Var exp_v(Var a);
Var abs_v(Var a);
Var square(Var a);
Var one_minus(Var a);                  // 1 - a
Var slice_rows(Var a, int r0, int n);
Var slice_cols(Var a, int c0, int n);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var repeat_row(Var row, int n);        // 1xC -> nxC
Var mean_rows(Var a);                  // NxC -> 1xC
Var sum_all(Var a);                    // -> 1x1
Var mean_all(Var a);                   // -> 1x1
Var row_l2norm(Var a, double eps);     // NxC -> Nx1, sqrt(sum x^2 + eps)

// Per-row softmax. If causal, column j of row i is masked out when
// j > i + offset (offset = number of key positions preceding query 0).
Var softmax_rows(Var scores, bool causal = false, int offset = 0);

// Per-row normalization (x - mean) / sqrt(var + eps); no affine terms.
Var layernorm_rows(Var x, double eps = 1e-5);

// Rows gathered from an embedding table; backward scatters into the table.
Var gather_rows(Var table, std::vector<int> ids);

// Mean cross-entropy of each row of `logits` against integer targets.
Var cross_entropy_rows(Var logits, std::vector<int> targets);

// Sum over rows of (1 - cos(pred_row, gt_row)) with a norm floor of eps on
// the predicted row. gt rows are fixed targets.
Var cosine_distance_sum(Var pred, const Mat& gt, double eps);

struct ConvSpec {
    int in_h = 0, in_w = 0, in_c = 0;
    int kh = 0, kw = 0, out_c = 0;
    int stride = 1, pad = 0;
    int out_h() const { return (in_h + 2 * pad - kh) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad - kw) / stride + 1; }
};

// 2-D convolution via im2col. x is (in_h*in_w) x in_c (row-major spatial),
// w is (kh*kw*in_c) x out_c, b is 1 x out_c. Output (out_h*out_w) x out_c.
Var conv2d(Var x, Var w, Var b, const ConvSpec& spec);

}  // namespace lfd
