#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lfd/rng.hpp"
#include "lfd/tape.hpp"

namespace lfd {

// Named parameter arrays with deterministic (insertion) iteration order.
class ParamStore {
public:
    Mat& create(const std::string& name, int rows, int cols) {
        if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
        index_[name] = static_cast<int>(names_.size());
        names_.push_back(name);
        values_.emplace_back(Mat::Zero(rows, cols));
        return values_.back();
    }
    Mat& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("no parameter: " + name);
        return values_[static_cast<std::size_t>(it->second)];
    }
    const Mat& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("no parameter: " + name);
        return values_[static_cast<std::size_t>(it->second)];
    }
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t count() const { return names_.size(); }
    std::size_t total_size() const {
        std::size_t n = 0;
        for (const Mat& m : values_) n += static_cast<std::size_t>(m.size());
        return n;
    }
    // Same-shaped store of zeros (gradient / moment buffers).
    ParamStore zeros_like() const {
        ParamStore out;
        for (std::size_t i = 0; i < names_.size(); ++i) {
            out.create(names_[i], static_cast<int>(values_[i].rows()),
                       static_cast<int>(values_[i].cols()));
        }
        return out;
    }
    void set_zero() {
        for (Mat& m : values_) m.setZero();
    }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
    std::vector<Mat> values_;
};

// Binds a ParamStore to one tape: parameters become leaves on first use, and
// their gradients can be pulled back out after backward().
class TapeParams {
public:
    TapeParams(Tape& tape, ParamStore& store) : tape_(&tape), store_(&store) {}

    Var operator[](const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return Var{tape_, it->second};
        const int id = tape_->leaf(store_->at(name), true);
        bound_[name] = id;
        return Var{tape_, id};
    }

    // grads[name] += d(loss)/d(param) for every bound parameter.
    void accumulate_grads(ParamStore& grads) const {
        for (const auto& [name, id] : bound_) {
            if (tape_->has_grad(id)) grads.at(name) += tape_->grad(id);
        }
    }

    bool grad_is_zero(const std::string& name) const {
        auto it = bound_.find(name);
        if (it == bound_.end()) return true;
        return !tape_->has_grad(it->second) || tape_->grad(it->second).isZero(0.0);
    }

private:
    Tape* tape_;
    ParamStore* store_;
    std::unordered_map<std::string, int> bound_;
};

// ---- initialization ---------------------------------------------------------

void init_normal(Mat& m, Rng& rng, double stddev);
void init_xavier(Mat& m, Rng& rng);

// ---- shared blocks ------------------------------------------------------------

// x * W + b (b broadcast over rows)
inline Var linear(TapeParams& p, Var x, const std::string& prefix) {
    return add_rowvec(matmul(x, p[prefix + ".w"]), p[prefix + ".b"]);
}

// layernorm with learned affine terms
inline Var layernorm_affine(TapeParams& p, Var x, const std::string& prefix) {
    return add_rowvec(mul_rowvec(layernorm_rows(x), p[prefix + ".g"]), p[prefix + ".b"]);
}

void create_linear(ParamStore& s, const std::string& prefix, int in, int out, Rng& rng,
                   bool zero_init = false);
void create_layernorm(ParamStore& s, const std::string& prefix, int width);

// ---- optimizer -----------------------------------------------------------------

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
};

struct AdamState {
    ParamStore m, v;
    long long t = 0;

    static AdamState init(const ParamStore& params) {
        AdamState s;
        s.m = params.zeros_like();
        s.v = params.zeros_like();
        return s;
    }
    void step(ParamStore& params, const ParamStore& grads, const AdamConfig& cfg);
};

}  // namespace lfd
