#pragma once

#include <vector>

#include "lfd/nn.hpp"
#include "lfd/tokens.hpp"

namespace lfd {

// Tiny causal decoder-only sequence model over [command | scene | history |
// output template]. The tape path is used for training and prefilled
// inference; BackboneInfer is the plain engine behind the autoregressive
// baseline and the decode benchmark.
struct BackboneConfig {
    int dim = 128;
    int layers = 4;
    int heads = 4;
    int ff_mult = 4;
    int max_seq = 192;
    int vocab = 0;

    int head_dim() const { return dim / heads; }
};

void backbone_init(ParamStore& store, const BackboneConfig& cfg, Rng& rng);

struct PrefillVars {
    Var hidden;   // L x dim, final layernorm applied
    Var logits;   // L x vocab
    int context_len = 0;
    int total_len = 0;
};

// One causal pass over the prefilled sequence; context rows are continuous
// embeddings, template rows come from the token table. Throws when the
// sequence exceeds max_seq.
PrefillVars backbone_prefill(Tape& tape, TapeParams& p, const BackboneConfig& cfg, Var context,
                             const std::vector<int>& template_ids);

// Hidden-state slices at the template's placeholder spans / planning token.
std::vector<Var> extract_frame_embeddings(Var hidden, const OutputTemplate& tmpl, int context_len);
Var extract_planning_embedding(Var hidden, const OutputTemplate& tmpl, int context_len);

// Inference engine over raw parameter matrices (no tape). The math matches
// the tape path; the generate loop keeps per-layer KV caches.
class BackboneInfer {
public:
    BackboneInfer(const ParamStore& store, const BackboneConfig& cfg);

    struct Out {
        Mat hidden;
        Mat logits;
    };
    Out prefill(const Mat& context, const std::vector<int>& template_ids) const;

    struct GenResult {
        std::vector<int> ids;  // generated ids (context excluded)
        Mat hidden;            // (context + generated) x dim
        bool complete = false; // planning token emitted before max_steps
    };
    // Greedy decoding; stops on the planning token. When `forced` is given,
    // its ids are fed instead of the argmax (still one step per token).
    GenResult generate(const Mat& context, const SpecialVocab& vocab, int max_steps,
                       const std::vector<int>* forced = nullptr) const;

private:
    struct LayerW {
        const Mat *ln1g, *ln1b, *qw, *qb, *kw, *kb, *vw, *vb, *ow, *ob;
        const Mat *ln2g, *ln2b, *f1w, *f1b, *f2w, *f2b;
    };
    BackboneConfig cfg_;
    std::vector<LayerW> layers_;
    const Mat *tok_, *pos_, *lnfg_, *lnfb_, *uw_, *ub_;

    struct Cache {
        std::vector<Mat> k, v;  // per layer, rows appended as tokens arrive
        int len = 0;
    };
    // Runs rows [0..n) of x through the stack, extending the cache; returns
    // final-layernorm hidden rows.
    Mat run_rows(const Mat& x, Cache& cache) const;
};

}  // namespace lfd
