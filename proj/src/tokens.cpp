#include "lfd/tokens.hpp"

namespace lfd {

SpecialVocab make_special_vocab(int base_vocab_size, int n_img_tokens) {
    if (base_vocab_size < 0 || n_img_tokens < 1) {
        throw std::invalid_argument("make_special_vocab: need base_vocab_size >= 0, n >= 1");
    }
    SpecialVocab v;
    v.base_vocab_size = base_vocab_size;
    v.img_placeholder_ids.resize(static_cast<std::size_t>(n_img_tokens));
    int next = base_vocab_size;
    for (int i = 0; i < n_img_tokens; ++i) v.img_placeholder_ids[static_cast<std::size_t>(i)] = next++;
    v.img_start_id = next++;
    v.img_end_id = next++;
    v.waypoint_ego_id = next++;
    return v;
}

OutputTemplate build_output_template(int frames, int n_img_tokens, const SpecialVocab& vocab) {
    if (frames <= 0) throw std::invalid_argument("build_output_template: frames must be >= 1");
    if (n_img_tokens <= 0) throw std::invalid_argument("build_output_template: n_img_tokens must be >= 1");
    if (n_img_tokens != vocab.n_img_tokens()) {
        throw std::invalid_argument("build_output_template: n_img_tokens != vocab placeholder count");
    }
    OutputTemplate t;
    t.token_ids.reserve(static_cast<std::size_t>(frames * (n_img_tokens + 2) + 1));
    for (int f = 0; f < frames; ++f) {
        t.token_ids.push_back(vocab.img_start_id);
        const int begin = static_cast<int>(t.token_ids.size());
        for (int i = 0; i < n_img_tokens; ++i) t.token_ids.push_back(vocab.img_placeholder_ids[static_cast<std::size_t>(i)]);
        t.frame_spans.emplace_back(begin, begin + n_img_tokens);
        t.token_ids.push_back(vocab.img_end_id);
    }
    t.token_ids.push_back(vocab.waypoint_ego_id);
    t.planning_pos = static_cast<int>(t.token_ids.size()) - 1;
    return t;
}

SpanLayout locate_spans(const std::vector<int>& token_ids, const SpecialVocab& vocab) {
    const int n = vocab.n_img_tokens();
    SpanLayout out;
    int planning_count = 0;
    std::size_t i = 0;
    while (i < token_ids.size()) {
        const int id = token_ids[i];
        if (id == vocab.img_start_id) {
            const std::size_t begin = i + 1;
            for (int k = 0; k < n; ++k) {
                const std::size_t p = begin + static_cast<std::size_t>(k);
                if (p >= token_ids.size()) {
                    throw TemplateError(token_ids.size(), "frame truncated before placeholder " + std::to_string(k));
                }
                if (token_ids[p] != vocab.img_placeholder_ids[static_cast<std::size_t>(k)]) {
                    throw TemplateError(p, "expected placeholder <img_" + std::to_string(k) + ">");
                }
            }
            const std::size_t endp = begin + static_cast<std::size_t>(n);
            if (endp >= token_ids.size()) {
                throw TemplateError(token_ids.size(), "frame missing img_end marker");
            }
            if (token_ids[endp] != vocab.img_end_id) {
                throw TemplateError(endp, "frame not closed by img_end");
            }
            out.frame_spans.emplace_back(static_cast<int>(begin), static_cast<int>(endp));
            i = endp + 1;
        } else if (id == vocab.waypoint_ego_id) {
            ++planning_count;
            if (planning_count > 1) throw TemplateError(i, "multiple planning tokens");
            out.planning_pos = static_cast<int>(i);
            ++i;
        } else if (id == vocab.img_end_id) {
            throw TemplateError(i, "img_end without matching img_start");
        } else if (!vocab.img_placeholder_ids.empty() &&
                   id >= vocab.img_placeholder_ids.front() &&
                   id <= vocab.img_placeholder_ids.back()) {
            throw TemplateError(i, "placeholder outside a bracketed frame");
        } else {
            ++i;  // ordinary token, ignored
        }
    }
    if (planning_count == 0) {
        throw TemplateError(token_ids.size(), "no planning token in sequence");
    }
    return out;
}

}  // namespace lfd
