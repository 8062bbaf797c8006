#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lfd {

// Special-token vocabulary: N per-frame image placeholders, frame boundary
// markers, and the single planning token. Placeholder ids are indexed by
// position within a frame and reused across frames.
struct SpecialVocab {
    std::vector<int> img_placeholder_ids;
    int img_start_id = -1;
    int img_end_id = -1;
    int waypoint_ego_id = -1;
    int base_vocab_size = 0;

    int n_img_tokens() const { return static_cast<int>(img_placeholder_ids.size()); }
    int total_vocab_size() const { return base_vocab_size + n_img_tokens() + 3; }
};

SpecialVocab make_special_vocab(int base_vocab_size, int n_img_tokens);

// Fixed output sequence: F frames of [img_start, img_0..img_{N-1}, img_end]
// followed by the planning token. frame_spans are half-open [begin, end)
// index ranges of the placeholder positions of each frame.
struct OutputTemplate {
    std::vector<int> token_ids;
    std::vector<std::pair<int, int>> frame_spans;
    int planning_pos = -1;

    int frames() const { return static_cast<int>(frame_spans.size()); }
    int length() const { return static_cast<int>(token_ids.size()); }
};

// Raised when a token sequence fails template validation; position() is the
// index of the first violation.
class TemplateError : public std::runtime_error {
public:
    TemplateError(std::size_t pos, const std::string& what)
        : std::runtime_error(what + " (at position " + std::to_string(pos) + ")"),
          pos_(pos) {}
    std::size_t position() const { return pos_; }

private:
    std::size_t pos_;
};

OutputTemplate build_output_template(int frames, int n_img_tokens, const SpecialVocab& vocab);

struct SpanLayout {
    std::vector<std::pair<int, int>> frame_spans;
    int planning_pos = -1;
};

// Recovers the span layout from a raw id sequence. Throws TemplateError on
// malformed bracketing, wrong span contents, or a missing/duplicated
// planning token.
SpanLayout locate_spans(const std::vector<int>& token_ids, const SpecialVocab& vocab);

}  // namespace lfd
