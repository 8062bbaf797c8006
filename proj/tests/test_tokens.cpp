#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lfd/tokens.hpp"

using namespace lfd;

TEST_CASE("vocab layout: distinct special ids above base vocab") {
    SpecialVocab v = make_special_vocab(16, 4);
    CHECK(v.n_img_tokens() == 4);
    CHECK(v.total_vocab_size() == 16 + 4 + 3);
    std::vector<int> all = v.img_placeholder_ids;
    all.push_back(v.img_start_id);
    all.push_back(v.img_end_id);
    all.push_back(v.waypoint_ego_id);
    for (std::size_t i = 0; i < all.size(); ++i) {
        CHECK(all[i] >= v.base_vocab_size);
        for (std::size_t j = i + 1; j < all.size(); ++j) CHECK(all[i] != all[j]);
    }
}

TEST_CASE("template layout for F=2, N=3") {
    SpecialVocab v = make_special_vocab(8, 3);
    OutputTemplate t = build_output_template(2, 3, v);
    REQUIRE(t.length() == 11);
    std::vector<int> expect = {
        v.img_start_id, v.img_placeholder_ids[0], v.img_placeholder_ids[1], v.img_placeholder_ids[2], v.img_end_id,
        v.img_start_id, v.img_placeholder_ids[0], v.img_placeholder_ids[1], v.img_placeholder_ids[2], v.img_end_id,
        v.waypoint_ego_id};
    CHECK(t.token_ids == expect);
    REQUIRE(t.frame_spans.size() == 2);
    CHECK(t.frame_spans[0] == std::make_pair(1, 4));
    CHECK(t.frame_spans[1] == std::make_pair(6, 9));
    CHECK(t.planning_pos == 10);
}

TEST_CASE("template edge shapes") {
    SpecialVocab v1 = make_special_vocab(4, 1);
    OutputTemplate t1 = build_output_template(1, 1, v1);
    CHECK(t1.length() == 4);
    CHECK(t1.token_ids == std::vector<int>{v1.img_start_id, v1.img_placeholder_ids[0], v1.img_end_id,
                                           v1.waypoint_ego_id});

    SpecialVocab v2 = make_special_vocab(4, 16);
    CHECK(build_output_template(6, 16, v2).length() == 6 * 18 + 1);
}

TEST_CASE("invalid sizes rejected") {
    SpecialVocab v = make_special_vocab(4, 3);
    CHECK_THROWS_AS(build_output_template(0, 3, v), std::invalid_argument);
    CHECK_THROWS_AS(build_output_template(-1, 3, v), std::invalid_argument);
    CHECK_THROWS_AS(build_output_template(2, 0, v), std::invalid_argument);
    CHECK_THROWS_AS(build_output_template(2, 5, v), std::invalid_argument);
}

TEST_CASE("locate_spans round-trips build_output_template") {
    for (int f = 1; f <= 8; ++f) {
        for (int n = 1; n <= 64; ++n) {
            SpecialVocab v = make_special_vocab(10, n);
            OutputTemplate t = build_output_template(f, n, v);
            CHECK(t.length() == f * (n + 2) + 1);
            SpanLayout s = locate_spans(t.token_ids, v);
            CHECK(s.frame_spans == t.frame_spans);
            CHECK(s.planning_pos == t.planning_pos);
        }
    }
}

TEST_CASE("locate_spans tolerates ordinary-token context around the template") {
    SpecialVocab v = make_special_vocab(8, 2);
    OutputTemplate t = build_output_template(2, 2, v);
    std::vector<int> ids = {0, 5, 3};
    const int offset = static_cast<int>(ids.size());
    ids.insert(ids.end(), t.token_ids.begin(), t.token_ids.end());
    SpanLayout s = locate_spans(ids, v);
    REQUIRE(s.frame_spans.size() == 2);
    CHECK(s.frame_spans[0] == std::make_pair(t.frame_spans[0].first + offset, t.frame_spans[0].second + offset));
    CHECK(s.planning_pos == t.planning_pos + offset);
}

TEST_CASE("malformed sequences are rejected with the first violating position") {
    SpecialVocab v = make_special_vocab(8, 3);
    OutputTemplate t = build_output_template(2, 3, v);

    SUBCASE("missing img_end") {
        std::vector<int> ids = t.token_ids;
        ids[4] = 0;  // clobber first frame's img_end
        try {
            locate_spans(ids, v);
            FAIL("expected TemplateError");
        } catch (const TemplateError& e) {
            CHECK(e.position() == 4);
        }
    }
    SUBCASE("wrong placeholder order") {
        std::vector<int> ids = t.token_ids;
        std::swap(ids[1], ids[2]);
        try {
            locate_spans(ids, v);
            FAIL("expected TemplateError");
        } catch (const TemplateError& e) {
            CHECK(e.position() == 1);
        }
    }
    SUBCASE("two planning tokens") {
        std::vector<int> ids = t.token_ids;
        ids.push_back(v.waypoint_ego_id);
        CHECK_THROWS_WITH_AS(locate_spans(ids, v), doctest::Contains("multiple planning tokens"),
                             TemplateError);
    }
    SUBCASE("no planning token") {
        std::vector<int> ids(t.token_ids.begin(), t.token_ids.end() - 1);
        CHECK_THROWS_AS(locate_spans(ids, v), TemplateError);
    }
    SUBCASE("truncated frame") {
        std::vector<int> ids(t.token_ids.begin(), t.token_ids.begin() + 3);
        CHECK_THROWS_AS(locate_spans(ids, v), TemplateError);
    }
    SUBCASE("stray placeholder outside brackets") {
        std::vector<int> ids = {v.img_placeholder_ids[1]};
        ids.insert(ids.end(), t.token_ids.begin(), t.token_ids.end());
        try {
            locate_spans(ids, v);
            FAIL("expected TemplateError");
        } catch (const TemplateError& e) {
            CHECK(e.position() == 0);
        }
    }
}
