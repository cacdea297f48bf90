#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "ltsmdiff/timeseries_data.hpp"
#include "test_util.hpp"

using namespace ltsm;

namespace {

std::string write_csv(const std::string& name, const std::string& content) {
    const auto dir = testutil::scratch_dir("data");
    const std::string path = (dir / name).string();
    std::ofstream os(path);
    os << content;
    return path;
}

}  // namespace

TEST_CASE("load_csv: structural mapping") {
    const auto path = write_csv("basic.csv",
                                "date,a,b\n"
                                "2020-01-01,1.5,2\n"
                                "2020-01-02,3,4\n"
                                "2020-01-03,5,6.25\n");
    const RawSeries s = load_csv(path);
    CHECK(s.length() == 3);
    CHECK(s.channels() == 2);
    CHECK(s.channel_names == std::vector<std::string>{"a", "b"});
    CHECK(s.values(0, 0) == 1.5);
    CHECK(s.values(2, 1) == 6.25);
    CHECK(s.timestamps[1] - s.timestamps[0] == 86400.0);
}

TEST_CASE("load_csv: ETT-style header with 7 channels") {
    const auto path = write_csv("ett.csv",
                                "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n"
                                "2016-07-01 00:00:00,5.827,2.009,1.599,0.462,4.203,1.340,30.531\n"
                                "2016-07-01 00:15:00,5.760,2.076,1.492,0.426,4.264,1.401,30.460\n");
    const RawSeries s = load_csv(path);
    CHECK(s.channels() == 7);
    CHECK(s.channel_names[6] == "OT");
    CHECK(s.timestamps[1] - s.timestamps[0] == 900.0);
}

TEST_CASE("load_csv: error and edge handling") {
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), DataError);

    const auto bad_cell = write_csv("bad.csv", "date,a\n1,1.0\n2,abc\n");
    CHECK_THROWS_WITH_AS(load_csv(bad_cell), doctest::Contains("row 3"), DataError);

    const auto dup = write_csv("dup.csv", "date,a\n5,1\n5,2\n");
    CHECK_THROWS_AS(load_csv(dup), DataError);

    // NaN rows are dropped, out-of-order rows are sorted.
    const auto messy = write_csv("messy.csv", "date,a\n3,30\n1,nan\n2,20\n");
    const RawSeries s = load_csv(messy);
    CHECK(s.length() == 2);
    CHECK(s.values(0, 0) == 20.0);
    CHECK(s.values(1, 0) == 30.0);

    const auto no_date = write_csv("nodate.csv", "time,a\n1,1\n");
    CHECK_THROWS_AS(load_csv(no_date, "date"), DataError);
}

TEST_CASE("compute_norm_stats examples") {
    RawSeries s;
    s.values = Mat::from_rows({{0, 5, 1}, {2, 5, 2}, {7, 5, 3}});
    s.timestamps = {0, 1, 2};
    s.channel_names = {"x", "c", "y"};

    SUBCASE("two-point symmetric case") {
        const NormStats st = compute_norm_stats(s, 2);
        CHECK(st.mean[0] == doctest::Approx(1.0));
        CHECK(st.stddev[0] == doctest::Approx(1.0));
    }
    SUBCASE("constant channel falls back to std=1") {
        const NormStats st = compute_norm_stats(s, 3);
        CHECK(st.mean[1] == doctest::Approx(5.0));
        CHECK(st.stddev[1] == 1.0);
    }
    SUBCASE("population std of [1,2,3]") {
        const NormStats st = compute_norm_stats(s, 3);
        CHECK(st.mean[2] == doctest::Approx(2.0));
        CHECK(st.stddev[2] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-9));
    }
    SUBCASE("train_end validation") {
        CHECK_THROWS_AS(compute_norm_stats(s, 0), ConfigError);
        CHECK_THROWS_AS(compute_norm_stats(s, 4), ConfigError);
    }
}

TEST_CASE("normalize/denormalize") {
    NormStats st;
    st.mean = {1.0};
    st.stddev = {1.0};
    Mat v = Mat::from_rows({{0.0}, {2.0}});
    const Mat n = normalize(v, st);
    CHECK(n(0, 0) == -1.0);
    CHECK(n(1, 0) == 1.0);

    SUBCASE("round trip is the identity within 1e-9") {
        Rng rng(3);
        RawSeries s = testutil::sinusoid_series(10, 3, 0.05, 1.0);
        const NormStats stats = compute_norm_stats(s, 10);
        const Mat round = denormalize(normalize(s.values, stats), stats);
        CHECK(max_abs_diff(round, s.values) < 1e-9);
    }
    SUBCASE("normalize then recompute stats gives mean 0, std 1") {
        RawSeries s = testutil::sinusoid_series(50, 2, 0.07, 0.5);
        const NormStats stats = compute_norm_stats(s, 50);
        const RawSeries n2 = normalize(s, stats);
        const NormStats post = compute_norm_stats(n2, 50);
        for (int c = 0; c < 2; ++c) {
            CHECK(std::abs(post.mean[c]) < 1e-9);
            CHECK(post.stddev[c] == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(normalize(Mat(2, 3), st), ConfigError);
    }
}

TEST_CASE("make_windows: counts and offsets") {
    SUBCASE("L=200, T=96, H=96, stride=1 gives 9 windows") {
        auto s = testutil::sinusoid_series(200, 1);
        CHECK(make_windows(s, 96, 96, 1).size() == 9);
    }
    SUBCASE("L=191 gives none") {
        auto s = testutil::sinusoid_series(191, 1);
        CHECK(make_windows(s, 96, 96, 1).empty());
    }
    SUBCASE("L=10, T=3, H=2, stride=2 starts at 0,2,4") {
        auto s = testutil::sinusoid_series(10, 1);
        const auto w = make_windows(s, 3, 2, 2);
        REQUIRE(w.size() == 3);
        CHECK(w[0].start == 0);
        CHECK(w[1].start == 2);
        CHECK(w[2].start == 4);
        // Context and target are contiguous and adjacent in the source.
        CHECK(w[1].context(0, 0) == s.values(2, 0));
        CHECK(w[1].target(0, 0) == s.values(5, 0));
    }
    SUBCASE("count formula against brute force for L <= 100") {
        auto s = testutil::sinusoid_series(100, 1);
        for (int L : {1, 7, 23, 64, 100}) {
            RawSeries sub;
            sub.values = Mat(L, 1);
            sub.timestamps.assign(L, 0);
            for (int i = 0; i < L; ++i) {
                sub.values(i, 0) = s.values(i, 0);
                sub.timestamps[i] = i;
            }
            sub.channel_names = {"c"};
            for (int T : {1, 3, 10})
                for (int H : {1, 2, 8})
                    for (int stride : {1, 2, 5}) {
                        std::size_t brute = 0;
                        for (int start = 0; start + T + H <= L; start += stride) ++brute;
                        CHECK(make_windows(sub, T, H, stride).size() == brute);
                    }
        }
    }
    SUBCASE("invalid parameters") {
        auto s = testutil::sinusoid_series(10, 1);
        CHECK_THROWS_AS(make_windows(s, 0, 1, 1), ConfigError);
        CHECK_THROWS_AS(make_windows(s, 1, 1, 0), ConfigError);
    }
}

TEST_CASE("split_chronological") {
    auto windows_of = [](int n, int T, int H, int stride = 1) {
        auto s = testutil::sinusoid_series((n - 1) * stride + T + H, 1);
        return make_windows(s, T, H, stride);
    };

    SUBCASE("proportional counts survive when windows are disjoint") {
        // stride = T+H makes windows non-overlapping, so nothing straddles.
        auto w = windows_of(10, 1, 1, 2);
        REQUIRE(w.size() == 10);
        auto [tr, va, te] = split_chronological(w, SplitSpec{0.6, 0.2, 0.2});
        CHECK(tr.size() == 6);
        CHECK(va.size() == 2);
        CHECK(te.size() == 2);
    }
    SUBCASE("overlapping windows at the boundary are dropped, not reassigned") {
        auto w = windows_of(10, 1, 1);
        REQUIRE(w.size() == 10);
        auto [tr, va, te] = split_chronological(w, SplitSpec{0.6, 0.2, 0.2});
        CHECK(tr.size() == 6);  // train keeps its proportional share
        CHECK(va.size() + te.size() < 4);
    }
    SUBCASE("all-train split") {
        auto w = windows_of(10, 2, 1);
        auto [tr, va, te] = split_chronological(w, SplitSpec{1.0, 0.0, 0.0});
        CHECK(tr.size() == 10);
        CHECK(va.empty());
        CHECK(te.empty());
    }
    SUBCASE("no retained val/test window shares source rows with train (brute force)") {
        auto w = windows_of(100, 5, 5);
        REQUIRE(w.size() == 100);
        auto [tr, va, te] = split_chronological(w, SplitSpec{0.7, 0.1, 0.2});
        std::set<int> train_rows;
        for (const auto& win : tr)
            for (int r = win.start; r < win.start + 10; ++r) train_rows.insert(r);
        auto disjoint = [&](const std::vector<WindowPair>& group) {
            for (const auto& win : group)
                for (int r = win.start; r < win.start + 10; ++r)
                    if (train_rows.count(r)) return false;
            return true;
        };
        CHECK(disjoint(va));
        CHECK(disjoint(te));
        CHECK(!va.empty());
        CHECK(!te.empty());
    }
    SUBCASE("fraction validation") {
        auto w = windows_of(10, 1, 1);
        CHECK_THROWS_AS(split_chronological(w, SplitSpec{0.5, 0.2, 0.2}), ConfigError);
        CHECK_THROWS_AS(split_chronological(w, SplitSpec{-0.1, 0.9, 0.2}), ConfigError);
    }
}

TEST_CASE("subsample_fewshot") {
    auto s = testutil::sinusoid_series(1003, 1);
    auto w = make_windows(s, 2, 2, 1);
    REQUIRE(w.size() == 1000);

    CHECK(subsample_fewshot(w, 0.01).size() == 10);
    CHECK(subsample_fewshot(w, 1.0).size() == 1000);

    // floor gives 0; minimum of one window enforced
    std::vector<WindowPair> fifty(w.begin(), w.begin() + 50);
    CHECK(subsample_fewshot(fifty, 0.01).size() == 1);

    CHECK_THROWS_AS(subsample_fewshot(w, 0.0), ConfigError);
    CHECK_THROWS_AS(subsample_fewshot(w, 1.5), ConfigError);

    SUBCASE("deterministic chronological prefix") {
        const auto a = subsample_fewshot(w, 0.05);
        const auto b = subsample_fewshot(w, 0.05);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].context == b[i].context);
            CHECK(a[i].start == w[i].start);
        }
    }
}
