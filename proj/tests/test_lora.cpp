#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ltsmdiff/lora.hpp"
#include "ltsmdiff/training.hpp"
#include "test_util.hpp"

using namespace ltsm;

namespace {

Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

}  // namespace

TEST_CASE("zero-init identity: adapted equals frozen exactly") {
    Rng rng(31);
    LoRAConfig cfg;
    cfg.rank = 4;
    cfg.dropout_p = 0.0;
    auto adapter = LoRAAdapter::init("proj", rng.normal_mat(6, 8), rng.normal_mat(1, 6), cfg, 99);

    const Mat x = rng.normal_mat(5, 8);
    ad::Graph g(false);
    ad::Var xin = g.input(x);
    const Mat adapted = g.value(adapter.forward(g, xin));
    const Mat frozen = g.value(adapter.frozen_forward(g, xin));
    CHECK(adapted == frozen);  // error exactly 0
}

TEST_CASE("trainable parameter count r*(d_in+d_out)") {
    Rng rng(32);
    LoRAConfig cfg;
    cfg.rank = 8;
    auto a64 = LoRAAdapter::init("p", rng.normal_mat(64, 64), Mat(), cfg, 1);
    CHECK(a64.trainable_count() == 1024);

    cfg.rank = 2;
    auto a4 = LoRAAdapter::init("q", rng.normal_mat(4, 4), Mat(), cfg, 1);
    CHECK(a4.trainable_count() == 16);
}

TEST_CASE("init validation and determinism") {
    Rng rng(33);
    const Mat w = rng.normal_mat(4, 4);

    LoRAConfig bad;
    bad.rank = 0;
    CHECK_THROWS_AS(LoRAAdapter::init("p", w, Mat(), bad, 1), ConfigError);
    bad.rank = 5;
    CHECK_THROWS_AS(LoRAAdapter::init("p", w, Mat(), bad, 1), ConfigError);

    LoRAConfig ok;
    ok.rank = 2;
    auto a1 = LoRAAdapter::init("p", w, Mat(), ok, 123);
    auto a2 = LoRAAdapter::init("p", w, Mat(), ok, 123);
    CHECK(a1.lora_a().value == a2.lora_a().value);  // bitwise reproducible
    CHECK(a1.lora_b().value == Mat(4, 2));          // B starts at zero
}

TEST_CASE("hand-computed adapted forward") {
    // frozen_W = I2, A = [[1, 0]], B = [[1], [0]], alpha/r = 1, x = (3, 5).
    LoRAConfig cfg;
    cfg.rank = 1;
    cfg.alpha = 1.0;
    cfg.dropout_p = 0.0;
    auto adapter = LoRAAdapter::init("p", identity(2), Mat(), cfg, 7);
    adapter.lora_a().value = Mat::from_rows({{1.0, 0.0}});
    adapter.lora_b().value = Mat::from_rows({{1.0}, {0.0}});

    ad::Graph g(false);
    const Mat out = g.value(adapter.forward(g, g.input(Mat::from_rows({{3.0, 5.0}}))));
    CHECK(out(0, 0) == doctest::Approx(6.0));
    CHECK(out(0, 1) == doctest::Approx(5.0));
}

TEST_CASE("eval-mode determinism with dropout configured") {
    Rng rng(34);
    LoRAConfig cfg;
    cfg.rank = 2;
    cfg.dropout_p = 0.5;
    auto adapter = LoRAAdapter::init("p", rng.normal_mat(4, 4), Mat(), cfg, 5);
    adapter.lora_b().value = rng.normal_mat(4, 2);  // make the adapter path live

    const Mat x = rng.normal_mat(3, 4);
    ad::Graph g1(false), g2(false);
    const Mat o1 = g1.value(adapter.forward(g1, g1.input(x), /*training=*/false));
    const Mat o2 = g2.value(adapter.forward(g2, g2.input(x), /*training=*/false));
    CHECK(o1 == o2);
}

TEST_CASE("freeze invariance: optimizer steps leave frozen tensors bitwise intact") {
    Rng rng(35);
    LoRAConfig cfg;
    cfg.rank = 2;
    cfg.dropout_p = 0.0;
    auto adapter = LoRAAdapter::init("p", rng.normal_mat(4, 4), rng.normal_mat(1, 4), cfg, 5);
    const Mat w0 = adapter.frozen_weight().value;
    const Mat b0 = adapter.frozen_bias().value;
    const Mat a0 = adapter.lora_a().value;

    AdamOptimizer opt({&adapter.lora_a(), &adapter.lora_b()}, 1e-2);
    const Mat x = rng.normal_mat(6, 4);
    const Mat target = rng.normal_mat(6, 4);
    for (int step = 0; step < 20; ++step) {
        opt.zero_grad();
        ad::Graph g;
        ad::Var out = adapter.forward(g, g.input(x));
        ad::Var loss = g.sum_sq(g.sub(out, g.input(target)));
        g.backward(loss);
        opt.step();
    }
    CHECK(adapter.frozen_weight().value == w0);
    CHECK(adapter.frozen_bias().value == b0);
    CHECK(adapter.lora_a().value != a0);
    CHECK(max_abs(adapter.lora_b().value) > 0);
}

TEST_CASE("gradient correctness on a 4x4 toy adapter") {
    Rng rng(36);
    LoRAConfig cfg;
    cfg.rank = 2;
    cfg.dropout_p = 0.0;
    auto adapter = LoRAAdapter::init("p", rng.normal_mat(4, 4), rng.normal_mat(1, 4), cfg, 5);
    adapter.lora_b().value = rng.normal_mat(4, 2);  // move off the zero point

    const Mat x = rng.normal_mat(3, 4);
    const Mat target = rng.normal_mat(3, 4);
    auto loss_value = [&] {
        ad::Graph g(false);
        ad::Var out = adapter.forward(g, g.input(x));
        return g.scalar(g.sum_sq(g.sub(out, g.input(target))));
    };

    std::vector<Parameter*> trainables{&adapter.lora_a(), &adapter.lora_b()};
    for (auto* p : trainables) p->zero_grad();
    {
        ad::Graph g;
        ad::Var out = adapter.forward(g, g.input(x));
        g.backward(g.sum_sq(g.sub(out, g.input(target))));
    }
    const auto fd = testutil::finite_difference_check(trainables, loss_value);
    INFO(fd.worst);
    CHECK(fd.max_rel_err < 1e-4);
}

TEST_CASE("adapter path is linear in x (superposition within 1e-9)") {
    Rng rng(37);
    LoRAConfig cfg;
    cfg.rank = 3;
    cfg.dropout_p = 0.0;
    auto adapter = LoRAAdapter::init("p", rng.normal_mat(5, 5), rng.normal_mat(1, 5), cfg, 5);
    adapter.lora_b().value = rng.normal_mat(5, 3);

    auto delta = [&](const Mat& x) {
        ad::Graph g(false);
        ad::Var xin = g.input(x);
        return g.value(adapter.forward(g, xin)) - g.value(adapter.frozen_forward(g, xin));
    };
    const Mat x1 = rng.normal_mat(4, 5);
    const Mat x2 = rng.normal_mat(4, 5);
    const Mat lhs = delta(x1 + x2 * 3.0);
    const Mat rhs = delta(x1) + delta(x2) * 3.0;
    CHECK(max_abs_diff(lhs, rhs) < 1e-9);
}
