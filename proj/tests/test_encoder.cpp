#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "ltsmdiff/ltsm_encoder.hpp"
#include "test_util.hpp"

using namespace ltsm;

namespace {

EncoderConfig tiny_config(int d = 2, int T = 4, int H = 2) {
    EncoderConfig cfg;
    cfg.channels = d;
    cfg.width = 8;
    cfg.n_heads = 2;
    cfg.dropout_p = 0.0;
    cfg.n_blocks = 1;
    cfg.lora.rank = 2;
    cfg.lora.dropout_p = 0.0;
    cfg.max_context = 16;
    cfg.lookback = T;
    cfg.horizon = H;
    return cfg;
}

}  // namespace

TEST_CASE("embed and forecast shapes at paper dimensions") {
    EncoderConfig cfg;
    cfg.channels = 7;
    cfg.width = 64;
    cfg.n_heads = 4;
    cfg.dropout_p = 0.0;
    cfg.n_blocks = 2;
    cfg.max_context = 128;
    cfg.lookback = 96;
    cfg.horizon = 96;
    Encoder enc(cfg, 42);

    Rng rng(1);
    const Mat x = rng.normal_mat(96, 7);
    ad::Graph g(false);
    const Mat emb = g.value(enc.embed(g, x));
    CHECK(emb.rows() == 96);
    CHECK(emb.cols() == 64);
    CHECK(all_finite(emb));

    const Mat fc = enc.forecast_eval(x);
    CHECK(fc.rows() == 96);
    CHECK(fc.cols() == 7);
}

TEST_CASE("zero input stays finite") {
    Encoder enc(tiny_config(), 3);
    const Mat fc = enc.forecast_eval(Mat(4, 2));
    CHECK(all_finite(fc));
}

TEST_CASE("channel permutation with permuted projection columns is equivalent") {
    auto cfg = tiny_config(3, 5, 2);
    Encoder enc(cfg, 7);
    Rng rng(2);
    const Mat x = rng.normal_mat(5, 3);
    const Mat base = enc.encode_eval(x);

    const std::vector<int> perm = {2, 0, 1};
    Mat x_perm(5, 3);
    for (int i = 0; i < 5; ++i)
        for (int c = 0; c < 3; ++c) x_perm(i, c) = x(i, perm[c]);

    Encoder enc2(cfg, 7);  // identical weights via identical seed
    // in_proj weight is width×d; permute its input columns to match.
    std::vector<Parameter*> ps = enc2.params();
    for (auto* p : ps) {
        if (p->name == "embedding.in_proj.weight") {
            const Mat w = p->value;
            for (int r = 0; r < w.rows(); ++r)
                for (int c = 0; c < 3; ++c) p->value(r, c) = w(r, perm[c]);
        }
    }
    const Mat permuted = enc2.encode_eval(x_perm);
    CHECK(max_abs_diff(base, permuted) < 1e-9);
}

TEST_CASE("n_blocks=0 makes encode identical to embed") {
    auto cfg = tiny_config();
    cfg.n_blocks = 0;
    Encoder enc(cfg, 11);
    Rng rng(3);
    const Mat x = rng.normal_mat(4, 2);
    ad::Graph g(false);
    const Mat a = g.value(enc.embed(g, x));
    const Mat b = enc.encode_eval(x);
    CHECK(a == b);
}

TEST_CASE("causal property: perturbing step t leaves tokens before t unchanged") {
    auto cfg = tiny_config(2, 6, 2);
    cfg.n_blocks = 2;
    Encoder enc(cfg, 13);
    Rng rng(4);
    const Mat x = rng.normal_mat(6, 2);
    const Mat base = enc.encode_eval(x);

    for (int t : {2, 4, 5}) {
        Mat x2 = x;
        x2(t, 0) += 1.5;
        x2(t, 1) -= 0.75;
        const Mat out = enc.encode_eval(x2);
        for (int i = 0; i < t; ++i)
            for (int c = 0; c < out.cols(); ++c)
                CHECK(std::abs(out(i, c) - base(i, c)) < 1e-9);
        // and the perturbed position itself must actually change
        double delta = 0;
        for (int c = 0; c < out.cols(); ++c) delta += std::abs(out(t, c) - base(t, c));
        CHECK(delta > 1e-8);
    }
}

TEST_CASE("eval-mode determinism") {
    auto cfg = tiny_config();
    cfg.dropout_p = 0.3;  // configured but inactive outside training
    Encoder enc(cfg, 17);
    Rng rng(5);
    const Mat x = rng.normal_mat(4, 2);
    CHECK(enc.forecast_eval(x) == enc.forecast_eval(x));
}

TEST_CASE("encoder loss values") {
    auto quick_loss = [](const Mat& yhat, const Mat& y, bool channel_mean) {
        ad::Graph g(false);
        return g.scalar(Encoder::loss(g, g.input(yhat), y, channel_mean));
    };
    SUBCASE("perfect forecast gives zero") {
        Rng rng(6);
        const Mat y = rng.normal_mat(3, 2);
        CHECK(quick_loss(y, y, true) == 0.0);
    }
    SUBCASE("single-term case H=1 d=1") {
        CHECK(quick_loss(Mat(1, 1, 0.0), Mat(1, 1, 2.0), false) == doctest::Approx(4.0));
    }
    SUBCASE("channel mean flag") {
        const Mat yhat(2, 2, 0.0);
        const Mat y(2, 2, 1.0);
        CHECK(quick_loss(yhat, y, false) == doctest::Approx(2.0));
        CHECK(quick_loss(yhat, y, true) == doctest::Approx(1.0));
    }
    SUBCASE("shape mismatch") {
        ad::Graph g(false);
        CHECK_THROWS(Encoder::loss(g, g.input(Mat(2, 2)), Mat(3, 2), true));
    }
}

TEST_CASE("backbone archive round trip and validation") {
    auto cfg = tiny_config();
    cfg.n_blocks = 2;
    Encoder enc(cfg, 19);

    TensorArchive archive;
    enc.save_backbone(archive);

    SUBCASE("load then save is byte-identical") {
        Encoder enc2(cfg, 999);  // different random init
        enc2.load_backbone(archive, 5);
        TensorArchive archive2;
        enc2.save_backbone(archive2);
        for (const auto& name : archive.names()) CHECK(archive2.get(name) == archive.get(name));

        // With B = 0 after adapter reset, outputs equal the source encoder's
        // frozen backbone applied to the same embedding only if embeddings
        // match; check the frozen tensors directly instead.
        std::vector<Parameter*> ps = enc2.params();
        for (auto* p : ps)
            if (!p->trainable) CHECK(p->value == archive.get(p->name));
    }
    SUBCASE("wrong block count errors and names missing tensors") {
        auto cfg3 = cfg;
        cfg3.n_blocks = 3;
        Encoder enc3(cfg3, 19);
        try {
            enc3.load_backbone(archive, 5);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("block2") != std::string::npos);
        }
    }
}

TEST_CASE("random init is reproducible across constructions") {
    auto cfg = tiny_config();
    Encoder a(cfg, 123), b(cfg, 123);
    Rng rng(7);
    const Mat x = rng.normal_mat(4, 2);
    CHECK(a.encode_eval(x) == b.encode_eval(x));

    Encoder c(cfg, 124);
    CHECK(a.encode_eval(x) != c.encode_eval(x));
}

TEST_CASE("LoRA zero-init composed: adapters with B=0 do not change encode") {
    auto cfg = tiny_config();
    Encoder enc(cfg, 29);
    Rng rng(8);
    const Mat x = rng.normal_mat(4, 2);
    const Mat before = enc.encode_eval(x);
    // Scrambling A while B stays zero must leave the output untouched.
    for (auto* p : enc.params())
        if (p->name.find(".lora_A") != std::string::npos) p->value = rng.normal_mat(
            p->value.rows(), p->value.cols());
    CHECK(enc.encode_eval(x) == before);
}

TEST_CASE("gradient check through encoder loss (tiny config)") {
    auto cfg = tiny_config(2, 4, 2);
    Encoder enc(cfg, 31);
    Rng rng(9);
    const Mat x = rng.normal_mat(4, 2);
    const Mat y = rng.normal_mat(2, 2);

    std::vector<Parameter*> trainables;
    for (auto* p : enc.params())
        if (p->trainable) trainables.push_back(p);

    for (auto* p : trainables) p->zero_grad();
    {
        ad::Graph g;
        ad::Var fc = enc.head_forecast(g, enc.encode(g, x));
        g.backward(Encoder::loss(g, fc, y, true));
    }
    auto loss_value = [&] {
        ad::Graph g(false);
        ad::Var fc = enc.head_forecast(g, enc.encode(g, x));
        return g.scalar(Encoder::loss(g, fc, y, true));
    };
    const auto fd = testutil::finite_difference_check(trainables, loss_value);
    INFO(fd.worst);
    CHECK(fd.max_rel_err < 1e-4);
}

TEST_CASE("parameter breakdown matches closed forms") {
    EncoderConfig cfg;
    cfg.channels = 4;
    cfg.width = 64;
    cfg.n_heads = 4;
    cfg.n_blocks = 6;
    cfg.lora.rank = 8;
    cfg.lookback = 8;
    cfg.horizon = 4;
    cfg.max_context = 16;
    Encoder enc(cfg, 33);
    const auto pb = enc.parameter_breakdown();
    // 3 projections per block, 6 blocks, r·(d_in+d_out) each
    CHECK(pb.lora == 3 * 6 * (8 * 64 + 64 * 8));
    CHECK(pb.head == 64 * 8 * 4 * 4 + 4 * 4);
    CHECK(pb.trainable_total() == pb.lora + pb.embedding + pb.head);
}

TEST_CASE("input validation") {
    Encoder enc(tiny_config(2, 4, 2), 35);
    ad::Graph g(false);
    CHECK_THROWS_AS(enc.embed(g, Mat(4, 3)), ConfigError);   // wrong d
    CHECK_THROWS_AS(enc.embed(g, Mat(99, 2)), ConfigError);  // beyond max_context

    EncoderConfig bad = tiny_config();
    bad.width = 9;  // not divisible by heads
    CHECK_THROWS_AS(Encoder(bad, 1), ConfigError);
}
