#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ltsmdiff/kernels.hpp"
#include "ltsmdiff/rng.hpp"
#include "test_util.hpp"

using namespace ltsm;

namespace {

Mat naive_matmul(const Mat& a, const Mat& b) {
    Mat c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

}  // namespace

TEST_CASE("matmul agrees with the naive triple loop") {
    Rng rng(1);
    const Mat a = rng.normal_mat(13, 7);
    const Mat b = rng.normal_mat(7, 11);
    const Mat expect = naive_matmul(a, b);
    CHECK(max_abs_diff(kernels::matmul(a, b), expect) < 1e-12);
    CHECK(max_abs_diff(kernels::matmul_nt(a, transpose(b)), expect) < 1e-12);
    CHECK(max_abs_diff(kernels::matmul_tn(transpose(a), b), expect) < 1e-12);
}

TEST_CASE("serial and parallel kernels are bitwise identical") {
    Rng rng(2);
    const int shapes[][3] = {{1, 1, 1}, {3, 5, 4}, {17, 33, 9}, {64, 64, 64}, {97, 13, 131}};
    for (const auto& s : shapes) {
        const Mat a = rng.normal_mat(s[0], s[1]);
        const Mat b = rng.normal_mat(s[1], s[2]);
        Mat cs, cp;
        kernels::serial::matmul(a, b, cs);
        kernels::parallel::matmul(a, b, cp);
        CHECK(cs == cp);

        const Mat bt = rng.normal_mat(s[2], s[1]);
        kernels::serial::matmul_nt(a, bt, cs);
        kernels::parallel::matmul_nt(a, bt, cp);
        CHECK(cs == cp);

        const Mat a2 = rng.normal_mat(s[1], s[0]);
        kernels::serial::matmul_tn(a2, b, cs);
        kernels::parallel::matmul_tn(a2, b, cp);
        CHECK(cs == cp);
    }
}

TEST_CASE("dispatch mode is bitwise stable") {
    Rng rng(3);
    const Mat a = rng.normal_mat(50, 40);
    const Mat b = rng.normal_mat(40, 60);
    kernels::set_mode(kernels::ExecMode::kSerial);
    const Mat cs = kernels::matmul(a, b);
    kernels::set_mode(kernels::ExecMode::kParallel);
    const Mat cp = kernels::matmul(a, b);
    kernels::set_mode(kernels::ExecMode::kAuto);
    const Mat ca = kernels::matmul(a, b);
    CHECK(cs == cp);
    CHECK(cs == ca);
}

TEST_CASE("dimension mismatches are rejected") {
    const Mat a(2, 3), b(4, 5);
    Mat c;
    CHECK_THROWS(kernels::matmul(a, b, c));
    CHECK_THROWS(kernels::matmul_nt(a, b, c));
    CHECK_THROWS(kernels::matmul_tn(a, b, c));
}
