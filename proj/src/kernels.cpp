#include "ltsmdiff/kernels.hpp"

#include <atomic>
#include <cstdint>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ltsm::kernels {

namespace {

std::atomic<ExecMode> g_mode{ExecMode::kAuto};
std::atomic<int> g_threads{0};

// Below this many multiply-adds the OpenMP fork overhead dominates.
constexpr std::int64_t kParallelFlopThreshold = 32 * 1024;

int effective_threads() {
#ifdef _OPENMP
    int n = g_threads.load();
    return n > 0 ? n : omp_get_max_threads();
#else
    return 1;
#endif
}

void check_inner(int a_inner, int b_inner, const char* what) {
    if (a_inner != b_inner)
        throw std::invalid_argument(std::string(what) + ": inner dimension mismatch (" +
                                    std::to_string(a_inner) + " vs " + std::to_string(b_inner) + ")");
}

// Per-output-row workers. The serial and parallel paths both call these,
// one row at a time, so each C(i,j) accumulates in the same order.

inline void matmul_row(const Mat& a, const Mat& b, Mat& c, int i) {
    const int k = a.cols();
    const int n = b.cols();
    const double* arow = a.data() + static_cast<std::size_t>(i) * k;
    double* crow = c.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = 0.0;
    for (int p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b.data() + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void matmul_nt_row(const Mat& a, const Mat& b, Mat& c, int i) {
    const int k = a.cols();
    const int n = b.rows();
    const double* arow = a.data() + static_cast<std::size_t>(i) * k;
    double* crow = c.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
        const double* brow = b.data() + static_cast<std::size_t>(j) * k;
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
        crow[j] = s;
    }
}

inline void matmul_tn_row(const Mat& a, const Mat& b, Mat& c, int i) {
    // C = Aᵀ·B with A: k×m, B: k×n; row i of C gathers column i of A.
    const int k = a.rows();
    const int m = a.cols();
    const int n = b.cols();
    double* crow = c.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = 0.0;
    for (int p = 0; p < k; ++p) {
        const double av = a.data()[static_cast<std::size_t>(p) * m + i];
        const double* brow = b.data() + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

bool go_parallel(std::int64_t rows, std::int64_t cols, std::int64_t inner) {
    switch (g_mode.load()) {
        case ExecMode::kSerial: return false;
        case ExecMode::kParallel: return true;
        case ExecMode::kAuto: break;
    }
#ifdef _OPENMP
    return effective_threads() > 1 && rows > 1 && rows * cols * inner >= kParallelFlopThreshold;
#else
    (void)rows;
    (void)cols;
    (void)inner;
    return false;
#endif
}

}  // namespace

void set_mode(ExecMode mode) { g_mode.store(mode); }
ExecMode mode() { return g_mode.load(); }

void set_threads(int n) {
    g_threads.store(n);
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#endif
}

int max_threads() { return effective_threads(); }

namespace serial {

void matmul(const Mat& a, const Mat& b, Mat& c) {
    check_inner(a.cols(), b.rows(), "matmul");
    c = Mat(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) matmul_row(a, b, c, i);
}

void matmul_nt(const Mat& a, const Mat& b, Mat& c) {
    check_inner(a.cols(), b.cols(), "matmul_nt");
    c = Mat(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i) matmul_nt_row(a, b, c, i);
}

void matmul_tn(const Mat& a, const Mat& b, Mat& c) {
    check_inner(a.rows(), b.rows(), "matmul_tn");
    c = Mat(a.cols(), b.cols());
    for (int i = 0; i < a.cols(); ++i) matmul_tn_row(a, b, c, i);
}

}  // namespace serial

namespace parallel {

void matmul(const Mat& a, const Mat& b, Mat& c) {
    check_inner(a.cols(), b.rows(), "matmul");
    c = Mat(a.rows(), b.cols());
    const int rows = a.rows();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) matmul_row(a, b, c, i);
}

void matmul_nt(const Mat& a, const Mat& b, Mat& c) {
    check_inner(a.cols(), b.cols(), "matmul_nt");
    c = Mat(a.rows(), b.rows());
    const int rows = a.rows();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) matmul_nt_row(a, b, c, i);
}

void matmul_tn(const Mat& a, const Mat& b, Mat& c) {
    check_inner(a.rows(), b.rows(), "matmul_tn");
    c = Mat(a.cols(), b.cols());
    const int rows = a.cols();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) matmul_tn_row(a, b, c, i);
}

}  // namespace parallel

void matmul(const Mat& a, const Mat& b, Mat& c) {
    if (go_parallel(a.rows(), b.cols(), a.cols()))
        parallel::matmul(a, b, c);
    else
        serial::matmul(a, b, c);
}

void matmul_nt(const Mat& a, const Mat& b, Mat& c) {
    if (go_parallel(a.rows(), b.rows(), a.cols()))
        parallel::matmul_nt(a, b, c);
    else
        serial::matmul_nt(a, b, c);
}

void matmul_tn(const Mat& a, const Mat& b, Mat& c) {
    if (go_parallel(a.cols(), b.cols(), a.rows()))
        parallel::matmul_tn(a, b, c);
    else
        serial::matmul_tn(a, b, c);
}

}  // namespace ltsm::kernels
