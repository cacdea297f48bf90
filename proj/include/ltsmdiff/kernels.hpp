#pragma once

#include "ltsmdiff/mat.hpp"

namespace ltsm::kernels {

/// Execution mode for the matrix kernels. kAuto parallelizes large products
/// and stays serial for small ones; kSerial / kParallel force one path.
/// Both paths compute every output element with the identical per-element
/// operation order, so results are bitwise equal regardless of mode or
/// thread count.
enum class ExecMode { kAuto, kSerial, kParallel };

void set_mode(ExecMode mode);
ExecMode mode();

/// Caps the OpenMP thread count used by the parallel kernels (0 = library default).
void set_threads(int n);
int max_threads();

// Dispatching entry points. C is resized as needed.
void matmul(const Mat& a, const Mat& b, Mat& c);     // C = A·B
void matmul_nt(const Mat& a, const Mat& b, Mat& c);  // C = A·Bᵀ
void matmul_tn(const Mat& a, const Mat& b, Mat& c);  // C = Aᵀ·B

inline Mat matmul(const Mat& a, const Mat& b) {
    Mat c;
    matmul(a, b, c);
    return c;
}
inline Mat matmul_nt(const Mat& a, const Mat& b) {
    Mat c;
    matmul_nt(a, b, c);
    return c;
}
inline Mat matmul_tn(const Mat& a, const Mat& b) {
    Mat c;
    matmul_tn(a, b, c);
    return c;
}

// Reference implementations, kept callable for tests and benchmarks.
namespace serial {
void matmul(const Mat& a, const Mat& b, Mat& c);
void matmul_nt(const Mat& a, const Mat& b, Mat& c);
void matmul_tn(const Mat& a, const Mat& b, Mat& c);
}  // namespace serial

namespace parallel {
void matmul(const Mat& a, const Mat& b, Mat& c);
void matmul_nt(const Mat& a, const Mat& b, Mat& c);
void matmul_tn(const Mat& a, const Mat& b, Mat& c);
}  // namespace parallel

}  // namespace ltsm::kernels
