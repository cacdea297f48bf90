// Compares the serial reference kernels against the OpenMP variants and
// verifies on the fly that both produce bitwise-identical results.
//
//   ./bench_kernels [sizes...]     (default: 64 128 256 512)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "ltsmdiff/kernels.hpp"
#include "ltsmdiff/rng.hpp"

using namespace ltsm;

namespace {

using Kernel = void (*)(const Mat&, const Mat&, Mat&);

double time_ms(Kernel fn, const Mat& a, const Mat& b, Mat& c, int reps) {
    using clock = std::chrono::steady_clock;
    fn(a, b, c);  // warm up
    const auto t0 = clock::now();
    for (int r = 0; r < reps; ++r) fn(a, b, c);
    const auto t1 = clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void bench_size(int n) {
    Rng rng(42);
    const Mat a = rng.normal_mat(n, n);
    const Mat b = rng.normal_mat(n, n);
    const int reps = n <= 128 ? 20 : (n <= 256 ? 8 : 3);

    struct Row {
        const char* name;
        Kernel serial;
        Kernel parallel;
    };
    const Row rows[] = {
        {"matmul", kernels::serial::matmul, kernels::parallel::matmul},
        {"matmul_nt", kernels::serial::matmul_nt, kernels::parallel::matmul_nt},
        {"matmul_tn", kernels::serial::matmul_tn, kernels::parallel::matmul_tn},
    };

    for (const Row& row : rows) {
        Mat cs, cp;
        const double ts = time_ms(row.serial, a, b, cs, reps);
        const double tp = time_ms(row.parallel, a, b, cp, reps);
        const bool identical = cs == cp;
        std::printf("%-10s n=%-5d serial %8.3f ms   openmp %8.3f ms   speedup %5.2fx   %s\n",
                    row.name, n, ts, tp, ts / tp, identical ? "bitwise-equal" : "MISMATCH");
        if (!identical) std::exit(1);
    }
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> sizes;
    for (int i = 1; i < argc; ++i) sizes.push_back(std::atoi(argv[i]));
    if (sizes.empty()) sizes = {64, 128, 256, 512};
    std::printf("threads: %d\n", kernels::max_threads());
    for (int n : sizes) bench_size(n);
    return 0;
}
