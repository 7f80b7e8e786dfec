// Benchmarks the OpenMP session kernels against the serial reference and
// checks that both produce identical tallies.

#include <chrono>
#include <cstdio>
#include <cstring>

#include "sspdsim/sessions.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace sspdsim;

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

DeviceProfile bench_device() {
    DeviceProfile dev;
    dev.id = "bench";
    dev.dark_anchor = {0.9, 100.0, DarkAnchor{}.slope_k};
    dev.de_anchors = {{0.75, 1550.0, 0.004}, {0.80, 1550.0, 0.008}, {0.85, 1550.0, 0.015},
                      {0.90, 1550.0, 0.026}, {0.95, 1550.0, 0.040}, {1.00, 1550.0, 0.058}};
    return dev;
}

template <typename Fn>
double time_run(Fn&& fn) {
    const double t0 = now_s();
    fn();
    return now_s() - t0;
}

}  // namespace

int main(int argc, char** argv) {
    std::uint64_t bb84_slots = 20'000'000;
    std::uint64_t bbm92_windows = 200'000'000;
    if (argc > 1) bb84_slots = std::strtoull(argv[1], nullptr, 10);
    if (argc > 2) bbm92_windows = std::strtoull(argv[2], nullptr, 10);

#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP: not available (serial build)\n");
#endif

    Bb84SessionSpec bb;
    bb.device = bench_device();
    bb.channel = {97.0, 0.25, 1.5, 0.0};
    bb.slots = bb84_slots;
    bb.misalignment = 0.0165;

    Bb84Tally t_ser, t_par;
    const double s0 = time_run([&] { t_ser = run_bb84_kernel(bb, 7, nullptr, false); });
    const double s1 = time_run([&] { t_par = run_bb84_kernel(bb, 7, nullptr, true); });
    const bool bb_match = std::memcmp(&t_ser, &t_par, sizeof(t_ser)) == 0;
    std::printf("bb84   %10llu slots   serial %7.3f s   parallel %7.3f s   speedup %5.2fx   %s\n",
                static_cast<unsigned long long>(bb84_slots), s0, s1, s0 / s1,
                bb_match ? "identical" : "MISMATCH");

    Bbm92SessionSpec bm;
    bm.device_a = bench_device();
    bm.device_b = bm.device_a;
    bm.arm_a = {50.0, 0.2, 0.0, 0.0};
    bm.arm_b = bm.arm_a;
    bm.windows = bbm92_windows;
    bm.mean_pairs = 0.08;
    bm.visibility_error = 0.0344;
    bm.gate_fraction = 0.002;

    Bbm92Tally m_ser, m_par;
    const double s2 = time_run([&] { m_ser = run_bbm92_kernel(bm, 7, nullptr, false); });
    const double s3 = time_run([&] { m_par = run_bbm92_kernel(bm, 7, nullptr, true); });
    const bool bm_match = std::memcmp(&m_ser, &m_par, sizeof(m_ser)) == 0;
    std::printf("bbm92  %10llu windows serial %7.3f s   parallel %7.3f s   speedup %5.2fx   %s\n",
                static_cast<unsigned long long>(bbm92_windows), s2, s3, s2 / s3,
                bm_match ? "identical" : "MISMATCH");

    std::printf("bb84 clicks: %llu photon / %llu dark; bbm92 coincidences: %llu (QBER %.4f)\n",
                static_cast<unsigned long long>(t_par.photon_clicks),
                static_cast<unsigned long long>(t_par.dark_clicks),
                static_cast<unsigned long long>(m_par.coincident),
                m_par.sifted ? static_cast<double>(m_par.errors) / m_par.sifted : 0.0);
    return bb_match && bm_match ? 0 : 1;
}
