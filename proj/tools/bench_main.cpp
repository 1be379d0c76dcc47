// Timing harness for the two OpenMP kernels against their serial reference
// implementations. Each section first checks that parallel and serial
// results are identical (the references exist for exactly that purpose),
// then reports wall times and the speedup.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "cadre/dataset.hpp"
#include "cadre/point_metrics.hpp"
#include "cadre/render.hpp"
#include "cadre/rng.hpp"
#include "cadre/sampling.hpp"

namespace {

using clk = std::chrono::steady_clock;

double ms_per_call(const std::function<void()>& fn, int repeats) {
    fn();  // warm-up outside the timed window
    const auto t0 = clk::now();
    for (int i = 0; i < repeats; ++i) fn();
    const auto t1 = clk::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
}

bool same_image(const cadre::Image& a, const cadre::Image& b) {
    return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
}

bool same_hits(const std::vector<cadre::NearestHit>& a,
               const std::vector<cadre::NearestHit>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].index != b[i].index || a[i].sq_dist != b[i].sq_dist) return false;
    return true;
}

int bench_render(int repeats) {
    cadre::Rng rng(11);
    const cadre::TriMesh mesh = cadre::make_shape(0, rng);
    const cadre::Quaternion rot =
        cadre::Quaternion::from_axis_angle({0.3, 0.9, 0.1}, 1.1);

    std::printf("render_view: depth-shaded silhouette raster\n");
    std::printf("  %-12s %12s %12s %9s %s\n", "resolution", "serial ms", "parallel ms",
                "speedup", "identical");
    int failures = 0;
    for (int res : {64, 128, 256, 512}) {
        const cadre::Image serial = cadre::render_view_serial(mesh, rot, res);
        const cadre::Image parallel = cadre::render_view(mesh, rot, res);
        const bool ok = same_image(serial, parallel);
        failures += ok ? 0 : 1;
        const double ts =
            ms_per_call([&] { cadre::render_view_serial(mesh, rot, res); }, repeats);
        const double tp = ms_per_call([&] { cadre::render_view(mesh, rot, res); }, repeats);
        std::printf("  %4dx%-7d %12.3f %12.3f %8.2fx %s\n", res, res, ts, tp, ts / tp,
                    ok ? "yes" : "NO");
    }
    return failures;
}

int bench_nearest(int repeats) {
    cadre::Rng rng(23);
    const cadre::TriMesh ma = cadre::make_shape(1, rng);
    const cadre::TriMesh mb = cadre::make_shape(2, rng);

    std::printf("\ncross_nearest: bidirectional nearest neighbors between clouds\n");
    std::printf("  %-12s %12s %12s %9s %s\n", "points", "serial ms", "parallel ms",
                "speedup", "identical");
    int failures = 0;
    for (int n : {1000, 5000, 20000}) {
        const cadre::PointCloud a = cadre::sample_surface(ma, n, 101);
        const cadre::PointCloud b = cadre::sample_surface(mb, n, 202);
        const cadre::CrossNearest serial = cadre::cross_nearest_serial(a, b);
        const cadre::CrossNearest parallel = cadre::cross_nearest(a, b);
        const bool ok = same_hits(serial.a_to_b, parallel.a_to_b) &&
                        same_hits(serial.b_to_a, parallel.b_to_a);
        failures += ok ? 0 : 1;
        // The serial path is quadratic; keep its repeat count affordable.
        const int serial_repeats = n >= 20000 ? 1 : repeats;
        const double ts =
            ms_per_call([&] { cadre::cross_nearest_serial(a, b); }, serial_repeats);
        const double tp = ms_per_call([&] { cadre::cross_nearest(a, b); }, repeats);
        std::printf("  %-12d %12.3f %12.3f %8.2fx %s\n", n, ts, tp, ts / tp,
                    ok ? "yes" : "NO");
    }
    return failures;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernel timings: serial reference vs OpenMP implementation"};
    int repeats = 5;
    app.add_option("--repeats", repeats, "timed repetitions per measurement")
        ->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d\n\n", omp_get_max_threads());
#else
    std::printf("OpenMP disabled in this build\n\n");
#endif

    const int failures = bench_render(repeats) + bench_nearest(repeats);
    if (failures > 0) {
        std::fprintf(stderr, "%d result mismatch(es) between serial and parallel\n",
                     failures);
        return 1;
    }
    return 0;
}
