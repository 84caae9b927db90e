// Committor of the circle system from 3000 uniform samples, compared with the
// analytic committor at a few angles.

#include <cmath>
#include <cstdio>
#include <vector>

#include "tmdmap/tmdmap.hpp"

using namespace tmdmap;

int main() {
    const CircleSystem sys = CircleSystem::standard();
    const std::vector<double> theta = sample_circle_angles(CircleDensity::Uniform, 3000, 42);
    const PointCloud cloud = embed_circle(theta);

    const double eps = 0.005;
    const SparseKernel K = build_kernel(cloud, eps);
    const GeneratorBundle L = build_tmdmap(K, kde(K), circle_measure(theta, sys.beta));
    const BvpProblem problem = classify_arcs(theta, sys);
    const FieldSolution q = solve_dirichlet(L, problem);

    const CircleCommittor exact(sys);
    std::printf("n = %zu, eps = %g, solver %s, residual %.2e\n", cloud.size(), eps, q.solver.c_str(), q.residual_norm);
    std::printf("%10s %12s %12s\n", "theta", "q_tmdmap", "q_exact");
    for (double target : {2.2, 2.6, 3.0, 3.4, 3.8, 4.2, 5.5, 0.5}) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < theta.size(); ++i)
            if (angular_distance(theta[i], target) < angular_distance(theta[best], target)) best = i;
        std::printf("%10.4f %12.6f %12.6f\n", theta[best], q.values[best], exact(theta[best]));
    }
    return 0;
}
