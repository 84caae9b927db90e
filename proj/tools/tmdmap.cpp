#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tmdmap/tmdmap.hpp"

namespace fs = std::filesystem;
using namespace tmdmap;

namespace {

struct Param {
    std::string key;
    std::string fallback;
    std::string help;
};

struct Context {
    Config params;
    fs::path out;
    bool plot = false;
    nlohmann::json summary = nlohmann::json::object();
};

using Runner = std::function<void(Context&)>;

std::string flag_of(const std::string& key) {
    std::string f = "--" + key;
    for (char& c : f)
        if (c == '_') c = '-';
    return f;
}

std::vector<double> list_or_empty(const Config& c, const std::string& key) {
    return c.get(key, "").empty() ? std::vector<double>{} : c.get_list(key, {});
}

std::uint64_t seed_of(const Config& c) { return static_cast<std::uint64_t>(c.get_size("seed", 0)); }

void write_plot(const Context& ctx, const std::vector<PlotSeries>& series, const PlotOptions& opt) {
    if (!ctx.plot) return;
    std::ofstream f(ctx.out / "plot.svg", std::ios::binary);
    f << svg_line_plot(series, opt);
}

// ---------------------------------------------------------------------------

std::vector<double> default_start(const std::string& potential) {
    if (potential == "mueller") return {-0.558, 1.441};
    if (potential == "twowell") return {-1.0, 0.0};
    if (potential == "circle") return {std::cos(1.8235), std::sin(1.8235)};
    return {};
}

void run_sample(Context& ctx) {
    const Config& p = ctx.params;
    const std::string method = p.get("method", "em");
    const std::uint64_t seed = seed_of(p);
    PointCloud cloud;
    if (method == "circle-uniform" || method == "circle-nonuniform") {
        cloud = sample_circle_density(method == "circle-uniform" ? CircleDensity::Uniform
                                                                 : CircleDensity::FractionalNormal,
                                      p.get_size("n", 0), seed);
    } else {
        const std::string name = p.get("potential", "");
        const double beta = p.get_double("beta", 0.0);
        const PotentialSystem sys = beta > 0.0 ? make_potential(name, beta) : make_potential(name);
        std::vector<double> x0 = list_or_empty(p, "x0");
        if (x0.empty()) x0 = default_start(name);
        if (x0.size() != sys.dim) throw DimensionError("x0 must have " + std::to_string(sys.dim) + " coordinates");
        if (method == "em") {
            cloud = euler_maruyama(sys, x0, p.get_double("dt", 0), p.get_size("n_steps", 0), p.get_size("subsample", 1),
                                   seed);
        } else if (method == "metad") {
            MetadynamicsParams mp;
            mp.w0 = p.get_double("metad_w0", mp.w0);
            mp.sigma = p.get_double("metad_sigma", mp.sigma);
            mp.stride = p.get_size("metad_stride", mp.stride);
            mp.dt = p.get_double("dt", mp.dt);
            mp.n_steps = p.get_size("n_steps", mp.n_steps);
            mp.record_stride = p.get_size("subsample", 1);
            mp.seed = seed;
            cloud = metadynamics(sys, mp, x0);
        } else {
            throw DomainError("unknown sampling method '" + method + "'");
        }
    }
    const std::size_t raw = cloud.size();
    if (const double delta = p.get_double("delta", 0.0); delta > 0.0) cloud = delta_net(cloud, {delta});
    cloud_table(cloud).write(ctx.out / "results.csv");
    ctx.summary["n_sampled"] = raw;
    ctx.summary["n"] = cloud.size();
}

void run_ksum(Context& ctx) {
    const Config& p = ctx.params;
    const PointCloud cloud = read_cloud(p.get("cloud", ""));
    const KsumResult r = ksum_scan(
        cloud, log_spaced(p.get_double("eps_min", 0), p.get_double("eps_max", 0), p.get_size("grid_size", 0)));
    CsvTable t({"epsilon", "S", "dlogS_dlogeps"});
    PlotSeries s{"S(eps)", {}, {}};
    for (const auto& row : r.table) {
        t.row() << row.epsilon << row.sum << row.log_slope;
        s.x.push_back(row.epsilon);
        s.y.push_back(row.sum);
    }
    t.write(ctx.out / "results.csv");
    ctx.summary["n"] = cloud.size();
    ctx.summary["eps_star"] = r.eps_star;
    write_plot(ctx, {s}, {"Kernel sum", "epsilon", "S", true, true});
}

// Shared setup of solve-committor and tpt-summary.
struct CommittorRun {
    PointCloud cloud;
    PotentialSystem sys;
    double epsilon = 0.0;
    double cutoff = 0.0;
    GeneratorBundle bundle;
    BvpProblem problem;
    FieldSolution solution;
};

SolverStrategy parse_solver(const std::string& s) {
    if (s == "auto") return SolverStrategy::Auto;
    if (s == "direct") return SolverStrategy::Direct;
    if (s == "dense") return SolverStrategy::Dense;
    if (s == "iterative") return SolverStrategy::Iterative;
    throw DomainError("solver must be auto, direct, dense or iterative");
}

CommittorRun solve_committor(Context& ctx) {
    const Config& p = ctx.params;
    CommittorRun r;
    r.cloud = read_cloud(p.get("cloud", ""));
    const std::string name = p.get("potential", "");
    const double beta = p.get_double("beta", 0.0);
    r.sys = beta > 0.0 ? make_potential(name, beta) : make_potential(name);
    r.cutoff = p.get_double("cutoff", 1e-8);
    const std::string eps = p.get("eps", "auto");
    r.epsilon = eps == "auto" ? ksum_scan(r.cloud, default_ksum_grid()).eps_star : p.get_double("eps", 0.0);
    KernelOptions ko;
    ko.cutoff = r.cutoff;
    const SparseKernel K = build_kernel(r.cloud, r.epsilon, ko);
    r.bundle = build_tmdmap(K, kde(K), target_measure(r.sys, r.cloud));

    std::vector<double> a = list_or_empty(p, "a_center"), b = list_or_empty(p, "b_center");
    if (name == "circle" && a.empty() && b.empty()) {
        std::vector<double> theta(r.cloud.size());
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = circle_angle(r.cloud[i]);
        CircleSystem cs = CircleSystem::standard();
        cs.beta = r.sys.beta;
        r.problem = classify_arcs(theta, cs);
    } else {
        if (a.empty() || b.empty()) {
            const SweepSystem s = sweep_system(SweepConfig{name});
            if (a.empty()) a.assign(s.a.begin(), s.a.end());
            if (b.empty()) b.assign(s.b.begin(), s.b.end());
        }
        r.problem = classify_ab(r.cloud, a, b, p.get_double("radius", 0.1));
    }
    SolverOptions so;
    so.strategy = parse_solver(p.get("solver", "auto"));
    r.solution = solve_dirichlet(r.bundle, r.problem, so);
    const MaximumPrincipleReport mp = check_maximum_principle(r.problem, r.solution);

    ctx.summary["n"] = r.cloud.size();
    ctx.summary["eps"] = r.epsilon;
    ctx.summary["cutoff"] = r.cutoff;
    ctx.summary["nnz"] = r.bundle.markov.nnz();
    ctx.summary["interior"] = r.problem.interior.size();
    ctx.summary["solver"] = r.solution.solver;
    ctx.summary["residual"] = r.solution.residual_norm;
    ctx.summary["iterations"] = r.solution.iterations;
    ctx.summary["maximum_principle"] = mp.satisfied;
    return r;
}

void run_solve_committor(Context& ctx) {
    const CommittorRun r = solve_committor(ctx);
    cloud_table(r.cloud, {{"q", &r.solution.values}}).write(ctx.out / "results.csv");
    if (ctx.params.get_size("export_matrices", 0) != 0) {
        std::ofstream pf(ctx.out / "P.mtx", std::ios::binary), lf(ctx.out / "L.mtx", std::ios::binary);
        write_matrix_market(pf, r.bundle.markov);
        write_matrix_market(lf, r.bundle.generator());
    }
}

void run_tpt_summary(Context& ctx) {
    const CommittorRun r = solve_committor(ctx);
    std::vector<double> q = r.solution.values;
    for (double& v : q) v = std::clamp(v, 0.0, 1.0);
    const TptQuantities t = compute_tpt(r.cloud, q, r.bundle.mu, r.bundle.kde, r.sys, r.problem, r.epsilon,
                                        ctx.params.get_size("k", 0));
    cloud_table(r.cloud, {{"q", &r.solution.values}, {"weight", &t.weights}}).write(ctx.out / "results.csv");
    nlohmann::json j;
    j["nu_AB"] = t.nu_AB;
    j["rho_A"] = t.rho_A;
    j["k_AB"] = t.k_AB;
    j["n"] = t.n;
    j["eps"] = t.epsilon;
    j["warnings"] = t.warnings;
    write_json(ctx.out / "tpt.json", j);
    ctx.summary["tpt"] = j;
}

// ---------------------------------------------------------------------------

void run_bias(Context& ctx) {
    const Config& p = ctx.params;
    BiasConfig cfg;
    cfg.eps_grid = list_or_empty(p, "eps_grid");
    cfg.repeats = p.get_size("repeats", cfg.repeats);
    cfg.seed = seed_of(p);
    cfg.schedule_c = p.get_double("schedule_c", cfg.schedule_c);
    cfg.cutoff = p.get_double("cutoff", cfg.cutoff);
    cfg.workers = p.get_size("workers", 0);
    const BiasResult r = bias_prefactor_experiment(cfg);

    CsvTable t({"density", "test_function", "a", "b", "abs_b", "se_b", "c2", "c2_lo", "c2_hi"});
    std::vector<PlotSeries> series;
    for (const auto& f : r.fits) {
        t.row() << f.density << f.test_function << f.fit.a << f.fit.b << f.prefactor() << f.fit.se_b << f.trend.c2
                << f.trend.c2_lo << f.trend.c2_hi;
        series.push_back({f.density + ", " + f.test_function, f.eps_values, f.mean_errors});
    }
    t.write(ctx.out / "results.csv");

    CsvTable s({"density", "epsilon", "n", "repeat", "seed", "row_size", "error_sin", "error_committor"});
    for (const auto& b : r.samples)
        s.row() << density_tag(b.density) << r.eps_values[b.eps_index] << b.n << b.repeat << std::to_string(b.seed)
                << b.row_size << b.error_sin << b.error_committor;
    s.write(ctx.out / "samples.csv");
    write_plot(ctx, series, {"Mean consistency error at theta = pi", "epsilon", "error", false, false});
}

void run_rmse_sweep(Context& ctx) {
    const Config& p = ctx.params;
    SweepConfig cfg;
    cfg.potential = p.get("potential", cfg.potential);
    cfg.beta = p.get_double("beta", cfg.beta);
    cfg.seed = seed_of(p);
    cfg.dt = p.get_double("dt", cfg.dt);
    cfg.n_steps = p.get_size("n_steps", cfg.n_steps);
    cfg.subsample = p.get_size("subsample", cfg.subsample);
    cfg.metad_w0 = p.get_double("metad_w0", cfg.metad_w0);
    cfg.metad_sigma = p.get_double("metad_sigma", cfg.metad_sigma);
    cfg.metad_stride = p.get_size("metad_stride", cfg.metad_stride);
    cfg.deltas = p.get_list("deltas", cfg.deltas);
    cfg.grid_cloud_target = p.get_size("grid_cloud_target", cfg.grid_cloud_target);
    cfg.reference_n = p.get_size("reference_n", cfg.reference_n);
    cfg.check_n = p.get_size("check_n", cfg.check_n);
    cfg.energy_cutoff = p.get_double("energy_cutoff", cfg.energy_cutoff);
    cfg.radius = p.get_double("radius", cfg.radius);
    cfg.eps_k_lo = static_cast<int>(p.get_double("eps_k_lo", cfg.eps_k_lo));
    cfg.eps_k_hi = static_cast<int>(p.get_double("eps_k_hi", cfg.eps_k_hi));
    cfg.workers = p.get_size("workers", 0);
    cfg.max_nonzeros = p.get_size("max_nonzeros", cfg.max_nonzeros);
    const SweepResult r = rmse_sweep(cfg);

    CsvTable t({"method", "delta", "epsilon", "is_ksum", "n", "scored", "rmse", "rmse_sqrt_n", "maximum_principle",
                "status"});
    std::map<std::string, PlotSeries> curves;
    std::vector<std::string> order;
    for (const auto& row : r.rows) {
        t.row() << row.method << row.delta << row.epsilon << row.is_ksum << row.n << row.scored << row.rmse
                << row.rmse_normalized << row.maximum_principle << row.status;
        const std::string key = row.method + (row.delta > 0.0 ? " " + format_double(row.delta) : "");
        if (!curves.count(key)) order.push_back(key), curves[key].name = key;
        if (row.status == "ok") {
            curves[key].x.push_back(row.epsilon);
            curves[key].y.push_back(row.rmse_normalized);
        }
    }
    t.write(ctx.out / "results.csv");

    CsvTable s({"method", "delta", "n", "eps_star", "best_eps", "best_rmse", "best_rmse_sqrt_n", "flatness_ratio",
                "reference_change", "outside_reference", "status"});
    for (const auto& m : r.summary)
        s.row() << m.method << m.delta << m.n << m.eps_star << m.best_eps << m.best_rmse << m.best_rmse_normalized
                << m.flatness_ratio << m.reference_change << m.outside_reference << m.status;
    s.write(ctx.out / "summary.csv");
    ctx.summary["reference_residual"] = r.reference_residual;
    std::vector<PlotSeries> series;
    for (const auto& k : order) series.push_back(curves[k]);
    write_plot(ctx, series, {"Committor error, " + cfg.potential, "epsilon", "RMSE / sqrt(n)", true, true});
}

void run_hexagon(Context& ctx) {
    const Config& p = ctx.params;
    HexagonConfig cfg;
    cfg.n_r.clear();
    for (double v : p.get_list("n_r", {50, 150, 250, 350, 450})) {
        if (!(v >= 0.0) || v != std::floor(v)) throw DomainError("n_r values must be integers");
        cfg.n_r.push_back(static_cast<std::size_t>(v));
    }
    cfg.eps_lo = p.get_double("eps_lo", cfg.eps_lo);
    cfg.eps_hi = p.get_double("eps_hi", cfg.eps_hi);
    cfg.scan_points = p.get_size("scan_points", cfg.scan_points);
    cfg.cross_check_n_r = p.get_size("cross_check_n_r", cfg.cross_check_n_r);
    cfg.cross_check_eps_factor = p.get_double("cross_check_eps_factor", cfg.cross_check_eps_factor);
    const HexagonStudy st = hexagon_study(cfg);

    CsvTable t({"n_r", "delta", "n", "epsilon", "biased", "unbiased"});
    CsvTable s({"n_r", "delta", "n", "eps_opt", "error_at_opt", "local_minima"});
    std::vector<PlotSeries> series;
    for (const auto& rec : st.records) {
        for (std::size_t k = 0; k < rec.eps_grid.size(); ++k)
            t.row() << rec.n_r << rec.delta << rec.n << rec.eps_grid[k] << rec.biased[k] << rec.unbiased[k];
        std::string minima;
        for (double m : rec.local_minima) minima += (minima.empty() ? "" : ";") + format_double(m);
        s.row() << rec.n_r << rec.delta << rec.n << rec.eps_opt << rec.error_at_opt << minima;
        series.push_back({"n_r = " + std::to_string(rec.n_r), rec.eps_grid, rec.biased});
    }
    t.write(ctx.out / "results.csv");
    s.write(ctx.out / "summary.csv");
    ctx.summary["fit_coef"] = st.fit.coef;
    ctx.summary["fit_exponent"] = st.fit.exponent;
    ctx.summary["cross_check_n_r"] = st.cross_check_n_r;
    ctx.summary["cross_check_eps"] = st.cross_check_eps;
    ctx.summary["cross_check_difference"] = st.cross_check_difference;
    write_plot(ctx, series, {"Biased KDE relative error at the centre", "epsilon", "relative error", true, true});
}

// ---------------------------------------------------------------------------

struct Spec {
    std::string command;  // as stored in the manifest
    std::string description;
    std::vector<Param> params;
    Runner run;
};

const std::vector<Param> kSolveParams = {
    {"cloud", "", "point cloud CSV (x1,...,xm)"},
    {"potential", "twowell", "circle, mueller or twowell"},
    {"beta", "0", "inverse temperature (0: potential default)"},
    {"eps", "auto", "bandwidth or 'auto' for the kernel-sum choice"},
    {"cutoff", "1e-8", "kernel sparsification threshold"},
    {"a_center", "", "centre of A, comma separated (default per potential)"},
    {"b_center", "", "centre of B, comma separated (default per potential)"},
    {"radius", "0.1", "radius of the balls A and B"},
    {"solver", "auto", "auto, direct, dense or iterative"},
};

std::vector<Spec> specs() {
    std::vector<Param> solve = kSolveParams;
    solve.push_back({"export_matrices", "0", "1: also write P.mtx and L.mtx"});
    std::vector<Param> tpt = kSolveParams;
    tpt.push_back({"k", "0", "neighbours for gradient estimation (0: default)"});
    return {
        {"sample", "draw a point cloud",
         {{"potential", "twowell", "circle, mueller or twowell"},
          {"method", "em", "em, metad, circle-uniform or circle-nonuniform"},
          {"beta", "0", "inverse temperature (0: potential default)"},
          {"seed", "1", "random seed"},
          {"n", "10000", "points for the circle methods"},
          {"x0", "", "start point (default: a minimum of the potential)"},
          {"dt", "1e-4", "time step"},
          {"n_steps", "1000000", "number of steps"},
          {"subsample", "100", "keep every k-th state"},
          {"metad_w0", "0.5", "bump height"},
          {"metad_sigma", "0.1", "bump width"},
          {"metad_stride", "100", "steps between deposits"},
          {"delta", "0", "delta-net radius applied to the samples (0: none)"}},
         run_sample},
        {"ksum", "kernel-sum bandwidth scan",
         {{"cloud", "", "point cloud CSV"},
          {"eps_min", "1e-4", "smallest bandwidth"},
          {"eps_max", "10", "largest bandwidth"},
          {"grid_size", "64", "number of log-spaced bandwidths"}},
         run_ksum},
        {"solve-committor", "TMDmap committor on a point cloud", solve, run_solve_committor},
        {"tpt-summary", "reactive flux, rate and rho_A from the TMDmap committor", tpt, run_tpt_summary},
        {"experiment bias-prefactor", "bias prefactor regression on the circle",
         {{"eps_grid", "", "bandwidths (default: 10 values in [0.023, 0.033])"},
          {"repeats", "50", "repeats per bandwidth"},
          {"seed", "20240101", "random seed"},
          {"schedule_c", "0.25", "constant in n / log n = c eps^-5/2"},
          {"cutoff", "1e-8", "kernel sparsification threshold"},
          {"workers", "0", "worker threads (0: hardware)"}},
         run_bias},
        {"experiment rmse-sweep", "committor RMSE against bandwidth for several samplers",
         {{"potential", "twowell", "mueller or twowell"},
          {"beta", "0", "inverse temperature (0: potential default)"},
          {"seed", "7", "random seed"},
          {"dt", "1e-4", "time step"},
          {"n_steps", "1000000", "steps per trajectory"},
          {"subsample", "100", "keep every k-th state"},
          {"metad_w0", "0.5", "bump height"},
          {"metad_sigma", "0.1", "bump width"},
          {"metad_stride", "100", "steps between deposits"},
          {"deltas", "0.02", "delta-net radii, comma separated"},
          {"grid_cloud_target", "10000", "approximate size of the grid-node cloud"},
          {"reference_n", "401", "finite-difference reference grid size per axis"},
          {"check_n", "0", "refined check grid per axis (0: 2 (reference_n - 1) + 1, 1: skip)"},
          {"energy_cutoff", "10", "grid nodes with V above this are dropped"},
          {"radius", "0.1", "radius of A and B"},
          {"eps_k_lo", "-6", "lowest k in eps = eps* 2^(k/2)"},
          {"eps_k_hi", "4", "highest k in eps = eps* 2^(k/2)"},
          {"workers", "0", "worker threads (0: hardware)"},
          {"max_nonzeros", "60000000", "kernel size limit per cell"}},
         run_rmse_sweep},
        {"experiment hexagon", "KDE bandwidth study on the hexagonal lattice",
         {{"n_r", "50,150,250,350,450", "ring counts"},
          {"eps_lo", "1e-4", "scan start"},
          {"eps_hi", "1", "scan end"},
          {"scan_points", "200", "log-spaced scan points"},
          {"cross_check_n_r", "10", "lattice used for the closed-form cross-check"},
          {"cross_check_eps_factor", "0.12", "cross-check bandwidth over delta^2"}},
         run_hexagon},
    };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Target measure diffusion maps: committors, kernel scans and error experiments"};
    app.require_subcommand(1);
    auto* experiment = app.add_subcommand("experiment", "run one of the error experiments");
    experiment->require_subcommand(1);

    const std::vector<Spec> all = specs();
    struct Bound {
        CLI::App* app;
        std::map<std::string, std::string> given;
        std::string config, manifest, out = ".";
        bool plot = false;
    };
    std::vector<Bound> bound(all.size());
    for (std::size_t k = 0; k < all.size(); ++k) {
        const Spec& s = all[k];
        const bool nested = s.command.rfind("experiment ", 0) == 0;
        CLI::App* sub = (nested ? experiment : &app)->add_subcommand(nested ? s.command.substr(11) : s.command,
                                                                     s.description);
        Bound& b = bound[k];
        b.app = sub;
        for (const auto& p : s.params)
            sub->add_option(flag_of(p.key), b.given[p.key], p.help + (p.fallback.empty() ? "" : " [" + p.fallback + "]"));
        sub->add_option("--out", b.out, "output directory")->capture_default_str();
        sub->add_option("--config", b.config, "key = value parameter file");
        sub->add_option("--manifest", b.manifest, "re-run the parameters of a previous manifest.json");
        sub->add_flag("--plot", b.plot, "also write plot.svg");
    }
    CLI11_PARSE(app, argc, argv);

    for (std::size_t k = 0; k < all.size(); ++k) {
        Bound& b = bound[k];
        if (!b.app->parsed()) continue;
        const Spec& s = all[k];
        try {
            Config params;
            for (const auto& p : s.params) params.set(p.key, p.fallback);
            auto merge = [&](const Config& c, const std::string& origin) {
                for (const auto& [key, value] : c.values()) {
                    bool known = false;
                    for (const auto& p : s.params) known = known || p.key == key;
                    if (!known) throw DomainError(origin + ": unknown parameter '" + key + "'");
                    params.set(key, value);
                }
            };
            if (!b.manifest.empty()) {
                const auto [command, stored] = manifest_params(read_json(b.manifest));
                if (command != s.command)
                    throw DomainError("manifest was written by '" + command + "', not '" + s.command + "'");
                merge(stored, b.manifest);
            }
            if (!b.config.empty()) merge(Config::load(b.config), b.config);
            for (const auto& p : s.params)
                if (b.app->count(flag_of(p.key)) > 0) params.set(p.key, b.given[p.key]);

            Context ctx{params, b.out, b.plot};
            fs::create_directories(ctx.out);
            s.run(ctx);
            nlohmann::json manifest = make_manifest(s.command, params);
            manifest["summary"] = ctx.summary;
            write_json(ctx.out / "manifest.json", manifest);
            std::cout << ctx.summary.dump(2) << '\n';
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 1;
        }
    }
    return 0;
}
