// Command-line front end: scene generation, solving, evaluation, benchmark
// sweeps, and exports. See README for the file formats.

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cgsam/cgsam.hpp"

namespace {

using namespace cgsam;

uint64_t sub_seed(uint64_t base, uint64_t stream) {
    // splitmix64 step keeps derived streams decorrelated
    uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

int env_threads() {
    if (const char* v = std::getenv("CGSAM_THREADS")) {
        const int n = std::atoi(v);
        if (n > 0) return n;
    }
    return 1;
}

struct GenerateArgs {
    std::string mode = "3d";
    int cams = 5;
    int feats = 50;
    uint64_t seed = 0;
    double angle_noise = 0.0;  // degrees
    double pos_noise = 0.0;
    double feat_noise = -1.0;  // -1 = follow pos_noise
    double pixel_sigma = 0.0;
    double drop = 0.0;
    std::string out = "scene.json";
};

int run_generate(const GenerateArgs& a) {
    const bool twod = a.mode == "2d";
    Scene scene = twod ? generate_2d(a.cams, a.feats, a.seed, a.drop)
                       : generate_3d(a.cams, a.feats, a.seed);
    if (!twod && a.drop > 0.0) throw Error("--drop only applies to --mode 2d");
    if (a.pixel_sigma > 0.0) {
        scene = observation_noise(scene, a.pixel_sigma, sub_seed(a.seed, 1));
        for (auto& t : scene.tracks) t.sigma = a.pixel_sigma;
    }
    NoiseSpec noise;
    noise.angle_std_deg = a.angle_noise;
    noise.position_std = a.pos_noise;
    noise.feature_std = a.feat_noise >= 0.0 ? a.feat_noise : a.pos_noise;
    noise.pixel_std = a.pixel_sigma;
    noise.visibility_drop_prob = a.drop;
    const PriorMap priors = perturb_priors(scene, noise, sub_seed(a.seed, 2));
    save_scene(a.out, scene, &priors);
    std::cout << "wrote " << a.out << ": " << scene.cameras.size() << " cameras, "
              << scene.features.size() << " features, " << scene.tracks.size()
              << " tracks, prior error " << format_double(reprojection_error(priors, scene), 6)
              << "\n";
    return 0;
}

struct SolveArgs {
    std::string scene_path;
    std::string out = "result.json";
    bool priors_from_truth = false;
    double angle_noise = 0.0;
    double pos_noise = 0.0;
    double feat_noise = -1.0;
    bool quiet = false;
    BpConfig config;
    bool no_anchor = false;
    std::string scheme = "standard";
};

int run_solve(const SolveArgs& a) {
    PriorMap priors;
    const Scene scene = load_scene(a.scene_path, &priors);
    if (a.priors_from_truth) {
        NoiseSpec noise;
        noise.angle_std_deg = a.angle_noise;
        noise.position_std = a.pos_noise;
        noise.feature_std = a.feat_noise >= 0.0 ? a.feat_noise : a.pos_noise;
        priors = perturb_priors(scene, noise, sub_seed(a.config.seed, 2));
    }
    if (priors.empty())
        throw Error("scene file has no priors; pass --priors-from-truth with a noise spec");
    BpConfig cfg = a.config;
    cfg.scheme = a.scheme == "symmetric" ? SigmaScheme::Symmetric : SigmaScheme::Standard;
    cfg.anchor_gauge = !a.no_anchor;

    ProgressCallback cb;
    if (!a.quiet)
        cb = [](const OuterIterationStat& s) {
            std::cout << "iter " << s.iteration << "  error " << format_double(s.error, 6)
                      << "  sweeps " << s.sweeps << "  delta "
                      << format_double(s.final_delta, 3)
                      << (s.inflated ? "  [inflated]" : "")
                      << (s.skipped_messages ? "  [skipped " +
                                                   std::to_string(s.skipped_messages) + "]"
                                             : "")
                      << "\n";
        };
    const PosteriorEstimate est =
        solve_sam(scene.tracks, scene.calibrations(), priors, scene.mode, cfg, cb);
    ResultData result{scene.mode, cfg.seed, cfg, est};
    save_result(a.out, result);
    std::cout << "wrote " << a.out << ": best iteration " << est.best_iteration
              << ", error " << format_double(est.error, 6) << "\n";
    return 0;
}

struct EvalArgs {
    std::string scene_path;
    std::string result_path;
    std::string csv;
};

int run_eval(const EvalArgs& a) {
    PriorMap priors;
    const Scene scene = load_scene(a.scene_path, &priors);
    const ResultData result = load_result(a.result_path);
    if (result.mode.mode() != scene.mode.mode())
        throw Error("scene and result modes differ");
    for (const auto& t : scene.tracks) {
        if (!result.estimate.poses.count(t.camera))
            throw Error("result lacks camera " + std::to_string(t.camera));
        if (!result.estimate.features.count(t.feature))
            throw Error("result lacks feature " + std::to_string(t.feature));
    }

    const double post = reprojection_error(result.estimate, scene);
    std::optional<double> prior;
    if (!priors.empty()) prior = reprojection_error(priors, scene);

    // Two-row convention: prior error above, posterior error below.
    std::cout << "prior     " << (prior ? format_double(*prior, 6) : std::string("n/a"))
              << "\n";
    std::cout << "posterior " << format_double(post, 6) << "\n";

    std::vector<std::vector<std::string>> rows;
    if (scene.has_ground_truth) {
        for (const auto& cam : scene.cameras) {
            const auto it = result.estimate.poses.find(cam.id);
            if (it == result.estimate.poses.end()) continue;
            const Pose est = Pose::from_vector(it->second.mean, scene.mode);
            const double dc = (est.center - cam.pose.center).norm();
            Vec da = est.angles - cam.pose.angles;
            for (int k = 0; k < da.size(); ++k) {
                while (da(k) > std::numbers::pi) da(k) -= 2 * std::numbers::pi;
                while (da(k) < -std::numbers::pi) da(k) += 2 * std::numbers::pi;
            }
            const double ddeg = da.norm() * 180.0 / std::numbers::pi;
            std::cout << "camera " << cam.id << ": center delta " << format_double(dc, 4)
                      << ", angle delta " << format_double(ddeg, 4) << " deg\n";
            rows.push_back({std::to_string(cam.id), format_double(dc), format_double(ddeg)});
        }
    }
    if (!a.csv.empty()) {
        std::vector<std::vector<std::string>> all;
        all.push_back({"prior", prior ? format_double(*prior) : "n/a", ""});
        all.push_back({"posterior", format_double(post), ""});
        for (auto& r : rows) all.push_back({"camera_" + r[0], r[1], r[2]});
        write_csv(a.csv, {"row", "value", "angle_delta_deg"}, all);
        std::cout << "wrote " << a.csv << "\n";
    }
    return 0;
}

struct BenchArgs {
    std::string rows = "5:50";        // cams:feats[,cams:feats...]
    std::string cols = "5:0.5:1e-4";  // angle:pos:sigma[,...]
    int seeds = 5;
    uint64_t seed = 0;
    std::string mode = "3d";
    std::string out = "bench.csv";
    int threads = env_threads();
    BpConfig config;
};

std::vector<std::vector<double>> parse_grid(const std::string& s, size_t arity,
                                            const char* what) {
    std::vector<std::vector<double>> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::vector<double> tuple;
        std::stringstream ts(item);
        std::string part;
        while (std::getline(ts, part, ':')) tuple.push_back(std::stod(part));
        if (tuple.size() != arity)
            throw Error(std::string(what) + ": expected " + std::to_string(arity) +
                        " colon-separated numbers per entry, got '" + item + "'");
        out.push_back(std::move(tuple));
    }
    if (out.empty()) throw Error(std::string(what) + ": empty grid");
    return out;
}

struct BenchCell {
    int cams, feats;
    double angle_deg, pos_noise, sigma;
    int ok = 0;
    double prior_sum = 0.0, posterior_sum = 0.0;
    int failures = 0;
};

int run_bench(const BenchArgs& a) {
    const auto rows = parse_grid(a.rows, 2, "--rows");
    const auto cols = parse_grid(a.cols, 3, "--cols");
    const bool twod = a.mode == "2d";
    std::vector<BenchCell> cells;
    for (const auto& r : rows)
        for (const auto& c : cols)
            cells.push_back({static_cast<int>(r[0]), static_cast<int>(r[1]), c[0], c[1],
                             c[2]});

    auto run_cell = [&](BenchCell& cell, size_t index) {
        for (int s = 0; s < a.seeds; ++s) {
            const uint64_t seed = sub_seed(a.seed, index * 1000 + s);
            try {
                Scene scene = twod ? generate_2d(cell.cams, cell.feats, seed)
                                   : generate_3d(cell.cams, cell.feats, seed);
                if (cell.sigma > 0.0)
                    scene = observation_noise(scene, cell.sigma, sub_seed(seed, 1));
                NoiseSpec noise;
                noise.angle_std_deg = cell.angle_deg;
                noise.position_std = cell.pos_noise;
                noise.feature_std = cell.pos_noise;
                const PriorMap priors = perturb_priors(scene, noise, sub_seed(seed, 2));
                BpConfig cfg = a.config;
                cfg.sigma_obs = cell.sigma > 0.0 ? cell.sigma : a.config.sigma_obs;
                cfg.seed = seed;
                const PosteriorEstimate est = solve_sam(scene.tracks, scene.calibrations(),
                                                        priors, scene.mode, cfg);
                cell.prior_sum += reprojection_error(priors, scene);
                cell.posterior_sum += est.error;
                ++cell.ok;
            } catch (const std::exception&) {
                ++cell.failures;  // a failed cell must not abort the sweep
            }
        }
    };

    const int n_threads = std::max(1, std::min<int>(a.threads, cells.size()));
    std::atomic<size_t> next{0};
    auto worker = [&] {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= cells.size()) break;
            run_cell(cells[i], i);
        }
    };
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::vector<std::vector<std::string>> out_rows;
    for (const auto& c : cells) {
        const double prior = c.ok ? c.prior_sum / c.ok : 0.0;
        const double post = c.ok ? c.posterior_sum / c.ok : 0.0;
        out_rows.push_back({std::to_string(c.cams), std::to_string(c.feats),
                            format_double(c.angle_deg), format_double(c.pos_noise),
                            format_double(c.sigma), std::to_string(c.ok),
                            format_double(prior), format_double(post),
                            std::to_string(c.failures)});
        std::cout << c.cams << " cams, " << c.feats << " feats, noise ("
                  << format_double(c.angle_deg) << " deg, " << format_double(c.pos_noise)
                  << "), sigma " << format_double(c.sigma) << ": prior "
                  << format_double(prior, 6) << " -> posterior " << format_double(post, 6)
                  << " over " << c.ok << " seeds"
                  << (c.failures ? " (" + std::to_string(c.failures) + " failed)" : "")
                  << "\n";
    }
    write_csv(a.out,
              {"cams", "feats", "angle_noise_deg", "pos_noise", "sigma", "seeds",
               "prior_error", "posterior_error", "failures"},
              out_rows);
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

struct ExportArgs {
    std::string result_path;
    std::string format = "pointcloud";
    std::string out;
};

int run_export(const ExportArgs& a) {
    const ResultData result = load_result(a.result_path);
    if (a.format == "pointcloud") {
        const std::string out = a.out.empty() ? "points.ply" : a.out;
        write_pointcloud(out, result.estimate.point_estimate(result.mode), result.mode);
        std::cout << "wrote " << out << "\n";
    } else if (a.format == "trace-csv") {
        const std::string out = a.out.empty() ? "trace.csv" : a.out;
        write_trace_csv(out, result.estimate.trace);
        std::cout << "wrote " << out << "\n";
    } else {
        throw Error("unknown export format '" + a.format + "'");
    }
    return 0;
}

void add_solver_flags(CLI::App* cmd, BpConfig& cfg, std::string* scheme, bool* no_anchor) {
    cmd->add_option("--inner-tol", cfg.inner_tol, "message convergence threshold");
    cmd->add_option("--max-inner", cfg.max_inner_sweeps, "max message sweeps per outer iteration");
    cmd->add_option("--max-outer", cfg.max_outer_iters, "max outer iterations");
    cmd->add_option("--outer-tol", cfg.outer_tol, "relative best-error improvement cutoff");
    cmd->add_option("--patience", cfg.patience, "outer iterations without improvement before stopping");
    cmd->add_option("--inflation", cfg.inflation, "covariance inflation factor on stall");
    cmd->add_option("--damping", cfg.damping, "message damping factor in [0,1)");
    cmd->add_option("--sigma-obs", cfg.sigma_obs, "default observation noise std");
    if (scheme)
        cmd->add_option("--scheme", *scheme, "sigma-point scheme")
            ->check(CLI::IsMember({"symmetric", "standard"}));
    cmd->add_option("--w0", cfg.w0, "center weight of the standard sigma-point scheme");
    if (no_anchor) cmd->add_flag("--no-anchor", *no_anchor, "disable gauge anchoring");
    cmd->add_option("--anchor-variance", cfg.anchor_variance, "anchored prior variance");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Structure-and-motion by loopy belief propagation on a cluster graph.\n"
        "Environment: CGSAM_THREADS sets the default worker count for bench."};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* cgen = app.add_subcommand("generate", "generate a synthetic scene with priors");
    cgen->add_option("--mode", gen.mode, "2d or 3d")->check(CLI::IsMember({"2d", "3d"}));
    cgen->add_option("--cams", gen.cams, "number of cameras")->check(CLI::PositiveNumber);
    cgen->add_option("--feats", gen.feats, "number of features")->check(CLI::PositiveNumber);
    cgen->add_option("--seed", gen.seed, "scene seed");
    cgen->add_option("--angle-noise", gen.angle_noise, "prior angle noise std (degrees)");
    cgen->add_option("--pos-noise", gen.pos_noise, "prior camera-center noise std");
    cgen->add_option("--feat-noise", gen.feat_noise,
                     "prior feature noise std (defaults to --pos-noise)");
    cgen->add_option("--pixel-sigma", gen.pixel_sigma, "observation noise std");
    cgen->add_option("--drop", gen.drop, "2d visibility drop probability");
    cgen->add_option("-o,--out", gen.out, "output scene file");

    SolveArgs sol;
    auto* csol = app.add_subcommand("solve", "solve a scene file");
    csol->add_option("scene", sol.scene_path, "scene file")->required();
    csol->add_option("-o,--out", sol.out, "output result file");
    csol->add_flag("--priors-from-truth", sol.priors_from_truth,
                   "build priors by perturbing ground truth instead of reading them");
    csol->add_option("--angle-noise", sol.angle_noise,
                     "prior angle noise std (degrees, with --priors-from-truth)");
    csol->add_option("--pos-noise", sol.pos_noise,
                     "prior position noise std (with --priors-from-truth)");
    csol->add_option("--feat-noise", sol.feat_noise,
                     "prior feature noise std (defaults to --pos-noise)");
    csol->add_flag("--quiet", sol.quiet, "suppress per-iteration trace lines");
    csol->add_option("--seed", sol.config.seed,
                     "seed for --priors-from-truth, echoed into the result file");
    add_solver_flags(csol, sol.config, &sol.scheme, &sol.no_anchor);

    EvalArgs ev;
    auto* ceval = app.add_subcommand("eval", "prior/posterior errors and pose deltas");
    ceval->add_option("--scene", ev.scene_path, "scene file")->required();
    ceval->add_option("--result", ev.result_path, "result file")->required();
    ceval->add_option("--csv", ev.csv, "also write the report as CSV");

    BenchArgs bench;
    auto* cbench = app.add_subcommand("bench", "sweep a (cams:feats) x noise grid");
    cbench->add_option("--rows", bench.rows, "comma list of cams:feats");
    cbench->add_option("--cols", bench.cols, "comma list of angle_deg:pos_noise:sigma");
    cbench->add_option("--seeds", bench.seeds, "seeds per cell")->check(CLI::PositiveNumber);
    cbench->add_option("--seed", bench.seed, "base seed");
    cbench->add_option("--mode", bench.mode, "2d or 3d")->check(CLI::IsMember({"2d", "3d"}));
    cbench->add_option("-o,--out", bench.out, "output CSV");
    cbench->add_option("--threads", bench.threads,
                       "parallel cells (default: CGSAM_THREADS or 1)");
    add_solver_flags(cbench, bench.config, nullptr, nullptr);

    ExportArgs ex;
    auto* cexp = app.add_subcommand("export", "export a result file");
    cexp->add_option("result", ex.result_path, "result file")->required();
    cexp->add_option("--format", ex.format, "pointcloud or trace-csv")
        ->check(CLI::IsMember({"pointcloud", "trace-csv"}));
    cexp->add_option("-o,--out", ex.out, "output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cgen) return run_generate(gen);
        if (*csol) return run_solve(sol);
        if (*ceval) return run_eval(ev);
        if (*cbench) return run_bench(bench);
        if (*cexp) return run_export(ex);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
