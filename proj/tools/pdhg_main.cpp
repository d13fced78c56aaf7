// Command-line front end: one subcommand per experiment plus the toy
// laboratory.  Prints a machine-parsable key=value summary on stdout and
// writes images plus a per-iteration trace CSV into --out-dir.
//
// Exit codes: 0 ok, 2 config error, 3 diverged, 4 I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdhg/imgio.hpp"
#include "pdhg/models.hpp"
#include "pdhg/solver.hpp"
#include "pdhg/toy.hpp"

namespace {

using json = nlohmann::json;
using namespace pdhg;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string experiment;

    std::string input_path;  // empty: synthetic input
    std::string mask_path;   // ms-inpaint only
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int size = 64;  // synthetic input edge length
    double noise_std = 0.1;

    long max_iter = 10000;
    double tol = 1e-6;
    std::string init = "input";  // input | zero | random
    double theta = 1.0;
    double sigma = 0.0;  // 0: derive sigma = 2 omega
    double tau = 0.0;    // 0: derive tau = 1/(sigma ||K||^2)
    bool allow_unsafe = false;
    bool measure_time = false;

    // model parameters
    double c = 30.0;
    double omega_frac = 0.7;
    double omega = -1.0;  // illumination: explicit weight wins over the fraction
    double alpha = 10.0, lambda = 0.1, eps0 = 0.5;
    double r = 0.6, e = 0.09;
    double kernel_std = 1.75;
    int flow_steps = 1;

    // adaptive schedule (ms-inpaint)
    bool adaptive = false;
    double gamma = 200.0;
    double sigma0_factor = 1.05;  // sigma0 = factor * omega
    bool tau0_large = false;      // tau0 = ||K||^2 / sigma0 instead of its reciprocal

    // toys
    double toy_c = 100.0;
    int toy_iters = 60;
    double q0x = -1.0, q0y = 1.0;

    // rate-check
    long ref_iter = 100000;
    double ref_sigma_factor = 2.2;
    double sigma_factor = 2.0;
    long n0 = 10;
};

// published defaults per experiment; everything else is overridden by the
// run file and the flags, in that order
RunConfig default_config(const std::string& experiment) {
    RunConfig cfg;
    cfg.experiment = experiment;
    if (experiment == "denoise-sharpen") {
        cfg.c = 30.0;
        cfg.omega_frac = 0.7;
    } else if (experiment == "illum") {
        cfg.c = 30.0;
        cfg.omega_frac = 0.9;
        cfg.r = 0.6;
        cfg.e = 0.09;
        cfg.noise_std = 0.05;
        cfg.max_iter = 4000;
        cfg.tol = 1e-7;
    } else if (experiment == "ms-denoise") {
        cfg.alpha = 10.0;
        cfg.lambda = 0.1;
        cfg.eps0 = 0.5;
    } else if (experiment == "ms-inpaint") {
        cfg.alpha = 96.82;
        cfg.lambda = 0.5;
        cfg.eps0 = 0.9;
        cfg.adaptive = true;
        cfg.size = 127;
        cfg.init = "zero";
        cfg.max_iter = 20000;
        cfg.tol = 1e-7;
        cfg.noise_std = 0.0;
    } else if (experiment == "dither") {
        cfg.lambda = 0.01;
        cfg.kernel_std = 1.75;
        cfg.init = "zero";
        cfg.max_iter = 1000;
        cfg.tol = 1e-10;
        cfg.noise_std = 0.0;
    } else if (experiment == "toy-prop") {
        cfg.sigma = 1.5;
        cfg.tau = 1.0;
        cfg.toy_c = 100.0;
        cfg.toy_iters = 60;
        cfg.theta = 0.0;
    } else if (experiment == "toy-example") {
        cfg.sigma = 3.0;
        cfg.toy_c = 3.0;
        cfg.toy_iters = 30;
        cfg.theta = 0.0;
    } else if (experiment == "rate-check") {
        cfg.size = 32;
        cfg.seed = 7;
        cfg.max_iter = 5000;
    } else {
        throw ConfigError("unknown experiment: " + experiment);
    }
    return cfg;
}

// ------------------------------------------------------------------ summary

struct Summary {
    std::vector<std::pair<std::string, std::string>> items;
    void add(const std::string& k, const std::string& v) { items.emplace_back(k, v); }
    void add(const std::string& k, double v) { items.emplace_back(k, format_g17(v)); }
    void add(const std::string& k, long v) { items.emplace_back(k, std::to_string(v)); }
    void add(const std::string& k, bool v) { items.emplace_back(k, v ? "true" : "false"); }
    void print() const {
        for (const auto& [k, v] : items) std::cout << k << "=" << v << "\n";
    }
};

// ------------------------------------------------------------------ run file

void apply_run_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open run file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("run file parse error: ") + ex.what());
    }
    if (!j.is_object()) throw ConfigError("run file must hold a JSON object");
    static const std::set<std::string> known = {
        "input",      "mask",       "out-dir",     "seed",        "size",
        "noise-std",  "max-iter",   "tol",         "init",        "theta",
        "sigma",      "tau",        "allow-unsafe", "time",       "c",
        "omega-frac", "omega",      "alpha",       "lambda",      "eps0",
        "r",          "e",          "kernel-std",  "flow-steps",  "adaptive",
        "gamma",      "sigma0-factor", "tau0-large", "toy-c",     "iters",
        "q0x",        "q0y",        "ref-iter",    "ref-sigma-factor",
        "sigma-factor", "n0"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("run file: unknown field '" + key + "'");
        try {
            if (key == "input") cfg.input_path = value.get<std::string>();
            else if (key == "mask") cfg.mask_path = value.get<std::string>();
            else if (key == "out-dir") cfg.out_dir = value.get<std::string>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "size") cfg.size = value.get<int>();
            else if (key == "noise-std") cfg.noise_std = value.get<double>();
            else if (key == "max-iter") cfg.max_iter = value.get<long>();
            else if (key == "tol") cfg.tol = value.get<double>();
            else if (key == "init") cfg.init = value.get<std::string>();
            else if (key == "theta") cfg.theta = value.get<double>();
            else if (key == "sigma") cfg.sigma = value.get<double>();
            else if (key == "tau") cfg.tau = value.get<double>();
            else if (key == "allow-unsafe") cfg.allow_unsafe = value.get<bool>();
            else if (key == "time") cfg.measure_time = value.get<bool>();
            else if (key == "c") cfg.c = value.get<double>();
            else if (key == "omega-frac") cfg.omega_frac = value.get<double>();
            else if (key == "omega") cfg.omega = value.get<double>();
            else if (key == "alpha") cfg.alpha = value.get<double>();
            else if (key == "lambda") cfg.lambda = value.get<double>();
            else if (key == "eps0") cfg.eps0 = value.get<double>();
            else if (key == "r") cfg.r = value.get<double>();
            else if (key == "e") cfg.e = value.get<double>();
            else if (key == "kernel-std") cfg.kernel_std = value.get<double>();
            else if (key == "flow-steps") cfg.flow_steps = value.get<int>();
            else if (key == "adaptive") cfg.adaptive = value.get<bool>();
            else if (key == "gamma") cfg.gamma = value.get<double>();
            else if (key == "sigma0-factor") cfg.sigma0_factor = value.get<double>();
            else if (key == "tau0-large") cfg.tau0_large = value.get<bool>();
            else if (key == "toy-c") cfg.toy_c = value.get<double>();
            else if (key == "iters") cfg.toy_iters = value.get<int>();
            else if (key == "q0x") cfg.q0x = value.get<double>();
            else if (key == "q0y") cfg.q0y = value.get<double>();
            else if (key == "ref-iter") cfg.ref_iter = value.get<long>();
            else if (key == "ref-sigma-factor") cfg.ref_sigma_factor = value.get<double>();
            else if (key == "sigma-factor") cfg.sigma_factor = value.get<double>();
            else if (key == "n0") cfg.n0 = value.get<long>();
        } catch (const json::exception& ex) {
            throw ConfigError("run file: bad value for '" + key + "': " + ex.what());
        }
    }
}

// ------------------------------------------------------------------ helpers

ImageGrid load_or_synthesize(const RunConfig& cfg, int channels) {
    ImageGrid img;
    if (!cfg.input_path.empty()) {
        img = read_image(cfg.input_path);
        if (img.shape.channels != channels)
            throw ConfigError("input must have " + std::to_string(channels) + " channel(s)");
        return img;  // user data is used as-is
    }
    img = channels == 3 ? synthetic_color(cfg.size, cfg.size)
                        : synthetic_shapes(cfg.size, cfg.size);
    return add_gaussian_noise(img, cfg.noise_std, cfg.seed);
}

Vec initial_point(const RunConfig& cfg, const Model& model) {
    if (cfg.init == "input") return model.data_init;
    if (cfg.init == "zero") return Vec(model.op->domain_dim(), 0.0);
    if (cfg.init == "random") {
        Rng rng(cfg.seed + 0x9e3779b97f4a7c15ull);
        Vec u(model.op->domain_dim());
        for (double& v : u) v = rng.uniform01();
        return u;
    }
    throw ConfigError("init must be one of input|zero|random");
}

void write_result_images(const RunConfig& cfg, const Model& model, const Vec& u,
                         const ImageGrid& input, Summary& summary) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::string ext = model.domain_shape.channels == 3 ? ".png" : ".pgm";
    const std::string in_path = cfg.out_dir + "/input" + ext;
    const std::string out_path = cfg.out_dir + "/result" + ext;
    write_image(input, in_path);
    ImageGrid result(model.domain_shape);
    result.values = u;
    write_image(result, out_path);
    summary.add("input_file", in_path);
    summary.add("result_file", out_path);
}

struct SolveOutcome {
    PrimalDualState state;
    ConvergenceTrace trace;
};

SolveOutcome run_model(const RunConfig& cfg, const Model& model, const StepSchedule& schedule,
                       Summary& summary) {
    SolveOptions opts;
    opts.measure_time = cfg.measure_time;
    StopRule stop{cfg.max_iter, cfg.tol, 1e12};
    Vec u0 = initial_point(cfg, model);
    Vec q0(model.op->range_dim(), 0.0);
    auto [state, trace] = solve(model, schedule, stop, u0, q0, opts);

    std::filesystem::create_directories(cfg.out_dir);
    const std::string trace_path = cfg.out_dir + "/trace.csv";
    write_trace_csv(trace, trace_path);

    auto crit = check_critical(state, model, 1e-4);
    summary.add("iterations", state.iter);
    summary.add("stop_reason", trace.stop_reason);
    summary.add("diverged", trace.diverged);
    summary.add("critical", crit.critical);
    summary.add("residual_constraint", crit.constraint_residual);
    summary.add("residual_primal", crit.primal_residual);
    summary.add("residual_dual", crit.dual_residual);
    if (!trace.records.empty()) summary.add("energy", trace.records.back().energy);
    summary.add("max_u_inf", trace.max_u_inf);
    summary.add("trace_file", trace_path);
    return {std::move(state), std::move(trace)};
}

// strict regime validation for the experiments the convergence result covers
void validate_steps(const RunConfig& cfg, double sigma, double tau, double omega,
                    double norm_k) {
    try {
        check_steps(sigma, tau, omega, norm_k, /*strict=*/!cfg.allow_unsafe);
    } catch (const std::runtime_error& ex) {
        throw ConfigError(std::string(ex.what()) + " (pass --allow-unsafe to run anyway)");
    }
}

void derive_steps(const RunConfig& cfg, double omega, double norm_k, double& sigma,
                  double& tau) {
    sigma = cfg.sigma > 0.0 ? cfg.sigma : 2.0 * omega;
    tau = cfg.tau > 0.0 ? cfg.tau : 1.0 / (sigma * norm_k * norm_k);
}

void add_common_keys(Summary& summary, const RunConfig& cfg, const Model& model, double sigma,
                     double tau) {
    summary.add("experiment", cfg.experiment);
    summary.add("width", static_cast<long>(model.domain_shape.width));
    summary.add("height", static_cast<long>(model.domain_shape.height));
    summary.add("channels", static_cast<long>(model.domain_shape.channels));
    summary.add("seed", static_cast<long>(cfg.seed));
    summary.add("init", cfg.init);
    summary.add("omega", model.omega);
    summary.add("norm_bound", model.op->norm_bound());
    summary.add("sigma", sigma);
    summary.add("tau", tau);
    summary.add("theta", cfg.theta);
}

double elapsed_ms(const std::chrono::steady_clock::time_point& t0, bool enabled) {
    if (!enabled) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

// ------------------------------------------------------------------ experiments

int run_denoise_sharpen(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    ImageGrid f = load_or_synthesize(cfg, 1);
    Summary summary;

    Model probe = build_denoise_sharpen(f, cfg.c, cfg.omega_frac);
    double sigma, tau;
    derive_steps(cfg, probe.omega, probe.op->norm_bound(), sigma, tau);
    validate_steps(cfg, sigma, tau, probe.omega, probe.op->norm_bound());
    add_common_keys(summary, cfg, probe, sigma, tau);
    summary.add("c", cfg.c);
    summary.add("omega_frac", cfg.omega_frac);
    summary.add("flow_steps", static_cast<long>(cfg.flow_steps));

    if (cfg.flow_steps <= 1) {
        auto out = run_model(cfg, probe, StepSchedule::constant(sigma, tau, cfg.theta), summary);
        write_result_images(cfg, probe, out.state.u, f, summary);
        summary.add("wall_ms", elapsed_ms(t0, cfg.measure_time));
        summary.print();
        return out.trace.diverged ? kExitDiverged : kExitOk;
    }

    // outer flow: data replaced by the previous solution each round
    auto traj = flow_iterate(
        [&](const ImageGrid& data) { return build_denoise_sharpen(data, cfg.c, cfg.omega_frac); },
        f, cfg.flow_steps, StepSchedule::constant(sigma, tau, cfg.theta),
        StopRule{cfg.max_iter, cfg.tol, 1e12});
    std::filesystem::create_directories(cfg.out_dir);
    for (std::size_t k = 0; k < traj.size(); ++k)
        write_image(traj[k], cfg.out_dir + "/flow_" + std::to_string(k + 1) + ".pgm");
    summary.add("flow_completed", static_cast<long>(traj.size()));
    const bool aborted = static_cast<int>(traj.size()) < cfg.flow_steps;
    summary.add("diverged", aborted);
    if (!traj.empty()) write_result_images(cfg, probe, traj.back().values, f, summary);
    summary.add("wall_ms", elapsed_ms(t0, cfg.measure_time));
    summary.print();
    return aborted ? kExitDiverged : kExitOk;
}

int run_illum(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    ImageGrid f = load_or_synthesize(cfg, 3);
    Summary summary;

    Model probe = build_illumination(f, cfg.c, 0.0, cfg.r, cfg.e);
    const double norm_k = probe.op->norm_bound();
    const double omega =
        cfg.omega >= 0.0 ? cfg.omega : cfg.omega_frac * cfg.c / (norm_k * norm_k);
    Model model = build_illumination(f, cfg.c, omega, cfg.r, cfg.e);
    double sigma, tau;
    // the omega = 0 baseline still needs a usable sigma
    const double sigma_base = model.omega > 0.0 ? model.omega : cfg.c / (norm_k * norm_k);
    derive_steps(cfg, sigma_base, norm_k, sigma, tau);
    validate_steps(cfg, sigma, tau, model.omega, norm_k);
    add_common_keys(summary, cfg, model, sigma, tau);
    summary.add("c", cfg.c);
    summary.add("r", cfg.r);
    summary.add("e", cfg.e);

    auto out = run_model(cfg, model, StepSchedule::constant(sigma, tau, cfg.theta), summary);
    write_result_images(cfg, model, out.state.u, f, summary);

    ImageGrid result(model.domain_shape);
    result.values = out.state.u;
    Vec curve = sorted_intensity_curve(result);
    const std::string curve_path = cfg.out_dir + "/curve.csv";
    write_curve_csv(curve, curve_path);
    summary.add("curve_file", curve_path);
    const double lo = cfg.r - std::sqrt(cfg.e), hi = cfg.r + std::sqrt(cfg.e);
    std::size_t near = 0;
    for (double v : curve)
        if (std::fabs(v - lo) <= 0.02 || std::fabs(v - hi) <= 0.02) ++near;
    summary.add("plateau_fraction", static_cast<double>(near) / curve.size());
    summary.add("wall_ms", elapsed_ms(t0, cfg.measure_time));
    summary.print();
    return out.trace.diverged ? kExitDiverged : kExitOk;
}

int run_ms_denoise(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    ImageGrid f = load_or_synthesize(cfg, 1);
    Summary summary;

    Model model = build_ms_denoise(f, TruncQuadParams(cfg.alpha, cfg.lambda, cfg.eps0));
    double sigma, tau;
    derive_steps(cfg, model.omega, model.op->norm_bound(), sigma, tau);
    validate_steps(cfg, sigma, tau, model.omega, model.op->norm_bound());
    add_common_keys(summary, cfg, model, sigma, tau);
    summary.add("alpha", cfg.alpha);
    summary.add("lambda", cfg.lambda);
    summary.add("eps0", cfg.eps0);

    auto out = run_model(cfg, model, StepSchedule::constant(sigma, tau, cfg.theta), summary);
    write_result_images(cfg, model, out.state.u, f, summary);
    summary.add("wall_ms", elapsed_ms(t0, cfg.measure_time));
    summary.print();
    return out.trace.diverged ? kExitDiverged : kExitOk;
}

int run_ms_inpaint(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    ImageGrid f;
    std::vector<std::uint8_t> known;
    if (!cfg.input_path.empty()) {
        f = read_image(cfg.input_path);
        if (f.shape.channels != 1) throw ConfigError("ms-inpaint expects a grayscale input");
        if (cfg.mask_path.empty())
            throw ConfigError("ms-inpaint with --input also needs --mask (>0.5 means known)");
        ImageGrid mask = read_image(cfg.mask_path);
        if (!(mask.shape == f.shape)) throw ConfigError("mask shape must match the input");
        known.resize(mask.values.size());
        for (std::size_t i = 0; i < known.size(); ++i) known[i] = mask.values[i] > 0.5;
    } else {
        std::tie(f, known) = make_cracktip_mask(cfg.size);
    }
    Summary summary;

    Model model = build_ms_inpaint(f, known, TruncQuadParams(cfg.alpha, cfg.lambda, cfg.eps0));
    const double norm_k = model.op->norm_bound();
    StepSchedule schedule = StepSchedule::constant(1.0, 1.0, cfg.theta);  // replaced below
    double sigma0 = 0.0, tau0 = 0.0;
    if (cfg.adaptive) {
        sigma0 = cfg.sigma > 0.0 ? cfg.sigma : cfg.sigma0_factor * model.omega;
        tau0 = cfg.tau > 0.0
                   ? cfg.tau
                   : (cfg.tau0_large ? norm_k * norm_k / sigma0 : 1.0 / (sigma0 * norm_k * norm_k));
        if (!(sigma0 > model.omega))
            throw ConfigError("adaptive schedule needs sigma0 > omega");
        schedule = StepSchedule::adaptive(cfg.gamma, sigma0, tau0, 2.0 * model.omega);
    } else {
        derive_steps(cfg, model.omega, norm_k, sigma0, tau0);
        if (!(sigma0 > model.omega)) throw ConfigError("needs sigma > omega");
        schedule = StepSchedule::constant(sigma0, tau0, cfg.theta);
    }
    add_common_keys(summary, cfg, model, sigma0, tau0);
    summary.add("alpha", cfg.alpha);
    summary.add("lambda", cfg.lambda);
    summary.add("eps0", cfg.eps0);
    summary.add("adaptive", cfg.adaptive);
    if (cfg.adaptive) summary.add("gamma", cfg.gamma);

    auto out = run_model(cfg, model, schedule, summary);
    write_result_images(cfg, model, out.state.u, f, summary);
    summary.add("wall_ms", elapsed_ms(t0, cfg.measure_time));
    summary.print();
    return out.trace.diverged ? kExitDiverged : kExitOk;
}

int run_dither(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    ImageGrid f = load_or_synthesize(cfg, 1);
    Summary summary;

    Model model = build_dithering(f, cfg.lambda, cfg.kernel_std);
    double sigma, tau;
    sigma = cfg.sigma > 0.0 ? cfg.sigma : 2.0 * model.omega;
    tau = cfg.tau > 0.0 ? cfg.tau : 1.0 / sigma;  // ||K|| = 1
    validate_steps(cfg, sigma, tau, model.omega, model.op->norm_bound());
    add_common_keys(summary, cfg, model, sigma, tau);
    summary.add("lambda", cfg.lambda);
    summary.add("kernel_std", cfg.kernel_std);

    auto out = run_model(cfg, model, StepSchedule::constant(sigma, tau, cfg.theta), summary);
    write_result_images(cfg, model, out.state.u, f, summary);

    std::size_t nb = 0;
    ImageGrid thresholded(model.domain_shape);
    for (std::size_t i = 0; i < out.state.u.size(); ++i) {
        const double v = out.state.u[i];
        if (std::fabs(v) <= 0.05 || std::fabs(v - 1.0) <= 0.05) ++nb;
        thresholded.values[i] = v >= 0.5 ? 1.0 : 0.0;
    }
    const std::string thr_path = cfg.out_dir + "/thresholded.pgm";
    write_image(thresholded, thr_path);
    summary.add("thresholded_file", thr_path);
    summary.add("binary_fraction", static_cast<double>(nb) / out.state.u.size());
    summary.add("wall_ms", elapsed_ms(t0, cfg.measure_time));
    summary.print();
    return out.trace.diverged ? kExitDiverged : kExitOk;
}

// ------------------------------------------------------------------ toys

int run_toy_prop_cmd(const RunConfig& cfg) {
    Summary summary;
    const double sigma = cfg.sigma, tau = cfg.tau > 0.0 ? cfg.tau : 1.0;
    const Mat2 a = divergence_matrix(sigma, tau, cfg.toy_c);
    const auto eig = eigvals_2x2(a);
    const auto z0 = eigvec_2x2(a, eig.second.real());

    auto toy = run_toy_prop(sigma, tau, cfg.toy_c, z0, cfg.toy_iters, cfg.theta);

    // the same run through the generic driver, for the standard trace
    Model m;
    m.name = "toy-prop";
    m.op = std::make_shared<IdentityOp>(1);
    m.f_term = std::make_shared<ConcaveQuadraticProx>(1.0, 1);
    m.g_term = std::make_shared<QuadraticProx>(cfg.toy_c, 1);
    m.omega = 1.0;
    m.strong_convexity = cfg.toy_c;
    m.domain_shape = ImageShape{1, 1, 1};
    SolveOptions opts;
    opts.initial_g = Vec{z0[0]};
    opts.measure_time = cfg.measure_time;
    auto [state, trace] = solve(m, StepSchedule::constant(sigma, tau, cfg.theta),
                                StopRule{cfg.toy_iters, 0.0, 1e12}, Vec{z0[1]}, Vec{-z0[0]}, opts);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string trace_path = cfg.out_dir + "/trace.csv";
    write_trace_csv(trace, trace_path);

    double max_norm = 0.0;
    long exceeds_1e6_at = -1;
    for (std::size_t i = 0; i < toy.g_seq.size(); ++i) {
        const double n = std::hypot(toy.g_seq[i][0], toy.u_seq[i][0]);
        max_norm = std::max(max_norm, n);
        if (exceeds_1e6_at < 0 && n > 1e6) exceeds_1e6_at = static_cast<long>(i) + 1;
    }

    summary.add("experiment", cfg.experiment);
    summary.add("sigma", sigma);
    summary.add("tau", tau);
    summary.add("theta", cfg.theta);
    summary.add("c", cfg.toy_c);
    summary.add("eig_d1", eig.first.real());
    summary.add("eig_d2", eig.second.real());
    summary.add("iterations", static_cast<long>(toy.g_seq.size()));
    summary.add("diverged", toy.diverged);
    summary.add("matched_closed_form", toy.matched_closed_form);
    summary.add("max_closed_form_err", toy.max_closed_form_err);
    summary.add("max_norm", max_norm);
    summary.add("norm_exceeds_1e6_at", exceeds_1e6_at);
    summary.add("final_u", toy.u_seq.empty() ? 0.0 : std::fabs(toy.u_seq.back()[0]));
    summary.add("trace_file", trace_path);
    summary.print();
    return toy.diverged ? kExitDiverged : kExitOk;
}

int run_toy_example_cmd(const RunConfig& cfg) {
    Summary summary;
    auto toy = run_toy_example(cfg.sigma, {cfg.q0x, cfg.q0y}, cfg.toy_iters, cfg.toy_c);

    Model m;
    m.name = "toy-example";
    m.op = std::make_shared<DenseMap>(2, 1, Vec{1.0, 1.0});
    m.f_term = std::make_shared<ConcaveQuadraticProx>(1.0, 2);
    m.g_term = std::make_shared<QuadraticProx>(cfg.toy_c, 1);
    m.omega = 1.0;
    m.strong_convexity = cfg.toy_c;
    m.domain_shape = ImageShape{1, 1, 1};
    SolveOptions opts;
    opts.initial_g = Vec{-cfg.q0x, -cfg.q0y};
    opts.measure_time = cfg.measure_time;
    auto [state, trace] =
        solve(m, StepSchedule::constant(cfg.sigma, 1.0 / cfg.sigma, 0.0),
              StopRule{cfg.toy_iters, 0.0, 1e12}, Vec{0.0}, Vec{cfg.q0x, cfg.q0y}, opts);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string trace_path = cfg.out_dir + "/trace.csv";
    write_trace_csv(trace, trace_path);

    summary.add("experiment", cfg.experiment);
    summary.add("sigma", cfg.sigma);
    summary.add("c", cfg.toy_c);
    summary.add("iterations", static_cast<long>(toy.g_seq.size()));
    summary.add("diverged", toy.diverged);
    summary.add("matched_closed_form", toy.matched_closed_form);
    summary.add("max_closed_form_err", toy.max_closed_form_err);
    summary.add("u_all_zero", toy.u_all_zero);
    summary.add("final_g_norm", toy.g_seq.empty() ? 0.0 : norm2(toy.g_seq.back()));
    summary.add("trace_file", trace_path);
    summary.print();
    return toy.diverged ? kExitDiverged : kExitOk;
}

int run_rate_check_cmd(const RunConfig& cfg) {
    Summary summary;
    ImageGrid clean = synthetic_shapes(cfg.size, cfg.size);
    ImageGrid f = add_gaussian_noise(clean, cfg.noise_std, cfg.seed);
    Model m = build_denoise_sharpen(f, cfg.c, cfg.omega_frac);
    const double k2 = m.op->norm_bound() * m.op->norm_bound();

    // reference run in the g-convergent regime, then the measured run
    const double sref = cfg.ref_sigma_factor * m.omega;
    SolveOptions fast;
    fast.with_energy = false;
    auto [ref, rt] = solve(m, StepSchedule::constant(sref, 1.0 / (sref * k2), 1.0),
                           StopRule{cfg.ref_iter, 0.0, 1e12}, m.data_init,
                           Vec(m.op->range_dim(), 0.0), fast);

    const double sigma = cfg.sigma_factor * m.omega, tau = 1.0 / (sigma * k2);
    std::vector<Vec> pts;
    SolveOptions obs;
    obs.with_energy = false;
    obs.observer = [&](const PrimalDualState& s) { pts.push_back(s.u); };
    solve(m, StepSchedule::constant(sigma, tau, cfg.theta), StopRule{cfg.max_iter, 0.0, 1e12},
          m.data_init, Vec(m.op->range_dim(), 0.0), obs);
    auto rep = rate_check(pts, ref.u, cfg.n0, cfg.max_iter);

    summary.add("experiment", cfg.experiment);
    summary.add("c", cfg.c);
    summary.add("omega", m.omega);
    summary.add("sigma", sigma);
    summary.add("tau", tau);
    summary.add("theta", cfg.theta);
    summary.add("n0", cfg.n0);
    summary.add("c_start", rep.c_start);
    summary.add("c_max", rep.c_max);
    summary.add("ratio", rep.ratio);
    summary.add("bounded", rep.bounded);
    summary.print();
    return rep.bounded ? kExitOk : kExitDiverged;
}

// ------------------------------------------------------------------ CLI wiring

struct CommonFlagRefs {
    std::string run_file;
};

void add_output_flags(CLI::App* app, RunConfig& cfg, CommonFlagRefs& refs) {
    app->add_option("--run-file", refs.run_file, "JSON run file; flags win on conflict");
    app->add_option("--out-dir", cfg.out_dir, "artifact directory");
    app->add_option("--seed", cfg.seed, "random seed");
    app->add_flag("--time", cfg.measure_time, "measure wall time (breaks byte-reproducibility)");
}

void add_solver_flags(CLI::App* app, RunConfig& cfg) {
    app->add_option("--max-iter", cfg.max_iter, "iteration cap");
    app->add_option("--tol", cfg.tol, "relative increment stopping tolerance");
    app->add_option("--init", cfg.init, "initialization: input|zero|random");
    app->add_option("--theta", cfg.theta, "extrapolation weight in [0,1]");
    app->add_option("--sigma", cfg.sigma, "dual step (default 2*omega)");
    app->add_option("--tau", cfg.tau, "primal step (default 1/(sigma*||K||^2))");
    app->add_flag("--allow-unsafe", cfg.allow_unsafe, "run outside the convergence regime");
}

void add_image_flags(CLI::App* app, RunConfig& cfg) {
    app->add_option("--input", cfg.input_path, "input image (.pgm or .png)");
    app->add_option("--size", cfg.size, "synthetic input edge length");
    app->add_option("--noise-std", cfg.noise_std, "synthetic input noise level");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"primal-dual splitting for semiconvex regularizers"};
    app.require_subcommand(1);

    struct Registered {
        RunConfig cfg;
        CommonFlagRefs refs;
        CLI::App* sub = nullptr;
        int (*fn)(const RunConfig&) = nullptr;
    };
    std::vector<std::unique_ptr<Registered>> cmds;

    auto reg = [&](const std::string& name, const std::string& desc,
                   int (*fn)(const RunConfig&)) -> Registered& {
        auto r = std::make_unique<Registered>();
        r->cfg = default_config(name);
        r->fn = fn;
        r->sub = app.add_subcommand(name, desc);
        r->sub->option_defaults()->always_capture_default();
        add_output_flags(r->sub, r->cfg, r->refs);
        cmds.push_back(std::move(r));
        return *cmds.back();
    };

    {
        auto& r = reg("denoise-sharpen", "TV denoising with a backward-diffusion term",
                      run_denoise_sharpen);
        add_solver_flags(r.sub, r.cfg);
        add_image_flags(r.sub, r.cfg);
        r.sub->add_option("--c", r.cfg.c, "data weight");
        r.sub->add_option("--omega-frac", r.cfg.omega_frac,
                          "sharpening weight as a fraction of c/||K||^2");
        r.sub->add_option("--flow-steps", r.cfg.flow_steps, "outer flow iterations");
    }
    {
        auto& r = reg("illum", "denoising with two-level illumination correction", run_illum);
        add_solver_flags(r.sub, r.cfg);
        add_image_flags(r.sub, r.cfg);
        r.sub->add_option("--c", r.cfg.c, "data weight");
        r.sub->add_option("--omega", r.cfg.omega, "nonconvex term weight (wins over the fraction)");
        r.sub->add_option("--omega-frac", r.cfg.omega_frac,
                          "nonconvex weight as a fraction of c/||K||^2");
        r.sub->add_option("--r", r.cfg.r, "intensity center");
        r.sub->add_option("--e", r.cfg.e, "squared intensity offset");
    }
    {
        auto& r = reg("ms-denoise", "piecewise smooth approximation", run_ms_denoise);
        add_solver_flags(r.sub, r.cfg);
        add_image_flags(r.sub, r.cfg);
        r.sub->add_option("--alpha", r.cfg.alpha, "quadratic slope weight");
        r.sub->add_option("--lambda", r.cfg.lambda, "truncation level");
        r.sub->add_option("--eps0", r.cfg.eps0, "relative smoothing width in (0,1)");
    }
    {
        auto& r = reg("ms-inpaint", "edge-preserving inpainting", run_ms_inpaint);
        add_solver_flags(r.sub, r.cfg);
        add_image_flags(r.sub, r.cfg);
        r.sub->add_option("--mask", r.cfg.mask_path, "known-pixel mask image (>0.5 = known)");
        r.sub->add_option("--alpha", r.cfg.alpha, "quadratic slope weight");
        r.sub->add_option("--lambda", r.cfg.lambda, "truncation level");
        r.sub->add_option("--eps0", r.cfg.eps0, "relative smoothing width in (0,1)");
        r.sub->add_flag("--adaptive,!--constant", r.cfg.adaptive,
                        "adaptive step schedule (default)");
        r.sub->add_option("--adaptive-gamma,--gamma", r.cfg.gamma, "acceleration parameter");
        r.sub->add_option("--sigma0-factor", r.cfg.sigma0_factor, "sigma0 = factor * omega");
        r.sub->add_flag("--tau0-large", r.cfg.tau0_large,
                        "tau0 = ||K||^2/sigma0: large initial primal steps");
    }
    {
        auto& r = reg("dither", "binary halftoning via deconvolution", run_dither);
        add_solver_flags(r.sub, r.cfg);
        add_image_flags(r.sub, r.cfg);
        r.sub->add_option("--lambda", r.cfg.lambda, "binarity weight");
        r.sub->add_option("--kernel-std", r.cfg.kernel_std, "Gaussian kernel std");
    }
    {
        auto& r = reg("toy-prop", "scalar divergence example", run_toy_prop_cmd);
        r.sub->add_option("--sigma", r.cfg.sigma, "dual step (the regime selector)");
        r.sub->add_option("--tau", r.cfg.tau, "primal step");
        r.sub->add_option("--theta", r.cfg.theta, "extrapolation weight in [0,1]");
        r.sub->add_option("--c", r.cfg.toy_c, "strong convexity of the data term");
        r.sub->add_option("--iters", r.cfg.toy_iters, "iterations");
    }
    {
        auto& r = reg("toy-example", "g-divergence example with u = 0", run_toy_example_cmd);
        r.sub->add_option("--sigma", r.cfg.sigma, "dual step (> 1; decay needs > 2)");
        r.sub->add_option("--c", r.cfg.toy_c, "strong convexity of the data term (> 2)");
        r.sub->add_option("--iters", r.cfg.toy_iters, "iterations");
        r.sub->add_option("--q0x", r.cfg.q0x, "first component of q0");
        r.sub->add_option("--q0y", r.cfg.q0y, "second component of q0");
    }
    {
        auto& r = reg("rate-check", "empirical 1/n error decay check", run_rate_check_cmd);
        r.sub->add_option("--size", r.cfg.size, "synthetic input edge length");
        r.sub->add_option("--noise-std", r.cfg.noise_std, "synthetic input noise level");
        r.sub->add_option("--theta", r.cfg.theta, "extrapolation weight of the measured run");
        r.sub->add_option("--max-iter", r.cfg.max_iter, "measured run length");
        r.sub->add_option("--c", r.cfg.c, "data weight");
        r.sub->add_option("--omega-frac", r.cfg.omega_frac, "sharpening fraction");
        r.sub->add_option("--sigma-factor", r.cfg.sigma_factor, "sigma = factor * omega");
        r.sub->add_option("--ref-sigma-factor", r.cfg.ref_sigma_factor,
                          "reference run sigma = factor * omega");
        r.sub->add_option("--ref-iter", r.cfg.ref_iter, "reference run iterations");
        r.sub->add_option("--n0", r.cfg.n0, "window start");
    }

    // pre-scan for --run-file so file values load before flags override them
    try {
        for (auto& r : cmds) {
            for (int i = 1; i < argc - 1; ++i) {
                if (std::string(argv[i]) == r->sub->get_name()) {
                    for (int j = i + 1; j < argc - 1; ++j)
                        if (std::string(argv[j]) == "--run-file")
                            apply_run_file(r->cfg, argv[j + 1]);
                    break;
                }
            }
        }
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    } catch (const IoError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitIo;
    } catch (const ConfigError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitConfig;
    }

    try {
        for (auto& r : cmds)
            if (r->sub->parsed()) return r->fn(r->cfg);
        std::cerr << "error: no subcommand\n";
        return kExitConfig;
    } catch (const ConfigError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const IoError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitIo;
    } catch (const std::invalid_argument& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitIo;
    }
}
