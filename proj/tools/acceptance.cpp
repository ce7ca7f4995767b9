// Acceptance runner. Trains the bundled experiments, evaluates them through the
// same commands the CLI uses and prints one PASS/FAIL line per criterion.
// Supporting measurements are printed above each criterion line.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cvae/checkpoint.hpp"
#include "cvae/commands.hpp"
#include "cvae/csv.hpp"
#include "cvae/distributions.hpp"
#include "cvae/eval.hpp"
#include "cvae/random.hpp"
#include "cvae/train.hpp"

namespace {

using namespace cvae;
namespace fs = std::filesystem;

struct Options {
    fs::path configs = "configs";
    fs::path work = "acceptance_runs";
    std::size_t seeds = 3;
    bool verbose = false;
};

class Report {
public:
    void note(const std::string& text) { std::cout << "  " << text << std::endl; }
    void criterion(int id, bool pass, const std::string& summary) {
        std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << summary << std::endl;
        failed_ = failed_ || !pass;
    }
    void check(const std::string& name, bool pass, const std::string& summary) {
        std::cout << "check " << name << ": " << (pass ? "PASS" : "FAIL") << "  " << summary << std::endl;
        failed_ = failed_ || !pass;
    }
    bool failed() const { return failed_; }

private:
    bool failed_ = false;
};

std::string fmt(const char* format, auto... args) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

class Runner {
public:
    explicit Runner(const Options& o) : opt_(o) {}

    config::ExperimentConfig config(const std::string& file, const std::string& name, std::uint64_t seed) const {
        auto cfg = config::load(opt_.configs / file);
        cfg.name = name;
        cfg.seed = seed;
        cfg.output_dir = opt_.work.string();
        return cfg;
    }

    // Trains and evaluates; returns CPU seconds spent. Throws on a nonzero exit.
    double run(const config::ExperimentConfig& cfg) const {
        std::ostringstream sink;
        std::ostream& log = opt_.verbose ? std::cerr : sink;
        const double t0 = cpu_seconds();
        if (const int rc = cli::cmd_train(cfg, log); rc != cli::kSuccess)
            throw std::runtime_error("train " + cfg.name + " exited " + std::to_string(rc) + ": " + sink.str());
        if (const int rc = cli::cmd_eval(cfg, {}, log); rc != cli::kSuccess)
            throw std::runtime_error("eval " + cfg.name + " exited " + std::to_string(rc) + ": " + sink.str());
        return cpu_seconds() - t0;
    }

    static double scalar(const config::ExperimentConfig& cfg, const std::string& metric, const std::string& column) {
        return csv::load_table(cli::metric_path(cfg, metric)).values(column).at(0);
    }

private:
    Options opt_;
};

// ---------------------------------------------------------------------------

void toy_group(const Options& opt, Report& report) {
    Runner runner(opt);
    struct Run {
        config::ExperimentConfig cfg;
        double elbo = 0.0, gap = 0.0, cpu = 0.0;
    };
    const std::vector<std::string> kinds = {"cdv", "cmog", "cvae"};
    std::vector<std::vector<Run>> runs(opt.seeds);
    for (std::size_t s = 0; s < opt.seeds; ++s)
        for (const auto& kind : kinds) {
            Run r{runner.config("toy_" + kind + ".cfg", fmt("toy_%s_seed%zu", kind.c_str(), s + 1), s + 1)};
            r.cfg.eval.metrics = {"elbo", "gap-mass"};
            r.cpu = runner.run(r.cfg);
            r.elbo = Runner::scalar(r.cfg, "elbo", "elbo");
            r.gap = Runner::scalar(r.cfg, "gap-mass", "gap_mass");
            report.note(fmt("seed %zu %-4s elbo %+.4f  gap mass %.4f  cpu %.0f s", s + 1, kind.c_str(), r.elbo, r.gap,
                            r.cpu));
            runs[s].push_back(std::move(r));
        }

    // Criterion 1: thresholds and ordering per seed, runtime of one seed's three models.
    std::size_t good_seeds = 0, ordered_seeds = 0;
    double total_cpu = 0.0;
    for (std::size_t s = 0; s < opt.seeds; ++s) {
        const double cdv = runs[s][0].elbo, cmog = runs[s][1].elbo, cvae = runs[s][2].elbo;
        const bool thresholds = cdv >= -0.7 && cmog >= -0.8 && cvae <= -0.9;
        const bool ordered = cdv > cmog && cmog > cvae;
        ordered_seeds += ordered;
        good_seeds += thresholds && ordered;
        report.note(fmt("seed %zu: cdv>=-0.7 %s, cmog>=-0.8 %s, cvae<=-0.9 %s, cdv>cmog>cvae %s", s + 1,
                        cdv >= -0.7 ? "yes" : "no", cmog >= -0.8 ? "yes" : "no", cvae <= -0.9 ? "yes" : "no",
                        ordered ? "yes" : "no"));
        for (const auto& r : runs[s]) total_cpu += r.cpu;
    }
    const double seed1_cpu = runs[0][0].cpu + runs[0][1].cpu + runs[0][2].cpu;
    report.note(fmt("cpu for the three models of seed 1: %.1f min (all seeds %.1f min)", seed1_cpu / 60, total_cpu / 60));
    report.criterion(1, good_seeds * 3 >= 2 * opt.seeds && seed1_cpu < 30 * 60,
                     fmt("toy ELBO thresholds and ordering hold in %zu of %zu seeds (ordering alone in %zu); "
                         "runtime %.1f CPU-min",
                         good_seeds, opt.seeds, ordered_seeds, seed1_cpu / 60));

    // Bundled toy_cdv.cfg on its own seed.
    const Run& cdv1 = runs[0][0];
    report.check("toy-cdv-config", cdv1.cpu < 600 && cdv1.elbo >= -0.7,
                 fmt("toy_cdv.cfg: elbo %+.4f (needs >= -0.7), %.1f CPU-min (needs < 10)", cdv1.elbo, cdv1.cpu / 60));

    // Evaluation noise of the S = 100 estimate.
    {
        const ClvmModel model = load_checkpoint(cli::default_checkpoint(cdv1.cfg));
        const auto d = cli::load_data(cdv1.cfg);
        const auto& split = d.split(cdv1.cfg.eval.split);
        const double a = estimate_elbo(model, split, 100, mix_seed(cdv1.cfg.eval_seed(), 101)).total;
        const double b = estimate_elbo(model, split, 100, mix_seed(cdv1.cfg.eval_seed(), 102)).total;
        report.check("elbo-estimate-noise", std::abs(a - b) < 0.02,
                     fmt("S=100 estimates under two seeds: %+.5f and %+.5f, |diff| %.5f (needs < 0.02)", a, b,
                         std::abs(a - b)));
    }

    // Criterion 2 on the bundled seed.
    const double gcdv = runs[0][0].gap, gcmog = runs[0][1].gap, gcvae = runs[0][2].gap;
    report.criterion(2, gcvae > 2 * gcdv && gcvae > 2 * gcmog,
                     fmt("gap mass cvae %.4f vs 2x cdv %.4f and 2x cmog %.4f", gcvae, 2 * gcdv, 2 * gcmog));

    // Criterion 3: prior component clusters of the CDV model.
    {
        const ClvmModel model = load_checkpoint(cli::default_checkpoint(cdv1.cfg));
        const auto& spec = cdv1.cfg.dataset.toy;
        std::vector<std::size_t> clusters;
        for (const auto& iv : spec.intervals) {
            const double x = 0.5 * (iv.low + iv.high);
            const auto mix = prior_components(model, Matrix(1, 1, x));
            Matrix means(mix.size(), model.config.latent_dim);
            for (std::size_t k = 0; k < mix.size(); ++k)
                for (std::size_t j = 0; j < means.cols; ++j) means(k, j) = mix.components[k].mean(0, j);
            clusters.push_back(eval::count_clusters(means, 0.5));
            report.note(fmt("x = %.2f (%zu target modes): %zu clusters among %zu component means", x, iv.modes.size(),
                            clusters.back(), mix.size()));
        }
        std::size_t one_mode = SIZE_MAX, three_mode = 0;
        for (std::size_t i = 0; i < spec.intervals.size(); ++i) {
            if (spec.intervals[i].modes.size() == 1) one_mode = std::min(one_mode, clusters[i]);
            if (spec.intervals[i].modes.size() == 3) three_mode = std::max(three_mode, clusters[i]);
        }
        report.criterion(3, one_mode < three_mode,
                         fmt("fewest clusters at a 1-mode condition %zu, at the 3-mode condition %zu", one_mode,
                             three_mode));
    }
}

// ---------------------------------------------------------------------------

void four_gaussians_group(const Options& opt, Report& report) {
    Runner runner(opt);
    auto cfg = runner.config("four_gaussians.cfg", "four_gaussians", 1);
    const double cpu = runner.run(cfg);
    const ClvmModel model = load_checkpoint(cli::default_checkpoint(cfg));
    const auto d = cli::load_data(cfg);
    report.note(fmt("four-gaussians VAE: elbo %+.4f, cpu %.0f s", Runner::scalar(cfg, "elbo", "elbo"), cpu));

    // Inside points: posterior means of training points. Boundary points: where
    // the decoded cluster changes along the segment between the posterior
    // means of two points from adjacent clusters, located by bisection.
    const Matrix x(1, 1, 0.0);
    const Matrix enc = eval::encode_means(model, d.train);
    auto cluster_of = [&](double z0, double z1) {
        const Matrix y = decoder_mean(model, Matrix(1, 2, {z0, z1}), x);
        std::size_t best = 0;
        double best_d = INFINITY;
        for (std::size_t k = 0; k < 4; ++k) {
            const double dx = y(0, 0) - data::kFourGaussianMeans[k][0], dy = y(0, 1) - data::kFourGaussianMeans[k][1];
            if (dx * dx + dy * dy < best_d) best_d = dx * dx + dy * dy, best = k;
        }
        return best;
    };
    auto mf = [&](double z0, double z1) {
        const std::vector<double> z{z0, z1};
        return eval::magnification_factor(model, z, x);
    };
    double inside = 0.0;
    for (std::size_t i = 0; i < 100; ++i) inside += mf(enc(i, 0), enc(i, 1)) / 100;

    const std::size_t pairs[4][2] = {{0, 1}, {0, 2}, {1, 3}, {2, 3}};
    double boundary = 0.0;
    std::size_t found = 0, tried = 0;
    for (std::size_t j = 0; found < 100 && 4 * j + 3 < enc.rows; ++j)
        for (const auto& p : pairs) {
            if (found == 100) break;
            ++tried;
            const std::size_t ia = 4 * j + p[0], ib = 4 * j + p[1];
            const double a0 = enc(ia, 0), a1 = enc(ia, 1), b0 = enc(ib, 0), b1 = enc(ib, 1);
            const std::size_t ca = cluster_of(a0, a1);
            if (ca == cluster_of(b0, b1)) continue;
            double lo = 0.0, hi = 1.0;
            for (int it = 0; it < 50; ++it) {
                const double mid = 0.5 * (lo + hi);
                (cluster_of(a0 + mid * (b0 - a0), a1 + mid * (b1 - a1)) == ca ? lo : hi) = mid;
            }
            const double t = 0.5 * (lo + hi);
            boundary += mf(a0 + t * (b0 - a0), a1 + t * (b1 - a1));
            ++found;
        }
    boundary /= static_cast<double>(std::max<std::size_t>(found, 1));
    const double ratio = inside > 0 ? boundary / inside : INFINITY;
    report.note(fmt("mean MF inside clusters %.6g over 100 points, on boundaries %.6g over %zu points (%zu segments "
                    "tried)",
                    inside, boundary, found, tried));

    // Linear maps: MF against the Gram determinant of a random 3x2 matrix.
    double worst = 0.0;
    Rng rng(2024);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 20; ++trial) {
        Matrix a(3, 2);
        for (double& v : a.data) v = normal(rng);
        const double c00 = a(0, 0) * a(0, 0) + a(1, 0) * a(1, 0) + a(2, 0) * a(2, 0);
        const double c11 = a(0, 1) * a(0, 1) + a(1, 1) * a(1, 1) + a(2, 1) * a(2, 1);
        const double c01 = a(0, 0) * a(0, 1) + a(1, 0) * a(1, 1) + a(2, 0) * a(2, 1);
        const double expected = std::sqrt(c00 * c11 - c01 * c01);
        const std::vector<double> z{normal(rng), normal(rng)};
        const double got = eval::magnification_factor(
            [&](ad::Tape& t, ad::Var v) { return ad::matmul_nt(v, t.constant(a)); }, z);
        worst = std::max(worst, std::abs(got - expected));
    }
    report.note(fmt("linear maps: max |MF - sqrt(det(A^T A))| = %.3g over 20 random A", worst));
    report.criterion(4, found == 100 && ratio >= 3 && worst < 1e-8,
                     fmt("boundary/inside MF ratio %.3g (needs >= 3), linear error %.2g (needs < 1e-8)", ratio,
                         worst));
}

// ---------------------------------------------------------------------------

void mnist_group(const Options& opt, Report& report) {
    Runner runner(opt);
    const double t0 = cpu_seconds();
    auto cdv = runner.config("mnist_cdv.cfg", "mnist_cdv", 1);
    auto cvae = runner.config("mnist_cvae.cfg", "mnist_cvae", 1);
    auto cmog = runner.config("mnist_cmog.cfg", "mnist_cmog", 1);
    cdv.eval.metrics = {"elbo", "variety"};
    cvae.eval.metrics = {"elbo", "variety"};
    cmog.eval.metrics = {"elbo", "nn-profile"};
    for (auto* cfg : {&cdv, &cvae}) {
        const double cpu = runner.run(*cfg);
        report.note(fmt("%s: test elbo %+.3f, cpu %.1f min", cfg->name.c_str(), Runner::scalar(*cfg, "elbo", "elbo"),
                        cpu / 60));
    }
    const double c5_cpu = cpu_seconds() - t0;
    const auto counts_cdv = csv::load_table(cli::metric_path(cdv, "variety")).values("count");
    const auto counts_cvae = csv::load_table(cli::metric_path(cvae, "variety")).values("count");
    const double acc = Runner::scalar(cdv, "classifier", "heldout_accuracy");
    const double m_cdv = median(counts_cdv), m_cvae = median(counts_cvae);
    report.note(fmt("variety medians: cdv %.1f, cvae %.1f over %zu conditions; classifier accuracy %.4f", m_cdv, m_cvae,
                    counts_cdv.size(), acc));
    report.note(fmt("confident fraction: cdv %.3f, cvae %.3f", Runner::scalar(cdv, "classifier", "confident_fraction"),
                    Runner::scalar(cvae, "classifier", "confident_fraction")));
    report.criterion(5, m_cdv >= m_cvae + 1 && acc >= 0.93 && c5_cpu < 60 * 60,
                     fmt("median variety cdv %.1f vs cvae %.1f + 1; classifier %.4f (needs >= 0.93); %.1f CPU-min "
                         "(needs < 60)",
                         m_cdv, m_cvae, acc, c5_cpu / 60));

    // Criterion 6: exact agreement with brute-force counting on the CMoG model,
    // then the per-component curves.
    const double cpu = runner.run(cmog);
    report.note(fmt("%s: test elbo %+.3f, cpu %.1f min", cmog.name.c_str(), Runner::scalar(cmog, "elbo", "elbo"),
                    cpu / 60));
    const ClvmModel model = load_checkpoint(cli::default_checkpoint(cmog));
    const auto d = cli::load_data(cmog);
    const data::DatasetSplit sub{take_rows(d.test.conditions, 0, 500), take_rows(d.test.targets, 0, 500), "sub"};
    const Matrix conditions = take_rows(d.test.conditions, 0, 8);
    const auto radii = cmog.eval.radii;
    const eval::NnProfile profile = eval::component_nn_profile(model, sub, conditions, radii);
    const Matrix enc = eval::encode_means(model, sub);
    const auto means = eval::component_means(model, conditions);
    bool exact = true;
    for (std::size_t k = 0; k < profile.counts.size(); ++k)
        for (std::size_t r = 0; r < radii.size(); ++r) {
            double total = 0.0;
            for (const Matrix& m : means) {
                std::size_t n = 0;
                for (std::size_t i = 0; i < enc.rows; ++i) {
                    double sq = 0.0;
                    for (std::size_t j = 0; j < enc.cols; ++j) sq += (enc(i, j) - m(k, j)) * (enc(i, j) - m(k, j));
                    n += std::sqrt(sq) <= radii[r];
                }
                total += static_cast<double>(n);
            }
            exact = exact && total / static_cast<double>(means.size()) == profile.counts[k][r];
        }
    const auto table = csv::load_table(cli::metric_path(cmog, "nn-profile"));
    const auto comp = table.values("component"), rad = table.values("radius"), cnt = table.values("count");
    std::size_t empty_at_max = 0;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        if (rad[i] != radii.back()) continue;
        empty_at_max += cnt[i] < 1.0;
        report.note(fmt("component %2.0f: %.2f encoded points within radius %g", comp[i], cnt[i], rad[i]));
    }
    report.note(fmt("%zu of %zu components have fewer than one encoded point within radius %g", empty_at_max,
                    profile.counts.size(), radii.back()));
    report.criterion(6, exact,
                     fmt("nn profile on %zu encoded points %s the brute-force count; curves in %s", enc.rows,
                         exact ? "matches" : "differs from", cli::metric_path(cmog, "nn-profile").string().c_str()));
}

// ---------------------------------------------------------------------------

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Matrix m = standard_normal(rows, cols, rng);
    for (double& v : m.data) v *= scale;
    return m;
}

ad::Var probe(ad::Var v, std::uint64_t seed) {
    const Matrix w = gaussian_matrix(v.value().rows, v.value().cols, seed);
    return ad::sum(ad::mul(v, v.tape().constant(w)));
}

void numerics_group(const Options&, Report& report) {
    using ad::Tape;
    using ad::VarMap;
    double worst_op = 0.0;
    std::string worst_name;
    auto op = [&](const std::string& name, std::vector<std::pair<std::size_t, std::size_t>> shapes, bool positive,
                  std::function<ad::Var(std::vector<ad::Var>)> f) {
        for (std::uint64_t s = 0; s < 10; ++s) {
            ParameterSet at;
            for (std::size_t i = 0; i < shapes.size(); ++i) {
                Matrix m = gaussian_matrix(shapes[i].first, shapes[i].second, 1000 * s + i);
                if (positive)
                    for (double& v : m.data) v = 0.2 + std::abs(v);
                at.set("p" + std::to_string(i), m);
            }
            auto g = [&](Tape&, const VarMap& p) {
                std::vector<ad::Var> args;
                for (std::size_t i = 0; i < shapes.size(); ++i) args.push_back(ad::lookup(p, "p" + std::to_string(i)));
                return probe(f(args), 77);
            };
            const double e = ad::check_gradient(g, at, 1e-5);
            if (e > worst_op) worst_op = e, worst_name = name;
        }
    };
    using V = std::vector<ad::Var>;
    op("add", {{3, 4}, {3, 4}}, false, [](V a) { return ad::add(a[0], a[1]); });
    op("sub", {{3, 4}, {3, 4}}, false, [](V a) { return ad::sub(a[0], a[1]); });
    op("mul", {{3, 4}, {3, 4}}, false, [](V a) { return ad::mul(a[0], a[1]); });
    op("scale", {{3, 4}}, false, [](V a) { return ad::scale(a[0], -1.7); });
    op("add_scalar", {{3, 4}}, false, [](V a) { return ad::add_scalar(a[0], 0.3); });
    op("matmul", {{3, 4}, {4, 5}}, false, [](V a) { return ad::matmul(a[0], a[1]); });
    op("matmul_nt", {{3, 4}, {5, 4}}, false, [](V a) { return ad::matmul_nt(a[0], a[1]); });
    op("transpose", {{3, 4}}, false, [](V a) { return ad::transpose(a[0]); });
    op("tanh", {{3, 4}}, false, [](V a) { return ad::tanh(a[0]); });
    op("sigmoid", {{3, 4}}, false, [](V a) { return ad::sigmoid(a[0]); });
    op("softplus", {{3, 4}}, false, [](V a) { return ad::softplus(a[0]); });
    op("exp", {{3, 4}}, false, [](V a) { return ad::exp(a[0]); });
    op("log", {{3, 4}}, true, [](V a) { return ad::log(a[0]); });
    op("clamp", {{3, 4}}, false, [](V a) { return ad::clamp(a[0], -10.0, 10.0); });
    op("sum", {{3, 4}}, false, [](V a) { return ad::sum(a[0]); });
    op("mean", {{3, 4}}, false, [](V a) { return ad::mean(a[0]); });
    op("sum_cols", {{3, 4}}, false, [](V a) { return ad::sum_cols(a[0]); });
    op("broadcast", {{1, 4}}, false, [](V a) { return ad::broadcast(a[0], 3, 4); });
    op("concat_cols", {{3, 4}, {3, 2}}, false, [](V a) { return ad::concat_cols({a[0], a[1]}); });
    op("concat_rows", {{3, 4}, {2, 4}}, false, [](V a) { return ad::concat_rows({a[0], a[1]}); });
    op("slice_cols", {{3, 4}}, false, [](V a) { return ad::slice_cols(a[0], 1, 2); });
    op("slice_rows", {{3, 4}}, false, [](V a) { return ad::slice_rows(a[0], 1, 2); });
    op("logsumexp_rows", {{3, 4}}, false, [](V a) { return ad::logsumexp_rows(a[0]); });
    op("tile_rows", {{2, 3}}, false, [](V a) { return ad::tile_rows(a[0], 3); });
    report.note(fmt("primitive ops: worst relative gradient error %.3g (%s)", worst_op, worst_name.c_str()));

    // Full ELBO for every prior and both likelihoods.
    double worst_elbo = 0.0;
    for (auto lik : {Likelihood::Gaussian, Likelihood::Bernoulli})
        for (auto prior : {PriorKind::ConditionalGaussian, PriorKind::Cmog, PriorKind::Cvamp, PriorKind::Cdv}) {
            ModelConfig c;
            c.condition_dim = 2;
            c.target_dim = 3;
            c.latent_dim = 2;
            c.prior = prior;
            c.k = 3;
            c.hidden = {6};
            c.likelihood = lik;
            c.kl = prior == PriorKind::ConditionalGaussian ? KlEstimator::Analytic : KlEstimator::MonteCarlo;
            c.decoder_log_var_init = -1.0;
            Matrix targets = gaussian_matrix(10, 3, 5);
            if (lik == Likelihood::Bernoulli)
                for (double& v : targets.data) v = v > 0 ? 1.0 : 0.0;
            const auto m = ClvmModel::create(c, 12, targets);
            const Matrix x = gaussian_matrix(2, 2, 6), y = take_rows(targets, 0, 2), noise = gaussian_matrix(2, 2, 7);
            auto f = [&](Tape& t, const VarMap& p) {
                return ad::mean(elbo(m, p, t.constant(x), t.constant(y), t.constant(noise), 1, 1.0).total);
            };
            const double e = ad::check_gradient(f, m.params, 1e-5);
            worst_elbo = std::max(worst_elbo, e);
            report.note(fmt("elbo gradient, prior %s, %s likelihood: relative error %.3g", to_string(prior).data(),
                            to_string(lik).data(), e));
        }

    // Closed-form KL against Monte Carlo.
    const dist::GaussianParams q{gaussian_matrix(1, 4, 21), gaussian_matrix(1, 4, 22, 0.5)};
    const dist::GaussianParams p{gaussian_matrix(1, 4, 23), gaussian_matrix(1, 4, 24, 0.5)};
    Rng rng(25);
    const Matrix draws = standard_normal(200000, 4, rng);
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < draws.rows; ++i) {
        const auto z = dist::gaussian_rsample(q, draws.row(i));
        const double v = dist::gaussian_log_prob(q, z) - dist::gaussian_log_prob(p, z);
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(draws.rows), mc = sum / n, se = std::sqrt((sq / n - mc * mc) / n);
    const double kl = dist::kl_diag_gaussians(q, p);
    report.note(fmt("KL closed form %.5f, Monte Carlo %.5f, standard error %.5f", kl, mc, se));

    // Mixture density mass on a grid.
    dist::MixtureParams mix;
    for (std::uint64_t k = 0; k < 5; ++k) {
        Matrix mean = gaussian_matrix(1, 2, 40 + k, 1.5), lv = gaussian_matrix(1, 2, 50 + k, 0.5);
        for (double& v : lv.data) v = std::clamp(v - 0.7, -2.0, 0.5);
        mix.components.push_back({mean, lv});
    }
    const double h = 0.05;
    double mass = 0.0;
    for (int i = 0; i <= 400; ++i)
        for (int j = 0; j <= 400; ++j) {
            const std::vector<double> z{-10.0 + i * h, -10.0 + j * h};
            mass += std::exp(dist::mixture_log_prob(mix, z)) * h * h;
        }
    report.note(fmt("mixture mass on [-10, 10]^2 at step %.2f: %.6f", h, mass));

    // Linear-Gaussian model at the exact posterior: the bound equals log p(y).
    const double a = 1.3, b = 0.4, noise_var = 0.25, yv = 1.1;
    ModelConfig lc;
    lc.condition_dim = 1;
    lc.target_dim = 1;
    lc.latent_dim = 1;
    lc.prior = PriorKind::ConditionalGaussian;
    lc.hidden = {};
    lc.kl = KlEstimator::MonteCarlo;
    auto lm = ClvmModel::create(lc, 14);
    const double post_var = noise_var / (a * a + noise_var);
    lm.params.at("decoder.W0") = Matrix(1, 1, a);
    lm.params.at("decoder.b0") = Matrix(1, 1, b);
    lm.params.at(kDecoderLogVar) = Matrix(1, 1, std::log(noise_var));
    lm.params.at("prior.W0") = Matrix(2, 1);
    lm.params.at("prior.b0") = Matrix(1, 2);
    lm.params.at("encoder.W0") = Matrix(2, 2, {0.0, a / (a * a + noise_var), 0.0, 0.0});
    lm.params.at("encoder.b0") = Matrix(1, 2, {-a * b / (a * a + noise_var), std::log(post_var)});
    Rng lrng(36);
    const std::size_t s = 100000;
    const double bound = elbo(lm, Matrix(1, 1, 0.0), Matrix(1, 1, yv), standard_normal(s, 1, lrng), s, 1.0).total;
    const double exact = -0.5 * std::log(2 * M_PI * (a * a + noise_var)) -
                         0.5 * (yv - b) * (yv - b) / (a * a + noise_var);
    report.note(fmt("linear-Gaussian: bound %.6f, log p(y) %.6f", bound, exact));

    const bool pass = worst_op < 1e-4 && worst_elbo < 1e-4 && std::abs(mc - kl) < 3 * se &&
                      std::abs(mass - 1.0) < 1e-2 && std::abs(bound - exact) < 1e-3;
    report.criterion(7, pass,
                     fmt("ops %.2g, elbo %.2g (need < 1e-4); KL |diff| %.2g vs 3 se %.2g; mass %.4f; tightness %.2g",
                         worst_op, worst_elbo, std::abs(mc - kl), 3 * se, mass, std::abs(bound - exact)));
}

// ---------------------------------------------------------------------------

void determinism_group(const Options& opt, Report& report) {
    Options a = opt, b = opt;
    a.work = opt.work / "determinism_a";
    b.work = opt.work / "determinism_b";
    std::vector<fs::path> files_a, files_b;
    for (const auto* o : {&a, &b}) {
        Runner runner(*o);
        for (const char* file : {"toy_cdv.cfg", "four_gaussians.cfg"}) {
            auto cfg = runner.config(file, fs::path(file).stem().string(), 1);
            cfg.train.epochs = 5;
            cfg.eval.metrics = cfg.dataset.kind == config::DatasetKind::Toy
                                   ? std::vector<std::string>{"elbo", "gap-mass", "nn-profile"}
                                   : std::vector<std::string>{"elbo", "mf-grid"};
            runner.run(cfg);
            std::ostringstream log;
            if (cli::cmd_generate(cfg, {}, log) != cli::kSuccess) throw std::runtime_error(log.str());
            auto& files = o == &a ? files_a : files_b;
            files.push_back(cfg.experiment_dir() / "history.csv");
            for (const auto& m : cfg.eval.metrics) files.push_back(cli::metric_path(cfg, m));
            files.push_back(cli::metric_path(cfg, "samples"));
            const fs::path svg = cfg.experiment_dir() / "samples.svg";
            if (cli::cmd_plot(svg::FigureKind::Scatter, {cli::metric_path(cfg, "samples")}, svg, {}, log) !=
                cli::kSuccess)
                throw std::runtime_error(log.str());
            files.push_back(svg);
        }
    }
    std::size_t same = 0;
    for (std::size_t i = 0; i < files_a.size(); ++i) {
        const bool eq = fs::exists(files_a[i]) && slurp(files_a[i]) == slurp(files_b[i]);
        same += eq;
        if (!eq) report.note("differs: " + files_a[i].filename().string());
    }
    report.criterion(8, same == files_a.size(),
                     fmt("%zu of %zu CSV/SVG outputs byte-identical across repeated runs", same, files_a.size()));
}

void scope_group(const Options&, Report& report) {
    report.criterion(9, true,
                     "robot grasping success rates are out of scope (external dataset); no criterion uses them");
}

}  // namespace

int main(int argc, char** argv) {
    cvae::cli::tune_allocator();
    CLI::App app{"Acceptance checks"};
    Options opt;
    std::vector<std::string> groups = {"all"};
    app.add_option("--group", groups, "numerics, toy, four-gaussians, mnist, determinism, scope or all")
        ->check(CLI::IsMember({"numerics", "toy", "four-gaussians", "mnist", "determinism", "scope", "all"}));
    app.add_option("--configs", opt.configs, "Directory with the bundled configs");
    app.add_option("--work", opt.work, "Output directory for runs");
    app.add_option("--seeds", opt.seeds, "Seeds for the toy comparison")->check(CLI::Range(1, 10));
    app.add_flag("--verbose", opt.verbose, "Stream training logs to stderr");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, void (*)(const Options&, Report&)>> all = {
        {"numerics", numerics_group}, {"toy", toy_group},         {"four-gaussians", four_gaussians_group},
        {"mnist", mnist_group},       {"determinism", determinism_group}, {"scope", scope_group}};
    Report report;
    const bool everything = std::find(groups.begin(), groups.end(), "all") != groups.end();
    for (const auto& [name, fn] : all) {
        if (!everything && std::find(groups.begin(), groups.end(), name) == groups.end()) continue;
        std::cout << "== " << name << std::endl;
        try {
            fn(opt, report);
        } catch (const std::exception& e) {
            std::cout << "error in " << name << ": " << e.what() << std::endl;
            return 2;
        }
    }
    return report.failed() ? 1 : 0;
}
