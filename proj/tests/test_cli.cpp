#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cvae/checkpoint.hpp"
#include "cvae/commands.hpp"
#include "cvae/config.hpp"
#include "cvae/csv.hpp"
#include "cvae/svg.hpp"
#include "cvae/train.hpp"

using namespace cvae;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t count(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
    return n;
}

// Scratch directory under the system temp dir, removed on exit. Clears
// CVAE_OUTPUT_ROOT so runs land in output_dir.
struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& tag) {
        unsetenv("CVAE_OUTPUT_ROOT");
        dir = fs::temp_directory_path() / ("cvae_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
};

config::ExperimentConfig tiny_toy(const fs::path& out, const std::string& name) {
    config::ExperimentConfig cfg;
    cfg.name = name;
    cfg.output_dir = out.string();
    cfg.seed = 4;
    cfg.dataset.toy.samples_per_interval = 40;
    cfg.model.k = 3;
    cfg.model.hidden = {8};
    cfg.train.epochs = 2;
    cfg.train.batch_size = 32;
    cfg.eval.samples = 5;
    cfg.eval.profile_conditions = 8;
    cfg.eval.gap_samples = 50;
    cfg.eval.generate_conditions = 4;
    cfg.eval.generate_samples = 5;
    return cfg;
}

config::ConfigError parse_error(const std::string& text) {
    try {
        config::parse(text, "t.cfg");
    } catch (const config::ConfigError& e) {
        return e;
    }
    FAIL("expected a ConfigError");
    throw;
}

}  // namespace

TEST_CASE("config parses sections, comments and lists") {
    const auto cfg = config::parse(
        "# comment\n"
        "name = run1\n"
        "seed = 7\n"
        "; another comment\n"
        "[model]\n"
        "prior = cmog\n"
        "k = 5\n"
        "hidden = 32, 16\n"
        "[train]\n"
        "lr = 0.003\n"
        "epochs = 3\n"
        "[eval]\n"
        "metrics = elbo, gap-mass\n");
    CHECK(cfg.name == "run1");
    CHECK(cfg.seed == 7);
    CHECK(cfg.model.prior == PriorKind::Cmog);
    CHECK(cfg.model.k == 5);
    CHECK(cfg.model.hidden == std::vector<std::size_t>{32, 16});
    CHECK(cfg.train.adam.lr == 0.003);
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.eval.metrics == std::vector<std::string>{"elbo", "gap-mass"});
}

TEST_CASE("config defaults") {
    const auto cfg = config::parse("");
    CHECK(cfg.model.latent_dim == 2);
    CHECK(cfg.model.decoder_log_var_init == -4.0);
    CHECK(cfg.eval.samples == 100);
    CHECK(cfg.eval.radii.size() == 10);
}

TEST_CASE("config errors name the line and field") {
    auto e = parse_error("name = a\n[model]\nk = five\n");
    CHECK(e.line() == 3);
    CHECK(e.field() == "model.k");
    CHECK(std::string(e.what()).find("t.cfg:3") != std::string::npos);

    e = parse_error("[model]\nbogus = 1\n");
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("unknown key") != std::string::npos);

    e = parse_error("[nowhere]\n");
    CHECK(e.line() == 1);
    CHECK(std::string(e.what()).find("unknown section") != std::string::npos);

    e = parse_error("seed = 1\njust words\n");
    CHECK(e.line() == 2);

    e = parse_error("[eval]\nmetrics = elbo, sparkle\n");
    CHECK(e.field() == "eval.metrics");

    e = parse_error("[model]\nprior = gamma\n");
    CHECK(e.field() == "model.prior");

    e = parse_error("name = a/b\n");
    CHECK(e.field() == "name");

    e = parse_error("[eval]\nsplit = validation\n");
    CHECK(e.field() == "eval.split");
}

TEST_CASE("config overrides and key listing") {
    auto cfg = config::parse("");
    config::apply_override(cfg, "train.epochs=9");
    config::apply_override(cfg, "seed=11");
    config::apply_override(cfg, "model.prior=cvamp");
    CHECK(cfg.train.epochs == 9);
    CHECK(cfg.seed == 11);
    CHECK(cfg.model.prior == PriorKind::Cvamp);
    CHECK_THROWS_AS(config::apply_override(cfg, "train.epochs"), config::ConfigError);
    CHECK_THROWS_AS(config::apply_override(cfg, "train.nothing=1"), config::ConfigError);

    const auto keys = config::known_keys();
    for (const char* k : {"seed", "model.prior", "train.lr", "eval.samples", "dataset.kind",
                          "model.decoder_log_var_init"})
        CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
    for (const auto& k : keys) {
        if (k.find('.') == std::string::npos) continue;
        std::string text = "[" + k.substr(0, k.find('.')) + "]\n";
        CHECK_NOTHROW(config::parse(text));
    }
}

TEST_CASE("config load reports missing files") {
    CHECK_THROWS_AS(config::load("/nonexistent/none.cfg"), config::ConfigError);
}

TEST_CASE("seed streams are distinct") {
    config::ExperimentConfig cfg;
    cfg.seed = 3;
    CHECK(cfg.data_seed() != cfg.init_seed());
    CHECK(cfg.init_seed() != cfg.train_seed());
    CHECK(cfg.train_seed() != cfg.eval_seed());
}

TEST_CASE("output root environment variable") {
    config::ExperimentConfig cfg;
    cfg.name = "abc";
    cfg.output_dir = "somewhere";
    unsetenv("CVAE_OUTPUT_ROOT");
    CHECK(cfg.experiment_dir() == fs::path("somewhere") / "abc");
    setenv("CVAE_OUTPUT_ROOT", "/tmp/elsewhere", 1);
    CHECK(cfg.experiment_dir() == fs::path("/tmp/elsewhere") / "abc");
    unsetenv("CVAE_OUTPUT_ROOT");
}

TEST_CASE("csv round trip is exact") {
    csv::Table t{{"a", "b"}, {{0.1, 1.0 / 3.0}, {-1e-300, 123456789.123456789}}};
    std::stringstream s;
    csv::write_table(s, t);
    const auto back = csv::read_table(s);
    CHECK(back.header == t.header);
    CHECK(back.rows == t.rows);
    CHECK(back.values("b")[0] == 1.0 / 3.0);
    CHECK_THROWS_AS(back.column("c"), ContractError);
}

TEST_CASE("csv errors carry the offending line offset") {
    std::stringstream s("a,b\n1,2\n3\n");
    try {
        csv::read_table(s);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 8);
    }
    std::stringstream bad("a\nx\n");
    CHECK_THROWS_AS(csv::read_table(bad), FormatError);
    std::stringstream empty("");
    CHECK_THROWS_AS(csv::read_table(empty), FormatError);
}

TEST_CASE("svg rendering is deterministic") {
    const csv::Table t{{"x0", "y0"}, {{0.5, 1.0}, {1.5, -0.2}, {2.5, 0.3}}};
    const std::vector<svg::Series> series{{"a", t}};
    const auto one = svg::render(svg::FigureKind::Scatter, series);
    CHECK(one == svg::render(svg::FigureKind::Scatter, series));
    CHECK(count(one, "<circle") == 3);
    CHECK(one.rfind("<svg", 0) == 0);
}

TEST_CASE("svg with an empty table draws axes and no marks") {
    for (auto kind : {svg::FigureKind::Line, svg::FigureKind::Box, svg::FigureKind::LatentField}) {
        csv::Table t;
        t.header = svg::required_columns(kind);
        const auto out = svg::render(kind, {{"empty", t}});
        CHECK(out.find("class=\"axes\"") != std::string::npos);
        CHECK(out.find("class=\"marks\"") == std::string::npos);
        CHECK(out.find("<circle") == std::string::npos);
    }
}

TEST_CASE("svg latent field maps minimum to white and maximum to black") {
    csv::Table t{{"z0", "z1", "mf"}, {}};
    for (int j = 0; j < 50; ++j)
        for (int i = 0; i < 50; ++i) t.rows.push_back({-3.0 + 6.0 * i / 49, -3.0 + 6.0 * j / 49, double(i + j)});
    const auto out = svg::render(svg::FigureKind::LatentField, {{"mf", t}});
    CHECK(count(out, "class=\"cell\"") == 2500);
    CHECK(count(out, "rgb(255,255,255)") == 1);
    CHECK(count(out, "rgb(0,0,0)") == 1);
}

TEST_CASE("svg schema mismatch lists the expected columns") {
    const csv::Table t{{"radius", "count"}, {{1, 2}}};
    try {
        svg::render(svg::FigureKind::Line, {{"in", t}});
        FAIL("expected ContractError");
    } catch (const ContractError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("component") != std::string::npos);
        CHECK(msg.find("radius") != std::string::npos);
        CHECK(msg.find("count") != std::string::npos);
    }
    CHECK_THROWS_AS(svg::figure_kind_from_string("pie"), ContractError);
}

TEST_CASE("train with zero epochs writes the initial checkpoint") {
    Scratch s("train0");
    auto cfg = tiny_toy(s.dir, "zero");
    cfg.train.epochs = 0;
    std::ostringstream log;
    REQUIRE(cli::cmd_train(cfg, log) == cli::kSuccess);
    const auto history = csv::load_table(cfg.experiment_dir() / "history.csv");
    CHECK(history.header == std::vector<std::string>{"epoch", "elbo", "reconstruction", "kl"});
    CHECK(history.rows.empty());

    const auto d = cli::load_data(cfg);
    const auto initial = ClvmModel::create(cfg.model_config(1, 1), cfg.init_seed(), d.train.targets);
    const auto saved = load_checkpoint(cli::default_checkpoint(cfg));
    CHECK(saved.params == initial.params);
}

TEST_CASE("train, eval and plot are reproducible") {
    Scratch s("repro");
    auto cfg = tiny_toy(s.dir, "a");
    cfg.eval.metrics = {"elbo", "nn-profile", "gap-mass", "mf-grid"};
    cfg.eval.mf_steps = 5;
    std::ostringstream log;
    REQUIRE(cli::cmd_train(cfg, log) == cli::kSuccess);
    REQUIRE(cli::cmd_eval(cfg, {}, log) == cli::kSuccess);
    REQUIRE(cli::cmd_generate(cfg, {}, log) == cli::kSuccess);

    auto again = cfg;
    again.name = "b";
    REQUIRE(cli::cmd_train(again, log) == cli::kSuccess);
    REQUIRE(cli::cmd_eval(again, {}, log) == cli::kSuccess);
    REQUIRE(cli::cmd_generate(again, {}, log) == cli::kSuccess);

    CHECK(slurp(cfg.experiment_dir() / "history.csv") == slurp(again.experiment_dir() / "history.csv"));
    for (const char* m : {"elbo", "nn-profile", "gap-mass", "mf-grid", "samples"})
        CHECK(slurp(cli::metric_path(cfg, m)) == slurp(cli::metric_path(again, m)));

    const auto history = csv::load_table(cfg.experiment_dir() / "history.csv");
    CHECK(history.rows.size() == 2);

    const auto model = load_checkpoint(cli::default_checkpoint(cfg));
    const auto d = cli::load_data(cfg);
    const auto expected = estimate_elbo(model, d.train, cfg.eval.samples, cfg.eval_seed());
    const auto elbo = csv::load_table(cli::metric_path(cfg, "elbo"));
    CHECK(std::abs(elbo.values("elbo")[0] - expected.total) < 1e-12);

    const auto profile = csv::load_table(cli::metric_path(cfg, "nn-profile"));
    CHECK(profile.rows.size() == cfg.model.k * 10);

    const auto grid = csv::load_table(cli::metric_path(cfg, "mf-grid"));
    CHECK(grid.rows.size() == 25);

    const auto samples = csv::load_table(cli::metric_path(cfg, "samples"));
    CHECK(samples.rows.size() == 20);
    CHECK(samples.header == std::vector<std::string>{"x0", "y0"});

    const fs::path p1 = s.dir / "p1.svg", p2 = s.dir / "p2.svg";
    REQUIRE(cli::cmd_plot(svg::FigureKind::Line, {cli::metric_path(cfg, "nn-profile")}, p1, {}, log) == cli::kSuccess);
    REQUIRE(cli::cmd_plot(svg::FigureKind::Line, {cli::metric_path(cfg, "nn-profile")}, p2, {}, log) == cli::kSuccess);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(cli::cmd_plot(svg::FigureKind::LatentField, {cli::metric_path(cfg, "elbo")}, p1, {}, log) ==
          cli::kUserError);
}

TEST_CASE("corrupt checkpoints and inapplicable metrics are user errors") {
    Scratch s("errors");
    auto cfg = tiny_toy(s.dir, "c");
    cfg.train.epochs = 0;
    std::ostringstream log;
    REQUIRE(cli::cmd_train(cfg, log) == cli::kSuccess);

    auto fg = cfg;
    fg.dataset.kind = config::DatasetKind::FourGaussians;
    fg.dataset.points = 40;
    fg.name = "fg";
    REQUIRE(cli::cmd_train(fg, log) == cli::kSuccess);
    fg.eval.metrics = {"gap-mass"};
    std::ostringstream gap_log;
    CHECK(cli::cmd_eval(fg, {}, gap_log) == cli::kUserError);
    CHECK(gap_log.str().find("gap-mass") != std::string::npos);

    fg.eval.metrics = {"variety"};
    std::ostringstream variety_log;
    CHECK(cli::cmd_eval(fg, {}, variety_log) == cli::kUserError);
    CHECK(variety_log.str().find("variety") != std::string::npos);

    const fs::path params = cli::default_checkpoint(cfg).string() + ".params";
    REQUIRE(fs::exists(params));
    {
        std::fstream f(params, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXX", 4);
    }
    std::ostringstream bad_log;
    CHECK(cli::cmd_eval(cfg, {}, bad_log) == cli::kUserError);
    CHECK(bad_log.str().find("format error") != std::string::npos);

    std::ostringstream missing_log;
    CHECK(cli::cmd_eval(cfg, s.dir / "absent", missing_log) == cli::kUserError);
}

TEST_CASE("numerical failure maps to its own exit code") {
    std::ostringstream log;
    CHECK(cli::guarded([]() -> int { throw NumericalError("overflow", 3, "exp"); }, log) == cli::kNumericalFailure);
    CHECK(cli::guarded([]() -> int { throw ContractError("bad"); }, log) == cli::kUserError);
    CHECK(cli::guarded([] { return 0; }, log) == cli::kSuccess);
}
