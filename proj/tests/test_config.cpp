#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "config.hpp"
#include "rng.hpp"

#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace glma;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::internal;
}

} // namespace

TEST_CASE("desk defaults are the runnable profile") {
    RunConfig cfg;
    CHECK(cfg.profile.d_model == 64);
    CHECK(cfg.profile.n_layers == 6);
    CHECK(cfg.profile.length == 16);
    CHECK(cfg.profile.seq_sd == 8);
    CHECK(cfg.profile.d_sd == 32);
    CHECK(cfg.profile.d_pool == 16);
    CHECK(cfg.profile.lat_c == 4);
    CHECK(cfg.profile.lat_h == 8);
    CHECK(cfg.profile.lat_w == 8);
    CHECK(cfg.profile.timesteps == 32);
    CHECK(cfg.profile.vocab == 256);
    CHECK(cfg.profile.img_size == 16);
    CHECK(cfg.profile.lat_dim() == 4 * 8 * 8);
    CHECK(cfg.seed == 42);
    CHECK(cfg.lr == doctest::Approx(1e-4));
    CHECK(cfg.batch_size == 8);
    CHECK(cfg.epochs == 4);
    CHECK(cfg.phi0 == 1.0);
    CHECK(cfg.phi_decay == 0.1);
    CHECK(cfg.ddpm_mode == DdpmMode::verbatim);
    CHECK(cfg.align_mode == AlignMode::squared);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("full-scale profile is a dimension registry") {
    ScaleProfile p = ScaleProfile::paper();
    CHECK(p.d_model == 4096);
    CHECK(p.n_layers == 32);
    CHECK(p.length == 256);
    CHECK(p.seq_sd == 77);
    CHECK(p.d_sd == 2048);
    CHECK(p.d_pool == 1280);
    CHECK(p.lat_c == 4);
    CHECK(p.lat_h == 128);
    CHECK(p.lat_w == 128);
    CHECK(p.timesteps == 1000);
    CHECK(p.vocab == 32000);
    CHECK(p.img_size == 1024);
    CHECK_NOTHROW(p.validate());
}

TEST_CASE("resolved train layer defaults to the deepest hidden state") {
    RunConfig cfg;
    CHECK(cfg.train_layer == -1);
    CHECK(cfg.resolved_train_layer() == cfg.profile.n_layers);
    cfg.train_layer = 3;
    CHECK(cfg.resolved_train_layer() == 3);
    cfg.train_layer = 0;
    CHECK(cfg.resolved_train_layer() == 0);
}

TEST_CASE("resolved sample steps defaults to all timesteps") {
    RunConfig cfg;
    CHECK(cfg.sample_steps == 0);
    CHECK(cfg.resolved_sample_steps() == cfg.profile.timesteps);
    cfg.sample_steps = 7;
    CHECK(cfg.resolved_sample_steps() == 7);
}

TEST_CASE("config text parses keys, comments and blank lines") {
    std::string text =
        "# training recipe\n"
        "\n"
        "seed = 7\n"
        "lr = 0.01   # inline comment\n"
        "batch_size = 2\n"
        "epochs= 3\n"
        "phi0 =0.5\n"
        "ddpm_mode = eps_pred\n"
        "align_mode = literal\n"
        "epsilon.edit_default = 0.25\n"
        "profile.length = 8\n";
    RunConfig cfg = parse_config_text(text, "inline");
    CHECK(cfg.seed == 7);
    CHECK(cfg.lr == doctest::Approx(0.01));
    CHECK(cfg.batch_size == 2);
    CHECK(cfg.epochs == 3);
    CHECK(cfg.phi0 == 0.5);
    CHECK(cfg.ddpm_mode == DdpmMode::eps_pred);
    CHECK(cfg.align_mode == AlignMode::literal);
    CHECK(cfg.eps_edit_default == 0.25);
    CHECK(cfg.profile.length == 8);
    // Untouched keys keep their defaults.
    CHECK(cfg.profile.d_model == 64);
    CHECK(cfg.phi_decay == 0.1);
}

TEST_CASE("empty config text yields the defaults") {
    RunConfig parsed = parse_config_text("", "empty");
    RunConfig defaults;
    CHECK(config_hash(parsed) == config_hash(defaults));
}

TEST_CASE("parse errors carry origin and line number") {
    auto message_of = [](const std::string& text) -> std::string {
        try {
            parse_config_text(text, "cfg.txt");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::parse);
            return e.what();
        }
        FAIL("expected a parse error");
        return {};
    };

    CHECK(message_of("seed 7\n").find("cfg.txt:1") == 0);
    CHECK(message_of("\n\nnot a line\n").find("cfg.txt:3") == 0);
    CHECK(message_of("lr = fast\n").find("not a number") != std::string::npos);
    CHECK(message_of("epochs = 2.5\n").find("not an integer") != std::string::npos);
    CHECK(message_of("= 3\n").find("empty key") != std::string::npos);
    CHECK(message_of("lr =\n").find("empty value") != std::string::npos);
    CHECK(message_of("warp_factor = 9\n").find("unknown key") != std::string::npos);
    CHECK(message_of("ddpm_mode = backwards\n").find("cfg.txt:1") == 0);
}

TEST_CASE("presets apply named recipes") {
    RunConfig cfg;
    cfg.seed = 99;
    cfg.lr = 0.5;
    cfg.batch_size = 1;

    SUBCASE("desk resets everything but the seed") {
        apply_preset(cfg, "desk");
        CHECK(cfg.seed == 99);
        CHECK(cfg.lr == doctest::Approx(1e-4));
        CHECK(cfg.batch_size == 8);
    }
    SUBCASE("paper-recipe pins the reference hyperparameters") {
        apply_preset(cfg, "paper-recipe");
        CHECK(cfg.lr == doctest::Approx(1e-4));
        CHECK(cfg.batch_size == 8);
        CHECK(cfg.epochs == 4);
        CHECK(cfg.phi0 == 1.0);
        CHECK(cfg.phi_decay == 0.1);
        CHECK(cfg.seed == 99);
    }
    SUBCASE("unknown preset is rejected") {
        CHECK(kind_of([&] { apply_preset(cfg, "warp"); }) == ErrorKind::validation);
    }
    SUBCASE("preset key applies before later overrides") {
        RunConfig parsed = parse_config_text("preset = paper-recipe\nlr = 0.25\n", "t");
        CHECK(parsed.lr == 0.25);
        CHECK(parsed.epochs == 4);
    }
}

TEST_CASE("validation rejects illegal values") {
    auto broken = [](auto mutate) {
        RunConfig cfg;
        mutate(cfg);
        return kind_of([&] { cfg.validate(); });
    };
    CHECK(broken([](RunConfig& c) { c.lr = 0.0; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.batch_size = 0; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.epochs = 0; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.phi0 = -1.0; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.phi_decay = 0.0; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.phi_decay = 1.5; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.train_layer = c.profile.n_layers + 1; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.adapter_layers = 0; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.adapter_dq = 0; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.beta_start = 0.0; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.beta_end = c.beta_start; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.beta_end = 1.0; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.sample_steps = -1; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.sample_steps = c.profile.timesteps + 1; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.max_new = -1; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.eps_text_to_image = 1.5; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.eps_storytelling = -0.1; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.profile.d_model = 0; }) == ErrorKind::validation);
    CHECK(broken([](RunConfig& c) { c.profile.vocab = 100; }) == ErrorKind::validation);

    // phi_decay = 1 (no decay) and phi0 = 0 are legal.
    RunConfig ok;
    ok.phi_decay = 1.0;
    ok.phi0 = 0.0;
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("canonical config string round-trips through the parser") {
    RunConfig cfg;
    cfg.seed = 123;
    cfg.lr = 3e-3;
    cfg.phi_decay = 0.37;
    cfg.ddpm_mode = DdpmMode::eps_pred;
    cfg.align_mode = AlignMode::literal;
    cfg.eps_edit_layout = 0.125;
    cfg.profile.d_sd = 48;

    std::string canon = canonical_config_string(cfg);
    RunConfig reparsed = parse_config_text(
        // canonical form spells profile keys without the prefix; re-add it
        [&] {
            std::string out;
            std::istringstream in(canon);
            std::string line;
            int i = 0;
            while (std::getline(in, line)) {
                // first 12 lines are the profile block
                out += (i < 12 ? "profile." + line : line) + "\n";
                ++i;
            }
            return out;
        }(),
        "canon");
    CHECK(canonical_config_string(reparsed) == canon);
    CHECK(config_hash(reparsed) == config_hash(cfg));
}

TEST_CASE("config hash separates distinct configs") {
    RunConfig a;
    RunConfig b;
    CHECK(config_hash(a) == config_hash(b));
    b.seed = 43;
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.lr = 2e-4;
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.profile.length = 8;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("mode name round trips") {
    CHECK(parse_ddpm_mode(ddpm_mode_name(DdpmMode::verbatim)) == DdpmMode::verbatim);
    CHECK(parse_ddpm_mode(ddpm_mode_name(DdpmMode::eps_pred)) == DdpmMode::eps_pred);
    CHECK(parse_align_mode(align_mode_name(AlignMode::squared)) == AlignMode::squared);
    CHECK(parse_align_mode(align_mode_name(AlignMode::literal)) == AlignMode::literal);
    CHECK(kind_of([] { parse_ddpm_mode("nope"); }) == ErrorKind::validation);
    CHECK(kind_of([] { parse_align_mode("nope"); }) == ErrorKind::validation);
}

TEST_CASE("rng streams replay exactly from (seed, label)") {
    RngStream a(42, "train");
    RngStream b(42, "train");
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    for (int i = 0; i < 100; ++i) CHECK(a.uniform_int(17) == b.uniform_int(17));
    CHECK(a.raw_count() == b.raw_count());
}

TEST_CASE("distinct labels and seeds give distinct streams") {
    RngStream a(42, "train");
    RngStream b(42, "sample/0");
    RngStream c(43, "train");
    bool ab_differs = false;
    bool ac_differs = false;
    for (int i = 0; i < 8; ++i) {
        double va = a.uniform();
        if (va != b.uniform()) ab_differs = true;
        if (va != c.uniform()) ac_differs = true;
    }
    CHECK(ab_differs);
    CHECK(ac_differs);
}

TEST_CASE("draw kinds consume a fixed number of raw words") {
    RngStream rng(1, "cursor");
    CHECK(rng.raw_count() == 0);
    rng.uniform();
    CHECK(rng.raw_count() == 1);
    rng.normal(); // Box-Muller, no cached spare
    CHECK(rng.raw_count() == 3);
    rng.normal();
    CHECK(rng.raw_count() == 5);
    rng.uniform_int(10);
    CHECK(rng.raw_count() == 6);
}

TEST_CASE("discard_raw is a complete resume cursor") {
    RngStream full(7, "resume");
    std::vector<double> prefix;
    for (int i = 0; i < 5; ++i) prefix.push_back(full.normal());
    uint64_t cursor = full.raw_count();
    std::vector<double> tail;
    for (int i = 0; i < 5; ++i) tail.push_back(full.normal());

    RngStream resumed(7, "resume");
    resumed.discard_raw(cursor);
    CHECK(resumed.raw_count() == cursor);
    for (int i = 0; i < 5; ++i) CHECK(resumed.normal() == tail[i]);
}

TEST_CASE("uniform stays in [0,1) and uniform_int in range") {
    RngStream rng(3, "ranges");
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    std::set<uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        uint64_t v = rng.uniform_int(5);
        CHECK(v < 5);
        seen.insert(v);
    }
    CHECK(seen.size() == 5); // all residues hit
    CHECK(kind_of([&] { rng.uniform_int(0); }) == ErrorKind::input);
}

TEST_CASE("normal draws have standard moments") {
    RngStream rng(11, "moments");
    const int n = 40000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        sum += x;
        sumsq += x * x;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("matrix fills draw in column-major storage order") {
    RngStream a(5, "fill");
    Matrix m = randn_matrix(a, 2, 3, 2.0);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);

    RngStream b(5, "fill");
    for (Eigen::Index c = 0; c < 3; ++c)
        for (Eigen::Index r = 0; r < 2; ++r)
            CHECK(m(r, c) == 2.0 * b.normal());

    RngStream u1(6, "ufill");
    Matrix um = uniform_matrix(u1, 3, 2, -1.0, 1.0);
    RngStream u2(6, "ufill");
    for (Eigen::Index c = 0; c < 2; ++c)
        for (Eigen::Index r = 0; r < 3; ++r)
            CHECK(um(r, c) == -1.0 + 2.0 * u2.uniform());
    CHECK((um.array() >= -1.0).all());
    CHECK((um.array() < 1.0).all());
}

TEST_CASE("fnv1a64 matches the reference constants") {
    // Published FNV-1a 64-bit test vectors.
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}
