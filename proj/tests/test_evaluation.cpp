#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "eval.hpp"
#include "policies.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using namespace glma;

namespace {

const Backbones& nets() {
    static Backbones b(ScaleProfile::desk(), 42);
    return b;
}

AdapterParams fresh_adapter(uint64_t seed = 42) {
    RngStream rng(seed, "adapter_init");
    RunConfig cfg;
    return init_adapter(cfg, rng);
}

Vector vec2(double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
}

// Fabricates exact Gaussian stats: mean mu, covariance sigma, n samples.
FeatureStats exact_stats(const Vector& mu, const Matrix& sigma, int64_t n) {
    FeatureStats s(static_cast<int>(mu.size()));
    s.count = n;
    s.mean = mu;
    s.m2 = sigma * static_cast<double>(n - 1);
    return s;
}

Image patterned_image(int size, double scale, int phase) {
    Image img = Image::zeros(size, size);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                img.at(c, y, x) = scale * std::sin(0.17 * (c + 1) * (y * size + x + phase));
    return img;
}

} // namespace

TEST_CASE("feature stats hand case") {
    FeatureStats s = feature_stats({vec2(0, 0), vec2(2, 0)});
    CHECK(s.count == 2);
    CHECK(s.mean(0) == 1.0);
    CHECK(s.mean(1) == 0.0);
    Matrix cov = s.covariance();
    CHECK(cov(0, 0) == 2.0);
    CHECK(cov(0, 1) == 0.0);
    CHECK(cov(1, 0) == 0.0);
    CHECK(cov(1, 1) == 0.0);
}

TEST_CASE("identical vectors give zero covariance") {
    FeatureStats s = feature_stats({vec2(3, -1), vec2(3, -1), vec2(3, -1)});
    CHECK(s.covariance().cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.mean == vec2(3, -1));
}

TEST_CASE("stats preconditions") {
    try {
        feature_stats({vec2(1, 2)});
        FAIL("expected input error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::input);
    }
    CHECK_THROWS_AS(feature_stats({}), Error);

    FeatureStats s(2);
    s.add(vec2(1, 2));
    CHECK_THROWS_AS(s.covariance(), Error); // one sample has no covariance
    Vector v3(3);
    v3 << 1, 2, 3;
    CHECK_THROWS_AS(s.add(v3), Error);
    FeatureStats other(3);
    CHECK_THROWS_AS(s.merge(other), Error);
}

TEST_CASE("stats are invariant to input ordering") {
    RngStream rng(1, "perm");
    std::vector<Vector> feats;
    for (int i = 0; i < 24; ++i) {
        Vector v(5);
        for (int j = 0; j < 5; ++j) v(j) = rng.normal();
        feats.push_back(v);
    }
    FeatureStats fwd = feature_stats(feats);
    std::vector<Vector> shuffled = feats;
    std::reverse(shuffled.begin(), shuffled.end());
    std::swap(shuffled[0], shuffled[11]);
    FeatureStats rev = feature_stats(shuffled);
    CHECK((fwd.mean - rev.mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((fwd.covariance() - rev.covariance()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pairwise merge equals whole-set accumulation") {
    RngStream rng(2, "merge");
    std::vector<Vector> feats;
    for (int i = 0; i < 31; ++i) {
        Vector v(4);
        for (int j = 0; j < 4; ++j) v(j) = 2.0 * rng.normal() + 0.5;
        feats.push_back(v);
    }
    FeatureStats whole = feature_stats(feats);

    // Partition into 3 uneven chunks, merge pairwise.
    FeatureStats a(4), b(4), c(4);
    for (int i = 0; i < 7; ++i) a.add(feats[static_cast<size_t>(i)]);
    for (int i = 7; i < 20; ++i) b.add(feats[static_cast<size_t>(i)]);
    for (int i = 20; i < 31; ++i) c.add(feats[static_cast<size_t>(i)]);
    a.merge(b);
    a.merge(c);
    CHECK(a.count == whole.count);
    CHECK((a.mean - whole.mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((a.covariance() - whole.covariance()).cwiseAbs().maxCoeff() < 1e-10);

    // Merging an empty accumulator is the identity.
    FeatureStats empty(4);
    a.merge(empty);
    CHECK(a.count == whole.count);
    FeatureStats target(4);
    target.merge(a);
    CHECK(target.count == whole.count);
    CHECK((target.mean - whole.mean).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("frechet distance closed-form cases") {
    SUBCASE("identical stats") {
        RngStream rng(3, "fid");
        std::vector<Vector> feats;
        for (int i = 0; i < 12; ++i) {
            Vector v(3);
            for (int j = 0; j < 3; ++j) v(j) = rng.normal();
            feats.push_back(v);
        }
        FeatureStats s = feature_stats(feats);
        CHECK(std::abs(frechet_distance(s, s)) < 1e-9);
    }
    SUBCASE("1-D mean shift: (0,1) vs (3,1) gives 9") {
        Vector m0(1), m3(1);
        m0 << 0.0;
        m3 << 3.0;
        Matrix unit = Matrix::Identity(1, 1);
        FeatureStats a = exact_stats(m0, unit, 10);
        FeatureStats b = exact_stats(m3, unit, 10);
        CHECK(std::abs(frechet_distance(a, b) - 9.0) < 1e-9);
    }
    SUBCASE("diagonal case gives 3") {
        // muDelta = (1,1), Sa = diag(1,4), Sb = diag(1,1):
        // 2 + (1+1-2) + (4+1-4) = 3.
        Matrix sa = Matrix::Zero(2, 2);
        sa(0, 0) = 1.0;
        sa(1, 1) = 4.0;
        FeatureStats a = exact_stats(vec2(1, 1), sa, 10);
        FeatureStats b = exact_stats(vec2(0, 0), Matrix::Identity(2, 2), 10);
        CHECK(std::abs(frechet_distance(a, b) - 3.0) < 1e-9);
    }
}

TEST_CASE("frechet distance is symmetric on random stats") {
    RngStream rng(4, "sym");
    auto random_stats = [&] {
        std::vector<Vector> feats;
        for (int i = 0; i < 16; ++i) {
            Vector v(5);
            for (int j = 0; j < 5; ++j) v(j) = rng.normal() * (j + 1);
            feats.push_back(v);
        }
        return feature_stats(feats);
    };
    for (int rep = 0; rep < 5; ++rep) {
        FeatureStats a = random_stats();
        FeatureStats b = random_stats();
        double ab = frechet_distance(a, b);
        double ba = frechet_distance(b, a);
        CHECK(std::abs(ab - ba) < 1e-9);
        CHECK(ab >= -1e-9);
    }
}

TEST_CASE("frechet matches the diagonal closed form") {
    RngStream rng(5, "diag");
    const int d = 4;
    Vector mu_a(d), mu_b(d), da(d), db(d);
    for (int j = 0; j < d; ++j) {
        mu_a(j) = rng.normal();
        mu_b(j) = rng.normal();
        da(j) = 0.5 + rng.uniform() * 3.0;
        db(j) = 0.5 + rng.uniform() * 3.0;
    }
    FeatureStats a = exact_stats(mu_a, da.asDiagonal(), 20);
    FeatureStats b = exact_stats(mu_b, db.asDiagonal(), 20);

    double expect = (mu_a - mu_b).squaredNorm();
    for (int j = 0; j < d; ++j)
        expect += da(j) + db(j) - 2.0 * std::sqrt(da(j) * db(j));
    CHECK(std::abs(frechet_distance(a, b) - expect) < 1e-9);
}

TEST_CASE("frechet rejects bad inputs") {
    FeatureStats a = exact_stats(vec2(0, 0), Matrix::Identity(2, 2), 5);
    Vector m1(1);
    m1 << 0.0;
    FeatureStats b = exact_stats(m1, Matrix::Identity(1, 1), 5);
    CHECK_THROWS_AS(frechet_distance(a, b), Error);

    // A clearly negative "covariance" is a numeric error, not a crash.
    FeatureStats neg = exact_stats(vec2(0, 0), (-1.0 * Matrix::Identity(2, 2)).eval(), 5);
    try {
        frechet_distance(neg, a);
        FAIL("expected numeric error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numeric);
    }

    FeatureStats fresh(2);
    CHECK_THROWS_AS(frechet_distance(fresh, a), Error); // count < 2
}

TEST_CASE("clip-style score reference values") {
    Vector u = vec2(1, 2);
    CHECK(clip_style_score(u, u) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(clip_style_score(vec2(1, 0), vec2(0, 5)) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(clip_style_score(u, (-u).eval()) == doctest::Approx(-1.0).epsilon(1e-12));

    // Scale invariance for positive scales.
    Vector v = vec2(-3, 0.5);
    double base = clip_style_score(u, v);
    for (double c : {0.25, 2.0, 1e6}) {
        CHECK(std::abs(clip_style_score((c * u).eval(), v) - base) < 1e-14);
        CHECK(std::abs(clip_style_score(u, (c * v).eval()) - base) < 1e-14);
    }

    try {
        clip_style_score(vec2(0, 0), u);
        FAIL("expected input error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::input);
    }
    CHECK_THROWS_AS(clip_style_score(u, vec2(0, 0)), Error);
    Vector w(3);
    w << 1, 2, 3;
    CHECK_THROWS_AS(clip_style_score(u, w), Error);

    RngStream rng(6, "cs");
    for (int i = 0; i < 50; ++i) {
        Vector p(4), q(4);
        for (int j = 0; j < 4; ++j) {
            p(j) = rng.normal();
            q(j) = rng.normal();
        }
        double cs = clip_style_score(p, q);
        CHECK(cs >= -1.0 - 1e-12);
        CHECK(cs <= 1.0 + 1e-12);
    }
}

TEST_CASE("feature extractors live in the pooled space") {
    const Backbones& b = nets();
    Image img = patterned_image(b.prof.img_size, 0.7, 3);
    Vector f = image_feature(b, img);
    CHECK(f.size() == b.prof.d_pool);
    CHECK(f == image_feature(b, img));

    // Definition check: mean vision row through the evaluation projection.
    Matrix vis = b.encode_vision(img);
    Matrix pooled = vis.colwise().mean();
    Vector expect = (pooled * b.eval_proj).transpose();
    CHECK((f - expect).cwiseAbs().maxCoeff() < 1e-14);

    Vector t = text_feature(b, "a red square");
    CHECK(t.size() == b.prof.d_pool);
    Vector expect_t = b.sd_text_encode("a red square").e_pclip.transpose();
    CHECK(t == expect_t);
}

TEST_CASE("set evaluation compares feature distributions") {
    const Backbones& b = nets();
    std::vector<Image> gen, ref;
    std::vector<std::string> captions;
    for (int i = 0; i < 4; ++i) {
        gen.push_back(patterned_image(b.prof.img_size, 0.5, i));
        ref.push_back(patterned_image(b.prof.img_size, 0.6, i + 10));
        captions.push_back("caption " + std::to_string(i));
    }

    EvalReport r = evaluate_sets(b, gen, captions, ref);
    CHECK(r.n == 4);
    CHECK(std::isfinite(r.fid_stub));
    CHECK(r.fid_stub > -1e-9);
    CHECK(r.clip_stub_mean >= -1.0);
    CHECK(r.clip_stub_mean <= 1.0);

    // Self-comparison drives the distance to zero.
    EvalReport self = evaluate_sets(b, gen, captions, gen);
    CHECK(std::abs(self.fid_stub) < 1e-6);
    CHECK(self.fid_stub < r.fid_stub);

    CHECK_THROWS_AS(evaluate_sets(b, gen, {"only one"}, ref), Error);
    CHECK_THROWS_AS(evaluate_sets(b, {gen[0]}, {captions[0]}, ref), Error);
    CHECK_THROWS_AS(evaluate_sets(b, gen, captions, {ref[0]}), Error);
}

TEST_CASE("layer sweep offset zero reproduces the t2i path bitwise") {
    RunConfig cfg;
    AdapterParams adapter = fresh_adapter();
    const std::string prompt = "a small red square on white";

    SweepReport sw = layer_sweep(prompt, {0}, cfg, nets(), adapter);
    REQUIRE(sw.entries.size() == 1);
    CHECK(sw.prompt == prompt);
    CHECK(sw.entries[0].offset == 0);
    CHECK(sw.entries[0].layer == cfg.profile.n_layers);

    InterleaveResult t2i = interleave_generate({{prompt, std::nullopt}},
                                               TaskKind::text_to_image, cfg, nets(), adapter);
    const Image* t2i_img = nullptr;
    for (const auto& ev : t2i.events)
        if (ev.kind == GenerationEvent::Kind::image) t2i_img = &ev.image;
    REQUIRE(t2i_img != nullptr);
    CHECK(sw.entries[0].image.chw == t2i_img->chw);
}

TEST_CASE("layer sweep probes distinct depths") {
    RunConfig cfg;
    AdapterParams adapter = fresh_adapter();
    SweepReport sw = layer_sweep("a blue circle", {0, 1, 2, 4}, cfg, nets(), adapter);
    REQUIRE(sw.entries.size() == 4);
    CHECK(sw.entries[0].layer == 6);
    CHECK(sw.entries[1].layer == 5);
    CHECK(sw.entries[2].layer == 4);
    CHECK(sw.entries[3].layer == 2);
    for (const auto& e : sw.entries) {
        CHECK(std::isfinite(e.align_loss));
        CHECK(e.image.h == cfg.profile.img_size);
    }
    // Different depths condition the sampler differently.
    CHECK((sw.entries[0].image.chw - sw.entries[3].image.chw).cwiseAbs().maxCoeff() > 0.0);

    // The probed layer is the only variable: rerunning any offset is bitwise
    // stable because the sampler stream restarts per entry.
    SweepReport again = layer_sweep("a blue circle", {4}, cfg, nets(), adapter);
    CHECK(again.entries[0].image.chw == sw.entries[3].image.chw);
    CHECK(again.entries[0].align_loss == sw.entries[3].align_loss);
}

TEST_CASE("layer sweep validates offsets") {
    RunConfig cfg;
    AdapterParams adapter = fresh_adapter();
    try {
        layer_sweep("p", {7}, cfg, nets(), adapter); // L = 6
        FAIL("expected input error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::input);
    }
    CHECK_THROWS_AS(layer_sweep("p", {-1}, cfg, nets(), adapter), Error);
    CHECK_THROWS_AS(layer_sweep("p", {1, 1}, cfg, nets(), adapter), Error);
    CHECK_THROWS_AS(layer_sweep("p", {}, cfg, nets(), adapter), Error);
}
