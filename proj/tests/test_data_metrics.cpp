#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "robseg/data.hpp"
#include "robseg/metrics.hpp"
#include "robseg/rng.hpp"

using namespace robseg;
namespace fs = std::filesystem;

TEST_CASE("confusion counts a matching pair and a full disagreement") {
    std::vector<uint8_t> gt(16, 0);
    for (int i : {0, 3, 7, 9, 12}) gt[static_cast<size_t>(i)] = 1;
    ConfusionCounts same = confusion(gt, gt);
    CHECK(same.tp == 5);
    CHECK(same.tn == 11);
    CHECK(same.fp == 0);
    CHECK(same.fn == 0);
    std::vector<uint8_t> inv(16);
    for (size_t i = 0; i < 16; ++i) inv[i] = gt[i] ? 0 : 1;
    ConfusionCounts opp = confusion(inv, gt);
    CHECK(opp.tp == 0);
    CHECK(opp.tn == 0);
    CHECK(opp.fp == 11);
    CHECK(opp.fn == 5);
}

TEST_CASE("confusion rejects bad inputs and always partitions the pixels") {
    CHECK_THROWS_AS(confusion({1, 0}, {1}), std::runtime_error);
    CHECK_THROWS_AS(confusion({2}, {1}), std::runtime_error);
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<uint8_t> a(64), b(64);
        for (int i = 0; i < 64; ++i) {
            a[static_cast<size_t>(i)] = rng.coin() ? 1 : 0;
            b[static_cast<size_t>(i)] = rng.coin() ? 1 : 0;
        }
        ConfusionCounts c = confusion(a, b);
        CHECK(c.total() == 64);
        // independent tally using arithmetic instead of branches
        int64_t tp = 0, fp = 0, fn = 0;
        for (int i = 0; i < 64; ++i) {
            tp += a[static_cast<size_t>(i)] * b[static_cast<size_t>(i)];
            fp += a[static_cast<size_t>(i)] * (1 - b[static_cast<size_t>(i)]);
            fn += (1 - a[static_cast<size_t>(i)]) * b[static_cast<size_t>(i)];
        }
        CHECK(c.tp == tp);
        CHECK(c.fp == fp);
        CHECK(c.fn == fn);
    }
}

TEST_CASE("overlap scores reproduce the hand-worked ratios") {
    ConfusionCounts c;
    c.tp = 4;
    c.fp = 1;
    c.fn = 1;
    CHECK(dic(c) == 0.8);
    CHECK(jsc(c) == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
    ConfusionCounts perfect;
    perfect.tp = 10;
    perfect.tn = 6;
    CHECK(dic(perfect) == 1.0);
    CHECK(jsc(perfect) == 1.0);
    ConfusionCounts miss;
    miss.fp = 3;
    CHECK(dic(miss) == 0.0);
    CHECK(jsc(miss) == 0.0);
    ConfusionCounts empty;
    empty.tn = 16;
    CHECK(dic(empty) == 1.0);
    CHECK(jsc(empty) == 1.0);
}

TEST_CASE("jsc equals dic over two minus dic and never exceeds dic") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        ConfusionCounts c;
        c.tp = rng.below(50);
        c.fp = rng.below(50);
        c.fn = rng.below(50);
        c.tn = rng.below(50);
        double d = dic(c), j = jsc(c);
        CHECK(std::abs(j - d / (2.0 - d)) < 1e-12);
        CHECK(j <= d + 1e-15);
    }
}

TEST_CASE("synthetic generation is deterministic and thread count does not matter") {
    SyntheticConfig cfg;
    cfg.kind = SynthKind::lung;
    cfg.count = 6;
    cfg.side = 48;
    cfg.seed = 99;
    auto a = synth_generate(cfg, 1);
    auto b = synth_generate(cfg, 1);
    auto c = synth_generate(cfg, 4);
    REQUIRE(a.size() == 6);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].image.data == b[i].image.data);
        CHECK(a[i].mask.data == b[i].mask.data);
        CHECK(a[i].image.data == c[i].image.data);
        CHECK(a[i].mask.data == c[i].mask.data);
    }
}

TEST_CASE("lung masks hold exactly two lobes, lesion masks one blob") {
    SyntheticConfig cfg;
    cfg.kind = SynthKind::lung;
    cfg.count = 25;
    cfg.side = 64;
    cfg.seed = 5;
    for (const auto& s : synth_generate(cfg)) {
        CHECK(component_count(s.mask) == 2);
        CHECK(s.image.channels == 1);
    }
    cfg.kind = SynthKind::lesion;
    cfg.seed = 6;
    for (const auto& s : synth_generate(cfg)) {
        CHECK(component_count(s.mask) == 1);
        CHECK(s.image.channels == 3);
    }
}

TEST_CASE("mean mask area fraction stays in the configured band") {
    for (SynthKind kind : {SynthKind::lung, SynthKind::lesion}) {
        SyntheticConfig cfg;
        cfg.kind = kind;
        cfg.count = 100;
        cfg.side = 64;
        cfg.seed = 7;
        double total = 0.0;
        for (const auto& s : synth_generate(cfg)) {
            int64_t on = 0;
            for (uint8_t v : s.mask.data) on += v;
            total += static_cast<double>(on) / static_cast<double>(s.mask.data.size());
        }
        double mean = total / 100.0;
        INFO("kind=", static_cast<int>(kind), " mean area fraction ", mean);
        CHECK(mean > 0.1);
        CHECK(mean < 0.4);
    }
}

TEST_CASE("train and test splits are disjoint and sized by the fraction") {
    SyntheticConfig cfg;
    cfg.kind = SynthKind::lung;
    cfg.count = 10;
    cfg.side = 32;
    cfg.seed = 11;
    cfg.train_fraction = 0.8;
    auto recs = synth_generate(cfg);
    int train = 0;
    std::set<std::string> ids;
    for (const auto& s : recs) {
        train += s.train ? 1 : 0;
        ids.insert(s.id);
    }
    CHECK(train == 8);
    CHECK(ids.size() == recs.size());
}

TEST_CASE("generator rejects degenerate configurations") {
    SyntheticConfig cfg;
    cfg.side = 16;
    CHECK_THROWS_WITH_AS(synth_generate(cfg), doctest::Contains("too small"), std::runtime_error);
    cfg.side = 64;
    cfg.count = 0;
    CHECK_THROWS_AS(synth_generate(cfg), std::runtime_error);
    CHECK(parse_synth_kind("lung-like") == SynthKind::lung);
    CHECK(parse_synth_kind("lesion-like") == SynthKind::lesion);
    CHECK_THROWS_AS(parse_synth_kind("volumetric"), std::runtime_error);
}

namespace {

SampleRecord one_sample(SynthKind kind, uint64_t seed, int side = 48) {
    SyntheticConfig cfg;
    cfg.kind = kind;
    cfg.count = 1;
    cfg.side = side;
    cfg.seed = seed;
    return synth_generate(cfg)[0];
}

// first augmentation seed whose three gate coins come out as requested
uint64_t seed_with_coins(bool h, bool v, bool rot) {
    for (uint64_t s = 1; s < 4096; ++s) {
        Rng r(s);
        if (r.coin() == h && r.coin() == v && r.coin() == rot) return s;
    }
    throw std::runtime_error("no such seed in range");
}

}  // namespace

TEST_CASE("augmentation with every gate closed is the identity") {
    SampleRecord s = one_sample(SynthKind::lesion, 3);
    uint64_t seed = seed_with_coins(false, false, false);
    SampleRecord a = augment(s, seed);
    CHECK(a.image.data == s.image.data);
    CHECK(a.mask.data == s.mask.data);
}

TEST_CASE("double horizontal flip is the identity") {
    SampleRecord s = one_sample(SynthKind::lesion, 4);
    uint64_t seed = seed_with_coins(true, false, false);
    SampleRecord once = augment(s, seed);
    CHECK(once.image.data != s.image.data);
    SampleRecord twice = augment(once, seed);
    CHECK(twice.image.data == s.image.data);
    CHECK(twice.mask.data == s.mask.data);
}

TEST_CASE("rotating a mask there and back keeps at least 95 percent of pixels") {
    SampleRecord s = one_sample(SynthKind::lung, 8, 64);
    Mask back = rotate_mask(rotate_mask(s.mask, 10.0), -10.0);
    int64_t agree = 0;
    for (size_t i = 0; i < back.data.size(); ++i) agree += back.data[i] == s.mask.data[i] ? 1 : 0;
    double frac = static_cast<double>(agree) / static_cast<double>(back.data.size());
    INFO("agreement ", frac);
    CHECK(frac >= 0.95);
}

TEST_CASE("augmentation keeps masks binary and images in range") {
    SampleRecord s = one_sample(SynthKind::lesion, 9);
    for (uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        SampleRecord a = augment(s, seed);
        for (uint8_t v : a.mask.data) CHECK(v <= 1);
        for (double v : a.image.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 255.0);
            CHECK(v == std::round(v));
        }
    }
}

TEST_CASE("pnm files round-trip both grayscale and color") {
    SampleRecord g = one_sample(SynthKind::lung, 12, 32);
    SampleRecord c = one_sample(SynthKind::lesion, 13, 32);
    for (const Image* img : {&g.image, &c.image}) {
        std::string path = "roundtrip_tmp.pnm";
        write_pnm(*img, path);
        Image back = read_pnm(path);
        CHECK(back.channels == img->channels);
        CHECK(back.h == img->h);
        CHECK(back.w == img->w);
        CHECK(back.data == img->data);
        fs::remove(path);
    }
}

TEST_CASE("pnm reader tolerates comments and rejects foreign data") {
    {
        std::ofstream f("commented.pgm", std::ios::binary);
        f << "P5\n# a comment line\n2 1\n# another\n255\n";
        unsigned char px[2] = {7, 250};
        f.write(reinterpret_cast<char*>(px), 2);
    }
    Image img = read_pnm("commented.pgm");
    CHECK(img.w == 2);
    CHECK(img.data == std::vector<double>{7.0, 250.0});
    fs::remove("commented.pgm");

    {
        std::ofstream f("bad.pgm", std::ios::binary);
        f << "P5\n2 1\n65535\n";
        f << "aabb";
    }
    CHECK_THROWS_WITH_AS(read_pnm("bad.pgm"), doctest::Contains("maxval"), std::runtime_error);
    fs::remove("bad.pgm");

    {
        std::ofstream f("trunc.pgm", std::ios::binary);
        f << "P5\n4 4\n255\nxy";
    }
    CHECK_THROWS_WITH_AS(read_pnm("trunc.pgm"), doctest::Contains("truncated"), std::runtime_error);
    fs::remove("trunc.pgm");

    CHECK_THROWS_AS(read_pnm("no_such_file.pgm"), std::runtime_error);
}

TEST_CASE("dataset directory round-trips losslessly") {
    SyntheticConfig cfg;
    cfg.kind = SynthKind::lesion;
    cfg.count = 4;
    cfg.side = 32;
    cfg.seed = 21;
    cfg.train_fraction = 0.5;
    auto recs = synth_generate(cfg);
    std::string dir = "ds_roundtrip_tmp";
    save_dataset(recs, dir);
    auto back = load_dataset(dir);
    REQUIRE(back.size() == recs.size());
    for (size_t i = 0; i < recs.size(); ++i) {
        CHECK(back[i].id == recs[i].id);
        CHECK(back[i].train == recs[i].train);
        CHECK(back[i].image.data == recs[i].image.data);
        CHECK(back[i].mask.data == recs[i].mask.data);
    }
    fs::remove_all(dir);
}

TEST_CASE("dataset loader flags missing masks and missing split entries") {
    std::string dir = "ds_broken_tmp";
    SyntheticConfig cfg;
    cfg.kind = SynthKind::lung;
    cfg.count = 2;
    cfg.side = 32;
    cfg.seed = 22;
    auto recs = synth_generate(cfg);
    save_dataset(recs, dir);

    fs::remove(fs::path(dir) / "masks" / (recs[1].id + ".pgm"));
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("missing mask"), std::runtime_error);

    save_dataset(recs, dir);
    {
        std::ofstream f(fs::path(dir) / "split.txt");
        f << recs[0].id << " train\n";  // second id absent
    }
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("split"), std::runtime_error);
    fs::remove_all(dir);

    CHECK(load_dataset("nonexistent_dir").empty());
}
