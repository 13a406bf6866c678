#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "crossfont/data/dataset.hpp"
#include "crossfont/data/stroke_db.hpp"
#include "crossfont/data/synth.hpp"
#include "crossfont/data/truetype.hpp"

#include "support/oracles.hpp"
#include "support/ttf_fixture.hpp"

using namespace crossfont;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "crossfont_test_data";
    fs::create_directories(dir);
    return dir;
}

StrokeSequence seq(std::string id, std::vector<long> labels) {
    return StrokeSequence{std::move(id), std::move(labels)};
}

}  // namespace

TEST_CASE("stroke alphabet ids are dense and distinct") {
    auto a = StrokeAlphabet::standard();
    CHECK(a.num_classes() == 28);
    CHECK(a.vocab_size() == 32);
    std::set<long> specials{a.mask_id(), a.pad_id(), a.bos_id(), a.eos_id()};
    CHECK(specials.size() == 4);
    for (long id : specials) {
        CHECK_FALSE(a.is_stroke_class(id));
        CHECK(id < a.vocab_size());
    }
    CHECK(a.is_stroke_class(0));
    CHECK(a.is_stroke_class(27));
}

TEST_CASE("load_stroke_db parses, validates and round-trips") {
    auto a = StrokeAlphabet::standard();
    auto dir = temp_dir();
    auto path = (dir / "strokes.tsv").string();

    SECTION("direct parse") {
        std::ofstream(path) << "# comment\nch_0001\t3,7,1\n";
        auto db = load_stroke_db(path, a);
        REQUIRE(db.size() == 1);
        CHECK(db.at("ch_0001").labels == std::vector<long>{3, 7, 1});
    }

    SECTION("29 labels rejected") {
        std::ofstream out(path);
        out << "ch_long\t";
        for (int i = 0; i < 29; ++i) out << (i ? ",1" : "1");
        out << "\n";
        out.close();
        CHECK_THROWS_WITH(load_stroke_db(path, a),
                          Catch::Matchers::ContainsSubstring("sequence exceeds 28"));
    }

    SECTION("empty file gives empty map") {
        std::ofstream(path) << "";
        CHECK(load_stroke_db(path, a).empty());
    }

    SECTION("unknown class id rejected with line number") {
        std::ofstream(path) << "ok\t1,2\nbad\t99\n";
        CHECK_THROWS_WITH(load_stroke_db(path, a), Catch::Matchers::ContainsSubstring(":2:"));
    }

    SECTION("duplicate char_id rejected") {
        std::ofstream(path) << "x\t1\nx\t2\n";
        CHECK_THROWS_WITH(load_stroke_db(path, a),
                          Catch::Matchers::ContainsSubstring("duplicate char_id"));
    }

    SECTION("write then load reproduces the identical map") {
        std::map<std::string, StrokeSequence> db;
        db["a"] = seq("a", {0, 5, 9});
        db["b"] = seq("b", {27});
        db["c"] = seq("c", {1, 1, 1, 1});
        save_stroke_db(path, db);
        auto loaded = load_stroke_db(path, a);
        REQUIRE(loaded.size() == db.size());
        for (const auto& [id, s] : db) CHECK(loaded.at(id).labels == s.labels);
    }
}

TEST_CASE("synth_glyph basic contracts") {
    SyntheticStyle style;
    style.rng_seed = 11;

    SECTION("deterministic and in range") {
        auto a = synth_glyph(seq("x", {0, 4, 9}), style, 64);
        auto b = synth_glyph(seq("x", {0, 4, 9}), style, 64);
        CHECK(bitwise_equal(a.pixels, b.pixels));
        a.validate();
        CHECK(a.pixels.rows() == 64 * 64);
    }

    SECTION("size too small rejected") {
        CHECK_THROWS_AS(synth_glyph(seq("x", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14,
                                              15, 16, 17}),
                                    style, 32),
                        Error);
        CHECK_THROWS_AS(synth_glyph(seq("x", {0}), style, 16), Error);
    }

    SECTION("stroke width ratio measured by scanline oracle") {
        SyntheticStyle thin = style, thick = style;
        thin.stroke_width = 2;
        thick.stroke_width = 6;
        auto im_thin = synth_glyph(seq("x", {1}), thin, 64);
        auto im_thick = synth_glyph(seq("x", {1}), thick, 64);
        double ratio = testsupport::mean_ink_run_thickness(im_thick) /
                       testsupport::mean_ink_run_thickness(im_thin);
        CHECK(ratio > 2.5);
        CHECK(ratio < 3.5);
    }

    SECTION("disjoint strokes give one component each") {
        SyntheticStyle sparse = style;
        sparse.stroke_width = 2.5f;
        sparse.component_spacing = 1.15f;
        sparse.connect_prob = 0.0f;
        auto im = synth_glyph(seq("x", {0, 1, 3, 22}), sparse, 96);
        CHECK(testsupport::count_ink_components(im) == 4);
    }

    SECTION("connect_prob 1 joins everything") {
        SyntheticStyle joined = style;
        joined.stroke_width = 2.5f;
        joined.component_spacing = 1.15f;
        joined.connect_prob = 1.0f;
        auto im = synth_glyph(seq("x", {0, 1, 3, 22}), joined, 96);
        CHECK(testsupport::count_ink_components(im) == 1);
    }
}

TEST_CASE("synth_glyph style properties") {
    SECTION("ink grows strictly with stroke width on random sequences") {
        auto rng = make_rng(77, seed_tag::kCorpus);
        std::uniform_int_distribution<long> cls(0, 27);
        std::uniform_int_distribution<long> len(1, 9);
        for (int trial = 0; trial < 20; ++trial) {
            StrokeSequence s;
            s.char_id = "t" + std::to_string(trial);
            long L = len(rng);
            for (long i = 0; i < L; ++i) s.labels.push_back(cls(rng));
            SyntheticStyle thin, thick;
            thin.rng_seed = thick.rng_seed = 123;
            thin.stroke_width = 2.0f;
            thick.stroke_width = 4.5f;
            auto im_thin = synth_glyph(s, thin, 64);
            auto im_thick = synth_glyph(s, thick, 64);
            CHECK(testsupport::ink_pixel_count(im_thick) > testsupport::ink_pixel_count(im_thin));
        }
    }

    SECTION("doubling component spacing grows the ink bounding box diagonal") {
        SyntheticStyle narrow, wide;
        narrow.rng_seed = wide.rng_seed = 5;
        narrow.component_spacing = 0.55f;
        wide.component_spacing = 1.1f;
        auto im_narrow = synth_glyph(seq("x", {0, 1, 3, 4}), narrow, 64);
        auto im_wide = synth_glyph(seq("x", {0, 1, 3, 4}), wide, 64);
        CHECK(testsupport::ink_bbox_diagonal(im_wide) > testsupport::ink_bbox_diagonal(im_narrow));
    }

    SECTION("primitives are pairwise distinct renders") {
        SyntheticStyle style;
        style.rng_seed = 3;
        std::vector<GlyphImage> renders;
        for (long k = 0; k < 28; ++k) renders.push_back(synth_glyph(seq("p", {k}), style, 64));
        for (long i = 0; i < 28; ++i)
            for (long j = i + 1; j < 28; ++j)
                CHECK(testsupport::mean_l1_255(renders[i], renders[j]) > 2.0);
    }

    SECTION("styles vary the render") {
        StrokeSequence s = seq("x", {0, 7, 21, 14});
        SyntheticStyle base;
        base.rng_seed = 9;
        auto plain = synth_glyph(s, base, 64);
        SyntheticStyle slanted = base;
        slanted.slant = 0.25f;
        SyntheticStyle serifed = base;
        serifed.serif = true;
        SyntheticStyle hollowed = base;
        hollowed.hollow = true;
        for (const auto& v : {slanted, serifed, hollowed})
            CHECK(testsupport::mean_l1_255(plain, synth_glyph(s, v, 64)) > 0.5);
    }
}

TEST_CASE("make_split honors ratios and determinism") {
    std::vector<std::string> fonts;
    for (int i = 0; i < 10; ++i) fonts.push_back("f" + std::to_string(i));
    std::vector<std::string> chars = {"a", "b", "c", "d", "e"};

    auto s1 = make_split(fonts, chars, {0.2, 0.2}, 7);
    auto s2 = make_split(fonts, chars, {0.2, 0.2}, 7);
    CHECK(s1.seen_fonts.size() == 8);
    CHECK(s1.unseen_fonts.size() == 2);
    CHECK(s1.seen_fonts == s2.seen_fonts);
    CHECK(s1.unseen_fonts == s2.unseen_fonts);
    CHECK(s1.val_chars == s2.val_chars);

    auto minimal = make_split({"f0", "f1"}, chars, {0.2, 0.2}, 3);
    CHECK(minimal.seen_fonts.size() == 1);
    CHECK(minimal.unseen_fonts.size() == 1);

    CHECK_THROWS_AS(make_split(fonts, chars, {0.0, 0.2}, 1), Error);
    CHECK_THROWS_AS(make_split(fonts, chars, {0.2, 1.0}, 1), Error);

    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        auto s = make_split(fonts, chars, {0.3, 0.4}, seed);
        std::set<std::string> seen(s.seen_fonts.begin(), s.seen_fonts.end());
        for (const auto& f : s.unseen_fonts) CHECK_FALSE(seen.count(f));
        CHECK(s.seen_fonts.size() + s.unseen_fonts.size() == fonts.size());
        std::set<std::string> train(s.train_chars.begin(), s.train_chars.end());
        for (const auto& c : s.val_chars) CHECK_FALSE(train.count(c));
    }
}

TEST_CASE("batch iterator covers each epoch exactly once") {
    BatchIterator it(10, 4, 99);
    auto b1 = it.next();
    auto b2 = it.next();
    auto b3 = it.next();
    CHECK(b1.size() == 4);
    CHECK(b2.size() == 4);
    CHECK(b3.size() == 2);
    std::multiset<std::size_t> all;
    for (auto v : b1) all.insert(v);
    for (auto v : b2) all.insert(v);
    for (auto v : b3) all.insert(v);
    CHECK(all.size() == 10);
    std::multiset<std::size_t> expect;
    for (std::size_t i = 0; i < 10; ++i) expect.insert(i);
    CHECK(all == expect);

    BatchIterator again(10, 4, 99);
    CHECK(again.next() == b1);
    CHECK(again.next() == b2);

    BatchIterator other(10, 4, 100);
    bool same = other.next() == b1;
    CHECK_FALSE(same);

    CHECK_THROWS_AS(BatchIterator(0, 4, 1), Error);
    CHECK_THROWS_AS(BatchIterator(5, 0, 1), Error);
}

TEST_CASE("png io round trip") {
    auto dir = temp_dir();
    SyntheticStyle style;
    style.rng_seed = 21;
    auto im = synth_glyph(seq("rt", {4, 8, 15}), style, 64);
    auto p1 = (dir / "rt1.png").string();
    auto p2 = (dir / "rt2.png").string();
    pngio::write(p1, im);
    auto back = pngio::read(p1);
    CHECK(back.size == 64);
    back.char_id = im.char_id;
    back.validate();
    // quantized round trip: every value within half a step
    for (long i = 0; i < im.pixels.size(); ++i)
        CHECK(std::abs(im.pixels[i] - back.pixels[i]) <= 0.5f / 255.0f + 1e-6f);
    // writing the decoded image again is byte-identical
    pngio::write(p2, back);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
}

TEST_CASE("truetype rasterizer on a generated fixture font") {
    auto dir = temp_dir();
    auto font_path = (dir / "fixture.ttf").string();
    testsupport::TtfBuilder().build_to(font_path);

    SECTION("triangle glyph renders ink in range") {
        auto im = rasterize_glyph(font_path, U'A', 64);
        im.font_id = "fixture";
        im.validate();
        CHECK(testsupport::ink_pixel_count(im) > 200);
        // triangle: wide at the bottom of the canvas, narrow at the top
        long top_ink = 0, bottom_ink = 0;
        for (long x = 0; x < 64; ++x) {
            if (testsupport::is_ink(im, 10, x)) ++top_ink;
            if (testsupport::is_ink(im, 54, x)) ++bottom_ink;
        }
        CHECK(bottom_ink > top_ink);
    }

    SECTION("deterministic across calls") {
        auto a = rasterize_glyph(font_path, U'A', 64);
        auto b = rasterize_glyph(font_path, U'A', 64);
        CHECK(bitwise_equal(a.pixels, b.pixels));
    }

    SECTION("nonzero winding keeps the hole in B") {
        auto im = rasterize_glyph(font_path, U'B', 64);
        CHECK(im.gray(32, 32) > 0.9f);   // hole center is paper
        CHECK(im.gray(32, 8) < 0.35f);   // ring is ink
        CHECK(testsupport::count_ink_components(im) == 1);
    }

    SECTION("quadratic contour renders") {
        auto im = rasterize_glyph(font_path, U'C', 64);
        CHECK(testsupport::ink_pixel_count(im) > 200);
        CHECK(im.gray(32, 32) < 0.3f);  // solid middle
    }

    SECTION("missing glyph raises MissingGlyphError naming the codepoint") {
        CHECK_THROWS_WITH(rasterize_glyph(font_path, U'Z', 64),
                          Catch::Matchers::ContainsSubstring("5A"));
        CHECK_THROWS_AS(rasterize_glyph(font_path, U'Z', 64), MissingGlyphError);
    }

    SECTION("unreadable file raises") {
        CHECK_THROWS_AS(rasterize_glyph((dir / "nope.ttf").string(), U'A', 64), Error);
        auto bogus = (dir / "bogus.ttf").string();
        std::ofstream(bogus) << "this is not a font";
        CHECK_THROWS_AS(rasterize_glyph(bogus, U'A', 64), Error);
    }
}

TEST_CASE("truetype rasterizer on a real font when available") {
    const char* candidates[] = {
        "/usr/local/lib/python3.10/dist-packages/matplotlib/mpl-data/fonts/ttf/DejaVuSans.ttf",
        "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    };
    std::string found;
    for (const char* c : candidates)
        if (fs::exists(c)) {
            found = c;
            break;
        }
    if (found.empty()) {
        SUCCEED("no system font available, covered by the fixture font");
        return;
    }
    auto im = rasterize_glyph(found, U'A', 64);
    im.font_id = "dejavu";
    im.validate();
    CHECK(testsupport::ink_pixel_count(im) > 100);
    auto im2 = rasterize_glyph(found, U'A', 64);
    CHECK(bitwise_equal(im.pixels, im2.pixels));
}

TEST_CASE("dataset directory round trip") {
    auto a = StrokeAlphabet::standard();
    auto dir = temp_dir() / "ds";
    fs::remove_all(dir);
    fs::create_directories(dir / "fonts" / "f0");
    fs::create_directories(dir / "fonts" / "f1");

    std::map<std::string, StrokeSequence> db;
    db["c0"] = seq("c0", {0, 1});
    db["c1"] = seq("c1", {2, 3, 4});
    save_stroke_db((dir / "strokes.tsv").string(), db);

    SyntheticStyle s0, s1;
    s0.rng_seed = 1;
    s1.rng_seed = 2;
    s1.stroke_width = 5;
    for (const auto& [cid, sq] : db) {
        auto im0 = synth_glyph(sq, s0, 64);
        pngio::write((dir / "fonts" / "f0" / (cid + ".png")).string(), im0);
        auto im1 = synth_glyph(sq, s1, 64);
        pngio::write((dir / "fonts" / "f1" / (cid + ".png")).string(), im1);
    }

    auto ds = GlyphDataset::load(dir.string(), a);
    CHECK(ds.font_ids() == std::vector<std::string>{"f0", "f1"});
    CHECK(ds.char_ids() == std::vector<std::string>{"c0", "c1"});
    auto sample = ds.sample("f1", "c1");
    sample.validate();
    CHECK(sample.strokes.labels == std::vector<long>{2, 3, 4});
    CHECK(sample.image.font_id == "f1");

    auto table = load_samples(ds, ds.font_ids(), ds.char_ids());
    CHECK(table.samples.size() == 4);
    CHECK(table.has("f0", "c0"));
    CHECK_THROWS_AS(table.at("f9", "c0"), Error);
}
