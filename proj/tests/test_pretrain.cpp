#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "crossfont/model/pretrain.hpp"

#include "support/gradcheck.hpp"

using namespace crossfont;

namespace {

EncoderConfig tiny_cfg() {
    EncoderConfig cfg;
    cfg.dim = 8;
    cfg.n_heads = 2;
    cfg.n_stroke_layers = 1;
    cfg.n_glyph_layers = 1;
    cfg.n_cross_layers = 1;
    cfg.ffn_mult = 2;
    cfg.image_size = 32;
    cfg.glyph_grid = 8;
    cfg.conv_base_channels = 4;
    return cfg;
}

SampleTable tiny_corpus(long n_chars, long image_size) {
    SampleTable table;
    auto rng = make_rng(404, seed_tag::kCorpus);
    std::uniform_int_distribution<long> cls(0, 27);
    std::uniform_int_distribution<long> len(2, 5);
    for (long c = 0; c < n_chars; ++c) {
        StrokeSequence s;
        s.char_id = "c" + std::to_string(c);
        long L = len(rng);
        for (long i = 0; i < L; ++i) s.labels.push_back(cls(rng));
        SyntheticStyle style;
        style.rng_seed = 5;
        GlyphSample sample;
        sample.image = synth_glyph(s, style, image_size);
        sample.image.font_id = "f0";
        sample.strokes = s;
        table.add(std::move(sample));
    }
    return table;
}

}  // namespace

TEST_CASE("mask sampling matches the stated probabilities", "[slow_mc]") {
    const long draws = 100000;
    const long L = 10;
    long all_masked = 0;
    std::vector<long> pos_masked(static_cast<std::size_t>(L), 0);
    long non_all_draws = 0;
    auto rng = make_rng(2024, seed_tag::kMask);
    for (long d = 0; d < draws; ++d) {
        auto spec = sample_mask(L, rng);
        if (spec.all_masked) {
            ++all_masked;
            for (long i = 0; i < L; ++i) REQUIRE(spec.flags[static_cast<std::size_t>(i)]);
        } else {
            ++non_all_draws;
            for (long i = 0; i < L; ++i)
                if (spec.flags[static_cast<std::size_t>(i)]) ++pos_masked[static_cast<std::size_t>(i)];
        }
    }
    double all_frac = static_cast<double>(all_masked) / draws;
    CHECK(all_frac == Catch::Approx(0.375).margin(0.01));
    for (long i = 0; i < L; ++i) {
        double rate = static_cast<double>(pos_masked[static_cast<std::size_t>(i)]) / non_all_draws;
        CHECK(rate == Catch::Approx(0.5).margin(0.01));
    }

    // L = 1: P(masked) = 0.375 + 0.625 * 0.5 = 0.6875
    long single_masked = 0;
    for (long d = 0; d < draws; ++d) {
        auto spec = sample_mask(1, rng);
        if (spec.flags[0]) ++single_masked;
    }
    CHECK(static_cast<double>(single_masked) / draws == Catch::Approx(0.6875).margin(0.01));
}

TEST_CASE("stroke head shape and gradients") {
    ParamRegistry<double> reg;
    auto rng = make_rng(1, seed_tag::kInit);
    StrokeHead<double> head(reg, "h", 6, 11, rng);
    std::mt19937_64 trng(2);
    auto feats = Var<double>::leaf(testsupport::random_tensor({30, 6}, trng));
    auto logits = head.forward(feats);
    CHECK(logits.value().rows() == 30);
    CHECK(logits.value().cols() == 11);
    CHECK(logits.value().all_finite());

    auto params = reg.params();
    params.push_back(feats);
    auto loss = [&] {
        auto l = head.forward(feats);
        return mean_all(mul(l, l));
    };
    CHECK(testsupport::max_grad_rel_err(params, loss) < 1e-6);
}

TEST_CASE("glyph decoder contract and capacity") {
    ParamRegistry<float> reg;
    auto rng = make_rng(3, seed_tag::kInit);
    GlyphDecoder<float> dec(reg, "d", 64, 4, 16, rng);
    std::mt19937_64 trng(4);
    auto tokens = Var<float>::leaf(testsupport::random_tensor({16, 64}, trng).cast<float>());

    SECTION("shape and range") {
        auto img = dec.forward(tokens);
        CHECK(img.value().rows() == 16 * 16);
        CHECK(img.value().cols() == 3);
        for (long i = 0; i < img.value().size(); ++i) {
            CHECK(img.value()[i] >= 0.0f);
            CHECK(img.value()[i] <= 1.0f);
        }
    }

    SECTION("eval determinism") {
        NoGradGuard off;
        auto a = dec.forward(tokens);
        auto b = dec.forward(tokens);
        CHECK(bitwise_equal(a.value(), b.value()));
    }

    SECTION("overfits one target image below L1 0.02 in 2000 steps") {
        StrokeSequence s{"t", {5, 12}};
        SyntheticStyle style;
        style.rng_seed = 7;
        auto big = synth_glyph(s, style, 32);
        // box-downsample to 16 px so the tiny decoder has a realistic target
        GlyphImage target = GlyphImage::blank(16);
        for (long y = 0; y < 16; ++y)
            for (long x = 0; x < 16; ++x)
                for (long c = 0; c < 3; ++c)
                    target.at(y, x, c) =
                        (big.at(2 * y, 2 * x, c) + big.at(2 * y, 2 * x + 1, c) +
                         big.at(2 * y + 1, 2 * x, c) + big.at(2 * y + 1, 2 * x + 1, c)) /
                        4.0f;
        auto gt = Var<float>::constant(target.pixels);
        Adam<float> opt(&reg);
        double final_l1 = 1;
        const long budget = 2000;
        for (long step = 0; step < budget; ++step) {
            auto l1 = mean_abs_diff(dec.forward(tokens), gt);
            final_l1 = static_cast<double>(l1.item());
            if (final_l1 < 0.015) break;
            auto grads = backward(l1, false, true);
            opt.step(grads, linear_decay_lr(4e-3f, step, budget));
        }
        CHECK(final_l1 < 0.02);
    }
}

TEST_CASE("pretrain loss closed forms and decomposition") {
    // vocabulary of 29 = 25 stroke classes + 4 control tokens
    StrokeSequence target{"t", {0, 3, 7}};
    MaskSpec mask;
    mask.flags.assign(28, false);
    mask.flags[0] = true;

    SECTION("uniform logits give ln K") {
        auto logits = Var<double>::constant(Tensor<double>::zeros({30, 29}));
        auto img = Var<double>::constant(Tensor<double>::full({16, 3}, 0.5));
        auto parts = pretrain_loss(logits, target, mask, img, img);
        CHECK(parts.stroke_ce.item() == Catch::Approx(std::log(29.0)).margin(1e-4));
        CHECK(parts.glyph_l1.item() == 0.0);
        CHECK(parts.total.item() ==
              Catch::Approx(parts.stroke_ce.item() + parts.glyph_l1.item()).margin(1e-12));
    }

    SECTION("perfect prediction gives zero") {
        Tensor<double> sharp = Tensor<double>::zeros({30, 29});
        for (long i = 0; i < target.length(); ++i) sharp.at(1 + i, target.labels[i]) = 500;
        auto img = Var<double>::constant(Tensor<double>::full({16, 3}, 0.25));
        auto parts = pretrain_loss(Var<double>::constant(sharp), target, mask, img, img);
        CHECK(parts.total.item() < 1e-6);
    }

    SECTION("all-zero recon against all-one target gives exactly 1") {
        auto logits = Var<double>::constant(Tensor<double>::zeros({30, 29}));
        auto zeros = Var<double>::constant(Tensor<double>::zeros({16, 3}));
        auto ones = Var<double>::constant(Tensor<double>::ones({16, 3}));
        auto parts = pretrain_loss(logits, target, mask, zeros, ones);
        CHECK(parts.glyph_l1.item() == 1.0);
    }

    SECTION("masked-only variant restricts the CE slots") {
        Tensor<double> logits = Tensor<double>::zeros({30, 29});
        logits.at(1, 0) = 500;  // slot 1 perfect (the masked one)
        // slots 2,3 wrong, but only slot 1 is masked
        auto img = Var<double>::constant(Tensor<double>::full({16, 3}, 0.5));
        auto all_slots = pretrain_loss(Var<double>::constant(logits), target, mask, img, img,
                                       /*masked_only=*/false);
        auto only_masked = pretrain_loss(Var<double>::constant(logits), target, mask, img, img,
                                         /*masked_only=*/true);
        CHECK(only_masked.stroke_ce.item() < 1e-6);
        CHECK(all_slots.stroke_ce.item() > 1.0);
    }

    SECTION("non-finite inputs rejected") {
        Tensor<double> bad = Tensor<double>::zeros({30, 29});
        bad[0] = std::numeric_limits<double>::quiet_NaN();
        auto img = Var<double>::constant(Tensor<double>::full({16, 3}, 0.5));
        CHECK_THROWS_AS(pretrain_loss(Var<double>::constant(bad), target, mask, img, img), Error);
    }
}

TEST_CASE("pretrain trainer: metrics log, determinism, resume") {
    auto alphabet = StrokeAlphabet::standard();
    auto cfg = tiny_cfg();
    auto corpus = tiny_corpus(6, cfg.image_size);

    PretrainConfig pcfg;
    pcfg.steps = 6;
    pcfg.batch = 2;
    pcfg.log_every = 1;
    pcfg.ckpt_every = 3;

    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "crossfont_pretrain_test";
    fs::remove_all(dir);

    PretrainModel<float> model(cfg, alphabet, 77);
    auto path = train_pretrain(model, corpus, pcfg, "cfgtext", 99, dir.string(), "", true);
    CHECK(fs::exists(path));
    CHECK(fs::exists(dir / "ckpt_step3.ckpt"));

    SECTION("metrics log is monotone and parseable") {
        std::ifstream log((dir / "metrics.csv").string());
        std::string header;
        std::getline(log, header);
        CHECK(header == "step,lr,stroke_ce,glyph_l1,mask_acc");
        long prev = -1;
        std::string line;
        long rows = 0;
        while (std::getline(log, line)) {
            std::istringstream ls(line);
            std::string field;
            std::getline(ls, field, ',');
            long step = std::stol(field);
            CHECK(step > prev);
            prev = step;
            double v;
            char comma;
            ls >> v >> comma >> v >> comma >> v >> comma >> v;
            ++rows;
        }
        CHECK(rows == 6);
    }

    SECTION("identical seeds give identical checkpoints") {
        auto dir2 = fs::temp_directory_path() / "crossfont_pretrain_test2";
        fs::remove_all(dir2);
        PretrainModel<float> model2(cfg, alphabet, 77);
        train_pretrain(model2, corpus, pcfg, "cfgtext", 99, dir2.string(), "", true);
        CHECK(model.params().content_hash() == model2.params().content_hash());
    }

    SECTION("resuming from a mid-run checkpoint reproduces the continued run") {
        auto dir4 = fs::temp_directory_path() / "crossfont_pretrain_test4";
        fs::remove_all(dir4);
        PretrainModel<float> m4(cfg, alphabet, 12345 /* init overwritten by restore */);
        train_pretrain(m4, corpus, pcfg, "cfgtext", 99, dir4.string(),
                       (dir / "ckpt_step3.ckpt").string(), true);
        CHECK(m4.params().content_hash() == model.params().content_hash());
    }
}

TEST_CASE("pretrain evaluation reports masked and glyph-only accuracy") {
    auto alphabet = StrokeAlphabet::standard();
    auto cfg = tiny_cfg();
    auto corpus = tiny_corpus(4, cfg.image_size);
    PretrainModel<float> model(cfg, alphabet, 7);
    std::vector<const GlyphSample*> held;
    for (const auto& s : corpus.samples) held.push_back(&s);
    PretrainConfig pcfg;
    auto rep = evaluate_pretrain(model, held, pcfg, 5);
    CHECK(rep.masked_acc >= 0);
    CHECK(rep.masked_acc <= 1);
    CHECK(rep.all_masked_acc >= 0);
    CHECK(rep.all_masked_acc <= 1);
    CHECK(rep.recon_l1 >= 0);
}
