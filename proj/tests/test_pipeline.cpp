#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "c2cl/pipeline.hpp"
#include "support/synthetic.hpp"

using namespace c2cl;
using namespace c2cl::testsupport;

namespace {

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Ridge texture inside a bright elliptical blob on a dark background, so the
// segmenter has a clean foreground to find.
GrayImage synth_finger(int w, int h, std::uint64_t seed) {
    const int size = std::max(w, h);
    const GrayImage print = master_print(size, seed);
    const Mask ell =
        ellipse_mask(w, h, (w - 1) / 2.0, (h - 1) / 2.0, w * 0.33, h * 0.42);
    GrayImage img(w, h, 0.03f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (ell.at(x, y)) img.at(x, y) = 0.25f + 0.5f * print.at(x, y);
    return img;
}

const std::string kManifestJsonl =
    R"({"subject_id":"s1","finger_position":"R-index","impression_index":0,"capture_kind":"contact","image_path":"a.png"})"
    "\n"
    R"({"subject_id":"s1","finger_position":"R-index","impression_index":0,"capture_kind":"contactless","image_path":"b.png","device":"phone-a"})"
    "\n"
    "\n"  // blank lines are skipped
    R"({"subject_id":"s2","finger_position":"L-thumb","impression_index":1,"capture_kind":"contact","image_path":"c.png","mask_path":"c_mask.png"})"
    "\n";

}  // namespace

TEST_CASE("jsonl manifest loads fields, ids and groups") {
    const std::string path = "manifest_test.jsonl";
    write_file(path, kManifestJsonl);
    const DatasetManifest m = load_manifest_jsonl(path, false);
    std::remove(path.c_str());

    REQUIRE(m.entries.size() == 3);
    CHECK(m.entries[0].id() == "s1/R-index/0/contact");
    CHECK(m.entries[1].id() == "s1/R-index/0/contactless");
    CHECK(m.entries[1].finger_key() == "s1/R-index");
    CHECK(m.entries[1].device == "phone-a");
    CHECK(m.entries[2].mask_path == "c_mask.png");
    CHECK(m.entries[2].impression_index == 1);

    const auto grouped = group_manifest(m);
    REQUIRE(grouped.size() == 2);  // two distinct fingers
    CHECK(grouped[0].finger_key == "s1/R-index");
    CHECK(grouped[0].probe_ids.size() == 1);
    CHECK(grouped[0].gallery_ids.size() == 1);
    CHECK(grouped[1].probe_ids.empty());

    int skipped = -1;
    const Protocol p = gen_protocol(m, ProtocolRule::full_cross, &skipped);
    CHECK(skipped == 1);  // s2/L-thumb has no contactless impression
    CHECK(p.genuine_pairs.size() == 1);
    CHECK(p.imposter_pairs.empty());
}

TEST_CASE("jsonl manifest rejects malformed input") {
    const std::string path = "manifest_test.jsonl";
    const auto expect_throw = [&](const std::string& text) {
        write_file(path, text);
        bool threw = false;
        try {
            load_manifest_jsonl(path, false);
        } catch (const std::invalid_argument&) {
            threw = true;
        }
        std::remove(path.c_str());
        return threw;
    };
    // Duplicate identity.
    CHECK(expect_throw(
        R"({"subject_id":"s","finger_position":"f","impression_index":0,"capture_kind":"contact","image_path":"a"})"
        "\n"
        R"({"subject_id":"s","finger_position":"f","impression_index":0,"capture_kind":"contact","image_path":"b"})"
        "\n"));
    // Missing required key.
    CHECK(expect_throw(R"({"subject_id":"s","finger_position":"f","impression_index":0})"
                       "\n"));
    // Unknown capture kind.
    CHECK(expect_throw(
        R"({"subject_id":"s","finger_position":"f","impression_index":0,"capture_kind":"latent","image_path":"a"})"
        "\n"));
    // Not JSON at all.
    CHECK(expect_throw("definitely not json\n"));
    // Empty subject.
    CHECK(expect_throw(
        R"({"subject_id":"","finger_position":"f","impression_index":0,"capture_kind":"contact","image_path":"a"})"
        "\n"));

    // Line numbers surface in the error message.
    write_file(path, kManifestJsonl + "{broken\n");
    try {
        load_manifest_jsonl(path, false);
        CHECK(false);
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("line 5") != std::string::npos);
    }
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_manifest_jsonl("no_such_manifest.jsonl", false), std::runtime_error);
}

TEST_CASE("manifest path requirements") {
    const std::string path = "manifest_test.jsonl";
    write_file(path, kManifestJsonl);
    CHECK_THROWS_AS(load_manifest_jsonl(path, true), std::invalid_argument);

    // With the files present the same manifest loads.
    for (const char* f : {"a.png", "b.png", "c.png", "c_mask.png"}) write_file(f, "x");
    CHECK_NOTHROW(load_manifest_jsonl(path, true));
    for (const char* f : {"a.png", "b.png", "c.png", "c_mask.png"}) std::remove(f);
    std::remove(path.c_str());
}

TEST_CASE("csv manifest matches the jsonl loader") {
    const std::string csv = "manifest_test.csv";
    write_file(csv,
               "subject_id,finger_position,impression_index,capture_kind,image_path,mask_path,"
               "device\n"
               "s1,R-index,0,contact,a.png,,\n"
               "s1,R-index,0,contactless,b.png,,phone-a\n"
               "s2,L-thumb,1,contact,c.png,c_mask.png,\n");
    const DatasetManifest m = load_manifest_csv(csv, false);
    std::remove(csv.c_str());
    REQUIRE(m.entries.size() == 3);

    const std::string jsonl = "manifest_test.jsonl";
    write_file(jsonl, kManifestJsonl);
    const DatasetManifest ref = load_manifest_jsonl(jsonl, false);
    std::remove(jsonl.c_str());
    for (size_t i = 0; i < 3; ++i) {
        CHECK(m.entries[i].id() == ref.entries[i].id());
        CHECK(m.entries[i].image_path == ref.entries[i].image_path);
        CHECK(m.entries[i].mask_path == ref.entries[i].mask_path);
        CHECK(m.entries[i].device == ref.entries[i].device);
    }

    const auto expect_throw = [&](const std::string& text) {
        write_file(csv, text);
        bool threw = false;
        try {
            load_manifest_csv(csv, false);
        } catch (const std::invalid_argument&) {
            threw = true;
        }
        std::remove(csv.c_str());
        return threw;
    };
    CHECK(expect_throw("wrong,header\nrow,x\n"));
    CHECK(expect_throw(
        "subject_id,finger_position,impression_index,capture_kind,image_path\n"
        "s1,f,notanumber,contact,a.png\n"));
    CHECK(expect_throw(
        "subject_id,finger_position,impression_index,capture_kind,image_path\n"
        "s1,f,0,contact\n"));
    CHECK(expect_throw(""));
}

TEST_CASE("pipeline config defaults, parsing and validation") {
    const PipelineConfig def;
    CHECK(def.clahe_clip == 2.0);
    CHECK(def.canvas == 480);
    CHECK(def.target_ridge_period == 9.0);
    CHECK(def.fusion.w_t == 0.5);
    CHECK(def.fusion.w_m == 0.5);
    CHECK(def.protocol_rule == ProtocolRule::full_cross);
    CHECK(def.search_k == 500);
    CHECK_NOTHROW(def.validate());

    const PipelineConfig cfg = PipelineConfig::from_json_text(R"({
        "clahe_clip": 3.0, "clahe_tiles": 4, "canvas": 256,
        "target_ridge_period": 8.0, "crop_fraction": 0.5,
        "w_t": 0.7, "w_m": 0.3, "protocol": "first-impression",
        "search_k": 100, "seed": 12345678901234567890, "jobs": 4,
        "skip_preprocess": true, "warp_file": "w.json"
    })");
    CHECK(cfg.clahe_clip == 3.0);
    CHECK(cfg.clahe_tiles == 4);
    CHECK(cfg.canvas == 256);
    CHECK(cfg.target_ridge_period == 8.0);
    CHECK(cfg.crop_fraction == 0.5);
    CHECK(cfg.fusion.w_t == 0.7);
    CHECK(cfg.fusion.w_m == 0.3);
    CHECK(cfg.protocol_rule == ProtocolRule::first_impression);
    CHECK(cfg.search_k == 100);
    CHECK(cfg.seed == 12345678901234567890ull);
    CHECK(cfg.jobs == 4);
    CHECK(cfg.skip_preprocess);
    CHECK(cfg.warp_file == "w.json");

    CHECK_THROWS_AS(PipelineConfig::from_json_text("{bad"), std::invalid_argument);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"protocol":"bogus"})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"canvas":16})"), std::invalid_argument);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"crop_fraction":0.0})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"jobs":0})"), std::invalid_argument);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"target_ridge_period":30})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"w_t":-0.1})"), std::invalid_argument);
    CHECK_THROWS_AS(PipelineConfig::from_json_file("no_such_config.json"), std::runtime_error);

    const std::string path = "config_test.json";
    write_file(path, R"({"canvas": 320})");
    CHECK(PipelineConfig::from_json_file(path).canvas == 320);
    std::remove(path.c_str());
}

TEST_CASE("skip_preprocess passes the image through untouched") {
    const GrayImage img = synth_finger(120, 150, 4);
    PipelineConfig cfg;
    cfg.skip_preprocess = true;
    const PreprocessResult r = preprocess_one(img, cfg);

    REQUIRE(r.image.width == img.width);
    REQUIRE(r.image.height == img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) CHECK(r.image.at(x, y) == img.at(x, y));
    CHECK(r.warp.affine.s == 1.0);
    CHECK(r.warp.affine.theta == 0.0);
    for (const auto& [dx, dy] : r.warp.tps.displacements) {
        CHECK(dx == 0.0);
        CHECK(dy == 0.0);
    }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) CHECK(r.mask.at(x, y) == 1);
    CHECK(r.pad.scale_factor == 1.0);
    CHECK(r.pad.pad_left == 0);
    CHECK(r.pad.pad_bottom == 0);
    CHECK(r.pad.orig_width == img.width);
    CHECK(r.pad.orig_height == img.height);
    CHECK_FALSE(r.low_confidence_mask);
}

TEST_CASE("preprocess reproduces its stage chain exactly") {
    const GrayImage img = synth_finger(240, 300, 3);
    PipelineConfig cfg;
    cfg.canvas = 192;

    // Independent replay of the documented order: segment, mask, equalize,
    // invert, pad to canvas, ridge-scale warp.
    const auto seg = segment_distal(img, cfg.crop_fraction);
    REQUIRE(seg.has_value());
    const GrayImage masked = apply_mask(img, seg->mask);
    const GrayImage enhanced =
        invert(clahe(masked, cfg.clahe_clip, cfg.clahe_tiles, cfg.clahe_tiles));
    auto [padded, pad] = resize_pad(enhanced, cfg.canvas);
    const double est = estimate_ridge_period(padded);
    WarpParams w;
    w.affine.s = est / cfg.target_ridge_period;
    w.tps = TPSField::identity(4, cfg.canvas, cfg.canvas);
    const GrayImage expect = warp_image(padded, w.affine, w.tps);

    const PreprocessResult r = preprocess_one(img, cfg);
    CHECK(r.warp.affine.s == doctest::Approx(w.affine.s).epsilon(1e-12));
    CHECK(r.warp.affine.theta == 0.0);
    REQUIRE(r.image.width == cfg.canvas);
    REQUIRE(r.image.height == cfg.canvas);
    for (int y = 0; y < cfg.canvas; ++y)
        for (int x = 0; x < cfg.canvas; ++x) CHECK(r.image.at(x, y) == expect.at(x, y));

    REQUIRE(r.mask.width == img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) CHECK(r.mask.at(x, y) == seg->mask.at(x, y));
    CHECK(r.pad.pad_left == pad.pad_left);
    CHECK(r.pad.pad_top == pad.pad_top);
    CHECK(r.pad.pad_right == pad.pad_right);
    CHECK(r.pad.pad_bottom == pad.pad_bottom);
    CHECK(r.pad.orig_width == img.width);
    CHECK(r.pad.orig_height == img.height);
    CHECK_FALSE(r.low_confidence_mask);

    // The sampling factor undoes the pad shrink: the warped ridges sit near
    // the configured period.
    CHECK(estimate_ridge_period(r.image) ==
          doctest::Approx(cfg.target_ridge_period).epsilon(0.12));
}

TEST_CASE("preprocess with an external mask bypasses segmentation") {
    const GrayImage img = synth_finger(240, 240, 5);
    PipelineConfig cfg;
    cfg.canvas = 192;
    const Mask ell = ellipse_mask(240, 240, 119.5, 119.5, 75.0, 96.0);

    const PreprocessResult r = preprocess_one(img, cfg, &ell);
    for (int y = 0; y < 240; ++y)
        for (int x = 0; x < 240; ++x) CHECK(r.mask.at(x, y) == ell.at(x, y));
    CHECK_FALSE(r.low_confidence_mask);

    // Oracle with the same mask must agree bitwise.
    const GrayImage masked = apply_mask(img, ell);
    const GrayImage enhanced =
        invert(clahe(masked, cfg.clahe_clip, cfg.clahe_tiles, cfg.clahe_tiles));
    auto [padded, pad] = resize_pad(enhanced, cfg.canvas);
    WarpParams w;
    w.affine.s = estimate_ridge_period(padded) / cfg.target_ridge_period;
    w.tps = TPSField::identity(4, cfg.canvas, cfg.canvas);
    const GrayImage expect = warp_image(padded, w.affine, w.tps);
    for (int y = 0; y < cfg.canvas; ++y)
        for (int x = 0; x < cfg.canvas; ++x) CHECK(r.image.at(x, y) == expect.at(x, y));

    Mask wrong(64, 64, 1);
    CHECK_THROWS_AS(preprocess_one(img, cfg, &wrong), std::runtime_error);
}

TEST_CASE("preprocess failures name the failing stage") {
    PipelineConfig cfg;
    cfg.canvas = 192;
    try {
        preprocess_one(GrayImage(100, 100, 0.5f), cfg);
        CHECK(false);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("segmentation") != std::string::npos);
    }
    try {
        preprocess_one(finger_blob(120, 150, 60, 75, 40, 55), cfg);
        CHECK(false);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("ridge-period") != std::string::npos);
    }
}

TEST_CASE("warp file overrides the estimated warp") {
    const GrayImage img = synth_finger(240, 240, 6);
    PipelineConfig cfg;
    cfg.canvas = 192;
    cfg.warp_file = "warp_test.json";

    WarpParams params;
    params.affine = {0.9, 0.05, 2.0, -1.0};
    params.tps = TPSField::identity(4, cfg.canvas, cfg.canvas);
    params.tps.displacements[5] = {1.5, -2.0};
    write_file(cfg.warp_file, params.to_json());

    const PreprocessResult r = preprocess_one(img, cfg);
    std::remove(cfg.warp_file.c_str());
    CHECK(r.warp.affine.s == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(r.warp.affine.theta == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(r.warp.tps.displacements[5].first == doctest::Approx(1.5).epsilon(1e-12));

    // Bitwise contract against the replayed chain with the same parameters.
    const auto seg = segment_distal(img, cfg.crop_fraction);
    REQUIRE(seg.has_value());
    auto [padded, pad] = resize_pad(
        invert(clahe(apply_mask(img, seg->mask), cfg.clahe_clip, cfg.clahe_tiles, cfg.clahe_tiles)),
        cfg.canvas);
    const GrayImage expect = warp_image(padded, params.affine, params.tps);
    for (int y = 0; y < cfg.canvas; ++y)
        for (int x = 0; x < cfg.canvas; ++x) CHECK(r.image.at(x, y) == expect.at(x, y));

    // A parameter canvas that disagrees with the configured canvas is an
    // error, not a silent rescale.
    params.tps = TPSField::identity(4, 128, 128);
    write_file(cfg.warp_file, params.to_json());
    CHECK_THROWS_AS(preprocess_one(img, cfg), std::runtime_error);
    std::remove(cfg.warp_file.c_str());

    cfg.warp_file = "no_such_warp.json";
    CHECK_THROWS_AS(preprocess_one(img, cfg), std::runtime_error);
}

TEST_CASE("extract_one flags degenerate inputs instead of throwing") {
    const Template t = extract_one(GrayImage(128, 128, 0.5f));
    CHECK(t.embedding.zero_information);
    CHECK(t.minutiae.no_ridge_structure);
    CHECK(t.minutiae.minutiae.empty());
}

TEST_CASE("template binary round trip is lossless and stable") {
    Template t = random_template("subj-9", "L-ring", 2, CaptureKind::contactless, 901);
    t.device = "scanner-x";
    const std::string path = "template_test.c2tp";
    save_template(t, path);
    const Template back = load_template(path);

    CHECK(back.subject_id == t.subject_id);
    CHECK(back.finger_position == t.finger_position);
    CHECK(back.impression_index == t.impression_index);
    CHECK(back.capture_kind == t.capture_kind);
    CHECK(back.device == t.device);
    CHECK(back.embedding.normalized == t.embedding.normalized);
    CHECK(back.embedding.zero_information == t.embedding.zero_information);
    REQUIRE(back.embedding.values.size() == t.embedding.values.size());
    for (size_t i = 0; i < t.embedding.values.size(); ++i)
        CHECK(back.embedding.values[i] == t.embedding.values[i]);
    CHECK(back.minutiae.width == t.minutiae.width);
    CHECK(back.minutiae.height == t.minutiae.height);
    REQUIRE(back.minutiae.minutiae.size() == t.minutiae.minutiae.size());
    for (size_t i = 0; i < t.minutiae.minutiae.size(); ++i) {
        CHECK(back.minutiae.minutiae[i].x == t.minutiae.minutiae[i].x);
        CHECK(back.minutiae.minutiae[i].y == t.minutiae.minutiae[i].y);
        CHECK(back.minutiae.minutiae[i].theta == t.minutiae.minutiae[i].theta);
        CHECK(back.minutiae.minutiae[i].kind == t.minutiae.minutiae[i].kind);
        CHECK(back.minutiae.minutiae[i].quality == t.minutiae.minutiae[i].quality);
    }

    // Serialization is deterministic byte for byte.
    const std::string first = read_file(path);
    save_template(back, path);
    CHECK(read_file(path) == first);
    std::remove(path.c_str());
}

TEST_CASE("template loading validates the payload") {
    const std::string path = "template_test.c2tp";
    const Template t = random_template("s", "f", 0, CaptureKind::contact, 902);
    save_template(t, path);

    // Bad magic.
    {
        std::string bytes = read_file(path);
        bytes[0] = 'X';
        std::ofstream(path, std::ios::binary) << bytes;
    }
    CHECK_THROWS_AS(load_template(path), std::invalid_argument);

    // Unsupported version.
    save_template(t, path);
    {
        std::string bytes = read_file(path);
        bytes[4] = 9;
        std::ofstream(path, std::ios::binary) << bytes;
    }
    CHECK_THROWS_AS(load_template(path), std::invalid_argument);

    // Truncation.
    save_template(t, path);
    {
        std::string bytes = read_file(path);
        bytes.resize(bytes.size() / 2);
        std::ofstream(path, std::ios::binary) << bytes;
    }
    CHECK_THROWS_AS(load_template(path), std::invalid_argument);

    // Out-of-range payload: patch the trailing quality double to 2.0. The
    // loader must re-validate, not trust the bytes.
    save_template(t, path);
    {
        std::string bytes = read_file(path);
        const double bad = 2.0;
        std::memcpy(bytes.data() + bytes.size() - 8, &bad, 8);
        std::ofstream(path, std::ios::binary) << bytes;
    }
    CHECK_THROWS_AS(load_template(path), std::invalid_argument);
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_template("no_such_template.c2tp"), std::runtime_error);
}

TEST_CASE("template index round trip") {
    const std::string path = "index_test.json";
    write_template_index({{"b/f/0/contact", "b.c2tp"}, {"a/f/0/contact", "a.c2tp"}}, path);
    const auto back = read_template_index(path);
    REQUIRE(back.size() == 2);
    // Keys come back sorted.
    CHECK(back[0].first == "a/f/0/contact");
    CHECK(back[0].second == "a.c2tp");
    CHECK(back[1].first == "b/f/0/contact");
    std::remove(path.c_str());

    CHECK_THROWS_AS(write_template_index({{"x", "1"}, {"x", "2"}}, path), std::invalid_argument);
    std::remove(path.c_str());
    write_file(path, "not json");
    CHECK_THROWS_AS(read_template_index(path), std::invalid_argument);
    std::remove(path.c_str());
    CHECK_THROWS_AS(read_template_index("no_such_index.json"), std::runtime_error);
}

TEST_CASE("parallel batch processes every index once and orders failures") {
    const size_t n = 200;
    std::vector<std::atomic<int>> touched(n);
    const BatchOutcome out = parallel_batch(
        n, 8,
        [&](size_t i) {
            touched[i].fetch_add(1);
            if (i % 7 == 3) throw std::runtime_error("boom " + std::to_string(i));
        },
        [](size_t i) { return "item-" + std::to_string(i); });

    size_t expect_failures = 0;
    for (size_t i = 0; i < n; ++i) {
        CHECK(touched[i].load() == 1);
        expect_failures += i % 7 == 3;
    }
    REQUIRE(out.failures.size() == expect_failures);
    CHECK(out.processed == n - expect_failures);
    size_t prev = 0;
    for (size_t k = 0; k < out.failures.size(); ++k) {
        const size_t i = 3 + 7 * k;
        CHECK(out.failures[k].id == "item-" + std::to_string(i));
        CHECK(out.failures[k].message == "boom " + std::to_string(i));
        CHECK(i >= prev);
        prev = i;
    }

    const BatchOutcome empty = parallel_batch(0, 4, [](size_t) {}, [](size_t) { return ""; });
    CHECK(empty.processed == 0);
    CHECK(empty.failures.empty());
    CHECK_THROWS_AS(parallel_batch(1, 0, [](size_t) {}, [](size_t) { return ""; }),
                    std::invalid_argument);
}

namespace {

std::vector<Template> verification_corpus(int fingers, int probes_per, int gallery_per,
                                          std::uint64_t seed) {
    std::vector<Template> out;
    for (int f = 0; f < fingers; ++f) {
        for (int i = 0; i < probes_per; ++i)
            out.push_back(random_template("s" + std::to_string(f), "R-index", i,
                                          CaptureKind::contactless, seed + f * 100 + i));
        for (int i = 0; i < gallery_per; ++i)
            out.push_back(random_template("s" + std::to_string(f), "R-index", i,
                                          CaptureKind::contact, seed + f * 100 + 50 + i));
    }
    return out;
}

}  // namespace

TEST_CASE("verification counts follow the protocol and reports are deterministic") {
    const std::vector<Template> templates = verification_corpus(6, 2, 2, 7000);
    PipelineConfig cfg;
    cfg.jobs = 4;

    const VerificationReport rep = run_verification(templates, cfg, true);
    CHECK(rep.genuine_count == 6 * 2 * 2);
    CHECK(rep.imposter_count == 12 * 12 - 24);
    CHECK(rep.skipped_fingers == 0);
    CHECK(rep.missing_templates.empty());
    CHECK_FALSE(rep.insufficient);
    REQUIRE(rep.rows.size() == rep.genuine_count + rep.imposter_count);
    CHECK(rep.eer >= 0.0);
    CHECK(rep.eer <= 1.0);
    CHECK_FALSE(rep.roc_points.empty());

    // Rows carry the fused score of their parts.
    for (size_t i = 0; i < rep.rows.size(); i += 17) {
        const auto& row = rep.rows[i];
        CHECK(row.fused ==
              doctest::Approx(fuse_scores(row.s_t, row.s_m, cfg.fusion.w_t, cfg.fusion.w_m))
                  .epsilon(1e-12));
        CHECK((row.genuine ? row.probe_id.substr(0, 2) == row.gallery_id.substr(0, 2)
                           : row.probe_id.substr(0, 3) != row.gallery_id.substr(0, 3)));
    }

    // Same inputs, different parallelism: identical report bytes.
    PipelineConfig serial = cfg;
    serial.jobs = 1;
    const VerificationReport rep2 = run_verification(templates, serial, true);
    CHECK(rep.to_json() == rep2.to_json());

    // The JSON carries the documented structure and no timing data.
    const nlohmann::json j = nlohmann::json::parse(rep.to_json());
    CHECK(j.at("counts").at("genuine") == 24);
    CHECK(j.at("counts").at("imposter") == 120);
    CHECK(j.at("tar_at_far").contains("1e-2"));
    CHECK(j.at("tar_at_far").contains("1e-3"));
    CHECK(j.at("tar_at_far").contains("1e-4"));
    CHECK(j.contains("roc_points"));
    CHECK_FALSE(rep.to_json().find("seconds") != std::string::npos);

    // First-impression rule shrinks the imposter block to F*(F-1).
    PipelineConfig fi = cfg;
    fi.protocol_rule = ProtocolRule::first_impression;
    const VerificationReport rep_fi = run_verification(templates, fi, false);
    CHECK(rep_fi.imposter_count == 6 * 5);
    CHECK(rep_fi.genuine_count == 24);

    std::vector<Template> dup = templates;
    dup.push_back(templates.front());
    CHECK_THROWS_AS(run_verification(dup, cfg, false), std::invalid_argument);
}

TEST_CASE("verification with one finger is insufficient for metrics") {
    std::vector<Template> templates = verification_corpus(1, 2, 2, 7100);
    // A finger with only gallery impressions is skipped, not scored.
    templates.push_back(random_template("lonely", "R-index", 0, CaptureKind::contact, 7190));
    const PipelineConfig cfg;
    const VerificationReport rep = run_verification(templates, cfg, false);
    CHECK(rep.genuine_count == 4);
    CHECK(rep.imposter_count == 0);
    CHECK(rep.skipped_fingers == 1);
    CHECK(rep.insufficient);
    const nlohmann::json j = nlohmann::json::parse(rep.to_json());
    CHECK(j.at("insufficient") == true);
    CHECK_FALSE(j.contains("eer"));
}

TEST_CASE("score csv format") {
    const std::vector<ScoreRow> rows = {{"p1", "g1", true, 0.5, 0.25, 0.375},
                                        {"p2", "g2", false, 1.0, 0.0, 0.5}};
    const std::string path = "scores_test.csv";
    write_scores_csv(rows, path);
    const std::string text = read_file(path);
    std::remove(path.c_str());
    CHECK(text ==
          "probe_id,gallery_id,label,s_t,s_m,fused\n"
          "p1,g1,genuine,0.500000000,0.250000000,0.375000000\n"
          "p2,g2,imposter,1.000000000,0.000000000,0.500000000\n");
}

TEST_CASE("search report finds planted mates and separates timing") {
    std::vector<Template> templates;
    for (int s = 0; s < 5; ++s)
        templates.push_back(random_template("s" + std::to_string(s), "R-thumb", 0,
                                            CaptureKind::contact, 8000 + s));
    // Three probes whose minutiae exactly match their enrolled mate.
    for (int s = 0; s < 3; ++s) {
        Template probe = random_template("s" + std::to_string(s), "R-thumb", 0,
                                         CaptureKind::contactless, 8100 + s);
        probe.minutiae = templates[s].minutiae;
        templates.push_back(probe);
    }
    // One probe with no enrolled mate at all.
    templates.push_back(random_template("ghost", "R-thumb", 0, CaptureKind::contactless, 8200));

    const PipelineConfig cfg;
    const SearchReport rep = run_search(templates, cfg);
    CHECK(rep.probes == 4);
    CHECK(rep.unmatchable == 1);
    CHECK(rep.rank1 == doctest::Approx(1.0));
    CHECK(rep.rank10 == doctest::Approx(1.0));
    CHECK(rep.rank500 == doctest::Approx(1.0));
    CHECK(rep.stage1_seconds >= 0.0);
    CHECK(rep.stage2_seconds >= 0.0);

    const nlohmann::json j = nlohmann::json::parse(rep.to_json());
    CHECK(j.at("probes") == 4);
    CHECK(j.at("unmatchable") == 1);
    CHECK(j.at("rank_hit_rates").at("1") == 1.0);
    CHECK(rep.to_json().find("seconds") == std::string::npos);
    const nlohmann::json timing = nlohmann::json::parse(rep.timing_json());
    CHECK(timing.contains("stage1_seconds"));
    CHECK(timing.contains("stage2_seconds"));

    // Search demands a gallery.
    std::vector<Template> no_gallery = {templates.back()};
    CHECK_THROWS_AS(run_search(no_gallery, cfg), std::invalid_argument);

    // A small search_k still ranks every gallery entry.
    PipelineConfig small = cfg;
    small.search_k = 2;
    const SearchReport rep2 = run_search(templates, small);
    CHECK(rep2.probes == 4);
    CHECK(rep2.rank500 >= rep2.rank1);
}
