// c2cl command line tool: dataset ingestion, preprocessing, template
// extraction, 1:1 matching, protocol verification, two-stage search,
// segmentation evaluation and a gradient self-check.
//
// Exit codes: 0 success, 1 hard runtime failure, 2 validation error
// (arguments, config, manifest), 3 per-item failures under --strict.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "c2cl/geometry.hpp"
#include "c2cl/image_io.hpp"
#include "c2cl/imaging.hpp"
#include "c2cl/matcheval.hpp"
#include "c2cl/pipeline.hpp"
#include "c2cl/representation.hpp"
#include "c2cl/segmentation.hpp"

namespace {

using namespace c2cl;

std::string sanitize_id(const std::string& id) {
    std::string out = id;
    for (char& c : out)
        if (c == '/' || c == '\\' || c == ':') c = '_';
    return out;
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::fputs(text.c_str(), stdout);
        std::fputc('\n', stdout);
        return;
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text << '\n';
}

int finish_batch(const char* what, size_t total, const BatchOutcome& out, bool strict) {
    for (const ItemFailure& f : out.failures)
        std::fprintf(stderr, "%s: %s: %s\n", what, f.id.c_str(), f.message.c_str());
    std::fprintf(stderr, "%s: processed %zu/%zu, %zu failed\n", what, out.processed, total,
                 out.failures.size());
    return (!out.failures.empty() && strict) ? 3 : 0;
}

DatasetManifest load_manifest_any(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0)
        return load_manifest_csv(path);
    return load_manifest_jsonl(path);
}

// ---------------------------------------------------------------------------

int cmd_segment(const PipelineConfig& cfg, const std::string& input, const std::string& output) {
    const GrayImage img = load_image(input);
    const std::optional<Segmentation> seg = segment_distal(img, cfg.crop_fraction);
    if (!seg) {
        std::fprintf(stderr, "segment: no plausible foreground in %s\n", input.c_str());
        return 1;
    }
    if (seg->low_confidence)
        std::fprintf(stderr, "segment: low-confidence mask (unusual foreground area)\n");
    save_mask(seg->mask, output);
    return 0;
}

int cmd_preprocess_single(const PipelineConfig& cfg, const std::string& input,
                          const std::string& output, const std::string& mask_path,
                          const std::string& warp_out) {
    const GrayImage img = load_image(input);
    std::optional<Mask> external;
    if (!mask_path.empty()) external = load_mask(mask_path);
    const PreprocessResult res = preprocess_one(img, cfg, external ? &*external : nullptr);
    if (res.low_confidence_mask)
        std::fprintf(stderr, "preprocess: low-confidence segmentation for %s\n", input.c_str());
    save_png(res.image, output);
    if (!warp_out.empty()) emit(res.warp.to_json(), warp_out);
    return 0;
}

int cmd_preprocess_batch(const PipelineConfig& cfg, const std::string& manifest_path,
                         const std::string& out_dir) {
    const DatasetManifest manifest = load_manifest_any(manifest_path);
    std::filesystem::create_directories(out_dir);
    const BatchOutcome out = parallel_batch(
        manifest.entries.size(), cfg.jobs,
        [&](size_t i) {
            const ManifestEntry& e = manifest.entries[i];
            const GrayImage img = load_image(e.image_path);
            std::optional<Mask> external;
            if (!e.mask_path.empty()) external = load_mask(e.mask_path);
            const PreprocessResult res = preprocess_one(img, cfg, external ? &*external : nullptr);
            const std::string stem = out_dir + "/" + sanitize_id(e.id());
            save_png(res.image, stem + ".png");
            emit(res.warp.to_json(), stem + ".warp.json");
        },
        [&](size_t i) { return manifest.entries[i].id(); });
    return finish_batch("preprocess", manifest.entries.size(), out, cfg.strict);
}

Template build_template(const ManifestEntry& e, const PipelineConfig& cfg,
                        const std::string& embeddings_dir) {
    const GrayImage img = load_image(e.image_path);
    std::optional<Mask> external;
    if (!e.mask_path.empty()) external = load_mask(e.mask_path);
    const PreprocessResult res = preprocess_one(img, cfg, external ? &*external : nullptr);
    Template t = extract_one(res.image);
    t.subject_id = e.subject_id;
    t.finger_position = e.finger_position;
    t.impression_index = e.impression_index;
    t.capture_kind = e.capture_kind;
    t.device = e.device;
    if (!embeddings_dir.empty()) {
        const std::string external_emb = embeddings_dir + "/" + sanitize_id(e.id()) + ".c2em";
        if (std::filesystem::exists(external_emb)) t.embedding = import_embedding(external_emb);
    }
    return t;
}

int cmd_extract_batch(const PipelineConfig& cfg, const std::string& manifest_path,
                      const std::string& out_dir, const std::string& embeddings_dir) {
    const DatasetManifest manifest = load_manifest_any(manifest_path);
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> files(manifest.entries.size());
    const BatchOutcome out = parallel_batch(
        manifest.entries.size(), cfg.jobs,
        [&](size_t i) {
            const ManifestEntry& e = manifest.entries[i];
            const Template t = build_template(e, cfg, embeddings_dir);
            const std::string file = sanitize_id(e.id()) + ".c2tp";
            save_template(t, out_dir + "/" + file);
            files[i] = file;
        },
        [&](size_t i) { return manifest.entries[i].id(); });

    std::vector<std::pair<std::string, std::string>> index;
    for (size_t i = 0; i < files.size(); ++i)
        if (!files[i].empty()) index.emplace_back(manifest.entries[i].id(), files[i]);
    write_template_index(index, out_dir + "/index.json");
    std::fprintf(stderr, "extract: wrote %zu templates and index.json to %s\n", index.size(),
                 out_dir.c_str());
    return finish_batch("extract", manifest.entries.size(), out, cfg.strict);
}

int cmd_extract_single(const PipelineConfig& cfg, const std::string& input,
                       const std::string& output, const std::string& subject,
                       const std::string& finger, int impression, const std::string& kind) {
    ManifestEntry e;
    e.subject_id = subject;
    e.finger_position = finger;
    e.impression_index = impression;
    if (kind != "contact" && kind != "contactless")
        throw std::invalid_argument("extract: --kind must be contact or contactless");
    e.capture_kind = kind == "contact" ? CaptureKind::contact : CaptureKind::contactless;
    e.image_path = input;
    const Template t = build_template(e, cfg, "");
    save_template(t, output);
    return 0;
}

int cmd_match(const PipelineConfig& cfg, const std::string& probe_path,
              const std::string& gallery_path, const std::string& output) {
    const Template probe = load_template(probe_path);
    const Template gallery = load_template(gallery_path);
    const double s_t = texture_similarity(probe.embedding, gallery.embedding);
    const double s_m = match_minutiae(probe.minutiae, gallery.minutiae, cfg.seed).score;
    const double fused = fuse_scores(s_t, s_m, cfg.fusion.w_t, cfg.fusion.w_m);
    nlohmann::json j{{"probe", probe.id()},
                     {"gallery", gallery.id()},
                     {"texture", s_t},
                     {"minutiae", s_m},
                     {"fused", fused}};
    emit(j.dump(2), output);
    return 0;
}

// Template ids must be disjoint across directories; the verification and
// search drivers treat the concatenation as one enrollment set.
std::vector<Template> load_template_dirs(const std::vector<std::string>& dirs,
                                         size_t* failed_loads) {
    std::vector<Template> templates;
    *failed_loads = 0;
    for (const std::string& dir : dirs) {
        const auto index = read_template_index(dir + "/index.json");
        templates.reserve(templates.size() + index.size());
        for (const auto& [id, file] : index) {
            try {
                templates.push_back(load_template(dir + "/" + file));
            } catch (const std::exception& e) {
                std::fprintf(stderr, "templates: %s: %s\n", id.c_str(), e.what());
                ++*failed_loads;
            }
        }
    }
    return templates;
}

int cmd_verify(const PipelineConfig& cfg, const std::vector<std::string>& templates_dirs,
               const std::string& report_path, const std::string& scores_path) {
    size_t failed_loads = 0;
    const std::vector<Template> templates = load_template_dirs(templates_dirs, &failed_loads);
    const VerificationReport report = run_verification(templates, cfg, !scores_path.empty());
    emit(report.to_json(), report_path);
    if (!scores_path.empty()) write_scores_csv(report.rows, scores_path);
    if (report.insufficient)
        std::fprintf(stderr, "verify: not enough scores for metrics (see report counts)\n");
    for (const std::string& id : report.missing_templates)
        std::fprintf(stderr, "verify: missing template %s\n", id.c_str());
    const bool partial = failed_loads > 0 || !report.missing_templates.empty();
    return (partial && cfg.strict) ? 3 : 0;
}

int cmd_search(const PipelineConfig& cfg, const std::vector<std::string>& templates_dirs,
               const std::string& report_path, const std::string& timing_path) {
    size_t failed_loads = 0;
    const std::vector<Template> templates = load_template_dirs(templates_dirs, &failed_loads);
    const SearchReport report = run_search(templates, cfg);
    emit(report.to_json(), report_path);
    if (!timing_path.empty()) emit(report.timing_json(), timing_path);
    return (failed_loads > 0 && cfg.strict) ? 3 : 0;
}

int cmd_seg_eval(const PipelineConfig& cfg, const std::string& manifest_path,
                 const std::string& report_path) {
    const DatasetManifest manifest = load_manifest_any(manifest_path);
    std::vector<double> scores(manifest.entries.size(), -1.0);
    const BatchOutcome out = parallel_batch(
        manifest.entries.size(), cfg.jobs,
        [&](size_t i) {
            const ManifestEntry& e = manifest.entries[i];
            if (e.mask_path.empty())
                throw std::runtime_error("seg-eval: no ground-truth mask in manifest");
            const GrayImage img = load_image(e.image_path);
            const Mask gt = load_mask(e.mask_path);
            const std::optional<Segmentation> seg = segment_distal(img, cfg.crop_fraction);
            if (!seg) throw std::runtime_error("segmentation: no plausible foreground");
            scores[i] = iou(seg->mask, gt);
        },
        [&](size_t i) { return manifest.entries[i].id(); });

    nlohmann::json items = nlohmann::json::array();
    double sum = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] < 0.0) continue;
        items.push_back({{"id", manifest.entries[i].id()}, {"iou", scores[i]}});
        sum += scores[i];
        ++n;
    }
    nlohmann::json j{{"evaluated", n},
                     {"failed", out.failures.size()},
                     {"mean_iou", n ? sum / static_cast<double>(n) : 0.0},
                     {"items", items}};
    emit(j.dump(2), report_path);
    return finish_batch("seg-eval", manifest.entries.size(), out, cfg.strict);
}

// ---------------------------------------------------------------------------
// gradcheck: central finite differences against the analytic gradients, the
// same construction the test suite uses. The FD objective for the warp is a
// double-precision model of warp_image; float pixel quantization would
// otherwise dominate the h = 1e-4 step.

double bilinear_zero_fill(const GrayImage& img, double qx, double qy) {
    const int x0 = static_cast<int>(std::floor(qx));
    const int y0 = static_cast<int>(std::floor(qy));
    const double fx = qx - x0, fy = qy - y0;
    auto px = [&](int x, int y) -> double { return img.in_bounds(x, y) ? img.at(x, y) : 0.0; };
    return (1 - fy) * ((1 - fx) * px(x0, y0) + fx * px(x0 + 1, y0)) +
           fy * ((1 - fx) * px(x0, y0 + 1) + fx * px(x0 + 1, y0 + 1));
}

double warp_objective(const GrayImage& img, const AffineParams& p, const TPSField& f,
                      const std::vector<double>& upstream) {
    const FlowGrid flow = tps_flow(f, img.width, img.height);
    const double cx = 0.5 * (img.width - 1), cy = 0.5 * (img.height - 1);
    const double cs = std::cos(p.theta), sn = std::sin(p.theta);
    double L = 0.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double u = upstream[static_cast<size_t>(y) * img.width + x];
            if (u == 0.0) continue;
            auto [fx, fy] = flow.at(x, y);
            const double ex = fx - cx, ey = fy - cy;
            const double qx = cx + p.s * (cs * ex - sn * ey) + p.tx;
            const double qy = cy + p.s * (sn * ex + cs * ey) + p.ty;
            L += u * std::clamp(bilinear_zero_fill(img, qx, qy), 0.0, 1.0);
        }
    return L;
}

struct GradStats {
    size_t checks = 0;
    size_t violations = 0;
    double max_err = 0.0;

    void add(double analytic, double fd) {
        const double err = std::abs(analytic - fd);
        max_err = std::max(max_err, err);
        ++checks;
        violations += err > std::max(1e-6, 1e-4 * std::abs(fd));
    }
};

int cmd_gradcheck(const PipelineConfig& cfg, int trials, const std::string& report_path) {
    const double h = 1e-4;
    GradStats warp, loss;

    for (int trial = 0; trial < trials; ++trial) {
        const int W = 24, H = 24;
        std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(trial) * 1000003ull);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        GrayImage coarse(6, 6);
        for (auto& px : coarse.pixels) px = 0.5f + 0.4f * static_cast<float>(uni(rng));
        const GrayImage img = resize_bilinear(coarse, W, H);

        AffineParams p;
        p.s = 1.05 + 0.2 * uni(rng);
        p.theta = 0.35 * uni(rng);
        p.tx = 2.5 * uni(rng);
        p.ty = 2.5 * uni(rng);
        TPSField f = TPSField::identity(3, W, H);
        for (auto& d : f.displacements) d = {1.5 * uni(rng), 1.5 * uni(rng)};
        std::vector<double> upstream(static_cast<size_t>(W) * H);
        for (auto& u : upstream) u = uni(rng);
        // Keep the comparison on the differentiable set: drop samples near
        // the bilinear kinks at integer grid lines.
        {
            const FlowGrid flow = tps_flow(f, W, H);
            const double cx = 0.5 * (W - 1), cy = 0.5 * (H - 1);
            const double cs = std::cos(p.theta), sn = std::sin(p.theta);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    auto [fx, fy] = flow.at(x, y);
                    const double ex = fx - cx, ey = fy - cy;
                    const double qx = cx + p.s * (cs * ex - sn * ey) + p.tx;
                    const double qy = cy + p.s * (sn * ex + cs * ey) + p.ty;
                    if (std::abs(qx - std::round(qx)) < 0.02 ||
                        std::abs(qy - std::round(qy)) < 0.02)
                        upstream[static_cast<size_t>(y) * W + x] = 0.0;
                }
        }

        const WarpGradients g = warp_param_gradients(img, p, f, upstream);
        auto fd_of = [&](const std::function<void(double)>& set, double base) {
            set(base + h);
            const double Lp = warp_objective(img, p, f, upstream);
            set(base - h);
            const double Lm = warp_objective(img, p, f, upstream);
            set(base);
            return (Lp - Lm) / (2 * h);
        };
        warp.add(g.d_s, fd_of([&](double v) { p.s = v; }, p.s));
        warp.add(g.d_theta, fd_of([&](double v) { p.theta = v; }, p.theta));
        warp.add(g.d_tx, fd_of([&](double v) { p.tx = v; }, p.tx));
        warp.add(g.d_ty, fd_of([&](double v) { p.ty = v; }, p.ty));
        for (size_t k = 0; k < f.displacements.size(); ++k) {
            warp.add(g.d_displacements[k].first,
                     fd_of([&](double v) { f.displacements[k].first = v; },
                           f.displacements[k].first));
            warp.add(g.d_displacements[k].second,
                     fd_of([&](double v) { f.displacements[k].second = v; },
                           f.displacements[k].second));
        }

        // Loss gradients on matching seeded inputs.
        std::normal_distribution<double> gauss(0.0, 1.0);
        const int K = 8, C = 8, R = 8, M = 16;
        auto soft = [&](int n) {
            std::vector<double> z(n), pr(n);
            double mx = -1e9;
            for (auto& v : z) mx = std::max(mx, v = gauss(rng));
            double sum = 0.0;
            for (int i = 0; i < n; ++i) sum += pr[i] = std::exp(z[i] - mx);
            for (int i = 0; i < n; ++i) pr[i] = 0.7 * (pr[i] / sum) + 0.3 / n;
            return pr;
        };
        LossInputs in;
        in.probs_minutiae = soft(K);
        in.probs_texture = soft(K);
        in.label = static_cast<int>(rng() % K);
        in.r1.resize(R);
        in.r2.resize(R);
        in.center1.resize(R);
        in.center2.resize(R);
        for (auto* v : {&in.r1, &in.r2, &in.center1, &in.center2})
            for (auto& x : *v) x = gauss(rng);
        in.map_pred.resize(M);
        in.map_gt.resize(M);
        for (auto& x : in.map_pred) x = gauss(rng);
        for (auto& x : in.map_gt) x = gauss(rng);
        in.adversary_probs = soft(C);
        in.device_label = static_cast<int>(rng() % C);

        const LossWeights w;
        auto fd_vec = [&](std::vector<double>& v, size_t k, const std::function<double()>& fn) {
            const double base = v[k];
            v[k] = base + h;
            const double Lp = fn();
            v[k] = base - h;
            const double Lm = fn();
            v[k] = base;
            return (Lp - Lm) / (2 * h);
        };
        const IdentityLossGradients gi = loss_identity_gradients(in, w);
        auto ident = [&] { return loss_identity(in, w).total; };
        for (size_t k = 0; k < in.probs_minutiae.size(); ++k)
            loss.add(gi.d_probs_minutiae[k], fd_vec(in.probs_minutiae, k, ident));
        for (size_t k = 0; k < in.probs_texture.size(); ++k)
            loss.add(gi.d_probs_texture[k], fd_vec(in.probs_texture, k, ident));
        for (size_t k = 0; k < in.r1.size(); ++k) loss.add(gi.d_r1[k], fd_vec(in.r1, k, ident));
        for (size_t k = 0; k < in.r2.size(); ++k) loss.add(gi.d_r2[k], fd_vec(in.r2, k, ident));
        for (size_t k = 0; k < in.map_pred.size(); ++k)
            loss.add(gi.d_map_pred[k], fd_vec(in.map_pred, k, ident));
        const std::vector<double> ga = loss_adversarial_gradients(in);
        const std::vector<double> gh = loss_adversary_head_gradients(in);
        for (size_t k = 0; k < in.adversary_probs.size(); ++k) {
            loss.add(ga[k], fd_vec(in.adversary_probs, k, [&] { return loss_adversarial(in); }));
            loss.add(gh[k], fd_vec(in.adversary_probs, k, [&] { return loss_adversary_head(in); }));
        }
        Embedding ea, eb;
        ea.values.resize(R);
        eb.values.resize(R);
        for (auto& x : ea.values) x = gauss(rng);
        for (auto& x : eb.values) x = gauss(rng);
        const StnLossGradients gs = loss_stn_gradients(ea, eb);
        for (size_t k = 0; k < ea.values.size(); ++k) {
            loss.add(gs.d_a[k], fd_vec(ea.values, k, [&] { return loss_stn(ea, eb); }));
            loss.add(gs.d_b[k], fd_vec(eb.values, k, [&] { return loss_stn(ea, eb); }));
        }
    }

    const bool pass = warp.violations == 0 && loss.violations == 0;
    nlohmann::json j{{"trials", trials},
                     {"warp", {{"checks", warp.checks}, {"max_abs_err", warp.max_err},
                               {"violations", warp.violations}}},
                     {"loss", {{"checks", loss.checks}, {"max_abs_err", loss.max_err},
                               {"violations", loss.violations}}},
                     {"pass", pass}};
    emit(j.dump(2), report_path);
    return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"contact to contactless fingerprint matching pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    int jobs = 0;
    bool strict = false;
    auto* opt_config = app.add_option("--config", config_path, "pipeline config JSON file")
                           ->check(CLI::ExistingFile);
    auto* opt_seed = app.add_option("--seed", seed, "random seed override");
    auto* opt_jobs = app.add_option("--jobs", jobs, "worker thread count")
                         ->check(CLI::PositiveNumber);
    auto* opt_strict = app.add_flag("--strict", strict, "fail the run on per-item errors");

    std::string input, output, mask_path, warp_out, manifest_path, out_dir, embeddings_dir;
    std::string probe_path, gallery_path, report_path, scores_path, timing_path;
    std::vector<std::string> templates_dirs;
    std::string subject = "anon", finger = "unknown", kind = "contact";
    int impression = 1, trials = 5;

    auto* seg = app.add_subcommand("segment", "segment the distal phalange of one image");
    seg->add_option("-i,--input", input, "input image (PNG or PGM)")->required();
    seg->add_option("-o,--output", output, "output mask PNG")->required();

    auto* pre = app.add_subcommand("preprocess",
                                   "mask, enhance, scale and warp one image or a manifest");
    pre->add_option("-i,--input", input, "input image");
    pre->add_option("-o,--output", output, "output image PNG (single mode)");
    pre->add_option("--mask", mask_path, "external segmentation mask (single mode)");
    pre->add_option("--warp-out", warp_out, "write applied warp parameters JSON (single mode)");
    pre->add_option("--manifest", manifest_path, "JSONL manifest (batch mode)");
    pre->add_option("--out-dir", out_dir, "output directory (batch mode)");

    auto* ext = app.add_subcommand("extract", "build templates (embedding + minutiae)");
    ext->add_option("-i,--input", input, "input image (single mode)");
    ext->add_option("-o,--output", output, "output template file (single mode)");
    ext->add_option("--subject", subject, "subject id for single mode");
    ext->add_option("--finger", finger, "finger position for single mode");
    ext->add_option("--impression", impression, "impression index for single mode");
    ext->add_option("--kind", kind, "capture kind: contact | contactless");
    ext->add_option("--manifest", manifest_path, "JSONL manifest (batch mode)");
    ext->add_option("--out-dir", out_dir, "template output directory (batch mode)");
    ext->add_option("--embeddings", embeddings_dir,
                    "directory of external <id>.c2em embeddings to import");

    auto* mat = app.add_subcommand("match", "score one probe template against one gallery "
                                            "template");
    mat->add_option("--probe", probe_path, "probe template file")->required();
    mat->add_option("--gallery", gallery_path, "gallery template file")->required();
    mat->add_option("-o,--output", output, "write the score JSON here instead of stdout");

    auto* ver = app.add_subcommand("verify", "run the verification protocol over a template set");
    ver->add_option("--templates", templates_dirs,
                    "template directory with index.json (repeatable)")
        ->required();
    ver->add_option("--report", report_path, "write the JSON report here instead of stdout");
    ver->add_option("--scores", scores_path, "also write per-pair scores CSV");

    auto* sea = app.add_subcommand("search", "two-stage identification search");
    sea->add_option("--templates", templates_dirs,
                    "template directory with index.json (repeatable)")
        ->required();
    sea->add_option("--report", report_path, "write the JSON report here instead of stdout");
    sea->add_option("--timing", timing_path, "write wall-clock timings JSON");

    auto* sev = app.add_subcommand("seg-eval", "IOU of the segmenter against ground-truth masks");
    sev->add_option("--manifest", manifest_path, "JSONL manifest with mask_path per entry")
        ->required();
    sev->add_option("--report", report_path, "write the JSON report here instead of stdout");

    auto* gra = app.add_subcommand("gradcheck", "finite-difference check of warp and loss "
                                                "gradients");
    gra->add_option("--trials", trials, "seeded configurations per suite")
        ->check(CLI::PositiveNumber);
    gra->add_option("--report", report_path, "write the JSON report here instead of stdout");

    for (auto* sub : {seg, pre, ext, mat, ver, sea, sev, gra}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        PipelineConfig cfg = config_path.empty() ? PipelineConfig{}
                                                 : PipelineConfig::from_json_file(config_path);
        if (opt_seed->count()) cfg.seed = seed;
        if (opt_jobs->count()) cfg.jobs = jobs;
        if (opt_strict->count()) cfg.strict = true;
        (void)opt_config;
        cfg.validate();

        if (seg->parsed()) return cmd_segment(cfg, input, output);
        if (pre->parsed()) {
            const bool single = !input.empty(), batch = !manifest_path.empty();
            if (single == batch)
                throw std::invalid_argument(
                    "preprocess: pass either --input/--output or --manifest/--out-dir");
            if (single) {
                if (output.empty())
                    throw std::invalid_argument("preprocess: --output required with --input");
                return cmd_preprocess_single(cfg, input, output, mask_path, warp_out);
            }
            if (out_dir.empty())
                throw std::invalid_argument("preprocess: --out-dir required with --manifest");
            return cmd_preprocess_batch(cfg, manifest_path, out_dir);
        }
        if (ext->parsed()) {
            const bool single = !input.empty(), batch = !manifest_path.empty();
            if (single == batch)
                throw std::invalid_argument(
                    "extract: pass either --input/--output or --manifest/--out-dir");
            if (single) {
                if (output.empty())
                    throw std::invalid_argument("extract: --output required with --input");
                return cmd_extract_single(cfg, input, output, subject, finger, impression, kind);
            }
            if (out_dir.empty())
                throw std::invalid_argument("extract: --out-dir required with --manifest");
            return cmd_extract_batch(cfg, manifest_path, out_dir, embeddings_dir);
        }
        if (mat->parsed()) return cmd_match(cfg, probe_path, gallery_path, output);
        if (ver->parsed()) return cmd_verify(cfg, templates_dirs, report_path, scores_path);
        if (sea->parsed()) return cmd_search(cfg, templates_dirs, report_path, timing_path);
        if (sev->parsed()) return cmd_seg_eval(cfg, manifest_path, report_path);
        if (gra->parsed()) return cmd_gradcheck(cfg, trials, report_path);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
