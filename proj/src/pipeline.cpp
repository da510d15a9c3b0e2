#include "c2cl/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace c2cl {

namespace {

CaptureKind parse_kind(const std::string& s) {
    if (s == "contact") return CaptureKind::contact;
    if (s == "contactless") return CaptureKind::contactless;
    throw std::invalid_argument("manifest: capture_kind must be contact or contactless, got " + s);
}

void check_manifest(const DatasetManifest& m, bool require_paths) {
    std::set<std::string> keys;
    for (const auto& e : m.entries) {
        if (e.subject_id.empty() || e.finger_position.empty() || e.image_path.empty())
            throw std::invalid_argument("manifest: subject_id, finger_position, image_path required");
        if (!keys.insert(e.id()).second)
            throw std::invalid_argument("manifest: duplicate entry " + e.id());
        if (require_paths) {
            if (!std::filesystem::exists(e.image_path))
                throw std::invalid_argument("manifest: missing image " + e.image_path);
            if (!e.mask_path.empty() && !std::filesystem::exists(e.mask_path))
                throw std::invalid_argument("manifest: missing mask " + e.mask_path);
        }
    }
}

}  // namespace

std::string ManifestEntry::id() const {
    return subject_id + "/" + finger_position + "/" + std::to_string(impression_index) + "/" +
           (capture_kind == CaptureKind::contact ? "contact" : "contactless");
}

std::string ManifestEntry::finger_key() const { return subject_id + "/" + finger_position; }

DatasetManifest load_manifest_jsonl(const std::string& path, bool require_paths) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            ManifestEntry e;
            e.subject_id = j.at("subject_id").get<std::string>();
            e.finger_position = j.at("finger_position").get<std::string>();
            e.impression_index = j.at("impression_index").get<int>();
            e.capture_kind = parse_kind(j.at("capture_kind").get<std::string>());
            e.image_path = j.at("image_path").get<std::string>();
            if (j.contains("mask_path")) e.mask_path = j["mask_path"].get<std::string>();
            if (j.contains("device")) e.device = j["device"].get<std::string>();
            m.entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw std::invalid_argument("manifest " + path + " line " + std::to_string(lineno) +
                                        ": " + ex.what());
        }
    }
    check_manifest(m, require_paths);
    return m;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

DatasetManifest load_manifest_csv(const std::string& path, bool require_paths) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw std::invalid_argument("manifest: empty CSV " + path);
    const auto cols = split_csv_line(header);
    const std::vector<std::string> expected = {"subject_id", "finger_position", "impression_index",
                                               "capture_kind", "image_path"};
    if (cols.size() < expected.size() ||
        !std::equal(expected.begin(), expected.end(), cols.begin()))
        throw std::invalid_argument("manifest: unexpected CSV header in " + path);

    DatasetManifest m;
    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = split_csv_line(line);
        if (f.size() < 5)
            throw std::invalid_argument("manifest " + path + " line " + std::to_string(lineno) +
                                        ": expected at least 5 fields");
        ManifestEntry e;
        e.subject_id = f[0];
        e.finger_position = f[1];
        try {
            e.impression_index = std::stoi(f[2]);
        } catch (const std::exception&) {
            throw std::invalid_argument("manifest " + path + " line " + std::to_string(lineno) +
                                        ": bad impression_index");
        }
        e.capture_kind = parse_kind(f[3]);
        e.image_path = f[4];
        if (f.size() > 5) e.mask_path = f[5];
        if (f.size() > 6) e.device = f[6];
        m.entries.push_back(std::move(e));
    }
    check_manifest(m, require_paths);
    return m;
}

std::vector<FingerImpressions> group_manifest(const DatasetManifest& manifest) {
    std::map<std::string, FingerImpressions> by_finger;
    for (const auto& e : manifest.entries) {
        auto& f = by_finger[e.finger_key()];
        f.finger_key = e.finger_key();
        if (e.capture_kind == CaptureKind::contactless)
            f.probe_ids.push_back(e.id());
        else
            f.gallery_ids.push_back(e.id());
    }
    std::vector<FingerImpressions> out;
    out.reserve(by_finger.size());
    for (auto& [key, f] : by_finger) out.push_back(std::move(f));
    return out;
}

Protocol gen_protocol(const DatasetManifest& manifest, ProtocolRule rule, int* skipped_fingers) {
    return gen_protocol(group_manifest(manifest), rule, skipped_fingers);
}

void PipelineConfig::validate() const {
    if (!(clahe_clip > 0.0)) throw std::invalid_argument("config: clahe_clip must be > 0");
    if (clahe_tiles < 1) throw std::invalid_argument("config: clahe_tiles must be >= 1");
    if (canvas < 32) throw std::invalid_argument("config: canvas must be >= 32");
    if (!(target_ridge_period >= 3.0 && target_ridge_period <= 25.0))
        throw std::invalid_argument("config: target_ridge_period outside [3,25]");
    if (!(crop_fraction > 0.0 && crop_fraction <= 1.0))
        throw std::invalid_argument("config: crop_fraction outside (0,1]");
    if (fusion.w_t < 0.0 || fusion.w_m < 0.0)
        throw std::invalid_argument("config: fusion weights must be >= 0");
    if (search_k < 1) throw std::invalid_argument("config: search_k must be >= 1");
    if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
}

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
    PipelineConfig cfg;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        if (j.contains("clahe_clip")) cfg.clahe_clip = j["clahe_clip"].get<double>();
        if (j.contains("clahe_tiles")) cfg.clahe_tiles = j["clahe_tiles"].get<int>();
        if (j.contains("canvas")) cfg.canvas = j["canvas"].get<int>();
        if (j.contains("target_ridge_period"))
            cfg.target_ridge_period = j["target_ridge_period"].get<double>();
        if (j.contains("crop_fraction")) cfg.crop_fraction = j["crop_fraction"].get<double>();
        if (j.contains("w_t")) cfg.fusion.w_t = j["w_t"].get<double>();
        if (j.contains("w_m")) cfg.fusion.w_m = j["w_m"].get<double>();
        if (j.contains("protocol")) {
            const auto rule = j["protocol"].get<std::string>();
            if (rule == "full-cross")
                cfg.protocol_rule = ProtocolRule::full_cross;
            else if (rule == "first-impression")
                cfg.protocol_rule = ProtocolRule::first_impression;
            else
                throw std::invalid_argument("config: unknown protocol rule " + rule);
        }
        if (j.contains("search_k")) cfg.search_k = j["search_k"].get<int>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
        if (j.contains("skip_preprocess")) cfg.skip_preprocess = j["skip_preprocess"].get<bool>();
        if (j.contains("warp_file")) cfg.warp_file = j["warp_file"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

PreprocessResult preprocess_one(const GrayImage& img, const PipelineConfig& cfg,
                                const Mask* external_mask) {
    cfg.validate();
    img.validate();

    if (cfg.skip_preprocess) {
        PreprocessResult r{img,
                           WarpParams{AffineParams{}, TPSField::identity(4, img.width, img.height)},
                           Mask(img.width, img.height, 1),
                           PadRecord{1.0, 0, 0, 0, 0, img.width, img.height},
                           false};
        return r;
    }

    Mask mask(1, 1);
    bool low_confidence = false;
    if (external_mask) {
        if (external_mask->width != img.width || external_mask->height != img.height)
            throw std::runtime_error("segmentation: external mask dimensions differ from image");
        mask = *external_mask;
    } else {
        const auto seg = segment_distal(img, cfg.crop_fraction);
        if (!seg) throw std::runtime_error("segmentation: no plausible finger region found");
        mask = seg->mask;
        low_confidence = seg->low_confidence;
    }

    const GrayImage masked = apply_mask(img, mask);
    const GrayImage enhanced = invert(clahe(masked, cfg.clahe_clip, cfg.clahe_tiles, cfg.clahe_tiles));
    auto [padded, pad] = resize_pad(enhanced, cfg.canvas);

    WarpParams warp;
    if (!cfg.warp_file.empty()) {
        std::ifstream in(cfg.warp_file);
        if (!in) throw std::runtime_error("warp: cannot open " + cfg.warp_file);
        std::ostringstream ss;
        ss << in.rdbuf();
        warp = WarpParams::from_json(ss.str());
        if (warp.tps.canvas_w != cfg.canvas || warp.tps.canvas_h != cfg.canvas)
            throw std::runtime_error("warp: parameter canvas does not match configured canvas");
    } else {
        double est;
        try {
            est = estimate_ridge_period(padded);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("ridge-period: ") + e.what());
        }
        // Backward sampling factor: > 1 shrinks content, bringing a coarse
        // ridge period down to the target.
        warp.affine.s = est / cfg.target_ridge_period;
        warp.tps = TPSField::identity(4, cfg.canvas, cfg.canvas);
    }

    PreprocessResult r{warp_image(padded, warp.affine, warp.tps), std::move(warp), std::move(mask),
                       pad, low_confidence};
    return r;
}

Template extract_one(const GrayImage& img) {
    Template t;
    t.embedding = extract_texture_embedding(img);
    t.minutiae = extract_minutiae(img);
    return t;
}

// ---------------------------------------------------------------------------
// Template store
// ---------------------------------------------------------------------------

namespace {

constexpr char kTemplateMagic[4] = {'C', '2', 'T', 'P'};
constexpr std::uint8_t kTemplateVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}
void write_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
double read_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string read_str(std::istream& in) {
    const std::uint32_t n = read_u32(in);
    if (n > 1 << 20) throw std::invalid_argument("template: implausible string length");
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}

}  // namespace

void save_template(const Template& t, const std::string& path) {
    t.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(kTemplateMagic, 4);
    out.put(static_cast<char>(kTemplateVersion));
    write_str(out, t.subject_id);
    write_str(out, t.finger_position);
    write_str(out, t.device);
    write_u32(out, static_cast<std::uint32_t>(t.impression_index));
    out.put(static_cast<char>(t.capture_kind));

    write_u32(out, static_cast<std::uint32_t>(t.embedding.values.size()));
    out.put(t.embedding.normalized ? 1 : 0);
    out.put(t.embedding.zero_information ? 1 : 0);
    for (double v : t.embedding.values) write_f64(out, v);

    write_u32(out, static_cast<std::uint32_t>(t.minutiae.width));
    write_u32(out, static_cast<std::uint32_t>(t.minutiae.height));
    out.put(t.minutiae.no_ridge_structure ? 1 : 0);
    write_u32(out, static_cast<std::uint32_t>(t.minutiae.minutiae.size()));
    for (const auto& m : t.minutiae.minutiae) {
        write_f64(out, m.x);
        write_f64(out, m.y);
        write_f64(out, m.theta);
        out.put(static_cast<char>(m.kind));
        write_f64(out, m.quality);
    }
    if (!out) throw std::runtime_error("template write failed: " + path);
}

Template load_template(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kTemplateMagic, 4) != 0)
        throw std::invalid_argument("template: bad magic in " + path);
    if (in.get() != kTemplateVersion)
        throw std::invalid_argument("template: unsupported version in " + path);

    Template t;
    t.subject_id = read_str(in);
    t.finger_position = read_str(in);
    t.device = read_str(in);
    t.impression_index = static_cast<int>(read_u32(in));
    t.capture_kind = static_cast<CaptureKind>(in.get());

    const std::uint32_t dim = read_u32(in);
    if (dim > 1 << 20) throw std::invalid_argument("template: implausible embedding size");
    t.embedding.normalized = in.get() != 0;
    t.embedding.zero_information = in.get() != 0;
    t.embedding.values.resize(dim);
    for (auto& v : t.embedding.values) v = read_f64(in);

    t.minutiae.width = static_cast<int>(read_u32(in));
    t.minutiae.height = static_cast<int>(read_u32(in));
    t.minutiae.no_ridge_structure = in.get() != 0;
    const std::uint32_t count = read_u32(in);
    if (count > 1 << 20) throw std::invalid_argument("template: implausible minutiae count");
    t.minutiae.minutiae.resize(count);
    for (auto& m : t.minutiae.minutiae) {
        m.x = read_f64(in);
        m.y = read_f64(in);
        m.theta = read_f64(in);
        m.kind = static_cast<MinutiaKind>(in.get());
        m.quality = read_f64(in);
    }
    if (!in) throw std::invalid_argument("template: truncated file " + path);
    t.validate();
    return t;
}

void write_template_index(const std::vector<std::pair<std::string, std::string>>& id_to_file,
                          const std::string& path) {
    nlohmann::json j;
    auto& map = j["templates"] = nlohmann::json::object();
    for (const auto& [id, file] : id_to_file) {
        if (map.contains(id)) throw std::invalid_argument("template index: duplicate id " + id);
        map[id] = file;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

std::vector<std::pair<std::string, std::string>> read_template_index(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::pair<std::string, std::string>> out;
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        for (const auto& [id, file] : j.at("templates").items())
            out.emplace_back(id, file.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("template index: malformed " + path + ": " + e.what());
    }
    return out;
}

BatchOutcome parallel_batch(size_t n, int jobs, const std::function<void(size_t)>& fn,
                            const std::function<std::string(size_t)>& id_of) {
    if (jobs < 1) throw std::invalid_argument("parallel_batch: jobs must be >= 1");
    std::atomic<size_t> next{0};
    std::mutex mu;
    std::vector<std::pair<size_t, ItemFailure>> failures;

    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                failures.push_back({i, {id_of(i), "", e.what()}});
            }
        }
    };

    const int nthreads = static_cast<int>(std::min<size_t>(static_cast<size_t>(jobs), std::max<size_t>(n, 1)));
    std::vector<std::thread> threads;
    threads.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    std::sort(failures.begin(), failures.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    BatchOutcome out;
    out.processed = n - failures.size();
    for (auto& [i, f] : failures) out.failures.push_back(std::move(f));
    return out;
}

// ---------------------------------------------------------------------------
// Verification and search
// ---------------------------------------------------------------------------

namespace {

nlohmann::json tar_json(const TarAtFarResult& r) {
    return {{"tar", r.tar}, {"achieved_far", r.achieved_far}, {"floor", r.floor}};
}

}  // namespace

std::string VerificationReport::to_json() const {
    nlohmann::json j;
    j["counts"] = {{"genuine", genuine_count},
                   {"imposter", imposter_count},
                   {"skipped_fingers", skipped_fingers},
                   {"missing_templates", missing_templates.size()}};
    j["insufficient"] = insufficient;
    if (!insufficient) {
        j["eer"] = eer;
        j["tar_at_far"] = {{"1e-2", tar_json(tar_1e2)},
                           {"1e-3", tar_json(tar_1e3)},
                           {"1e-4", tar_json(tar_1e4)}};
        auto& pts = j["roc_points"] = nlohmann::json::array();
        // Large curves are subsampled evenly to keep reports reviewable.
        const size_t max_pts = 2000;
        const size_t stride = roc_points.size() > max_pts ? roc_points.size() / max_pts + 1 : 1;
        for (size_t i = 0; i < roc_points.size(); i += stride)
            pts.push_back({roc_points[i].threshold, roc_points[i].far, roc_points[i].tar});
    }
    return j.dump(2);
}

VerificationReport run_verification(const std::vector<Template>& templates,
                                    const PipelineConfig& cfg, bool keep_rows) {
    cfg.validate();
    std::map<std::string, const Template*> by_id;
    std::map<std::string, FingerImpressions> fingers;
    for (const auto& t : templates) {
        const std::string id = t.id();
        if (!by_id.emplace(id, &t).second)
            throw std::invalid_argument("run_verification: duplicate template " + id);
        auto& f = fingers[t.subject_id + "/" + t.finger_position];
        f.finger_key = t.subject_id + "/" + t.finger_position;
        if (t.capture_kind == CaptureKind::contactless)
            f.probe_ids.push_back(id);
        else
            f.gallery_ids.push_back(id);
    }
    std::vector<FingerImpressions> grouped;
    grouped.reserve(fingers.size());
    for (auto& [key, f] : fingers) grouped.push_back(std::move(f));

    VerificationReport rep;
    const Protocol protocol = gen_protocol(grouped, cfg.protocol_rule, &rep.skipped_fingers);
    rep.genuine_count = protocol.genuine_pairs.size();
    rep.imposter_count = protocol.imposter_pairs.size();

    struct PairRef {
        std::uint32_t probe, gallery;
        bool genuine;
    };
    std::vector<PairRef> pairs;
    pairs.reserve(protocol.genuine_pairs.size() + protocol.imposter_pairs.size());
    for (auto [p, g] : protocol.genuine_pairs) pairs.push_back({p, g, true});
    for (auto [p, g] : protocol.imposter_pairs) pairs.push_back({p, g, false});

    std::vector<double> fused_scores(pairs.size(), -1.0);
    std::vector<std::pair<double, double>> raw_scores(pairs.size());
    std::set<std::string> missing;
    std::mutex missing_mu;

    parallel_batch(
        pairs.size(), cfg.jobs,
        [&](size_t i) {
            const auto& pr = pairs[i];
            const auto pit = by_id.find(protocol.probe_ids[pr.probe]);
            const auto git = by_id.find(protocol.gallery_ids[pr.gallery]);
            if (pit == by_id.end() || git == by_id.end()) {
                std::lock_guard<std::mutex> lock(missing_mu);
                if (pit == by_id.end()) missing.insert(protocol.probe_ids[pr.probe]);
                if (git == by_id.end()) missing.insert(protocol.gallery_ids[pr.gallery]);
                return;
            }
            const double s_t = texture_similarity(pit->second->embedding, git->second->embedding);
            const double s_m =
                match_minutiae(pit->second->minutiae, git->second->minutiae, cfg.seed).score;
            raw_scores[i] = {s_t, s_m};
            fused_scores[i] = fuse_scores(s_t, s_m, cfg.fusion.w_t, cfg.fusion.w_m);
        },
        [&](size_t i) { return protocol.probe_ids[pairs[i].probe]; });

    rep.missing_templates.assign(missing.begin(), missing.end());

    ScoreSet scores;
    for (size_t i = 0; i < pairs.size(); ++i) {
        if (fused_scores[i] < 0.0) continue;  // missing template
        (pairs[i].genuine ? scores.genuine : scores.imposter).push_back(fused_scores[i]);
        if (keep_rows)
            rep.rows.push_back({protocol.probe_ids[pairs[i].probe],
                                protocol.gallery_ids[pairs[i].gallery], pairs[i].genuine,
                                raw_scores[i].first, raw_scores[i].second, fused_scores[i]});
    }

    if (scores.genuine.empty() || scores.imposter.empty()) {
        rep.insufficient = true;
        return rep;
    }
    rep.eer = eer(scores);
    rep.tar_1e2 = tar_at_far(scores, 1e-2);
    rep.tar_1e3 = tar_at_far(scores, 1e-3);
    rep.tar_1e4 = tar_at_far(scores, 1e-4);
    rep.roc_points = roc(scores);
    return rep;
}

void write_scores_csv(const std::vector<ScoreRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "probe_id,gallery_id,label,s_t,s_m,fused\n";
    out.precision(9);
    out << std::fixed;
    for (const auto& r : rows)
        out << r.probe_id << "," << r.gallery_id << "," << (r.genuine ? "genuine" : "imposter")
            << "," << r.s_t << "," << r.s_m << "," << r.fused << "\n";
    if (!out) throw std::runtime_error("score CSV write failed: " + path);
}

std::string SearchReport::to_json() const {
    nlohmann::json j;
    j["probes"] = probes;
    j["unmatchable"] = unmatchable;
    j["rank_hit_rates"] = {{"1", rank1}, {"10", rank10}, {"100", rank100}, {"500", rank500}};
    return j.dump(2);
}

std::string SearchReport::timing_json() const {
    nlohmann::json j;
    j["stage1_seconds"] = stage1_seconds;
    j["stage2_seconds"] = stage2_seconds;
    return j.dump(2);
}

SearchReport run_search(const std::vector<Template>& templates, const PipelineConfig& cfg) {
    cfg.validate();
    std::vector<const Template*> probes;
    std::vector<Template> gallery;
    for (const auto& t : templates) {
        if (t.capture_kind == CaptureKind::contactless)
            probes.push_back(&t);
        else
            gallery.push_back(t);
    }
    if (gallery.empty()) throw std::invalid_argument("run_search: empty gallery");

    SearchReport rep;
    rep.probes = probes.size();
    const int k = std::min<int>(cfg.search_k, static_cast<int>(gallery.size()));

    size_t matchable = 0, hit1 = 0, hit10 = 0, hit100 = 0, hit500 = 0;
    using clock = std::chrono::steady_clock;

    for (const Template* probe : probes) {
        bool has_mate = false;
        for (const auto& g : gallery)
            if (g.subject_id == probe->subject_id && g.finger_position == probe->finger_position) {
                has_mate = true;
                break;
            }
        if (!has_mate) {
            ++rep.unmatchable;
            continue;
        }
        ++matchable;

        const auto t0 = clock::now();
        const auto stage1 = rank_n_search(*probe, gallery, Scorer::texture, {}, cfg.seed);
        const auto t1 = clock::now();
        std::vector<SearchHit> head(stage1.begin(), stage1.begin() + k);
        for (auto& hit : head) {
            const double s_m =
                match_minutiae(probe->minutiae, gallery[hit.gallery_index].minutiae, cfg.seed)
                    .score;
            hit.score = fuse_scores(hit.score, s_m, cfg.fusion.w_t, cfg.fusion.w_m);
        }
        std::sort(head.begin(), head.end(), [](const SearchHit& a, const SearchHit& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.gallery_index < b.gallery_index;
        });
        head.insert(head.end(), stage1.begin() + k, stage1.end());
        const auto t2 = clock::now();
        rep.stage1_seconds += std::chrono::duration<double>(t1 - t0).count();
        rep.stage2_seconds += std::chrono::duration<double>(t2 - t1).count();

        size_t rank = head.size() + 1;
        for (size_t r = 0; r < head.size(); ++r) {
            const auto& g = gallery[head[r].gallery_index];
            if (g.subject_id == probe->subject_id && g.finger_position == probe->finger_position) {
                rank = r + 1;
                break;
            }
        }
        if (rank <= 1) ++hit1;
        if (rank <= 10) ++hit10;
        if (rank <= 100) ++hit100;
        if (rank <= 500) ++hit500;
    }

    if (matchable > 0) {
        rep.rank1 = static_cast<double>(hit1) / matchable;
        rep.rank10 = static_cast<double>(hit10) / matchable;
        rep.rank100 = static_cast<double>(hit100) / matchable;
        rep.rank500 = static_cast<double>(hit500) / matchable;
    }
    return rep;
}

}  // namespace c2cl
