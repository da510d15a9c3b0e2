#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "c2cl/geometry.hpp"
#include "c2cl/imaging.hpp"
#include "c2cl/matcheval.hpp"
#include "c2cl/segmentation.hpp"

namespace c2cl {

struct ManifestEntry {
    std::string subject_id;
    std::string finger_position;
    int impression_index = 0;
    CaptureKind capture_kind = CaptureKind::contact;
    std::string image_path;
    std::string mask_path;  // optional ground-truth / precomputed mask
    std::string device;

    std::string id() const;
    std::string finger_key() const;  // subject + finger position
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
};

// JSON Lines, one object per line: {"subject_id","finger_position",
// "impression_index","capture_kind","image_path"[,"mask_path"][,"device"]}.
// (subject, finger, impression, kind) must be unique; with require_paths the
// image files must exist. Throws std::invalid_argument on violations.
DatasetManifest load_manifest_jsonl(const std::string& path, bool require_paths = true);

// CSV with header subject_id,finger_position,impression_index,capture_kind,
// image_path[,mask_path[,device]].
DatasetManifest load_manifest_csv(const std::string& path, bool require_paths = true);

std::vector<FingerImpressions> group_manifest(const DatasetManifest& manifest);
Protocol gen_protocol(const DatasetManifest& manifest, ProtocolRule rule,
                      int* skipped_fingers = nullptr);

struct PipelineConfig {
    double clahe_clip = 2.0;
    int clahe_tiles = 8;
    int canvas = 480;
    double target_ridge_period = 9.0;
    double crop_fraction = 0.6;
    FusionWeights fusion;
    ProtocolRule protocol_rule = ProtocolRule::full_cross;
    int search_k = 500;
    std::uint64_t seed = 0x5eed;
    int jobs = 1;
    bool strict = false;
    bool skip_preprocess = false;
    std::string warp_file;  // when set, warp parameters come from this JSON file

    void validate() const;
    static PipelineConfig from_json_file(const std::string& path);
    static PipelineConfig from_json_text(const std::string& text);
};

struct PreprocessResult {
    GrayImage image;   // canvas x canvas, fully preprocessed
    WarpParams warp;   // applied ridge-scale affine + TPS field
    Mask mask;         // segmentation in source-image coordinates
    PadRecord pad;
    bool low_confidence_mask = false;
};

// segment -> apply mask -> clahe -> invert -> resize_pad(canvas) -> ridge
// scale + TPS warp on the canvas. With cfg.skip_preprocess the input passes
// through untouched (contact impressions need no correction); an externally
// supplied mask bypasses segmentation. Throws std::runtime_error naming the
// failing stage; batch drivers turn that into per-item failure records.
PreprocessResult preprocess_one(const GrayImage& img, const PipelineConfig& cfg,
                                const Mask* external_mask = nullptr);

// Texture embedding + minutiae from a preprocessed image. Identity fields
// are left for the caller; extraction warnings surface as the embedding
// zero_information and minutiae no_ridge_structure flags.
Template extract_one(const GrayImage& img);

// Binary template file, magic "C2TP" version 1, little-endian.
void save_template(const Template& t, const std::string& path);
Template load_template(const std::string& path);
// {"templates": {id: relative file name}}, sorted by id.
void write_template_index(const std::vector<std::pair<std::string, std::string>>& id_to_file,
                          const std::string& path);
std::vector<std::pair<std::string, std::string>> read_template_index(const std::string& path);

struct ItemFailure {
    std::string id;
    std::string stage;
    std::string message;
};

// Maps fn over [0, n) on up to `jobs` worker threads. fn must be pure per
// index; exceptions are captured and returned as failures keyed by
// id_of(index). processed + failures.size() == n.
struct BatchOutcome {
    size_t processed = 0;
    std::vector<ItemFailure> failures;  // ordered by index
};
BatchOutcome parallel_batch(size_t n, int jobs, const std::function<void(size_t)>& fn,
                            const std::function<std::string(size_t)>& id_of);

struct ScoreRow {
    std::string probe_id;
    std::string gallery_id;
    bool genuine = false;
    double s_t = 0.0;
    double s_m = 0.0;
    double fused = 0.0;
};

struct VerificationReport {
    size_t genuine_count = 0;
    size_t imposter_count = 0;
    int skipped_fingers = 0;
    std::vector<std::string> missing_templates;
    // Metrics are filled only when both score lists are non-empty.
    bool insufficient = false;
    double eer = 0.0;
    TarAtFarResult tar_1e2, tar_1e3, tar_1e4;
    std::vector<RocPoint> roc_points;
    std::vector<ScoreRow> rows;  // populated when keep_rows

    std::string to_json() const;  // deterministic, no timing data
};

// Groups templates by finger, generates the protocol, scores every pair
// (texture, minutiae, fused), computes the metric block. Pairs whose
// templates are absent are counted in missing_templates instead of scored.
VerificationReport run_verification(const std::vector<Template>& templates,
                                    const PipelineConfig& cfg, bool keep_rows = false);

void write_scores_csv(const std::vector<ScoreRow>& rows, const std::string& path);

struct SearchReport {
    size_t probes = 0;
    size_t unmatchable = 0;  // probes with no enrolled mate, excluded from rates
    // Hit rate at rank 1, 10, 100, 500 over matchable probes.
    double rank1 = 0.0, rank10 = 0.0, rank100 = 0.0, rank500 = 0.0;
    double stage1_seconds = 0.0;  // wall clock, excluded from to_json()
    double stage2_seconds = 0.0;

    std::string to_json() const;         // deterministic part
    std::string timing_json() const;     // wall-clock part, separate file
};

// Two-stage search of every contactless template against the contact
// gallery drawn from the same template list.
SearchReport run_search(const std::vector<Template>& templates, const PipelineConfig& cfg);

}  // namespace c2cl
