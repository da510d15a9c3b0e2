#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2cl/minutiae.hpp"
#include "c2cl/representation.hpp"

namespace c2cl {

enum class CaptureKind : std::uint8_t { contact = 0, contactless = 1 };

struct Template {
    std::string subject_id;
    std::string finger_position;  // e.g. R-index
    int impression_index = 0;
    CaptureKind capture_kind = CaptureKind::contact;
    Embedding embedding;
    MinutiaeSet minutiae;
    std::string device;

    std::string id() const;  // subject/finger/impression/kind, unique per manifest rules
    void validate() const;
};

struct ScoreSet {
    std::vector<double> genuine;
    std::vector<double> imposter;

    void validate() const;  // all scores in [0,1], both lists non-empty
};

// Comparison pairs as indices into the probe/gallery id tables. Probes are
// contactless, gallery entries contact.
struct Protocol {
    std::vector<std::string> probe_ids;
    std::vector<std::string> gallery_ids;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> genuine_pairs;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> imposter_pairs;
};

enum class ProtocolRule { full_cross, first_impression };

// One finger's impressions, already split by capture kind.
struct FingerImpressions {
    std::string finger_key;  // subject + finger position
    std::vector<std::string> probe_ids;    // contactless
    std::vector<std::string> gallery_ids;  // contact
};

// All-pairs genuine per finger. Imposters: full_cross pairs every probe of a
// finger with every gallery impression of every other finger;
// first_impression pairs only the first probe with the first gallery
// impression of every other finger. Fingers missing either kind are skipped
// (reported via the skipped counter).
Protocol gen_protocol(const std::vector<FingerImpressions>& fingers, ProtocolRule rule,
                      int* skipped_fingers = nullptr);

// w_t * s_t + w_m * s_m. Scores must be in [0,1], weights nonnegative.
double fuse_scores(double s_t, double s_m, double w_t = 0.5, double w_m = 0.5);

struct RocPoint {
    double threshold;
    double far;
    double tar;
};

// One point per distinct score, acceptance convention score >= threshold,
// ordered by decreasing threshold (both rates non-decreasing along the
// curve).
std::vector<RocPoint> roc(const ScoreSet& scores);

// FAR = FRR crossing, linearly interpolated between the bracketing
// operating points; an exact tie returns that rate directly.
double eer(const ScoreSet& scores);

struct TarAtFarResult {
    double tar = 0.0;
    double achieved_far = 0.0;
    // Target FAR below 1/|imposter|: the reported point is the achievable
    // floor (zero accepted imposters), not the requested rate.
    bool floor = false;
};

TarAtFarResult tar_at_far(const ScoreSet& scores, double far = 1e-4);

struct RocTestResult {
    double p_value = 1.0;
    double auc_a = 0.0;
    double auc_b = 0.0;
    bool exact = false;       // exact paired sign-flip enumeration was used
    bool degenerate = false;  // no variance in the AUC difference
};

// Two-sided test of AUC(a) = AUC(b) from paired score sets (same underlying
// trials, so |genuine| and |imposter| must match). Small sets
// (|genuine|, |imposter| <= 8) are tested by exact enumeration of all
// per-trial swaps; larger sets use the asymptotic normal approximation with
// paired-covariance correction.
RocTestResult mann_whitney_roc_test(const ScoreSet& a, const ScoreSet& b);

enum class FuseRule { mean, sum };

// Mean keeps [0,1]; sum is exposed for parity with additive conventions.
double multi_finger_fuse(const std::vector<double>& per_finger_scores,
                         FuseRule rule = FuseRule::mean);

enum class Scorer { texture, minutiae, fused };

struct SearchHit {
    int gallery_index;
    double score;
};

struct FusionWeights {
    double w_t = 0.5;
    double w_m = 0.5;
};

// Full gallery ranking, descending score, ties broken by insertion index.
std::vector<SearchHit> rank_n_search(const Template& probe, const std::vector<Template>& gallery,
                                     Scorer scorer, FusionWeights weights = {},
                                     std::uint64_t seed = 0x5eed);

// Stage 1 ranks by texture similarity; stage 2 re-scores the top k by score
// fusion and re-sorts that block (ties again by insertion index); the tail
// keeps its stage-1 order.
std::vector<SearchHit> two_stage_search(const Template& probe,
                                        const std::vector<Template>& gallery, int k = 500,
                                        FusionWeights weights = {}, std::uint64_t seed = 0x5eed);

}  // namespace c2cl
