#include "c2cl/matcheval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace c2cl {

std::string Template::id() const {
    return subject_id + "/" + finger_position + "/" + std::to_string(impression_index) + "/" +
           (capture_kind == CaptureKind::contact ? "contact" : "contactless");
}

void Template::validate() const {
    if (subject_id.empty() || finger_position.empty())
        throw std::invalid_argument("Template: subject and finger position required");
    embedding.validate();
    if (!embedding.normalized) throw std::invalid_argument("Template: embedding not normalized");
    minutiae.validate();
}

void ScoreSet::validate() const {
    if (genuine.empty() || imposter.empty())
        throw std::invalid_argument("ScoreSet: both score lists must be non-empty");
    for (const auto* v : {&genuine, &imposter})
        for (double s : *v)
            if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("ScoreSet: score outside [0,1]");
}

Protocol gen_protocol(const std::vector<FingerImpressions>& fingers, ProtocolRule rule,
                      int* skipped_fingers) {
    Protocol p;
    struct Span {
        std::uint32_t probe_start, probe_n, gallery_start, gallery_n;
    };
    std::vector<Span> spans;
    int skipped = 0;
    for (const auto& f : fingers) {
        if (f.probe_ids.empty() || f.gallery_ids.empty()) {
            ++skipped;
            continue;
        }
        Span s;
        s.probe_start = static_cast<std::uint32_t>(p.probe_ids.size());
        s.probe_n = static_cast<std::uint32_t>(f.probe_ids.size());
        s.gallery_start = static_cast<std::uint32_t>(p.gallery_ids.size());
        s.gallery_n = static_cast<std::uint32_t>(f.gallery_ids.size());
        spans.push_back(s);
        p.probe_ids.insert(p.probe_ids.end(), f.probe_ids.begin(), f.probe_ids.end());
        p.gallery_ids.insert(p.gallery_ids.end(), f.gallery_ids.begin(), f.gallery_ids.end());
    }
    if (skipped_fingers) *skipped_fingers = skipped;

    for (const auto& s : spans)
        for (std::uint32_t i = 0; i < s.probe_n; ++i)
            for (std::uint32_t j = 0; j < s.gallery_n; ++j)
                p.genuine_pairs.emplace_back(s.probe_start + i, s.gallery_start + j);

    for (size_t a = 0; a < spans.size(); ++a)
        for (size_t b = 0; b < spans.size(); ++b) {
            if (a == b) continue;
            if (rule == ProtocolRule::full_cross) {
                for (std::uint32_t i = 0; i < spans[a].probe_n; ++i)
                    for (std::uint32_t j = 0; j < spans[b].gallery_n; ++j)
                        p.imposter_pairs.emplace_back(spans[a].probe_start + i,
                                                      spans[b].gallery_start + j);
            } else {
                p.imposter_pairs.emplace_back(spans[a].probe_start, spans[b].gallery_start);
            }
        }
    return p;
}

double fuse_scores(double s_t, double s_m, double w_t, double w_m) {
    if (!(s_t >= 0.0 && s_t <= 1.0) || !(s_m >= 0.0 && s_m <= 1.0))
        throw std::invalid_argument("fuse_scores: scores must be in [0,1]");
    if (w_t < 0.0 || w_m < 0.0) throw std::invalid_argument("fuse_scores: weights must be >= 0");
    return w_t * s_t + w_m * s_m;
}

namespace {

// Count of elements in sorted-ascending v that are >= t.
size_t count_geq(const std::vector<double>& v, double t) {
    return v.end() - std::lower_bound(v.begin(), v.end(), t);
}

}  // namespace

std::vector<RocPoint> roc(const ScoreSet& scores) {
    scores.validate();
    std::vector<double> gen = scores.genuine, imp = scores.imposter;
    std::sort(gen.begin(), gen.end());
    std::sort(imp.begin(), imp.end());

    std::vector<double> thresholds;
    thresholds.reserve(gen.size() + imp.size());
    thresholds.insert(thresholds.end(), gen.begin(), gen.end());
    thresholds.insert(thresholds.end(), imp.begin(), imp.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::vector<RocPoint> curve;
    curve.reserve(thresholds.size());
    for (double t : thresholds) {
        RocPoint pt;
        pt.threshold = t;
        pt.far = static_cast<double>(count_geq(imp, t)) / imp.size();
        pt.tar = static_cast<double>(count_geq(gen, t)) / gen.size();
        curve.push_back(pt);
    }
    return curve;
}

double eer(const ScoreSet& scores) {
    scores.validate();
    std::vector<double> gen = scores.genuine, imp = scores.imposter;
    std::sort(gen.begin(), gen.end());
    std::sort(imp.begin(), imp.end());

    std::vector<double> thresholds = gen;
    thresholds.insert(thresholds.end(), imp.begin(), imp.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    // Sweep from the strictest operating point (everything rejected) down.
    double prev_far = 0.0, prev_frr = 1.0;
    for (double t : thresholds) {
        const double far = static_cast<double>(count_geq(imp, t)) / imp.size();
        const double frr = static_cast<double>(gen.size() - count_geq(gen, t)) / gen.size();
        if (far == frr) return far;
        if (far > frr) {
            // Crossing lies between the previous point and this one.
            const double denom = (far - prev_far) - (frr - prev_frr);
            const double alpha = (prev_frr - prev_far) / denom;
            return prev_far + alpha * (far - prev_far);
        }
        prev_far = far;
        prev_frr = frr;
    }
    // Below the smallest score everything is accepted: FAR 1, FRR 0.
    const double denom = (1.0 - prev_far) - (0.0 - prev_frr);
    const double alpha = (prev_frr - prev_far) / denom;
    return prev_far + alpha * (1.0 - prev_far);
}

TarAtFarResult tar_at_far(const ScoreSet& scores, double far) {
    scores.validate();
    if (!(far > 0.0 && far < 1.0)) throw std::invalid_argument("tar_at_far: far must be in (0,1)");
    std::vector<double> imp = scores.imposter;
    std::sort(imp.begin(), imp.end(), std::greater<>());
    const size_t n_i = imp.size();
    const size_t k_max = static_cast<size_t>(std::floor(far * static_cast<double>(n_i) + 1e-12));

    TarAtFarResult r;
    r.floor = far < 1.0 / static_cast<double>(n_i);
    if (k_max >= n_i) {
        r.tar = 1.0;
        r.achieved_far = 1.0;
        return r;
    }
    // Threshold sits just above the (k_max+1)-th largest imposter score; at
    // that point every strictly larger score is accepted.
    const double cutoff = imp[k_max];
    size_t accepted_imp = 0;
    while (accepted_imp < n_i && imp[accepted_imp] > cutoff) ++accepted_imp;
    size_t accepted_gen = 0;
    for (double g : scores.genuine)
        if (g > cutoff) ++accepted_gen;
    r.tar = static_cast<double>(accepted_gen) / scores.genuine.size();
    r.achieved_far = static_cast<double>(accepted_imp) / n_i;
    return r;
}

namespace {

double auc_of(const std::vector<double>& gen, const std::vector<double>& imp) {
    double s = 0.0;
    for (double g : gen)
        for (double i : imp) s += g > i ? 1.0 : (g == i ? 0.5 : 0.0);
    return s / (static_cast<double>(gen.size()) * imp.size());
}

// Per-genuine and per-imposter placement components of the AUC:
// v10[i] = P(g_i > imposter) + 0.5 P(tie), v01[j] symmetric.
void placement_components(const std::vector<double>& gen, const std::vector<double>& imp,
                          std::vector<double>& v10, std::vector<double>& v01) {
    std::vector<double> imp_sorted = imp, gen_sorted = gen;
    std::sort(imp_sorted.begin(), imp_sorted.end());
    std::sort(gen_sorted.begin(), gen_sorted.end());
    v10.resize(gen.size());
    for (size_t i = 0; i < gen.size(); ++i) {
        const auto lo = std::lower_bound(imp_sorted.begin(), imp_sorted.end(), gen[i]);
        const auto hi = std::upper_bound(imp_sorted.begin(), imp_sorted.end(), gen[i]);
        const double below = static_cast<double>(lo - imp_sorted.begin());
        const double ties = static_cast<double>(hi - lo);
        v10[i] = (below + 0.5 * ties) / imp_sorted.size();
    }
    v01.resize(imp.size());
    for (size_t j = 0; j < imp.size(); ++j) {
        const auto lo = std::lower_bound(gen_sorted.begin(), gen_sorted.end(), imp[j]);
        const auto hi = std::upper_bound(gen_sorted.begin(), gen_sorted.end(), imp[j]);
        const double above = static_cast<double>(gen_sorted.end() - hi);
        const double ties = static_cast<double>(hi - lo);
        v01[j] = (above + 0.5 * ties) / gen_sorted.size();
    }
}

double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / (v.size() - 1);
}

}  // namespace

RocTestResult mann_whitney_roc_test(const ScoreSet& a, const ScoreSet& b) {
    a.validate();
    b.validate();
    if (a.genuine.size() != b.genuine.size() || a.imposter.size() != b.imposter.size())
        throw std::invalid_argument("mann_whitney_roc_test: paired design requires equal sizes");
    const size_t n_g = a.genuine.size(), n_i = a.imposter.size();

    RocTestResult r;
    r.auc_a = auc_of(a.genuine, a.imposter);
    r.auc_b = auc_of(b.genuine, b.imposter);
    const double observed = std::abs(r.auc_a - r.auc_b);

    if (n_g <= 8 && n_i <= 8) {
        // Exact paired sign-flip: every subset of trials may swap a <-> b
        // under the null of identical curves.
        r.exact = true;
        const unsigned total_bits = static_cast<unsigned>(n_g + n_i);
        const std::uint64_t masks = 1ull << total_bits;
        std::vector<double> ga(n_g), gb(n_g), ia(n_i), ib(n_i);
        std::uint64_t count = 0;
        for (std::uint64_t mask = 0; mask < masks; ++mask) {
            for (size_t i = 0; i < n_g; ++i) {
                const bool swap = mask >> i & 1;
                ga[i] = swap ? b.genuine[i] : a.genuine[i];
                gb[i] = swap ? a.genuine[i] : b.genuine[i];
            }
            for (size_t j = 0; j < n_i; ++j) {
                const bool swap = mask >> (n_g + j) & 1;
                ia[j] = swap ? b.imposter[j] : a.imposter[j];
                ib[j] = swap ? a.imposter[j] : b.imposter[j];
            }
            if (std::abs(auc_of(ga, ia) - auc_of(gb, ib)) >= observed - 1e-12) ++count;
        }
        r.p_value = static_cast<double>(count) / static_cast<double>(masks);
        return r;
    }

    std::vector<double> v10a, v01a, v10b, v01b;
    placement_components(a.genuine, a.imposter, v10a, v01a);
    placement_components(b.genuine, b.imposter, v10b, v01b);
    std::vector<double> d10(n_g), d01(n_i);
    for (size_t i = 0; i < n_g; ++i) d10[i] = v10a[i] - v10b[i];
    for (size_t j = 0; j < n_i; ++j) d01[j] = v01a[j] - v01b[j];
    const double var = sample_variance(d10) / n_g + sample_variance(d01) / n_i;
    if (var < 1e-24) {
        r.degenerate = true;
        r.p_value = observed < 1e-15 ? 1.0 : 0.0;
        return r;
    }
    const double z = (r.auc_a - r.auc_b) / std::sqrt(var);
    r.p_value = std::erfc(std::abs(z) / std::sqrt(2.0));
    return r;
}

double multi_finger_fuse(const std::vector<double>& per_finger_scores, FuseRule rule) {
    if (per_finger_scores.empty())
        throw std::invalid_argument("multi_finger_fuse: at least one score required");
    double s = 0.0;
    for (double v : per_finger_scores) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("multi_finger_fuse: score outside [0,1]");
        s += v;
    }
    return rule == FuseRule::mean ? s / per_finger_scores.size() : s;
}

namespace {

void sort_hits(std::vector<SearchHit>& hits) {
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.gallery_index < b.gallery_index;
    });
}

}  // namespace

std::vector<SearchHit> rank_n_search(const Template& probe, const std::vector<Template>& gallery,
                                     Scorer scorer, FusionWeights weights, std::uint64_t seed) {
    if (gallery.empty()) throw std::invalid_argument("rank_n_search: empty gallery");
    std::vector<SearchHit> hits;
    hits.reserve(gallery.size());
    for (size_t i = 0; i < gallery.size(); ++i) {
        double score = 0.0;
        switch (scorer) {
            case Scorer::texture:
                score = texture_similarity(probe.embedding, gallery[i].embedding);
                break;
            case Scorer::minutiae:
                score = match_minutiae(probe.minutiae, gallery[i].minutiae, seed).score;
                break;
            case Scorer::fused:
                score = fuse_scores(texture_similarity(probe.embedding, gallery[i].embedding),
                                    match_minutiae(probe.minutiae, gallery[i].minutiae, seed).score,
                                    weights.w_t, weights.w_m);
                break;
        }
        hits.push_back({static_cast<int>(i), score});
    }
    sort_hits(hits);
    return hits;
}

std::vector<SearchHit> two_stage_search(const Template& probe,
                                        const std::vector<Template>& gallery, int k,
                                        FusionWeights weights, std::uint64_t seed) {
    if (gallery.empty()) throw std::invalid_argument("two_stage_search: empty gallery");
    if (k < 1 || k > static_cast<int>(gallery.size()))
        throw std::invalid_argument("two_stage_search: k out of range");

    std::vector<SearchHit> stage1 = rank_n_search(probe, gallery, Scorer::texture);
    std::vector<SearchHit> head(stage1.begin(), stage1.begin() + k);
    for (auto& hit : head) {
        const double s_m =
            match_minutiae(probe.minutiae, gallery[hit.gallery_index].minutiae, seed).score;
        hit.score = fuse_scores(hit.score, s_m, weights.w_t, weights.w_m);
    }
    sort_hits(head);
    head.insert(head.end(), stage1.begin() + k, stage1.end());
    return head;
}

}  // namespace c2cl
