#include "c2cl/representation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "c2cl/geometry.hpp"

namespace c2cl {

namespace {

constexpr double kProbClamp = 1e-12;
constexpr int kEmbeddingDim = 512;

double sq_norm_diff(const std::vector<double>& a, const std::vector<double>& b,
                    const char* what) {
    if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

}  // namespace

void Embedding::validate() const {
    check_finite(values, "Embedding");
    if (values.empty()) throw std::invalid_argument("Embedding: empty");
    if (normalized) {
        double n = 0.0;
        for (double v : values) n += v * v;
        if (std::abs(std::sqrt(n) - 1.0) > 1e-6)
            throw std::invalid_argument("Embedding: marked normalized but norm != 1");
    }
}

Embedding& Embedding::l2_normalize() {
    check_finite(values, "Embedding");
    double n = 0.0;
    for (double v : values) n += v * v;
    n = std::sqrt(n);
    if (n < 1e-12) throw std::invalid_argument("Embedding: cannot normalize a zero vector");
    for (double& v : values) v /= n;
    normalized = true;
    return *this;
}

Embedding extract_texture_embedding(const GrayImage& img) {
    img.validate();
    constexpr int kGrid = 6;
    const OrientationField of = orientation_field(img, std::max(4, std::min(img.width, img.height) / 16));

    Embedding e;
    e.values.assign(kEmbeddingDim, 0.0);
    const int bw = img.width / kGrid, bh = img.height / kGrid;
    if (bw < 4 || bh < 4) throw std::invalid_argument("extract_texture_embedding: image too small");

    size_t idx = 0;
    // 8-bin orientation histogram per 6x6 block, coherence-weighted.
    for (int gy = 0; gy < kGrid; ++gy)
        for (int gx = 0; gx < kGrid; ++gx) {
            double hist[8] = {0};
            // Orientation-field blocks overlapping this grid cell.
            for (int by = 0; by < of.blocks_y; ++by)
                for (int bx = 0; bx < of.blocks_x; ++bx) {
                    const int px = bx * of.block + of.block / 2;
                    const int py = by * of.block + of.block / 2;
                    if (px / bw != gx || py / bh != gy) continue;
                    const double a = of.angle(bx, by);  // [0, pi)
                    const double fbin = a / (M_PI / 8.0);
                    const int b0 = std::min(7, static_cast<int>(fbin));
                    const double f = fbin - b0;
                    hist[b0] += of.coherence(bx, by) * (1.0 - f);
                    hist[(b0 + 1) % 8] += of.coherence(bx, by) * f;
                }
            for (double h : hist) e.values[idx++] = h;
        }

    // Per-block ridge period (normalized to [0,1], 0 when not measurable).
    for (int gy = 0; gy < kGrid; ++gy)
        for (int gx = 0; gx < kGrid; ++gx) {
            GrayImage blockimg(bw, bh);
            for (int y = 0; y < bh; ++y)
                for (int x = 0; x < bw; ++x) blockimg.at(x, y) = img.at(gx * bw + x, gy * bh + y);
            double period = 0.0;
            try {
                period = estimate_ridge_period(blockimg, std::max(8, std::min(bw, bh) / 2)) / 25.0;
            } catch (const std::exception&) {
                period = 0.0;
            }
            e.values[idx++] = period;
        }

    // Per-block Gabor energy: mean deviation of the enhanced image from its
    // neutral level. Zero when no global ridge period is measurable.
    try {
        const double period = estimate_ridge_period(img);
        const GrayImage enh = gabor_enhance(img, of, period);
        for (int gy = 0; gy < kGrid; ++gy)
            for (int gx = 0; gx < kGrid; ++gx) {
                double energy = 0.0;
                for (int y = 0; y < bh; ++y)
                    for (int x = 0; x < bw; ++x)
                        energy += std::abs(enh.at(gx * bw + x, gy * bh + y) - 0.5f);
                e.values[idx++] = energy / (static_cast<double>(bw) * bh);
            }
    } catch (const std::exception&) {
        idx += kGrid * kGrid;
    }

    double n = 0.0;
    for (double v : e.values) n += v * v;
    if (std::sqrt(n) < 1e-9) {
        // Featureless input: flag it and fall back to a fixed unit vector.
        e.zero_information = true;
        e.values.assign(kEmbeddingDim, 1.0 / std::sqrt(static_cast<double>(kEmbeddingDim)));
        e.normalized = true;
        return e;
    }
    return e.l2_normalize();
}

namespace {

constexpr char kEmbedMagic[4] = {'C', '2', 'E', 'M'};

Embedding finish_import(std::vector<double> values, const std::string& path) {
    if (values.size() != 192 && values.size() != 512)
        throw std::invalid_argument("import_embedding: expected 192 or 512 values, got " +
                                    std::to_string(values.size()) + " in " + path);
    for (double v : values)
        if (!std::isfinite(v))
            throw std::invalid_argument("import_embedding: non-finite value in " + path);
    Embedding e;
    e.values = std::move(values);
    return e.l2_normalize();
}

}  // namespace

Embedding import_embedding(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4] = {0};
    in.read(magic, 4);
    if (in && std::memcmp(magic, kEmbedMagic, 4) == 0) {
        std::uint32_t dim = 0;
        in.read(reinterpret_cast<char*>(&dim), 4);
        if (!in || dim == 0 || dim > 1 << 20)
            throw std::invalid_argument("import_embedding: bad dimension in " + path);
        std::vector<float> raw(dim);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(dim) * 4);
        if (!in) throw std::invalid_argument("import_embedding: truncated file " + path);
        return finish_import(std::vector<double>(raw.begin(), raw.end()), path);
    }
    // Fall back to a JSON array of numbers.
    in.clear();
    in.seekg(0);
    try {
        nlohmann::json j = nlohmann::json::parse(in);
        if (!j.is_array()) throw std::invalid_argument("import_embedding: not an array: " + path);
        std::vector<double> values;
        values.reserve(j.size());
        for (const auto& v : j) {
            if (!v.is_number())
                throw std::invalid_argument("import_embedding: non-numeric entry in " + path);
            values.push_back(v.get<double>());
        }
        return finish_import(std::move(values), path);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("import_embedding: unrecognized format in " + path + ": " +
                                    e.what());
    }
}

void export_embedding(const Embedding& e, const std::string& path) {
    e.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(kEmbedMagic, 4);
    const std::uint32_t dim = static_cast<std::uint32_t>(e.values.size());
    out.write(reinterpret_cast<const char*>(&dim), 4);
    for (double v : e.values) {
        const float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), 4);
    }
    if (!out) throw std::runtime_error("embedding write failed: " + path);
}

double texture_similarity(const Embedding& a, const Embedding& b) {
    if (a.values.size() != b.values.size())
        throw std::invalid_argument("texture_similarity: dimension mismatch");
    if (!a.normalized || !b.normalized)
        throw std::invalid_argument("texture_similarity: embeddings must be normalized");
    double dot = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
    return std::clamp((dot + 1.0) / 2.0, 0.0, 1.0);
}

void LossInputs::check_structure() const {
    if (probs_minutiae.size() < 2 || probs_minutiae.size() != probs_texture.size())
        throw std::invalid_argument("LossInputs: class probability vectors need K >= 2, equal sizes");
    if (label < 0 || label >= static_cast<int>(probs_minutiae.size()))
        throw std::invalid_argument("LossInputs: label out of range");
    if (adversary_probs.size() < 2)
        throw std::invalid_argument("LossInputs: adversary distribution needs C >= 2");
    if (device_label < 0 || device_label >= static_cast<int>(adversary_probs.size()))
        throw std::invalid_argument("LossInputs: device label out of range");
    if (r1.size() != center1.size() || r2.size() != center2.size())
        throw std::invalid_argument("LossInputs: embedding/center size mismatch");
    if (map_pred.size() != map_gt.size())
        throw std::invalid_argument("LossInputs: minutiae map size mismatch");
    for (const auto* v : {&probs_minutiae, &probs_texture, &adversary_probs})
        for (double p : *v)
            if (!(p >= 0.0) || !std::isfinite(p))
                throw std::invalid_argument("LossInputs: probabilities must be finite and >= 0");
    check_finite(r1, "LossInputs.r1");
    check_finite(r2, "LossInputs.r2");
    check_finite(center1, "LossInputs.center1");
    check_finite(center2, "LossInputs.center2");
    check_finite(map_pred, "LossInputs.map_pred");
    check_finite(map_gt, "LossInputs.map_gt");
}

void LossInputs::validate() const {
    check_structure();
    for (const auto* v : {&probs_minutiae, &probs_texture, &adversary_probs}) {
        double s = 0.0;
        for (double p : *v) s += p;
        if (std::abs(s - 1.0) > 1e-6)
            throw std::invalid_argument("LossInputs: probability vector does not sum to 1");
    }
}

void LossWeights::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0)
        throw std::invalid_argument("LossWeights: weights must be nonnegative");
}

IdentityLossBreakdown loss_identity(const LossInputs& in, const LossWeights& w) {
    in.check_structure();
    w.validate();
    IdentityLossBreakdown out;
    out.l1 = -std::log(std::max(in.probs_minutiae[in.label], kProbClamp)) -
             std::log(std::max(in.probs_texture[in.label], kProbClamp));
    out.l2 = sq_norm_diff(in.r1, in.center1, "loss_identity r1") +
             sq_norm_diff(in.r2, in.center2, "loss_identity r2");
    out.l3 = sq_norm_diff(in.map_pred, in.map_gt, "loss_identity maps");
    out.total = w.lambda1 * out.l1 + w.lambda2 * out.l2 + w.lambda3 * out.l3;
    return out;
}

double loss_adversarial(const LossInputs& in) {
    in.check_structure();
    const double c = static_cast<double>(in.adversary_probs.size());
    double loss = 0.0;
    for (double q : in.adversary_probs) loss -= std::log(std::max(q, kProbClamp)) / c;
    return loss;
}

TotalLossBreakdown loss_total_deepprint(const LossInputs& in, const LossWeights& w) {
    TotalLossBreakdown out;
    out.identity = loss_identity(in, w);
    out.adversarial = loss_adversarial(in);
    out.total = out.identity.total + w.lambda4 * out.adversarial;
    return out;
}

double loss_adversary_head(const LossInputs& in) {
    in.check_structure();
    return -std::log(std::max(in.adversary_probs[in.device_label], kProbClamp));
}

double loss_stn(const Embedding& a, const Embedding& b) {
    return sq_norm_diff(a.values, b.values, "loss_stn");
}

IdentityLossGradients loss_identity_gradients(const LossInputs& in, const LossWeights& w) {
    in.check_structure();
    w.validate();
    IdentityLossGradients g;
    g.d_probs_minutiae.assign(in.probs_minutiae.size(), 0.0);
    g.d_probs_texture.assign(in.probs_texture.size(), 0.0);
    if (in.probs_minutiae[in.label] > kProbClamp)
        g.d_probs_minutiae[in.label] = -w.lambda1 / in.probs_minutiae[in.label];
    if (in.probs_texture[in.label] > kProbClamp)
        g.d_probs_texture[in.label] = -w.lambda1 / in.probs_texture[in.label];

    g.d_r1.resize(in.r1.size());
    for (size_t i = 0; i < in.r1.size(); ++i)
        g.d_r1[i] = w.lambda2 * 2.0 * (in.r1[i] - in.center1[i]);
    g.d_r2.resize(in.r2.size());
    for (size_t i = 0; i < in.r2.size(); ++i)
        g.d_r2[i] = w.lambda2 * 2.0 * (in.r2[i] - in.center2[i]);

    g.d_map_pred.resize(in.map_pred.size());
    for (size_t i = 0; i < in.map_pred.size(); ++i)
        g.d_map_pred[i] = w.lambda3 * 2.0 * (in.map_pred[i] - in.map_gt[i]);
    return g;
}

std::vector<double> loss_adversarial_gradients(const LossInputs& in) {
    in.check_structure();
    const double c = static_cast<double>(in.adversary_probs.size());
    std::vector<double> g(in.adversary_probs.size(), 0.0);
    for (size_t i = 0; i < g.size(); ++i)
        if (in.adversary_probs[i] > kProbClamp) g[i] = -1.0 / (c * in.adversary_probs[i]);
    return g;
}

std::vector<double> loss_adversary_head_gradients(const LossInputs& in) {
    in.check_structure();
    std::vector<double> g(in.adversary_probs.size(), 0.0);
    if (in.adversary_probs[in.device_label] > kProbClamp)
        g[in.device_label] = -1.0 / in.adversary_probs[in.device_label];
    return g;
}

StnLossGradients loss_stn_gradients(const Embedding& a, const Embedding& b) {
    if (a.values.size() != b.values.size())
        throw std::invalid_argument("loss_stn_gradients: dimension mismatch");
    StnLossGradients g;
    g.d_a.resize(a.values.size());
    g.d_b.resize(b.values.size());
    for (size_t i = 0; i < a.values.size(); ++i) {
        g.d_a[i] = 2.0 * (a.values[i] - b.values[i]);
        g.d_b[i] = -g.d_a[i];
    }
    return g;
}

}  // namespace c2cl
