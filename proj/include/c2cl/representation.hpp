#pragma once

#include <string>
#include <vector>

#include "c2cl/imaging.hpp"
#include "c2cl/minutiae.hpp"

namespace c2cl {

// Fixed-length texture embedding. 512-D from the built-in extractor; 192-D
// also accepted on import for externally trained vectors.
struct Embedding {
    std::vector<double> values;
    bool normalized = false;
    // The source image had no measurable texture; the vector is a fixed
    // uniform unit vector so downstream scoring stays well defined.
    bool zero_information = false;

    void validate() const;  // finite values; unit norm when normalized
    Embedding& l2_normalize();
};

// Classical texture descriptor: 6x6 block grid of coherence-weighted
// 8-bin orientation histograms (288), per-block ridge period (36), and
// per-block Gabor energy (36), zero-padded to 512 and L2-normalized.
// Deterministic. A featureless image yields a flagged uniform embedding.
Embedding extract_texture_embedding(const GrayImage& img);

// Reads "C2EM" binary (u32 dim, float32 little-endian values) or a JSON
// array of numbers. Accepts 192 or 512 dims, renormalizes, rejects
// non-finite values and wrong lengths.
Embedding import_embedding(const std::string& path);
void export_embedding(const Embedding& e, const std::string& path);  // C2EM binary

// (cos + 1) / 2 of two normalized embeddings of equal dimension.
double texture_similarity(const Embedding& a, const Embedding& b);

// Inputs to the training objectives. Probability vectors are post-softmax;
// the losses themselves never exponentiate.
struct LossInputs {
    std::vector<double> probs_minutiae;  // y-hat over K classes
    std::vector<double> probs_texture;   // y-hat over K classes
    int label = 0;                       // y in [0, K)

    std::vector<double> r1, r2;          // embedding halves
    std::vector<double> center1, center2;  // per-class means for the label

    std::vector<double> map_pred, map_gt;  // flattened minutiae maps

    std::vector<double> adversary_probs;  // q over C device classes
    int device_label = 0;                  // y_c in [0, C)

    // Structural checks every loss needs (sizes, label ranges, positivity).
    void check_structure() const;
    // Full validation for pipeline use: additionally requires probability
    // vectors to sum to 1 within 1e-6.
    void validate() const;
};

struct LossWeights {
    double lambda1 = 1.0;
    double lambda2 = 0.00125;
    double lambda3 = 0.095;
    double lambda4 = 0.1;

    void validate() const;  // nonnegative
};

struct IdentityLossBreakdown {
    double total = 0.0;
    double l1 = 0.0;  // -log y1[y] - log y2[y]
    double l2 = 0.0;  // ||r1 - c1||^2 + ||r2 - c2||^2
    double l3 = 0.0;  // sum (pred - gt)^2 over the maps
};

IdentityLossBreakdown loss_identity(const LossInputs& in, const LossWeights& w);

// Cross-entropy of the adversary output against the uniform target:
// -sum_c (1/C) log q_c, probabilities clamped at 1e-12.
double loss_adversarial(const LossInputs& in);

struct TotalLossBreakdown {
    double total = 0.0;
    IdentityLossBreakdown identity;
    double adversarial = 0.0;
};

TotalLossBreakdown loss_total_deepprint(const LossInputs& in, const LossWeights& w);

// -log q[device_label], the adversary's own training objective.
double loss_adversary_head(const LossInputs& in);

// Squared L2 distance between two embeddings of equal dimension.
double loss_stn(const Embedding& a, const Embedding& b);

// Analytic gradients, matched to central finite differences in tests.
struct IdentityLossGradients {
    std::vector<double> d_probs_minutiae, d_probs_texture;
    std::vector<double> d_r1, d_r2;
    std::vector<double> d_map_pred;
};
IdentityLossGradients loss_identity_gradients(const LossInputs& in, const LossWeights& w);

std::vector<double> loss_adversarial_gradients(const LossInputs& in);   // d/dq
std::vector<double> loss_adversary_head_gradients(const LossInputs& in);  // d/dq

struct StnLossGradients {
    std::vector<double> d_a, d_b;
};
StnLossGradients loss_stn_gradients(const Embedding& a, const Embedding& b);

}  // namespace c2cl
