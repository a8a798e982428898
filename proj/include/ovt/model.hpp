#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovt/matrix.hpp"
#include "ovt/rng.hpp"

namespace ovt {

enum class EncoderArch { Linear, SingleAttentionBlock };

std::string to_string(EncoderArch arch);
EncoderArch encoder_arch_from_string(const std::string& s);

struct EncoderConfig {
    std::size_t input_dim = 16;
    std::size_t embed_dim = 16;  // d
    EncoderArch architecture = EncoderArch::Linear;
    std::size_t token_count = 0;  // t, attention mode only
    std::size_t token_dim = 0;    // h, attention mode only; t*h == input_dim
    std::size_t text_buckets = 64;

    void validate() const;  // throws std::invalid_argument
};

/// Additive low-rank update for one base weight: effective = base + B*A.
/// Base is m x n, B is m x r, A is r x n with 1 <= r < min(n, m).
struct LoraAdapter {
    Matrix a;  // r x n
    Matrix b;  // m x r
    std::size_t rank = 0;
    std::string target;

    /// A entries ~ N(0, 0.02^2), B zero, so the composed weight starts at base.
    static LoraAdapter create(std::size_t out_dim, std::size_t in_dim, std::size_t rank,
                              std::string target, Rng& rng);
};

Matrix lora_effective_weight(const Matrix& base, const LoraAdapter& adapter);

/// One pre-norm transformer block applied to the embedding as a single token.
/// Vectors act as 1 x d rows; weights multiply on the right, so mlp_in is
/// d x 4d and mlp_out is 4d x d.
struct ViformerParams {
    Matrix wq, wk, wv, wo;  // d x d
    Matrix mlp_in;          // d x 4d
    Matrix mlp_out;         // 4d x d
    Vec ln1_gain, ln1_bias;
    Vec ln2_gain, ln2_bias;

    /// wv, wo and mlp_out start at zero: the block is initially the identity.
    static ViformerParams init(std::size_t embed_dim, Rng& rng);
    std::size_t embed_dim() const { return wq.rows(); }
};

struct ViformerCache {
    Vec z;
    Vec xhat1, u;
    double inv_sigma1 = 0.0;
    Vec value, attn_out, z_mid;
    Vec xhat2, u2;
    double inv_sigma2 = 0.0;
    Vec mlp_pre, mlp_act;
};

struct ViformerGrads {
    Matrix wq, wk, wv, wo;
    Matrix mlp_in, mlp_out;
    Vec ln1_gain, ln1_bias, ln2_gain, ln2_bias;

    static ViformerGrads zeros_like(const ViformerParams& p);
};

Vec viformer_forward(const Vec& z, const ViformerParams& params);
Vec viformer_forward(const Vec& z, const ViformerParams& params, ViformerCache& cache);

/// Accumulates parameter gradients into `grads` and the input gradient into
/// `d_z` (+=), given d_out = dL/d(output).
void viformer_backward(const ViformerCache& cache, const ViformerParams& params,
                       const Vec& d_out, ViformerGrads& grads, Vec& d_z);

/// alpha * s + (1 - alpha) * z. Throws when alpha is outside [0, 1].
Vec fuse_residual(const Vec& z, const Vec& s, double alpha);

/// Frozen base weights of the visual encoder.
struct VisualEncoder {
    // linear mode
    Matrix w_v;  // d x input_dim, z = w_v * x
    // attention mode: tokens as rows of a t x h matrix, weights on the right
    Matrix wq, wk, wv, wo;  // h x h
    Matrix w_proj;          // d x h, applied to the mean-pooled token
};

struct ModelState {
    EncoderConfig config;
    VisualEncoder visual;               // frozen
    Matrix w_text;                      // frozen, d x text_buckets
    std::vector<LoraAdapter> adapters;  // linear: {w_v}; attention: {wq, wk, wv, wo}
    ViformerParams viformer;
    double log_tau = 0.0;
    double alpha = 0.1;
    bool train_temperature = false;
    std::uint64_t seed = 0;

    double temperature() const;  // exp(log_tau) clamped to [1e-3, 10]

    static ModelState init(const EncoderConfig& config, std::size_t lora_rank, double alpha,
                           double tau, bool train_temperature, std::uint64_t seed);

    std::uint64_t frozen_checksum() const;
    std::size_t trainable_parameter_count() const;
    std::size_t total_parameter_count() const;
};

/// Overwrites the frozen base with synthetic "pretrained" weights: images
/// near row c of image_directions and texts with features near row c of
/// text_features both land near a shared per-category code, so the base
/// starts with real zero-shot ability (the stand-in for pretrained weights).
/// Rows are per category; requires as many embed dims as categories.
/// Linear visual architecture only.
void install_aligned_base(ModelState& state, const Matrix& image_directions,
                          const Matrix& text_features, double noise_std, Rng& rng);

/// Effective (base + LoRA) weights, composed once and reused across a batch.
struct ComposedWeights {
    Matrix w_v;              // linear mode
    Matrix wq, wk, wv, wo;   // attention mode
};

ComposedWeights compose_weights(const ModelState& state);

struct EncodeCache {
    Vec x;
    Vec z;  // pre-viformer embedding
    ViformerCache viformer;
    // attention mode intermediates
    Matrix tokens, q, k, v, attn_probs, attn_mix;
};

Vec encode_image(const Vec& raw, const ModelState& state);
Vec encode_image(const Vec& raw, const ModelState& state, const ComposedWeights& weights,
                 EncodeCache& cache);

/// Hashed bag-of-tokens featurization: lowercase, split on non-alphanumeric,
/// FNV-1a bucket counts.
Vec text_features(const std::string& caption, std::size_t buckets);
Vec encode_text(const std::string& caption, const ModelState& state);

struct ModelGrads {
    std::vector<std::pair<Matrix, Matrix>> adapters;  // (dA, dB) per adapter
    ViformerGrads viformer;
    double log_tau = 0.0;

    static ModelGrads zeros_like(const ModelState& state);
};

/// Backprop of encode_image into the trainable parameters (accumulating).
void encode_image_backward(const EncodeCache& cache, const ModelState& state,
                           const ComposedWeights& weights, const Vec& d_fused,
                           ModelGrads& grads);

/// Named view over every trainable array, in a stable order shared between
/// ModelState and ModelGrads.
struct ParamRef {
    std::string name;
    double* data;
    std::size_t size;
};

std::vector<ParamRef> trainable_params(ModelState& state);
std::vector<ParamRef> trainable_params(const ModelState& state, ModelGrads& grads);

Vec flatten_trainable(const ModelState& state);
void unflatten_trainable(ModelState& state, std::span<const double> values);

// ---- checkpoint I/O ---------------------------------------------------------
// Single file: one JSON header line (shapes, config, seed), then flat
// little-endian float64 arrays per named parameter, in header order.

void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace ovt
