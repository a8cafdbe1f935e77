#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ihanas/genome.hpp"

namespace ihanas {

// Eigen reductions over a Map split the work by the address alignment, so the
// flat parameter and gradient buffers are over-aligned to keep results
// independent of where the allocator put them.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

/// Token fields, in order: n_h, n_kv, d_qk, d_v, d_mlp, mask, attn, d_model, T.
inline constexpr int kFieldCount = 9;

/// Per-field min/max fitted on a training split. Degenerate fields map to 0.
struct FieldNormalizer {
    std::array<double, kFieldCount> lo{};
    std::array<double, kFieldCount> hi{};

    static FieldNormalizer fit(std::span<const ArchGenome> train);
    double apply(int field, double value) const;
};

/// Active layers packed in order into rows [0, active); remaining rows are
/// zero padding with valid = 0.
struct FeatureSequence {
    Eigen::MatrixXd tokens;            // max_len x kFieldCount
    std::vector<std::uint8_t> valid;   // max_len

    int active() const;
};

/// Throws std::domain_error when the genome has more active layers than max_len.
FeatureSequence featurize(const ArchGenome& g, const FieldNormalizer& norm, int max_len = 40);

struct Sample {
    FeatureSequence x;
    double y = 0.0;
};

/// Dropout switch for one forward pass; each sample in a batch draws its
/// masks from mix_seed(seed, sample index).
struct ForwardMode {
    bool dropout = false;
    std::uint64_t seed = 0;
};

struct TensorSpec {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::size_t offset = 0;

    std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct TrainConfig {
    int epochs = 200;
    int batch_size = 32;
    AdamWConfig optimizer;
    std::uint64_t seed = 100;
    bool keep_best = true;  // restore the best test-L1 epoch at the end
};

struct TrainReport {
    double initial_train_l1 = 0.0;
    double initial_test_l1 = 0.0;
    std::vector<double> train_l1;  // per epoch, evaluation mode
    std::vector<double> test_l1;
    int best_epoch = -1;           // 0-based; -1 when no epoch ran
    double best_test_l1 = 0.0;
};

struct EncoderHyper {
    int d_enc = 64;
    int n_blocks = 4;
    int n_heads = 4;
    int ffn_mult = 4;
    double dropout = 0.2;
    int max_len = 40;

    bool operator==(const EncoderHyper&) const = default;
};

/// Pre-LN Transformer encoder over layer tokens with masked mean pooling and
/// a linear regression head. Parameters live in one flat vector.
class EncoderSurrogate {
public:
    EncoderSurrogate() = default;
    EncoderSurrogate(EncoderHyper hyper, FieldNormalizer norm, std::uint64_t init_seed);

    static std::vector<TensorSpec> layout(const EncoderHyper& h);
    static std::size_t param_count(const EncoderHyper& h);

    const EncoderHyper& hyper() const { return hyper_; }
    const FieldNormalizer& normalizer() const { return norm_; }
    std::size_t param_count() const { return params_.size(); }
    ParamVector& params() { return params_; }
    const ParamVector& params() const { return params_; }
    const std::vector<TensorSpec>& tensors() const { return layout_; }
    void set_output_bias(double b);

    FeatureSequence features(const ArchGenome& g) const { return featurize(g, norm_, hyper_.max_len); }

    /// Throws std::domain_error when no position is valid.
    double forward(const FeatureSequence& x, ForwardMode mode = {}) const;
    double predict(const ArchGenome& g) const { return forward(features(g)); }

    /// Mean L1 over the batch; accumulates d(loss)/d(params) into grad when
    /// non-null (grad is resized and zeroed).
    double loss_and_grad(std::span<const Sample> batch, ParamVector* grad, ForwardMode mode = {}) const;

    nlohmann::json to_json() const;
    static EncoderSurrogate from_json(const nlohmann::json& j);

private:
    EncoderHyper hyper_;
    FieldNormalizer norm_;
    std::vector<TensorSpec> layout_;
    ParamVector params_;
};

/// Flat baseline on the concatenated padded max_len x 9 feature vector:
/// two GELU hidden layers and a scalar head.
class MlpSurrogate {
public:
    MlpSurrogate() = default;
    MlpSurrogate(int max_len, int hidden, FieldNormalizer norm, std::uint64_t init_seed);

    std::size_t param_count() const { return params_.size(); }
    ParamVector& params() { return params_; }
    const ParamVector& params() const { return params_; }
    const FieldNormalizer& normalizer() const { return norm_; }
    int max_len() const { return max_len_; }
    void set_output_bias(double b);

    FeatureSequence features(const ArchGenome& g) const { return featurize(g, norm_, max_len_); }
    double forward(const FeatureSequence& x, ForwardMode mode = {}) const;
    double predict(const ArchGenome& g) const { return forward(features(g)); }
    double loss_and_grad(std::span<const Sample> batch, ParamVector* grad, ForwardMode mode = {}) const;

    nlohmann::json to_json() const;
    static MlpSurrogate from_json(const nlohmann::json& j);

private:
    int max_len_ = 40;
    int hidden_ = 128;
    FieldNormalizer norm_;
    ParamVector params_;
};

// ---------------------------------------------------------------------------
// Corpus

struct LabeledArch {
    ArchGenome genome;
    double val_loss = 0.0;
};

struct LabeledCorpus {
    std::vector<LabeledArch> rows;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;

    /// Drops rows with non-finite labels, then shuffles and splits by rows.
    /// Returns the number of dropped rows.
    std::size_t split(std::uint64_t seed, double test_fraction = 0.2);
    std::vector<ArchGenome> genomes(std::span<const std::size_t> idx) const;
};

/// JSON Lines: one {"genome": {...}, "val_loss": x} record per line.
LabeledCorpus load_corpus(const std::string& path);
void save_corpus(const LabeledCorpus& c, const std::string& path);

/// Labels random genomes with synth_oracle (synthetic, not trained models).
LabeledCorpus make_synthetic_corpus(std::size_t n, std::uint64_t seed, const SpaceRanges& ranges = {},
                                    const GlobalConfig& global = {});

/// Synthetic validation loss: 4.2 - 0.30 ln(1 + P/1e6) + 0.5/sqrt(L_act) + 0.05 f_id.
double synth_loss_formula(double params, int active_layers, double identity_fraction);

/// synth_loss_formula plus N(0, noise_sd^2) noise seeded by the genome hash
/// and noise_seed. P counts layer weights only (no embeddings).
double synth_oracle(const ArchGenome& g, std::uint64_t noise_seed, double noise_sd = 0.02);

// ---------------------------------------------------------------------------
// Training

std::vector<Sample> make_samples(const LabeledCorpus& c, std::span<const std::size_t> idx,
                                 const FieldNormalizer& norm, int max_len);

TrainReport train(EncoderSurrogate& s, std::span<const Sample> train_set, std::span<const Sample> test_set,
                  const TrainConfig& cfg);
TrainReport train(MlpSurrogate& s, std::span<const Sample> train_set, std::span<const Sample> test_set,
                  const TrainConfig& cfg);

/// Fits a normalizer on the train split, builds a default-initialized encoder
/// and trains it.
EncoderSurrogate train_encoder(const LabeledCorpus& c, const EncoderHyper& hyper, const TrainConfig& cfg,
                               TrainReport* report = nullptr);
MlpSurrogate mlp_baseline_train(const LabeledCorpus& c, const TrainConfig& cfg, int hidden = 128,
                                int max_len = 40, TrainReport* report = nullptr);

struct McPrediction {
    double mean = 0.0;
    double stddev = 0.0;
};

/// Sample mean and (n-1) standard deviation over n_mc dropout forwards.
McPrediction mc_predict(const EncoderSurrogate& s, const FeatureSequence& x, int n_mc, std::uint64_t seed);

struct ReplayMix {
    int old_rows = 0;
    int new_rows = 0;
};

/// Rows per mini-batch: floor(batch / (rho + 1)) buffer rows (at least one),
/// the rest from the original corpus.
ReplayMix replay_mix(int batch_size, double rho);

struct FineTuneConfig {
    double replay_ratio = 5.0;
    int epochs = 10;
    int batch_size = 32;
    double lr = 1e-4;
    std::uint64_t seed = 0;
};

/// Fine-tunes a copy of `baseline` on the buffer blended with the original
/// corpus. Non-finite buffer rows are dropped; throws std::domain_error when
/// nothing is left.
EncoderSurrogate fine_tune(const EncoderSurrogate& baseline, std::span<const LabeledArch> buffer,
                           std::span<const LabeledArch> corpus, const FineTuneConfig& cfg);

void save_checkpoint(const nlohmann::json& j, const std::string& path);
nlohmann::json load_checkpoint(const std::string& path);

}  // namespace ihanas
