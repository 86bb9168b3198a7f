#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "soundflow/flow.hpp"
#include "soundflow/rng.hpp"
#include "soundflow/tensor.hpp"

namespace soundflow {

struct ModelConfig {
    int num_blocks = 4;
    int hidden_dim = 256;
    int num_heads = 8;
    int feature_channels = 64;
    int vocab_size = 0;  // 0 = adopt the size of the vocabulary handed in
    int max_frames = 250;  // 10 s at 25 fps
    int max_text_tokens = 160;
    int time_embed_dim = 128;

    int head_dim() const { return hidden_dim / num_heads; }
    void validate() const;  // positivity, divisibility, even extents
};

// Closed vocabulary: the caption template words, punctuation, digits, every
// word of every class name, and the "<unc>" marker used for unconditional
// generation.
std::vector<std::string> build_vocabulary(const std::vector<std::string>& class_names);

// Splits a caption into vocabulary ids: maximal letter runs, single digits,
// and single punctuation characters each become one token; a whitespace
// chunk equal to "<unc>" becomes the unconditional marker. A token outside
// the vocabulary is an error naming the token.
std::vector<std::size_t> tokenize(const std::string& caption,
                                  const std::vector<std::string>& vocab);

// Conditioning produced from a caption. c_t is only defined once a timestep
// is chosen (see VelocityModel::with_time).
struct ConditionBundle {
    Tensor c;       // tokens x hidden: MLP-transformed embedding sequence
    Tensor pooled;  // hidden: mean over the rows of c
    Tensor c_t;     // hidden: pooled + time embedding, the modulation input
};

// Conditional velocity network: learned text embeddings -> MLP, input
// projection of the feature sequence, a stack of transformer blocks
// (adaptive-norm modulation from c_t, rotary self-attention, zero-init
// tanh-gated cross-attention over the text tokens, residual MLP), and a
// modulated output projection back to feature channels.
class VelocityModel {
public:
    VelocityModel(ModelConfig cfg, std::vector<std::string> vocab, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const std::vector<std::string>& vocabulary() const { return vocab_; }

    std::map<std::string, Tensor>& parameters() { return params_; }
    const std::map<std::string, Tensor>& parameters() const { return params_; }

    // Closed-form number of learnable scalars for a config (with vocab_size
    // filled in). The constructor allocates exactly this many.
    static std::size_t parameter_count(const ModelConfig& cfg);

    ConditionBundle encode_text(const std::string& caption) const;

    // Copy of the bundle with c_t = time_mlp(sinusoidal(t)) + pooled.
    ConditionBundle with_time(const ConditionBundle& bundle, double t) const;

    // One transformer block; bundle must carry c_t. x is frames x hidden.
    Tensor dit_block(std::size_t block, const Tensor& x, const ConditionBundle& bundle) const;

    // z_t is frames x feature_channels with frames <= max_frames; the result
    // has the same shape. The bundle's c_t is (re)derived from t.
    Tensor forward_velocity(const Tensor& z_t, double t, const ConditionBundle& bundle) const;
    Tensor forward_velocity(const Tensor& z_t, double t, const std::string& caption) const;

private:
    Tensor param(const std::string& name) const;
    Tensor time_embedding(double t) const;
    // Rank-1 modulation vector: affine(silu(c_t)) for the named projection.
    Tensor modulation(const std::string& name, const Tensor& mod_in) const;

    ModelConfig cfg_;
    std::vector<std::string> vocab_;
    std::map<std::string, Tensor> params_;
    Tensor ln_gain_;  // constant ones: plain (non-affine) layer norm
    Tensor ln_bias_;  // constant zeros
};

// Decoupled-weight-decay adaptive-moment optimizer.
struct AdamW {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::uint64_t step_count = 0;
    std::map<std::string, std::vector<double>> m;  // first moments, by name
    std::map<std::string, std::vector<double>> v;  // second moments, by name

    // Applies one update from the gradients currently stored on the
    // parameters, then clears those gradients. Parameters without a gradient
    // are left untouched.
    void step(std::map<std::string, Tensor>& params);
};

struct TrainItem {
    Tensor x;             // frames x channels target features (normalized)
    std::string caption;  // conditioning text
};

// One optimization step: per item draws t ~ U[0,1) and Gaussian noise, forms
// the interpolant, regresses the model velocity against the schedule's
// target velocity (mean squared error, averaged over the batch), and applies
// one optimizer update. Returns the batch loss. A non-finite loss aborts the
// step with parameters and optimizer state untouched.
double train_step(VelocityModel& model, AdamW& optim, const std::vector<TrainItem>& batch,
                  const Schedule& schedule, Rng& rng);

}  // namespace soundflow
