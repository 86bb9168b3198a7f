#include "soundflow/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace soundflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

constexpr const char* kUnconditional = "<unc>";

}  // namespace

void ModelConfig::validate() const {
    if (num_blocks < 1) fail("model config: num_blocks must be positive");
    if (hidden_dim < 1 || num_heads < 1 || hidden_dim % num_heads != 0)
        fail("model config: hidden_dim (" + std::to_string(hidden_dim) +
             ") must be a positive multiple of num_heads (" + std::to_string(num_heads) + ")");
    if (head_dim() % 2 != 0)
        fail("model config: head_dim must be even for rotary positions, got " +
             std::to_string(head_dim()));
    if (feature_channels < 1) fail("model config: feature_channels must be positive");
    if (vocab_size < 1) fail("model config: vocab_size must be positive");
    if (max_frames < 1) fail("model config: max_frames must be positive");
    if (max_text_tokens < 1) fail("model config: max_text_tokens must be positive");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
        fail("model config: time_embed_dim must be even and >= 2");
}

std::vector<std::string> build_vocabulary(const std::vector<std::string>& class_names) {
    std::vector<std::string> vocab = {kUnconditional,
                                      "Start", "at", "and", "End", "it", "has",
                                      "Low", "Normal", "High", "Pitch", "Energy",
                                      ",", ".", "s"};
    for (char digit = '0'; digit <= '9'; ++digit) vocab.emplace_back(1, digit);
    auto insert_unique = [&vocab](const std::string& token) {
        if (std::find(vocab.begin(), vocab.end(), token) == vocab.end()) vocab.push_back(token);
    };
    for (const std::string& name : class_names) {
        std::string word;
        for (char c : name) {
            if (c == ' ') {
                if (!word.empty()) insert_unique(word);
                word.clear();
            } else {
                word.push_back(c);
            }
        }
        if (!word.empty()) insert_unique(word);
    }
    return vocab;
}

std::vector<std::size_t> tokenize(const std::string& caption,
                                  const std::vector<std::string>& vocab) {
    if (caption.empty()) fail("tokenize: empty caption");
    auto lookup = [&vocab](const std::string& token) -> std::size_t {
        const auto it = std::find(vocab.begin(), vocab.end(), token);
        if (it == vocab.end()) fail("tokenize: token \"" + token + "\" is not in the vocabulary");
        return static_cast<std::size_t>(it - vocab.begin());
    };

    std::vector<std::size_t> ids;
    std::size_t i = 0;
    while (i < caption.size()) {
        if (caption[i] == ' ') {
            ++i;
            continue;
        }
        // whole-chunk check for the unconditional marker
        if (caption.compare(i, 5, kUnconditional) == 0 &&
            (i + 5 == caption.size() || caption[i + 5] == ' ')) {
            ids.push_back(lookup(kUnconditional));
            i += 5;
            continue;
        }
        if (is_letter(caption[i])) {
            std::size_t j = i;
            while (j < caption.size() && is_letter(caption[j])) ++j;
            ids.push_back(lookup(caption.substr(i, j - i)));
            i = j;
        } else {
            // digits and punctuation are single-character tokens
            ids.push_back(lookup(caption.substr(i, 1)));
            ++i;
        }
    }
    if (ids.empty()) fail("tokenize: caption contains no tokens");
    return ids;
}

VelocityModel::VelocityModel(ModelConfig cfg, std::vector<std::string> vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
    if (vocab_.empty()) fail("model: empty vocabulary");
    for (const std::string& token : vocab_)
        if (token.empty() || token.find(' ') != std::string::npos ||
            token.find('\n') != std::string::npos)
            fail("model: vocabulary token \"" + token + "\" contains whitespace");
    if (cfg_.vocab_size == 0) cfg_.vocab_size = static_cast<int>(vocab_.size());
    if (cfg_.vocab_size != static_cast<int>(vocab_.size()))
        fail("model: config vocab_size " + std::to_string(cfg_.vocab_size) +
             " does not match the vocabulary (" + std::to_string(vocab_.size()) + " tokens)");
    cfg_.validate();

    const auto H = static_cast<std::size_t>(cfg_.hidden_dim);
    const auto V = static_cast<std::size_t>(cfg_.vocab_size);
    const auto P = static_cast<std::size_t>(cfg_.max_text_tokens);
    const auto D = static_cast<std::size_t>(cfg_.time_embed_dim);
    const auto C = static_cast<std::size_t>(cfg_.feature_channels);

    Rng rng(seed);
    auto normal_init = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        std::vector<double> vals(rows * cols);
        for (double& x : vals) x = 0.02 * rng.normal();
        params_.emplace(name, Tensor({rows, cols}, std::move(vals), true));
    };
    auto zero_init = [&](const std::string& name, Shape shape) {
        params_.emplace(name, Tensor::zeros(std::move(shape), true));
    };

    normal_init("text.token_embedding", V, H);
    normal_init("text.position_embedding", P, H);
    normal_init("text.mlp.w1", H, H);
    zero_init("text.mlp.b1", {H});
    normal_init("text.mlp.w2", H, H);
    zero_init("text.mlp.b2", {H});

    normal_init("time.w1", D, H);
    zero_init("time.b1", {H});
    normal_init("time.w2", H, H);
    zero_init("time.b2", {H});

    normal_init("in.w", C, H);
    zero_init("in.b", {H});

    for (int b = 0; b < cfg_.num_blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        for (const char* side : {"q", "k", "v", "o"}) {
            normal_init(p + "attn.w" + side, H, H);
            zero_init(p + "attn.b" + side, {H});
        }
        for (const char* side : {"k", "v"}) {
            normal_init(p + "cross.w" + side, H, H);
            zero_init(p + "cross.b" + side, {H});
        }
        zero_init(p + "cross.gate", {1});
        // zero-init modulation: every block is the identity map until the
        // optimizer moves these
        for (const char* mod : {"shift_attn", "scale_attn", "gate_attn", "shift_mlp",
                                "scale_mlp", "gate_mlp"}) {
            zero_init(p + "mod." + std::string(mod) + ".w", {H, H});
            zero_init(p + "mod." + std::string(mod) + ".b", {H});
        }
        normal_init(p + "mlp.w1", H, 4 * H);
        zero_init(p + "mlp.b1", {4 * H});
        normal_init(p + "mlp.w2", 4 * H, H);
        zero_init(p + "mlp.b2", {H});
    }

    zero_init("final.shift.w", {H, H});
    zero_init("final.shift.b", {H});
    zero_init("final.scale.w", {H, H});
    zero_init("final.scale.b", {H});
    zero_init("final.w", {H, C});
    zero_init("final.b", {C});

    std::size_t allocated = 0;
    for (const auto& [name, tensor] : params_) allocated += tensor.size();
    if (allocated != parameter_count(cfg_))
        throw std::logic_error("model: allocated " + std::to_string(allocated) +
                               " parameters but the closed form gives " +
                               std::to_string(parameter_count(cfg_)));

    ln_gain_ = Tensor::full({H}, 1.0);
    ln_bias_ = Tensor::zeros({H});
}

std::size_t VelocityModel::parameter_count(const ModelConfig& cfg) {
    if (cfg.vocab_size < 1) fail("parameter_count: vocab_size must be set");
    const auto H = static_cast<std::size_t>(cfg.hidden_dim);
    const auto V = static_cast<std::size_t>(cfg.vocab_size);
    const auto P = static_cast<std::size_t>(cfg.max_text_tokens);
    const auto D = static_cast<std::size_t>(cfg.time_embed_dim);
    const auto C = static_cast<std::size_t>(cfg.feature_channels);
    const auto B = static_cast<std::size_t>(cfg.num_blocks);
    const std::size_t text = V * H + P * H + 2 * (H * H + H);
    const std::size_t time = D * H + H + H * H + H;
    const std::size_t input = C * H + H;
    const std::size_t per_block = 20 * H * H + 17 * H + 1;
    const std::size_t final_head = 2 * (H * H + H) + H * C + C;
    return text + time + input + B * per_block + final_head;
}

Tensor VelocityModel::param(const std::string& name) const {
    const auto it = params_.find(name);
    if (it == params_.end()) throw std::logic_error("model: unknown parameter " + name);
    return it->second;
}

ConditionBundle VelocityModel::encode_text(const std::string& caption) const {
    const std::vector<std::size_t> ids = tokenize(caption, vocab_);
    if (ids.size() > static_cast<std::size_t>(cfg_.max_text_tokens))
        fail("encode_text: caption has " + std::to_string(ids.size()) +
             " tokens, more than max_text_tokens = " + std::to_string(cfg_.max_text_tokens));
    std::vector<std::size_t> positions(ids.size());
    std::iota(positions.begin(), positions.end(), std::size_t{0});

    Tensor h = add(embedding(param("text.token_embedding"), ids),
                   embedding(param("text.position_embedding"), positions));
    h = silu(add(matmul(h, param("text.mlp.w1")), param("text.mlp.b1")));
    ConditionBundle bundle;
    bundle.c = add(matmul(h, param("text.mlp.w2")), param("text.mlp.b2"));
    bundle.pooled = mean_axis(bundle.c, 0);
    return bundle;
}

Tensor VelocityModel::time_embedding(double t) const {
    const auto D = static_cast<std::size_t>(cfg_.time_embed_dim);
    const std::size_t half = D / 2;
    std::vector<double> vals(D);
    for (std::size_t i = 0; i < half; ++i) {
        // geometric frequency ladder; t is stretched to the conventional
        // [0, 1000] range so the fastest component completes many cycles
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        const double arg = t * 1000.0 * freq;
        vals[i] = std::cos(arg);
        vals[half + i] = std::sin(arg);
    }
    Tensor emb({1, D}, std::move(vals));
    Tensor h = silu(add(matmul(emb, param("time.w1")), param("time.b1")));
    h = add(matmul(h, param("time.w2")), param("time.b2"));
    return reshape(h, {static_cast<std::size_t>(cfg_.hidden_dim)});
}

ConditionBundle VelocityModel::with_time(const ConditionBundle& bundle, double t) const {
    if (!bundle.c.defined() || !bundle.pooled.defined())
        fail("with_time: bundle lacks text conditioning; call encode_text first");
    ConditionBundle out = bundle;
    out.c_t = add(time_embedding(t), bundle.pooled);
    return out;
}

Tensor VelocityModel::modulation(const std::string& name, const Tensor& mod_in) const {
    Tensor m = add(matmul(mod_in, param(name + ".w")), param(name + ".b"));
    return reshape(m, {static_cast<std::size_t>(cfg_.hidden_dim)});
}

Tensor VelocityModel::dit_block(std::size_t block, const Tensor& x,
                                const ConditionBundle& bundle) const {
    if (!bundle.c_t.defined())
        fail("dit_block: bundle lacks c_t; derive it with with_time first");
    const auto H = static_cast<std::size_t>(cfg_.hidden_dim);
    if (x.rank() != 2 || x.shape()[1] != H)
        fail("dit_block: expected frames x " + std::to_string(H) + ", got " +
             shape_str(x.shape()));
    const std::size_t F = x.shape()[0];
    const auto heads = static_cast<std::size_t>(cfg_.num_heads);
    const auto d = static_cast<std::size_t>(cfg_.head_dim());
    const std::string p = "block" + std::to_string(block) + ".";

    const Tensor mod_in = reshape(silu(bundle.c_t), {1, H});
    const Tensor shift_attn = modulation(p + "mod.shift_attn", mod_in);
    const Tensor scale_attn = modulation(p + "mod.scale_attn", mod_in);
    const Tensor gate_attn = modulation(p + "mod.gate_attn", mod_in);
    const Tensor shift_mlp = modulation(p + "mod.shift_mlp", mod_in);
    const Tensor scale_mlp = modulation(p + "mod.scale_mlp", mod_in);
    const Tensor gate_mlp = modulation(p + "mod.gate_mlp", mod_in);

    const Tensor ones_h = Tensor::full({H}, 1.0);
    auto modulate = [&](const Tensor& h, const Tensor& scale_v, const Tensor& shift_v) {
        return add(mul(h, broadcast_rows(add(ones_h, scale_v), F)),
                   broadcast_rows(shift_v, F));
    };

    std::vector<double> positions(F);
    std::iota(positions.begin(), positions.end(), 0.0);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    // self-attention with rotary positions on queries and keys
    const Tensor h = modulate(layer_norm(x, ln_gain_, ln_bias_), scale_attn, shift_attn);
    const Tensor q = add(matmul(h, param(p + "attn.wq")), param(p + "attn.bq"));
    const Tensor k = add(matmul(h, param(p + "attn.wk")), param(p + "attn.bk"));
    const Tensor v = add(matmul(h, param(p + "attn.wv")), param(p + "attn.bv"));
    const Tensor qh = permute(rope(reshape(q, {F, heads, d}), positions), {1, 0, 2});
    const Tensor kh = permute(rope(reshape(k, {F, heads, d}), positions), {1, 0, 2});
    const Tensor vh = permute(reshape(v, {F, heads, d}), {1, 0, 2});
    const Tensor att = softmax(scale(matmul(qh, permute(kh, {0, 2, 1})), inv_sqrt_d));
    const Tensor self_out = reshape(permute(matmul(att, vh), {1, 0, 2}), {F, H});

    // cross-attention over the text tokens: the rotated audio queries attend
    // to unrotated text keys; tanh of the zero-init gate scales the branch
    const std::size_t tokens = bundle.c.shape()[0];
    const Tensor ck = add(matmul(bundle.c, param(p + "cross.wk")), param(p + "cross.bk"));
    const Tensor cv = add(matmul(bundle.c, param(p + "cross.wv")), param(p + "cross.bv"));
    const Tensor ckh = permute(reshape(ck, {tokens, heads, d}), {1, 0, 2});
    const Tensor cvh = permute(reshape(cv, {tokens, heads, d}), {1, 0, 2});
    const Tensor catt = softmax(scale(matmul(qh, permute(ckh, {0, 2, 1})), inv_sqrt_d));
    const Tensor cross_out = reshape(permute(matmul(catt, cvh), {1, 0, 2}), {F, H});

    const Tensor a = add(self_out, scale_by(cross_out, tanh(param(p + "cross.gate"))));
    const Tensor attn_out = add(matmul(a, param(p + "attn.wo")), param(p + "attn.bo"));
    const Tensor x1 = add(x, mul(attn_out, broadcast_rows(gate_attn, F)));

    // modulated residual MLP
    const Tensor h2 = modulate(layer_norm(x1, ln_gain_, ln_bias_), scale_mlp, shift_mlp);
    const Tensor mid = silu(add(matmul(h2, param(p + "mlp.w1")), param(p + "mlp.b1")));
    const Tensor out = add(matmul(mid, param(p + "mlp.w2")), param(p + "mlp.b2"));
    return add(x1, mul(out, broadcast_rows(gate_mlp, F)));
}

Tensor VelocityModel::forward_velocity(const Tensor& z_t, double t,
                                       const ConditionBundle& bundle) const {
    const auto C = static_cast<std::size_t>(cfg_.feature_channels);
    if (z_t.rank() != 2 || z_t.shape()[1] != C)
        fail("forward_velocity: expected frames x " + std::to_string(C) + ", got " +
             shape_str(z_t.shape()));
    const std::size_t F = z_t.shape()[0];
    if (F < 1 || F > static_cast<std::size_t>(cfg_.max_frames))
        fail("forward_velocity: " + std::to_string(F) + " frames outside [1, " +
             std::to_string(cfg_.max_frames) + "]");

    const ConditionBundle cond = with_time(bundle, t);
    const auto H = static_cast<std::size_t>(cfg_.hidden_dim);

    Tensor x = add(matmul(z_t, param("in.w")), param("in.b"));
    for (int b = 0; b < cfg_.num_blocks; ++b)
        x = dit_block(static_cast<std::size_t>(b), x, cond);

    const Tensor mod_in = reshape(silu(cond.c_t), {1, H});
    const Tensor shift = modulation("final.shift", mod_in);
    const Tensor scale_v = modulation("final.scale", mod_in);
    const Tensor ones_h = Tensor::full({H}, 1.0);
    Tensor h = layer_norm(x, ln_gain_, ln_bias_);
    h = add(mul(h, broadcast_rows(add(ones_h, scale_v), F)), broadcast_rows(shift, F));
    return add(matmul(h, param("final.w")), param("final.b"));
}

Tensor VelocityModel::forward_velocity(const Tensor& z_t, double t,
                                       const std::string& caption) const {
    return forward_velocity(z_t, t, encode_text(caption));
}

void AdamW::step(std::map<std::string, Tensor>& params) {
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (auto& [name, p] : params) {
        if (!p.has_grad()) continue;
        const std::vector<double>& g = p.grad();
        std::vector<double>& m1 = m[name];
        std::vector<double>& m2 = v[name];
        if (m1.size() != g.size()) m1.assign(g.size(), 0.0);
        if (m2.size() != g.size()) m2.assign(g.size(), 0.0);
        std::vector<double>& w = p.mutable_values();
        for (std::size_t i = 0; i < g.size(); ++i) {
            m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
            m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
            const double m_hat = m1[i] / bc1;
            const double v_hat = m2[i] / bc2;
            w[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * w[i]);
        }
        p.zero_grad();
    }
}

double train_step(VelocityModel& model, AdamW& optim, const std::vector<TrainItem>& batch,
                  const Schedule& schedule, Rng& rng) {
    if (batch.empty()) fail("train_step: empty batch");
    const Shape& shape = batch.front().x.shape();
    for (const TrainItem& item : batch)
        if (item.x.shape() != shape)
            fail("train_step: batch items must share a shape; got " + shape_str(item.x.shape()) +
                 " vs " + shape_str(shape));

    Tensor total;
    for (const TrainItem& item : batch) {
        const double t = sample_timestep(rng);
        std::vector<double> noise(item.x.size());
        for (double& n : noise) n = rng.normal();
        const Tensor eps(item.x.shape(), std::move(noise));
        const Tensor x_t = interpolate(item.x, eps, t, schedule);
        const Tensor u = target_velocity(item.x, eps, t, schedule);
        const Tensor v_pred = model.forward_velocity(x_t, t, item.caption);
        const Tensor item_loss = cfm_loss(v_pred, u);
        total = total.defined() ? add(total, item_loss) : item_loss;
    }
    const Tensor loss = scale(total, 1.0 / static_cast<double>(batch.size()));
    const double value = loss.item();
    if (!std::isfinite(value))
        throw std::runtime_error("train_step: non-finite loss; parameters left untouched");
    backward(loss);
    optim.step(model.parameters());
    return value;
}

}  // namespace soundflow
