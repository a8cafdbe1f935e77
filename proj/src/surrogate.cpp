#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ihanas/rng.hpp"
#include "ihanas/surrogate.hpp"

namespace ihanas {

namespace {

std::array<double, kFieldCount> raw_fields(const LayerGene& l, const GlobalConfig& g) {
    return {double(l.n_h), double(l.n_kv),  double(l.d_qk),    double(l.d_v),        double(l.d_mlp),
            double(l.mask), double(l.attn), double(g.d_model), double(g.block_size)};
}

}  // namespace

FieldNormalizer FieldNormalizer::fit(std::span<const ArchGenome> train) {
    FieldNormalizer n;
    n.lo.fill(std::numeric_limits<double>::infinity());
    n.hi.fill(-std::numeric_limits<double>::infinity());
    bool any = false;
    for (const auto& g : train) {
        for (const auto& l : g.layers) {
            if (!l.mask) continue;
            any = true;
            const auto f = raw_fields(l, g.global);
            for (int i = 0; i < kFieldCount; ++i) {
                n.lo[i] = std::min(n.lo[i], f[i]);
                n.hi[i] = std::max(n.hi[i], f[i]);
            }
        }
    }
    if (!any) throw std::domain_error("FieldNormalizer::fit: no active layers in the training split");
    return n;
}

double FieldNormalizer::apply(int field, double value) const {
    const double span = hi[field] - lo[field];
    return span > 0.0 ? (value - lo[field]) / span : 0.0;
}

int FeatureSequence::active() const {
    return static_cast<int>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

FeatureSequence featurize(const ArchGenome& g, const FieldNormalizer& norm, int max_len) {
    FeatureSequence s;
    s.tokens = Eigen::MatrixXd::Zero(max_len, kFieldCount);
    s.valid.assign(static_cast<std::size_t>(max_len), 0);
    int row = 0;
    for (const auto& l : g.layers) {
        if (!l.mask) continue;
        if (row == max_len) throw std::domain_error("featurize: more active layers than max_len");
        const auto f = raw_fields(l, g.global);
        for (int i = 0; i < kFieldCount; ++i) s.tokens(row, i) = norm.apply(i, f[i]);
        s.valid[static_cast<std::size_t>(row)] = 1;
        ++row;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json normalizer_json(const FieldNormalizer& n) { return {{"lo", n.lo}, {"hi", n.hi}}; }

FieldNormalizer normalizer_from(const nlohmann::json& j) {
    FieldNormalizer n;
    n.lo = j.at("lo").get<std::array<double, kFieldCount>>();
    n.hi = j.at("hi").get<std::array<double, kFieldCount>>();
    return n;
}

}  // namespace

nlohmann::json EncoderSurrogate::to_json() const {
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& t : layout_) shapes.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    return {{"kind", "encoder"},
            {"hyper",
             {{"d_enc", hyper_.d_enc},
              {"n_blocks", hyper_.n_blocks},
              {"n_heads", hyper_.n_heads},
              {"ffn_mult", hyper_.ffn_mult},
              {"dropout", hyper_.dropout},
              {"max_len", hyper_.max_len}}},
            {"normalizer", normalizer_json(norm_)},
            {"tensors", shapes},
            {"params", params_}};
}

EncoderSurrogate EncoderSurrogate::from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "encoder") throw std::invalid_argument("checkpoint: kind must be 'encoder'");
    const auto& h = j.at("hyper");
    EncoderHyper hy;
    hy.d_enc = h.at("d_enc").get<int>();
    hy.n_blocks = h.at("n_blocks").get<int>();
    hy.n_heads = h.at("n_heads").get<int>();
    hy.ffn_mult = h.at("ffn_mult").get<int>();
    hy.dropout = h.at("dropout").get<double>();
    hy.max_len = h.at("max_len").get<int>();
    EncoderSurrogate s(hy, normalizer_from(j.at("normalizer")), 0);
    auto p = j.at("params").get<std::vector<double>>();
    if (p.size() != s.params_.size())
        throw std::invalid_argument("checkpoint: expected " + std::to_string(s.params_.size()) +
                                    " parameters, found " + std::to_string(p.size()));
    const auto& shapes = j.at("tensors");
    if (shapes.size() != s.layout_.size()) throw std::invalid_argument("checkpoint: tensor table mismatch");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const auto& t = s.layout_[i];
        if (shapes[i].at("name") != t.name || shapes[i].at("rows") != t.rows || shapes[i].at("cols") != t.cols)
            throw std::invalid_argument("checkpoint: tensor '" + t.name + "' has the wrong shape");
    }
    s.params_.assign(p.begin(), p.end());
    return s;
}

void save_checkpoint(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump() << '\n';
}

nlohmann::json load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Training

std::vector<Sample> make_samples(const LabeledCorpus& c, std::span<const std::size_t> idx,
                                 const FieldNormalizer& norm, int max_len) {
    std::vector<Sample> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back({featurize(c.rows[i].genome, norm, max_len), c.rows[i].val_loss});
    return out;
}

namespace {

class AdamW {
public:
    AdamW(std::size_t n, AdamWConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    void step(ParamVector& p, const ParamVector& g) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mh = m_[i] / c1;
            const double vh = v_[i] / c2;
            p[i] -= cfg_.lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * p[i]);
        }
    }

private:
    AdamWConfig cfg_;
    std::vector<double> m_, v_;
    int t_ = 0;
};

template <class Model>
double eval_l1(const Model& m, std::span<const Sample> set) {
    return set.empty() ? 0.0 : m.loss_and_grad(set, nullptr);
}

template <class Model>
TrainReport train_impl(Model& model, std::span<const Sample> train_set, std::span<const Sample> test_set,
                       const TrainConfig& cfg) {
    if (train_set.empty()) throw std::domain_error("train: empty training split");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    TrainReport rep;
    rep.initial_train_l1 = eval_l1(model, train_set);
    rep.initial_test_l1 = eval_l1(model, test_set);
    rep.best_test_l1 = std::numeric_limits<double>::infinity();

    AdamW opt(model.params().size(), cfg.optimizer);
    ParamVector grad;
    ParamVector best = model.params();
    std::vector<std::size_t> order(train_set.size());
    std::vector<Sample> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order.begin(), order.end());
        const auto bs = static_cast<std::size_t>(cfg.batch_size);
        for (std::size_t start = 0, b = 0; start < order.size(); start += bs, ++b) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i)
                batch.push_back(train_set[order[i]]);
            const ForwardMode mode{true, mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)), b)};
            model.loss_and_grad(batch, &grad, mode);
            opt.step(model.params(), grad);
        }
        rep.train_l1.push_back(eval_l1(model, train_set));
        rep.test_l1.push_back(eval_l1(model, test_set));
        // without a test split the train curve picks the checkpoint
        const double score = test_set.empty() ? rep.train_l1.back() : rep.test_l1.back();
        if (score < rep.best_test_l1) {
            rep.best_test_l1 = score;
            rep.best_epoch = epoch;
            best = model.params();
        }
    }
    if (cfg.keep_best && rep.best_epoch >= 0) model.params() = best;
    if (rep.best_epoch < 0) rep.best_test_l1 = test_set.empty() ? rep.initial_train_l1 : rep.initial_test_l1;
    return rep;
}

double median_label(const LabeledCorpus& c) {
    std::vector<double> y;
    for (std::size_t i : c.train) y.push_back(c.rows[i].val_loss);
    if (y.empty()) throw std::domain_error("train: empty training split");
    const auto mid = y.begin() + static_cast<std::ptrdiff_t>(y.size() / 2);
    std::nth_element(y.begin(), mid, y.end());
    return *mid;
}

}  // namespace

TrainReport train(EncoderSurrogate& s, std::span<const Sample> train_set, std::span<const Sample> test_set,
                  const TrainConfig& cfg) {
    return train_impl(s, train_set, test_set, cfg);
}

TrainReport train(MlpSurrogate& s, std::span<const Sample> train_set, std::span<const Sample> test_set,
                  const TrainConfig& cfg) {
    return train_impl(s, train_set, test_set, cfg);
}

EncoderSurrogate train_encoder(const LabeledCorpus& c, const EncoderHyper& hyper, const TrainConfig& cfg,
                               TrainReport* report) {
    const double bias = median_label(c);
    const auto train_g = c.genomes(c.train);
    EncoderSurrogate s(hyper, FieldNormalizer::fit(train_g), mix_seed(cfg.seed, 1));
    s.set_output_bias(bias);
    const auto tr = make_samples(c, c.train, s.normalizer(), hyper.max_len);
    const auto te = make_samples(c, c.test, s.normalizer(), hyper.max_len);
    auto rep = train(s, tr, te, cfg);
    if (report) *report = std::move(rep);
    return s;
}

MlpSurrogate mlp_baseline_train(const LabeledCorpus& c, const TrainConfig& cfg, int hidden, int max_len,
                                TrainReport* report) {
    const double bias = median_label(c);
    const auto train_g = c.genomes(c.train);
    MlpSurrogate s(max_len, hidden, FieldNormalizer::fit(train_g), mix_seed(cfg.seed, 1));
    s.set_output_bias(bias);
    const auto tr = make_samples(c, c.train, s.normalizer(), max_len);
    const auto te = make_samples(c, c.test, s.normalizer(), max_len);
    auto rep = train(s, tr, te, cfg);
    if (report) *report = std::move(rep);
    return s;
}

// ---------------------------------------------------------------------------
// MC dropout and refinement

McPrediction mc_predict(const EncoderSurrogate& s, const FeatureSequence& x, int n_mc, std::uint64_t seed) {
    if (n_mc < 1) throw std::invalid_argument("mc_predict: n_mc must be >= 1");
    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < n_mc; ++i) {
        const double y = s.forward(x, {true, mix_seed(seed, static_cast<std::uint64_t>(i))});
        const double delta = y - mean;
        mean += delta / (i + 1);
        m2 += delta * (y - mean);
    }
    return {mean, n_mc > 1 ? std::sqrt(std::max(0.0, m2 / (n_mc - 1))) : 0.0};
}

ReplayMix replay_mix(int batch_size, double rho) {
    if (batch_size < 1) throw std::invalid_argument("replay_mix: batch_size must be >= 1");
    if (!(rho >= 0.0)) throw std::invalid_argument("replay_mix: replay ratio must be >= 0");
    const int fresh = std::max(1, static_cast<int>(std::floor(batch_size / (rho + 1.0))));
    return {batch_size - fresh, fresh};
}

EncoderSurrogate fine_tune(const EncoderSurrogate& baseline, std::span<const LabeledArch> buffer,
                           std::span<const LabeledArch> corpus, const FineTuneConfig& cfg) {
    const int max_len = baseline.hyper().max_len;
    std::vector<Sample> fresh, old;
    for (const auto& r : buffer)
        if (std::isfinite(r.val_loss)) fresh.push_back({baseline.features(r.genome), r.val_loss});
    if (fresh.empty()) throw std::domain_error("fine_tune: no finite-labelled rows in the buffer");
    for (const auto& r : corpus)
        if (std::isfinite(r.val_loss)) old.push_back({featurize(r.genome, baseline.normalizer(), max_len), r.val_loss});

    EncoderSurrogate s = baseline;
    AdamWConfig oc;
    oc.lr = cfg.lr;
    AdamW opt(s.params().size(), oc);
    ParamVector grad;
    const ReplayMix mix = old.empty() ? ReplayMix{0, cfg.batch_size} : replay_mix(cfg.batch_size, cfg.replay_ratio);
    std::vector<std::size_t> old_order(old.size()), new_order(fresh.size());
    std::vector<Sample> batch;
    std::size_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = 0; i < old_order.size(); ++i) old_order[i] = i;
        for (std::size_t i = 0; i < new_order.size(); ++i) new_order[i] = i;
        rng.shuffle(old_order.begin(), old_order.end());
        rng.shuffle(new_order.begin(), new_order.end());
        // one pass over the old corpus; buffer rows cycle
        const std::size_t n_old = static_cast<std::size_t>(mix.old_rows);
        const std::size_t n_new = static_cast<std::size_t>(mix.new_rows);
        const std::size_t batches =
            n_old > 0 ? (old.size() + n_old - 1) / n_old : (fresh.size() + n_new - 1) / n_new;
        std::size_t cursor = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            batch.clear();
            for (std::size_t i = b * n_old; i < std::min(old.size(), (b + 1) * n_old); ++i)
                batch.push_back(old[old_order[i]]);
            for (std::size_t k = 0; k < n_new; ++k) batch.push_back(fresh[new_order[cursor++ % fresh.size()]]);
            s.loss_and_grad(batch, &grad, {true, mix_seed(cfg.seed ^ 0x5a5aULL, step++)});
            opt.step(s.params(), grad);
        }
    }
    return s;
}

}  // namespace ihanas
