#include "gridmtl/mtl.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridmtl/metrics.hpp"

namespace gridmtl {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "model files use little-endian parameter blobs");

namespace {

constexpr double kProbEps = 1e-12;

enum class Act { Relu, Sigmoid, Linear };

MatrixXd apply_act(Act act, const MatrixXd& z) {
    switch (act) {
        case Act::Relu: return z.cwiseMax(0.0);
        case Act::Sigmoid: return ((-z.array()).exp() + 1.0).inverse().matrix();
        case Act::Linear: return z;
    }
    return z;
}

struct StackCache {
    std::vector<MatrixXd> z;    // pre-activation per layer
    std::vector<MatrixXd> a;    // a[0] = input, a[i+1] = layer i output after dropout
    std::vector<MatrixXd> mask; // scaled inverted-dropout mask per layer (empty = none)
};

StackCache forward_stack(const Stack& stack, const MatrixXd& input, Act final_act,
                         bool dropout_final, double rate, std::mt19937_64* rng) {
    StackCache cache;
    cache.a.push_back(input);
    cache.mask.resize(stack.size());
    const std::size_t last = stack.size() - 1;
    for (std::size_t i = 0; i < stack.size(); ++i) {
        MatrixXd z = (stack[i].w * cache.a.back()).colwise() + stack[i].b;
        MatrixXd a = apply_act(i == last ? final_act : Act::Relu, z);
        const bool drop = rng && rate > 0.0 && (i < last || dropout_final);
        if (drop) {
            std::bernoulli_distribution keep(1.0 - rate);
            MatrixXd m(a.rows(), a.cols());
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                for (Eigen::Index r = 0; r < m.rows(); ++r)
                    m(r, c) = keep(*rng) ? 1.0 / (1.0 - rate) : 0.0;
            a = a.cwiseProduct(m);
            cache.mask[i] = std::move(m);
        }
        cache.z.push_back(std::move(z));
        cache.a.push_back(std::move(a));
    }
    return cache;
}

/// Backward through a stack given the gradient w.r.t. the final
/// pre-activation. Returns the gradient w.r.t. the stack input.
MatrixXd backward_stack(const Stack& stack, const StackCache& cache, MatrixXd dz, Stack& grads) {
    grads.resize(stack.size());
    for (std::size_t ii = stack.size(); ii-- > 0;) {
        grads[ii].w = dz * cache.a[ii].transpose();
        grads[ii].b = dz.rowwise().sum();
        MatrixXd da = stack[ii].w.transpose() * dz;
        if (ii == 0) return da;
        if (cache.mask[ii - 1].size()) da = da.cwiseProduct(cache.mask[ii - 1]);
        dz = da.cwiseProduct((cache.z[ii - 1].array() > 0.0).cast<double>().matrix());
    }
    return {};
}

double sum_squares(const Stack& stack) {
    double s = 0.0;
    for (const auto& l : stack) s += l.w.squaredNorm() + l.b.squaredNorm();
    return s;
}

struct ForwardState {
    StackCache enc, rec;
    std::vector<StackCache> heads;
    MatrixXd latent, xhat, probs; // probs: n_tasks x N
};

ForwardState forward_all(const MtlModel& model, const Batch& batch, std::mt19937_64* rng) {
    ForwardState fs;
    const double rate = model.cfg.dropout_rate;
    MatrixXd enc_in(batch.x.rows() + batch.c.rows(), batch.size());
    enc_in << batch.x, batch.c;
    fs.enc = forward_stack(model.encoder, enc_in, Act::Relu, /*dropout_final=*/true, rate, rng);
    fs.latent = fs.enc.a.back();

    MatrixXd rec_in(fs.latent.rows() + batch.c.rows(), batch.size());
    rec_in << fs.latent, batch.c;
    fs.rec = forward_stack(model.recon, rec_in, Act::Linear, false, rate, rng);
    fs.xhat = fs.rec.a.back();

    const auto n_tasks = static_cast<Eigen::Index>(model.tasks.size());
    fs.probs.resize(n_tasks, batch.size());
    if (model.cfg.head_mode == HeadMode::SingleJoint) {
        fs.heads.push_back(forward_stack(model.heads[0], fs.latent, Act::Sigmoid, false, rate, rng));
        fs.probs = fs.heads.back().a.back();
    } else {
        for (Eigen::Index t = 0; t < n_tasks; ++t) {
            fs.heads.push_back(forward_stack(model.heads[t], fs.latent, Act::Sigmoid, false, rate, rng));
            fs.probs.row(t) = fs.heads.back().a.back();
        }
    }
    return fs;
}

VectorXd effective_alpha(const MtlModel& model, WeightingMode mode,
                         const std::array<double, 4>& task_weights) {
    const auto n = static_cast<Eigen::Index>(model.tasks.size());
    VectorXd alpha(n);
    for (Eigen::Index t = 0; t < n; ++t)
        alpha[t] = mode == WeightingMode::Adaptive ? 0.5 * std::exp(-model.log_sigma_sq[t])
                                                   : task_weights[model.tasks[t]];
    return alpha;
}

LossBreakdown compute_loss(const MtlModel& model, const Batch& batch, const ForwardState& fs,
                           WeightingMode mode, const std::array<double, 4>& task_weights) {
    const auto n_tasks = static_cast<Eigen::Index>(model.tasks.size());
    const double n = static_cast<double>(batch.size());
    LossBreakdown out;
    out.task_bce.setZero(n_tasks);
    out.task_alpha = effective_alpha(model, mode, task_weights);

    for (Eigen::Index t = 0; t < n_tasks; ++t) {
        double beta = model.class_beta[t];
        double acc = 0.0;
        for (Eigen::Index i = 0; i < batch.size(); ++i) {
            double y = std::clamp(fs.probs(t, i), kProbEps, 1.0 - kProbEps);
            double yt = batch.y(t, i);
            acc += -(beta * yt * std::log(y) + (1.0 - beta) * (1.0 - yt) * std::log(1.0 - y));
        }
        out.task_bce[t] = acc / n;
    }
    out.recon = (batch.x - fs.xhat).squaredNorm() / n;

    double ss = sum_squares(model.encoder);
    for (const auto& head : model.heads) ss += sum_squares(head);
    out.l2 = model.cfg.l2_lambda * ss;

    if (mode == WeightingMode::Adaptive) out.sigma_penalty = 0.5 * model.log_sigma_sq.sum();
    out.total = out.task_alpha.dot(out.task_bce) + model.cfg.recon_weight * out.recon + out.l2 +
                out.sigma_penalty;
    return out;
}

void accumulate_l2(const MtlModel& model, Gradients& g) {
    const double two_lambda = 2.0 * model.cfg.l2_lambda;
    if (two_lambda == 0.0) return;
    for (std::size_t i = 0; i < model.encoder.size(); ++i) {
        g.encoder[i].w += two_lambda * model.encoder[i].w;
        g.encoder[i].b += two_lambda * model.encoder[i].b;
    }
    for (std::size_t h = 0; h < model.heads.size(); ++h)
        for (std::size_t i = 0; i < model.heads[h].size(); ++i) {
            g.heads[h][i].w += two_lambda * model.heads[h][i].w;
            g.heads[h][i].b += two_lambda * model.heads[h][i].b;
        }
}

Stack zeros_like(const Stack& s) {
    Stack z(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        z[i].w = MatrixXd::Zero(s[i].w.rows(), s[i].w.cols());
        z[i].b = VectorXd::Zero(s[i].b.size());
    }
    return z;
}

Gradients zeros_like(const MtlModel& model) {
    Gradients g;
    g.encoder = zeros_like(model.encoder);
    g.recon = zeros_like(model.recon);
    for (const auto& h : model.heads) g.heads.push_back(zeros_like(h));
    g.log_sigma_sq = VectorXd::Zero(model.log_sigma_sq.size());
    return g;
}

template <typename Mat>
void adam_update(Mat& p, const Mat& g, Mat& m, Mat& v, double eta, const TrainConfig& cfg, long step) {
    m = cfg.adam_b1 * m + (1.0 - cfg.adam_b1) * g;
    v = cfg.adam_b2 * v + (1.0 - cfg.adam_b2) * g.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(cfg.adam_b1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.adam_b2, static_cast<double>(step));
    p -= eta * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_eps)).matrix();
}

} // namespace

std::vector<int> ModelConfig::mirrored_recon_layers() const {
    if (!recon_layers.empty()) return recon_layers;
    std::vector<int> mirror(encoder_layers.rbegin() + 1, encoder_layers.rend());
    return mirror; // hidden widths only; the linear output layer is implied
}

std::vector<int> ModelConfig::task_ids() const {
    std::vector<int> ids;
    for (int t = 0; t < 4; ++t)
        if (active_tasks[t]) ids.push_back(t);
    return ids;
}

std::size_t MtlModel::parameter_count() const {
    std::size_t n = 0;
    auto count = [&n](const Stack& s) {
        for (const auto& l : s) n += static_cast<std::size_t>(l.w.size() + l.b.size());
    };
    count(encoder);
    count(recon);
    for (const auto& h : heads) count(h);
    return n;
}

MtlModel init_model(const ModelConfig& cfg, int feature_dim, int cond_dim) {
    if (feature_dim <= 0 || cond_dim < 0) throw ValidationError("bad model dimensions");
    if (cfg.encoder_layers.empty()) throw ValidationError("encoder needs at least one layer");
    if (cfg.task_layers.empty() || cfg.task_layers.back() != 1)
        throw ValidationError("task decoder stacks must end in width 1");
    if (cfg.task_ids().empty()) throw ValidationError("at least one task must be active");

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss;
    auto he_layer = [&](int out, int in) {
        LayerParams l;
        l.w.resize(out, in);
        const double std_dev = std::sqrt(2.0 / static_cast<double>(in));
        for (Eigen::Index c = 0; c < l.w.cols(); ++c)
            for (Eigen::Index r = 0; r < l.w.rows(); ++r) l.w(r, c) = std_dev * gauss(rng);
        l.b = VectorXd::Zero(out);
        return l;
    };
    auto build = [&](int in, const std::vector<int>& widths) {
        Stack s;
        for (int w : widths) {
            s.push_back(he_layer(w, in));
            in = w;
        }
        return s;
    };

    MtlModel model;
    model.cfg = cfg;
    model.feature_dim = feature_dim;
    model.cond_dim = cond_dim;
    model.tasks = cfg.task_ids();

    model.encoder = build(feature_dim + cond_dim, cfg.encoder_layers);

    std::vector<int> rec = cfg.mirrored_recon_layers();
    rec.push_back(feature_dim);
    model.recon = build(cfg.latent_dim() + cond_dim, rec);

    const auto n_tasks = static_cast<Eigen::Index>(model.tasks.size());
    if (cfg.head_mode == HeadMode::SingleJoint) {
        std::vector<int> widths = cfg.task_layers;
        widths.back() = static_cast<int>(n_tasks);
        model.heads.push_back(build(cfg.latent_dim(), widths));
    } else {
        for (Eigen::Index t = 0; t < n_tasks; ++t) model.heads.push_back(build(cfg.latent_dim(), cfg.task_layers));
    }

    model.log_sigma_sq = VectorXd::Zero(n_tasks);
    model.class_beta = VectorXd::Constant(n_tasks, 0.5);
    return model;
}

Eigen::VectorXd encode(const MtlModel& model, const VectorXd& x, const VectorXd& c) {
    if (x.size() != model.feature_dim || c.size() != model.cond_dim)
        throw ValidationError("encode: input dimensions do not match the model");
    MatrixXd in(x.size() + c.size(), 1);
    in << x, c;
    return forward_stack(model.encoder, in, Act::Relu, true, 0.0, nullptr).a.back().col(0);
}

Eigen::VectorXd reconstruct(const MtlModel& model, const VectorXd& h, const VectorXd& c) {
    if (h.size() != model.cfg.latent_dim() || c.size() != model.cond_dim)
        throw ValidationError("reconstruct: input dimensions do not match the model");
    MatrixXd in(h.size() + c.size(), 1);
    in << h, c;
    return forward_stack(model.recon, in, Act::Linear, false, 0.0, nullptr).a.back().col(0);
}

double decode_task(const MtlModel& model, const VectorXd& h, int task) {
    auto it = std::find(model.tasks.begin(), model.tasks.end(), task);
    if (it == model.tasks.end()) throw ValidationError("task " + std::to_string(task) + " is not active");
    const auto pos = static_cast<Eigen::Index>(it - model.tasks.begin());
    MatrixXd in = h;
    if (model.cfg.head_mode == HeadMode::SingleJoint)
        return forward_stack(model.heads[0], in, Act::Sigmoid, false, 0.0, nullptr).a.back()(pos, 0);
    return forward_stack(model.heads[pos], in, Act::Sigmoid, false, 0.0, nullptr).a.back()(0, 0);
}

double task_loss(double y, double y_true, double beta) {
    double yc = std::clamp(y, kProbEps, 1.0 - kProbEps);
    return -(beta * y_true * std::log(yc) + (1.0 - beta) * (1.0 - y_true) * std::log(1.0 - yc));
}

LossBreakdown total_loss(const MtlModel& model, const Batch& batch, WeightingMode mode,
                         const std::array<double, 4>& task_weights) {
    ForwardState fs = forward_all(model, batch, nullptr);
    return compute_loss(model, batch, fs, mode, task_weights);
}

std::pair<LossBreakdown, Gradients> backward(const MtlModel& model, const Batch& batch,
                                             WeightingMode mode,
                                             const std::array<double, 4>& task_weights,
                                             std::mt19937_64* dropout_rng) {
    ForwardState fs = forward_all(model, batch, dropout_rng);
    LossBreakdown loss = compute_loss(model, batch, fs, mode, task_weights);

    const auto n_tasks = static_cast<Eigen::Index>(model.tasks.size());
    const double n = static_cast<double>(batch.size());
    Gradients g;
    g.heads.resize(model.heads.size());

    // d(total)/d(final head pre-activation): the sigmoid and the clamp-free
    // BCE derivative fold into a saturation-safe expression.
    MatrixXd dy(n_tasks, batch.size());
    for (Eigen::Index t = 0; t < n_tasks; ++t) {
        const double beta = model.class_beta[t];
        const double scale = loss.task_alpha[t] / n;
        for (Eigen::Index i = 0; i < batch.size(); ++i) {
            double y = fs.probs(t, i);
            double yt = batch.y(t, i);
            dy(t, i) = scale * (-(beta * yt * (1.0 - y)) + (1.0 - beta) * (1.0 - yt) * y);
        }
    }

    MatrixXd dlatent = MatrixXd::Zero(fs.latent.rows(), fs.latent.cols());
    if (model.cfg.head_mode == HeadMode::SingleJoint) {
        dlatent += backward_stack(model.heads[0], fs.heads[0], dy, g.heads[0]);
    } else {
        for (Eigen::Index t = 0; t < n_tasks; ++t)
            dlatent += backward_stack(model.heads[t], fs.heads[t], dy.row(t), g.heads[t]);
    }

    MatrixXd dxhat = (2.0 * model.cfg.recon_weight / n) * (fs.xhat - batch.x);
    MatrixXd drec_in = backward_stack(model.recon, fs.rec, std::move(dxhat), g.recon);
    dlatent += drec_in.topRows(fs.latent.rows());

    // The latent is the encoder's (possibly dropped) final activation.
    const std::size_t last = model.encoder.size() - 1;
    if (fs.enc.mask[last].size()) dlatent = dlatent.cwiseProduct(fs.enc.mask[last]);
    MatrixXd dz_enc = dlatent.cwiseProduct((fs.enc.z[last].array() > 0.0).cast<double>().matrix());
    backward_stack(model.encoder, fs.enc, std::move(dz_enc), g.encoder);

    accumulate_l2(model, g);

    g.log_sigma_sq = VectorXd::Zero(n_tasks);
    if (mode == WeightingMode::Adaptive)
        for (Eigen::Index t = 0; t < n_tasks; ++t)
            g.log_sigma_sq[t] = -loss.task_alpha[t] * loss.task_bce[t] + 0.5;

    return {loss, g};
}

void adam_step(MtlModel& model, const Gradients& grads, AdamState& state, double eta,
               const TrainConfig& cfg, bool update_sigma) {
    if (state.step == 0) {
        state.m = zeros_like(model);
        state.v = zeros_like(model);
    }
    ++state.step;
    auto update_stack = [&](Stack& params, const Stack& g, Stack& m, Stack& v) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            adam_update(params[i].w, g[i].w, m[i].w, v[i].w, eta, cfg, state.step);
            adam_update(params[i].b, g[i].b, m[i].b, v[i].b, eta, cfg, state.step);
        }
    };
    update_stack(model.encoder, grads.encoder, state.m.encoder, state.v.encoder);
    update_stack(model.recon, grads.recon, state.m.recon, state.v.recon);
    for (std::size_t h = 0; h < model.heads.size(); ++h)
        update_stack(model.heads[h], grads.heads[h], state.m.heads[h], state.v.heads[h]);
    if (update_sigma)
        adam_update(model.log_sigma_sq, grads.log_sigma_sq, state.m.log_sigma_sq,
                    state.v.log_sigma_sq, eta, cfg, state.step);
}

double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw ValidationError("epoch index must be non-negative");
    return cfg.eta0 * std::pow(cfg.gamma, static_cast<double>(epoch) / static_cast<double>(cfg.k_s));
}

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices,
                 const std::vector<int>& tasks) {
    if (indices.empty()) throw ValidationError("empty batch");
    const Eigen::Index m = ds.samples.front().x.size();
    const Eigen::Index k = ds.samples.front().c.size();
    Batch b;
    b.x.resize(m, static_cast<Eigen::Index>(indices.size()));
    b.c.resize(k, static_cast<Eigen::Index>(indices.size()));
    b.y.resize(static_cast<Eigen::Index>(tasks.size()), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const Sample& s = ds.samples[indices[j]];
        b.x.col(static_cast<Eigen::Index>(j)) = s.x;
        b.c.col(static_cast<Eigen::Index>(j)) = s.c;
        for (std::size_t t = 0; t < tasks.size(); ++t)
            b.y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = s.y.bit(tasks[t]);
    }
    return b;
}

Eigen::MatrixXd predict_probs(const MtlModel& model, const MatrixXd& x_norm, const MatrixXd& c) {
    Batch b;
    b.x = x_norm;
    b.c = c;
    b.y = MatrixXd::Zero(static_cast<Eigen::Index>(model.tasks.size()), x_norm.cols());
    return forward_all(model, b, nullptr).probs;
}

std::pair<MtlModel, TrainReport> train(const Dataset& train_ds, const TrainConfig& tcfg,
                                       const ModelConfig& mcfg) {
    if (!train_ds.norm_stats) throw ValidationError("training requires a normalized dataset");
    if (train_ds.samples.empty()) throw ValidationError("training dataset is empty");

    TrainReport report;
    report.tasks = mcfg.task_ids();

    // Validation carve-out, stratified like the dataset split.
    SplitResult carve = split(train_ds, tcfg.val_fraction, tcfg.seed);
    Dataset fit = std::move(carve.train);
    Dataset val = std::move(carve.test);
    for (auto& w : carve.warnings) report.warnings.push_back(w);
    if (val.samples.empty()) {
        report.warnings.push_back("stratified validation split empty; falling back to unstratified");
        fit = train_ds;
        val = train_ds;
        val.samples.clear();
        std::vector<std::size_t> idx(train_ds.samples.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937_64 rng(tcfg.seed ^ 0x9e3779b97f4a7c15ull);
        std::shuffle(idx.begin(), idx.end(), rng);
        auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(
                                                  tcfg.val_fraction * static_cast<double>(idx.size()))));
        fit.samples.clear();
        for (std::size_t j = 0; j < idx.size(); ++j)
            (j < n_val ? val : fit).samples.push_back(train_ds.samples[idx[j]]);
    }

    const int m = static_cast<int>(fit.samples.front().x.size());
    const int k = static_cast<int>(fit.samples.front().c.size());
    MtlModel model = init_model(mcfg, m, k);
    model.norm_stats = train_ds.norm_stats;
    model.schema_hash = train_ds.schema_hash();

    // Class weights frozen from the fit-split label frequencies.
    for (std::size_t t = 0; t < model.tasks.size(); ++t) {
        double beta = 0.5;
        if (tcfg.class_weighting) {
            long neg = 0;
            for (const auto& s : fit.samples) neg += s.y.bit(model.tasks[t]) == 0 ? 1 : 0;
            beta = static_cast<double>(neg) / static_cast<double>(fit.samples.size());
            beta = std::clamp(beta, 1e-3, 1.0 - 1e-3);
        }
        model.class_beta[static_cast<Eigen::Index>(t)] = beta;
    }

    std::vector<std::size_t> val_idx(val.samples.size());
    std::iota(val_idx.begin(), val_idx.end(), 0);
    Batch val_batch = make_batch(val, val_idx, model.tasks);

    AdamState adam;
    std::mt19937_64 shuffle_rng(tcfg.seed ^ 0x2545f4914f6cdd1dull);
    std::mt19937_64 dropout_rng(tcfg.seed ^ 0x853c49e6748fea9bull);
    const bool adaptive = tcfg.weighting == WeightingMode::Adaptive;

    struct Snapshot {
        Stack encoder, recon;
        std::vector<Stack> heads;
        VectorXd log_sigma_sq;
    };
    Snapshot best;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1, wait = 0;

    std::vector<std::size_t> order(fit.samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        const double eta = lr_at(epoch, tcfg);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        LossBreakdown train_acc;
        train_acc.task_bce.setZero(static_cast<Eigen::Index>(model.tasks.size()));
        train_acc.task_alpha.setZero(static_cast<Eigen::Index>(model.tasks.size()));
        long seen = 0;

        for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + tcfg.batch_size);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
            Batch batch = make_batch(fit, idx, model.tasks);
            auto [loss, grads] = backward(model, batch, tcfg.weighting, tcfg.task_weights,
                                          model.cfg.dropout_rate > 0 ? &dropout_rng : nullptr);
            adam_step(model, grads, adam, eta, tcfg, adaptive);

            const auto bs = static_cast<double>(idx.size());
            train_acc.total += loss.total * bs;
            train_acc.task_bce += loss.task_bce * bs;
            train_acc.task_alpha += loss.task_alpha * bs;
            train_acc.recon += loss.recon * bs;
            train_acc.l2 += loss.l2 * bs;
            train_acc.sigma_penalty += loss.sigma_penalty * bs;
            seen += static_cast<long>(idx.size());
        }
        const double inv = 1.0 / static_cast<double>(seen);
        train_acc.total *= inv;
        train_acc.task_bce *= inv;
        train_acc.task_alpha *= inv;
        train_acc.recon *= inv;
        train_acc.l2 *= inv;
        train_acc.sigma_penalty *= inv;

        EpochRow row;
        row.epoch = epoch;
        row.lr = eta;
        row.train = train_acc;
        LossBreakdown val_loss = total_loss(model, val_batch, tcfg.weighting, tcfg.task_weights);
        row.val_total = val_loss.total;

        // Validation F2 per task plus the conjunction-level score.
        MatrixXd probs = predict_probs(model, val_batch.x, val_batch.c);
        const auto n_tasks = static_cast<Eigen::Index>(model.tasks.size());
        row.val_f2.resize(n_tasks);
        Confusion overall;
        std::vector<Confusion> conf(model.tasks.size());
        for (Eigen::Index i = 0; i < val_batch.size(); ++i) {
            bool pred_all = true, true_all = true;
            for (Eigen::Index t = 0; t < n_tasks; ++t) {
                bool pred_secure = probs(t, i) >= model.cfg.decision_threshold;
                bool true_secure = val_batch.y(t, i) > 0.5;
                conf[static_cast<std::size_t>(t)].add(!pred_secure, !true_secure);
                pred_all = pred_all && pred_secure;
                true_all = true_all && true_secure;
            }
            overall.add(!pred_all, !true_all);
        }
        for (Eigen::Index t = 0; t < n_tasks; ++t) row.val_f2[t] = f2_of(conf[static_cast<std::size_t>(t)]);
        row.val_f2_overall = f2_of(overall);
        report.epochs.push_back(row);

        if (row.val_total < best_val) {
            best_val = row.val_total;
            best_epoch = epoch;
            best = Snapshot{model.encoder, model.recon, model.heads, model.log_sigma_sq};
            wait = 0;
        } else if (++wait >= tcfg.patience) {
            break;
        }
    }

    if (best_epoch >= 0) {
        model.encoder = std::move(best.encoder);
        model.recon = std::move(best.recon);
        model.heads = std::move(best.heads);
        model.log_sigma_sq = std::move(best.log_sigma_sq);
    }
    report.best_epoch = best_epoch;
    return {std::move(model), std::move(report)};
}

Prediction predict(const MtlModel& model, const VectorXd& x_raw, const VectorXd& c) {
    if (!model.norm_stats) throw SchemaError("model carries no normalization statistics");
    if (x_raw.size() != model.feature_dim || c.size() != model.cond_dim)
        throw SchemaError("prediction input dimensions do not match the model");

    VectorXd x = (x_raw - model.norm_stats->mean).cwiseQuotient(model.norm_stats->stdev);
    Prediction out;
    out.latent = encode(model, x, c);
    VectorXd xhat = reconstruct(model, out.latent, c);
    out.recon_error = (x - xhat).squaredNorm();

    const auto n_tasks = static_cast<Eigen::Index>(model.tasks.size());
    out.prob.resize(n_tasks);
    out.label.resize(model.tasks.size());
    bool all = true;
    for (Eigen::Index t = 0; t < n_tasks; ++t) {
        out.prob[t] = decode_task(model, out.latent, model.tasks[static_cast<std::size_t>(t)]);
        out.label[static_cast<std::size_t>(t)] = out.prob[t] >= model.cfg.decision_threshold ? 1 : 0;
        all = all && out.label[static_cast<std::size_t>(t)] == 1;
    }
    out.overall_secure = all;
    return out;
}

// --- persistence ---

namespace {

json model_config_json(const ModelConfig& cfg) {
    return json{{"encoder_layers", cfg.encoder_layers},
                {"recon_layers", cfg.recon_layers},
                {"task_layers", cfg.task_layers},
                {"dropout_rate", cfg.dropout_rate},
                {"l2_lambda", cfg.l2_lambda},
                {"recon_weight", cfg.recon_weight},
                {"decision_threshold", cfg.decision_threshold},
                {"head_mode", cfg.head_mode == HeadMode::SingleJoint ? "joint" : "multi"},
                {"active_tasks", std::vector<int>{cfg.active_tasks[0], cfg.active_tasks[1],
                                                  cfg.active_tasks[2], cfg.active_tasks[3]}},
                {"seed", cfg.seed}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.encoder_layers = j.at("encoder_layers").get<std::vector<int>>();
    cfg.recon_layers = j.at("recon_layers").get<std::vector<int>>();
    cfg.task_layers = j.at("task_layers").get<std::vector<int>>();
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    cfg.l2_lambda = j.at("l2_lambda").get<double>();
    cfg.recon_weight = j.at("recon_weight").get<double>();
    cfg.decision_threshold = j.at("decision_threshold").get<double>();
    cfg.head_mode = j.at("head_mode").get<std::string>() == "joint" ? HeadMode::SingleJoint
                                                                    : HeadMode::MultiDecoder;
    auto act = j.at("active_tasks").get<std::vector<int>>();
    for (int t = 0; t < 4; ++t) cfg.active_tasks[t] = act[static_cast<std::size_t>(t)] != 0;
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

void for_each_stack(const MtlModel& model, const std::function<void(const std::string&, const Stack&)>& fn) {
    fn("encoder", model.encoder);
    fn("recon", model.recon);
    for (std::size_t h = 0; h < model.heads.size(); ++h) fn("head" + std::to_string(h), model.heads[h]);
}

std::string parameter_blob(const MtlModel& model) {
    std::string blob;
    auto append = [&blob](const double* data, std::size_t n) {
        blob.append(reinterpret_cast<const char*>(data), n * sizeof(double));
    };
    for_each_stack(model, [&](const std::string&, const Stack& s) {
        for (const auto& l : s) {
            // W row-major for a documented, index-friendly layout.
            for (Eigen::Index r = 0; r < l.w.rows(); ++r)
                for (Eigen::Index c = 0; c < l.w.cols(); ++c) {
                    double v = l.w(r, c);
                    append(&v, 1);
                }
            append(l.b.data(), static_cast<std::size_t>(l.b.size()));
        }
    });
    return blob;
}

} // namespace

void save_model(const MtlModel& model, const std::string& path) {
    if (!model.norm_stats) throw ValidationError("refusing to save a model without normalization statistics");
    json h;
    h["schema_version"] = 1;
    h["model_config"] = model_config_json(model.cfg);
    h["feature_dim"] = model.feature_dim;
    h["cond_dim"] = model.cond_dim;
    h["tasks"] = model.tasks;
    h["schema_hash"] = to_hex(model.schema_hash);
    h["norm_stats"] = json{{"mean", std::vector<double>(model.norm_stats->mean.begin(),
                                                        model.norm_stats->mean.end())},
                           {"std", std::vector<double>(model.norm_stats->stdev.begin(),
                                                       model.norm_stats->stdev.end())}};
    h["class_beta"] = std::vector<double>(model.class_beta.begin(), model.class_beta.end());
    h["log_sigma_sq"] = std::vector<double>(model.log_sigma_sq.begin(), model.log_sigma_sq.end());
    json layers = json::array();
    for_each_stack(model, [&](const std::string& name, const Stack& s) {
        for (std::size_t i = 0; i < s.size(); ++i)
            layers.push_back(json{{"stack", name},
                                  {"layer", i},
                                  {"rows", s[i].w.rows()},
                                  {"cols", s[i].w.cols()}});
    });
    h["layers"] = layers;
    h["param_count"] = model.parameter_count();
    std::string blob = parameter_blob(model);
    h["blob_fnv"] = to_hex(fnv1a64(blob));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open model file for writing: " + path);
    out << h.dump() << "\n" << blob;
    if (!out) throw Error("short write to model file: " + path);
}

MtlModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model file: " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw ParseError("model file is empty: " + path);
    json h;
    try {
        h = json::parse(header_line);
    } catch (const json::exception& e) {
        throw ParseError(std::string("model header parse failure: ") + e.what());
    }
    if (h.value("schema_version", -1) != 1) throw SchemaError("unsupported model schema_version");

    MtlModel model = init_model(model_config_from_json(h.at("model_config")),
                                h.at("feature_dim").get<int>(), h.at("cond_dim").get<int>());
    model.tasks = h.at("tasks").get<std::vector<int>>();
    model.schema_hash = std::stoull(h.at("schema_hash").get<std::string>(), nullptr, 16);
    NormStats ns;
    auto mean = h.at("norm_stats").at("mean").get<std::vector<double>>();
    auto stdev = h.at("norm_stats").at("std").get<std::vector<double>>();
    ns.mean = Eigen::Map<VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    ns.stdev = Eigen::Map<VectorXd>(stdev.data(), static_cast<Eigen::Index>(stdev.size()));
    ns.schema_hash = model.schema_hash;
    model.norm_stats = ns;
    auto beta = h.at("class_beta").get<std::vector<double>>();
    auto sig = h.at("log_sigma_sq").get<std::vector<double>>();
    model.class_beta = Eigen::Map<VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    model.log_sigma_sq = Eigen::Map<VectorXd>(sig.data(), static_cast<Eigen::Index>(sig.size()));

    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (to_hex(fnv1a64(blob)) != h.at("blob_fnv").get<std::string>())
        throw Error("model parameter blob digest mismatch (file corrupt): " + path);
    if (blob.size() != model.parameter_count() * sizeof(double))
        throw Error("model parameter blob size mismatch: " + path);

    const char* p = blob.data();
    auto read_stack = [&p](Stack& s) {
        for (auto& l : s) {
            for (Eigen::Index r = 0; r < l.w.rows(); ++r)
                for (Eigen::Index c = 0; c < l.w.cols(); ++c) {
                    std::memcpy(&l.w(r, c), p, sizeof(double));
                    p += sizeof(double);
                }
            std::memcpy(l.b.data(), p, static_cast<std::size_t>(l.b.size()) * sizeof(double));
            p += static_cast<std::size_t>(l.b.size()) * sizeof(double);
        }
    };
    read_stack(model.encoder);
    read_stack(model.recon);
    for (auto& head : model.heads) read_stack(head);
    return model;
}

std::uint64_t model_digest(const MtlModel& model) {
    return fnv1a64(parameter_blob(model));
}

std::string TrainReport::to_csv() const {
    std::ostringstream out;
    out << "epoch,lr,train_total";
    const char* names[4] = {"static", "small_signal", "voltage", "transient"};
    for (int t : tasks) out << ",train_bce_" << names[t];
    out << ",train_recon,train_l2,train_sigma_penalty,val_total";
    for (int t : tasks) out << ",val_f2_" << names[t];
    out << ",val_f2_overall\n";
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
    };
    for (const auto& r : epochs) {
        out << r.epoch;
        put(r.lr);
        put(r.train.total);
        for (Eigen::Index t = 0; t < r.train.task_bce.size(); ++t) put(r.train.task_bce[t]);
        put(r.train.recon);
        put(r.train.l2);
        put(r.train.sigma_penalty);
        put(r.val_total);
        for (Eigen::Index t = 0; t < r.val_f2.size(); ++t) put(r.val_f2[t]);
        put(r.val_f2_overall);
        out << "\n";
    }
    return out.str();
}

} // namespace gridmtl
