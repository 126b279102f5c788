#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridmtl/datagen.hpp"

namespace gridmtl {

enum class HeadMode { MultiDecoder, SingleJoint };
enum class WeightingMode { Uniform, Adaptive };

struct ModelConfig {
    std::vector<int> encoder_layers{128, 64, 32};
    std::vector<int> recon_layers;          // empty = mirrored encoder hidden widths
    std::vector<int> task_layers{32, 16, 1}; // final width 1 per decoder (MultiDecoder)
    double dropout_rate = 0.1;
    double l2_lambda = 1e-4;
    double recon_weight = 1.0;
    double decision_threshold = 0.5;
    HeadMode head_mode = HeadMode::MultiDecoder;
    std::array<bool, 4> active_tasks{true, true, true, true};
    std::uint64_t seed = 0;

    int latent_dim() const { return encoder_layers.back(); }
    std::vector<int> mirrored_recon_layers() const;
    std::vector<int> task_ids() const;
};

struct LayerParams {
    Eigen::MatrixXd w; // out x in
    Eigen::VectorXd b;
};
using Stack = std::vector<LayerParams>;

struct MtlModel {
    ModelConfig cfg;
    int feature_dim = 0;
    int cond_dim = 0;
    std::vector<int> tasks; // absolute task ids (0 static, 1 small-signal, 2 voltage, 3 transient)

    Stack encoder;            // ReLU throughout; last activation is the latent
    Stack recon;              // [h;c] in, feature_dim out, linear final layer
    std::vector<Stack> heads; // MultiDecoder: one per task; SingleJoint: exactly one

    Eigen::VectorXd log_sigma_sq; // per task, adaptive uncertainty (sigma^2 = exp)
    Eigen::VectorXd class_beta;   // per task, weight on the secure-label term
    std::optional<NormStats> norm_stats;
    std::uint64_t schema_hash = 0;

    std::size_t parameter_count() const;
};

struct TrainConfig {
    double eta0 = 1e-3;
    double gamma = 0.95;
    int k_s = 10;
    int batch_size = 64;
    int max_epochs = 200;
    double adam_b1 = 0.9, adam_b2 = 0.999, adam_eps = 1e-8;
    int patience = 10;
    WeightingMode weighting = WeightingMode::Adaptive;
    std::array<double, 4> task_weights{1.0, 1.0, 1.0, 1.0}; // uniform mode
    bool class_weighting = true;                            // false pins class_beta to 0.5
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct Prediction {
    Eigen::VectorXd prob;   // per model task, P(secure)
    std::vector<int> label; // prob >= threshold
    bool overall_secure = false;
    Eigen::VectorXd latent;
    double recon_error = 0.0;
};

/// Mini-batch with samples as columns; y rows follow model.tasks.
struct Batch {
    Eigen::MatrixXd x, c, y;
    Eigen::Index size() const { return x.cols(); }
};

struct LossBreakdown {
    double total = 0.0;
    Eigen::VectorXd task_bce;   // unweighted mean BCE per task
    Eigen::VectorXd task_alpha; // effective weight per task
    double recon = 0.0;         // mean squared reconstruction norm
    double l2 = 0.0;
    double sigma_penalty = 0.0;
};

struct Gradients {
    Stack encoder, recon;
    std::vector<Stack> heads;
    Eigen::VectorXd log_sigma_sq;
};

struct AdamState {
    Gradients m, v;
    long step = 0;
};

struct EpochRow {
    int epoch = 0;
    double lr = 0.0;
    LossBreakdown train;
    double val_total = 0.0;
    Eigen::VectorXd val_f2; // per task
    double val_f2_overall = 0.0;
};

struct TrainReport {
    std::vector<EpochRow> epochs;
    int best_epoch = -1;
    std::vector<std::string> warnings;
    std::vector<int> tasks;

    std::string to_csv() const;
    std::uint64_t digest() const { return fnv1a64(to_csv()); }
};

// --- construction and forward paths ---

MtlModel init_model(const ModelConfig& cfg, int feature_dim, int cond_dim);

Eigen::VectorXd encode(const MtlModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& c);
Eigen::VectorXd reconstruct(const MtlModel& model, const Eigen::VectorXd& h, const Eigen::VectorXd& c);
/// task is the absolute task id; throws if the model was built without it.
double decode_task(const MtlModel& model, const Eigen::VectorXd& h, int task);

/// Weighted binary cross-entropy for one prediction; y is clamped to
/// [1e-12, 1 - 1e-12] inside the logs.
double task_loss(double y, double y_true, double beta);

/// Loss of a batch with dropout disabled (the pure evaluation path).
LossBreakdown total_loss(const MtlModel& model, const Batch& batch, WeightingMode mode,
                         const std::array<double, 4>& task_weights = {1, 1, 1, 1});

/// Forward + exact analytic backward. When `dropout_rng` is given and the
/// model has a positive dropout rate, inverted-dropout masks are sampled
/// once per batch and reused in the backward pass.
std::pair<LossBreakdown, Gradients> backward(const MtlModel& model, const Batch& batch,
                                             WeightingMode mode,
                                             const std::array<double, 4>& task_weights = {1, 1, 1, 1},
                                             std::mt19937_64* dropout_rng = nullptr);

/// Bias-corrected Adam update applied in place.
void adam_step(MtlModel& model, const Gradients& grads, AdamState& state, double eta,
               const TrainConfig& cfg, bool update_sigma);

double lr_at(int epoch, const TrainConfig& cfg);

std::pair<MtlModel, TrainReport> train(const Dataset& train_ds, const TrainConfig& tcfg,
                                       const ModelConfig& mcfg);

/// x_raw in original units; the model normalizes internally.
Prediction predict(const MtlModel& model, const Eigen::VectorXd& x_raw, const Eigen::VectorXd& c);

/// Batched inference on already-normalized features; rows follow model.tasks.
Eigen::MatrixXd predict_probs(const MtlModel& model, const Eigen::MatrixXd& x_norm,
                              const Eigen::MatrixXd& c);

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices,
                 const std::vector<int>& tasks);

void save_model(const MtlModel& model, const std::string& path);
MtlModel load_model(const std::string& path);
std::uint64_t model_digest(const MtlModel& model);

} // namespace gridmtl
