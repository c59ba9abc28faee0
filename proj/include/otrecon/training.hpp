#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "otrecon/datagen.hpp"
#include "otrecon/diffnet.hpp"

namespace otrecon::training {

// ADAM with bias correction; beta2 = 0.99 instead of the usual default.
struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

class AdamState {
public:
    AdamState() = default;
    explicit AdamState(const std::vector<diffnet::ParamT<float>*>& params, AdamConfig cfg = {});

    // One update step over all parameters from their .g slots.
    void step(const std::vector<diffnet::ParamT<float>*>& params, double lr);

    std::uint64_t steps_taken() const { return t_; }
    const std::vector<std::vector<float>>& first_moments() const { return m_; }
    const std::vector<std::vector<float>>& second_moments() const { return v_; }
    void restore(std::uint64_t t, std::vector<std::vector<float>> m, std::vector<std::vector<float>> v);

private:
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

// eta(t) = eta_min + (eta0 - eta_min) * (1 + cos(pi t / T)) / 2
struct CosineSchedule {
    double eta0 = 1e-3;
    double eta_min = 0.0;
    std::uint64_t total_steps = 2000;

    double lr(std::uint64_t t) const;
};

// Scales every gradient by max_norm/norm when the global Euclidean norm over
// all parameters exceeds max_norm. Returns the pre-clip norm. Non-finite
// gradients name the offending parameter.
double clip_global_norm(const std::vector<diffnet::ParamT<float>*>& params, double max_norm);

struct TrainConfig {
    diffnet::LossSpec loss;
    PixelGrid grid{64, 64, 1.0};
    tomo::ParallelBeamGeometry geom{30, 91, 1.0};
    datagen::PhantomSpec phantom;
    datagen::MisalignmentSpec shift;
    datagen::NoiseSpec noise;
    diffnet::NetConfig net;
    std::uint64_t steps = 2000;
    CosineSchedule schedule;
    double clip_norm = 1.0;
    std::uint64_t seed = 1;
    std::uint64_t checkpoint_every = 500; // 0 = only final
    std::uint64_t validate_every = 250;   // 0 = never
    int val_pairs = 16;

    void validate() const;
};

struct TrainResult {
    diffnet::Checkpoint final_checkpoint;
    std::uint64_t steps_run = 0;
    std::uint64_t skipped = 0;
    double last_train_loss = 0.0;
    double last_val_loss = 0.0;
};

// The sequential seeded loop: for each step draw the pair from stream
// (seed, k), run forward/backward per the loss, clip, apply ADAM at the
// cosine rate. Metrics go to <out_dir>/metrics.csv with header
// step,loss,grad_norm,lr,mass_err,skipped; checkpoints to
// checkpoint_step<k>.otpd and checkpoint.otpd (with optimizer state).
// Training aborts once skipped steps exceed 1% of the configured total.
// Validation pairs come from streams (seed ^ VALIDATION_SALT, 0..val_pairs).
TrainResult train(const TrainConfig& config, const std::string& out_dir,
                  const std::optional<std::string>& resume_checkpoint = std::nullopt);

// Stream-id layout shared with the CLI: data pair k <- (seed, k),
// parameter init <- (seed, PARAM_STREAM), validation <- (seed ^ SALT, k).
constexpr std::uint64_t PARAM_STREAM = 0x706172616d73ull; // "params"
constexpr std::uint64_t VALIDATION_SALT = 0x76616c6964ull; // "valid"

datagen::TrainingPair validation_pair(const TrainConfig& config, const tomo::RayTransform& op, int index);

} // namespace otrecon::training
