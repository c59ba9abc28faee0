#include "otrecon/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace otrecon::training {

AdamState::AdamState(const std::vector<diffnet::ParamT<float>*>& params, AdamConfig cfg)
    : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto* p : params) {
        m_.push_back(std::vector<float>(p->v.size(), 0.0f));
        v_.push_back(std::vector<float>(p->v.size(), 0.0f));
    }
}

void AdamState::step(const std::vector<diffnet::ParamT<float>*>& params, double lr) {
    if (params.size() != m_.size())
        throw ContractError("AdamState: parameter list does not match the state");
    ++t_;
    double b1t = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double b2t = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        if (p.v.size() != m_[k].size())
            throw ContractError("AdamState: shape mismatch at " + p.name);
        for (std::size_t i = 0; i < p.v.size(); ++i) {
            float g = p.g[i];
            m_[k][i] = static_cast<float>(cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g);
            v_[k][i] = static_cast<float>(cfg_.beta2 * v_[k][i] +
                                          (1.0 - cfg_.beta2) * static_cast<double>(g) * g);
            double mhat = m_[k][i] / b1t;
            double vhat = v_[k][i] / b2t;
            p.v[i] = static_cast<float>(p.v[i] - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
}

void AdamState::restore(std::uint64_t t, std::vector<std::vector<float>> m,
                        std::vector<std::vector<float>> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

double CosineSchedule::lr(std::uint64_t t) const {
    if (total_steps == 0) return eta_min;
    double frac = static_cast<double>(t) / static_cast<double>(total_steps);
    if (frac > 1.0) frac = 1.0;
    return eta_min + 0.5 * (eta0 - eta_min) * (1.0 + std::cos(3.14159265358979323846 * frac));
}

double clip_global_norm(const std::vector<diffnet::ParamT<float>*>& params, double max_norm) {
    if (!(max_norm > 0.0))
        throw ContractError("clip_global_norm: max_norm must be > 0");
    double sq = 0.0;
    for (const auto* p : params)
        for (float g : p->g) {
            if (!std::isfinite(g))
                throw NumericalBreakdown("clip_global_norm: non-finite gradient in " + p->name);
            sq += static_cast<double>(g) * g;
        }
    double norm = std::sqrt(sq);
    if (norm > max_norm) {
        float s = static_cast<float>(max_norm / norm);
        for (auto* p : params)
            for (float& g : p->g) g *= s;
    }
    return norm;
}

void TrainConfig::validate() const {
    if (!(clip_norm > 0.0)) throw ContractError("TrainConfig: clip_norm must be > 0");
    if (val_pairs < 0) throw ContractError("TrainConfig: val_pairs must be >= 0");
    phantom.validate();
    shift.validate();
    noise.validate();
}

datagen::TrainingPair validation_pair(const TrainConfig& config, const tomo::RayTransform& op,
                                      int index) {
    SeededRng rng(config.seed ^ VALIDATION_SALT, static_cast<std::uint64_t>(index));
    return datagen::make_pair(config.phantom, config.shift, config.noise, op, rng);
}

TrainResult train(const TrainConfig& config, const std::string& out_dir,
                  const std::optional<std::string>& resume_checkpoint) {
    config.validate();
    std::filesystem::create_directories(out_dir);

    auto op = std::make_shared<tomo::RayTransform>(config.grid, config.geom);
    diffnet::PrimalDualNet net(config.net, op);

    // the OT loss shares one stencil across all steps
    std::optional<transport::KernelStencil> stencil;
    const transport::KernelStencil* stencil_ptr = nullptr;
    if (config.loss.kind == diffnet::LossSpec::Kind::EntropicWasserstein) {
        stencil.emplace(transport::build_stencil(config.grid, config.loss.cost, config.loss.ot.epsilon));
        stencil_ptr = &*stencil;
    }

    auto params = net.parameters();
    AdamState adam(params);
    std::uint64_t start_step = 0;
    if (resume_checkpoint) {
        diffnet::Checkpoint ck = diffnet::load_checkpoint(*resume_checkpoint);
        diffnet::checkpoint_into_net(ck, net);
        if (ck.has_optimizer) {
            adam.restore(ck.adam_step, ck.adam_m, ck.adam_v);
            start_step = ck.adam_step;
        }
    } else {
        SeededRng init_rng(config.seed, PARAM_STREAM);
        net.init_params(init_rng);
    }

    std::vector<datagen::TrainingPair> val_set;
    for (int i = 0; i < config.val_pairs; ++i) val_set.push_back(validation_pair(config, *op, i));

    std::ofstream metrics(out_dir + "/metrics.csv",
                          start_step == 0 ? std::ios::trunc : std::ios::app);
    if (!metrics) throw ContractError("train: cannot open metrics.csv in " + out_dir);
    metrics.precision(17);
    if (start_step == 0) metrics << "step,loss,grad_norm,lr,mass_err,skipped\n";

    auto write_checkpoint = [&](const std::string& path) {
        diffnet::Checkpoint ck = diffnet::checkpoint_from_net(net);
        ck.has_optimizer = true;
        ck.adam_step = adam.steps_taken();
        ck.adam_m = adam.first_moments();
        ck.adam_v = adam.second_moments();
        diffnet::save_checkpoint(ck, path);
    };

    typename diffnet::PrimalDualNet::Workspace ws;
    TrainResult result;
    result.steps_run = start_step;
    const std::uint64_t skip_budget =
        static_cast<std::uint64_t>(0.01 * static_cast<double>(config.steps)) + 1;

    auto validation_loss = [&]() {
        if (val_set.empty()) return 0.0;
        double acc = 0.0;
        for (const auto& pair : val_set)
            acc += diffnet::loss_forward(net, pair, config.loss, stencil_ptr, ws).loss;
        return acc / static_cast<double>(val_set.size());
    };

    for (std::uint64_t step = start_step; step < config.steps; ++step) {
        SeededRng rng(config.seed, step);
        datagen::TrainingPair pair = datagen::make_pair(config.phantom, config.shift, config.noise, *op, rng);

        net.zero_grads();
        double lr = config.schedule.lr(step);
        bool skipped = false;
        double loss_value = 0.0, grad_norm = 0.0, mass_err = 0.0;
        try {
            diffnet::LossResult lr_res =
                diffnet::loss_forward_backward(net, pair, config.loss, stencil_ptr, ws);
            loss_value = lr_res.loss;
            mass_err = lr_res.mass_truth > 0.0
                           ? std::abs(lr_res.mass_out - lr_res.mass_truth) / lr_res.mass_truth
                           : 0.0;
            // a degenerate step applies the mass-recovery gradient but counts
            // against the budget like a skipped transport evaluation
            skipped = lr_res.degenerate;
            grad_norm = clip_global_norm(params, config.clip_norm);
            adam.step(params, lr);
        } catch (const NumericalBreakdown&) {
            skipped = true;
        }
        if (skipped) {
            ++result.skipped;
            if (result.skipped > skip_budget)
                throw NumericalBreakdown("train: more than 1% of steps degenerate (" +
                                         std::to_string(result.skipped) + " of " +
                                         std::to_string(step + 1) + ")");
        }
        if (!skipped) result.last_train_loss = loss_value;

        metrics << (step + 1) << "," << loss_value << "," << grad_norm << "," << lr << ","
                << mass_err << "," << (skipped ? 1 : 0) << "\n";

        result.steps_run = step + 1;
        if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 &&
            step + 1 < config.steps)
            write_checkpoint(out_dir + "/checkpoint_step" + std::to_string(step + 1) + ".otpd");
        if (config.validate_every > 0 && (step + 1) % config.validate_every == 0)
            result.last_val_loss = validation_loss();
    }

    if (config.validate_every > 0 && !val_set.empty() && config.steps == start_step)
        result.last_val_loss = validation_loss();

    write_checkpoint(out_dir + "/checkpoint.otpd");
    result.final_checkpoint = diffnet::checkpoint_from_net(net);
    metrics.flush();
    return result;
}

} // namespace otrecon::training
