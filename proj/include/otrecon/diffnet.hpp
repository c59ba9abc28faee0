#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "otrecon/datagen.hpp"
#include "otrecon/grid.hpp"
#include "otrecon/kernels.hpp"
#include "otrecon/rng.hpp"
#include "otrecon/tomography.hpp"
#include "otrecon/transport.hpp"

namespace otrecon::diffnet {

// Value/gradient pair with (channels, height, width) layout, row-major per
// channel plane. Production nets run in 32-bit; the double instantiation
// exists for tight finite-difference tests.
template <typename T>
struct TensorT {
    int c = 0, h = 0, w = 0;
    std::vector<T> v;
    std::vector<T> g;

    TensorT() = default;
    TensorT(int c_, int h_, int w_)
        : c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(c_) * h_ * w_, T(0)),
          g(static_cast<std::size_t>(c_) * h_ * w_, T(0)) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
    std::size_t size() const { return static_cast<std::size_t>(c) * plane_size(); }
    T* plane(int ch) { return v.data() + static_cast<std::size_t>(ch) * plane_size(); }
    const T* plane(int ch) const { return v.data() + static_cast<std::size_t>(ch) * plane_size(); }
    T* gplane(int ch) { return g.data() + static_cast<std::size_t>(ch) * plane_size(); }
    const T* gplane(int ch) const { return g.data() + static_cast<std::size_t>(ch) * plane_size(); }
    void resize(int c_, int h_, int w_) {
        c = c_; h = h_; w = w_;
        v.assign(static_cast<std::size_t>(c_) * h_ * w_, T(0));
        g.assign(v.size(), T(0));
    }
};

template <typename T>
struct ParamT {
    std::string name;
    std::vector<T> v;
    std::vector<T> g;

    void init(std::string n, std::size_t count) {
        name = std::move(n);
        v.assign(count, T(0));
        g.assign(count, T(0));
    }
};

// --- primitives -----------------------------------------------------------

// 3x3 SAME convolution. w layout: (oc, ic, ky, kx); bias per out channel.
template <typename T>
void conv3x3_forward(const TensorT<T>& in, const ParamT<T>& w, const ParamT<T>& b,
                     TensorT<T>& out);

// Accumulates += into in.g, w.g, b.g from out.g.
template <typename T>
void conv3x3_backward(TensorT<T>& in, ParamT<T>& w, ParamT<T>& b, const TensorT<T>& out);

// Per-channel PReLU: y = x > 0 ? x : slope[ch] * x.
template <typename T>
void prelu_forward(const TensorT<T>& in, const ParamT<T>& slope, TensorT<T>& out);

template <typename T>
void prelu_backward(TensorT<T>& in, ParamT<T>& slope, const TensorT<T>& out);

// --- conv block -----------------------------------------------------------

// Three 3x3 conv layers, PReLU after the first two, none after the last.
template <typename T>
struct ConvBlockT {
    int in_ch = 0, mid_ch = 0, out_ch = 0;
    ParamT<T> w1, b1, a1, w2, b2, a2, w3, b3;

    struct Activations {
        TensorT<T> z1, y1, z2, y2, z3; // z3 is the correction
    };

    void init_shapes(const std::string& prefix, int in, int mid, int out);
    void forward(const TensorT<T>& in, Activations& act) const;
    // accumulates += into in.g and the parameter grads, reading act.z3.g
    void backward(TensorT<T>& in, Activations& act);
    std::vector<ParamT<T>*> params();
};

// --- learned primal-dual network -------------------------------------------

struct NetConfig {
    int stages = 5;    // I
    int n_primal = 5;  // channels of the primal iterate
    int n_dual = 5;    // channels of the dual iterate
    int filters = 16;  // hidden width of every block
};

// The operator nodes apply the ray transform scaled by 1/||A||_2 (estimated
// once by power iteration from a fixed seed); without this the A* feedback
// blows the activations up by orders of magnitude per stage. The scaled pair
// is still an exactly matched adjoint pair.
template <typename T>
class PrimalDualNetT {
public:
    PrimalDualNetT(const NetConfig& cfg, std::shared_ptr<const tomo::RayTransform> op);

    const NetConfig& config() const { return cfg_; }
    const tomo::RayTransform& op() const { return *op_; }
    std::shared_ptr<const tomo::RayTransform> op_ptr() const { return op_; }
    double op_scale() const { return op_scale_; }

    // Xavier-uniform conv weights, zero biases, PReLU slopes 0.25.
    void init_params(SeededRng& rng);

    struct StageActs {
        TensorT<T> f2, Af2, dual_in;
        typename ConvBlockT<T>::Activations dual;
        TensorT<T> h;
        TensorT<T> h1, ATh1, primal_in;
        typename ConvBlockT<T>::Activations primal;
        TensorT<T> f;
    };
    struct Workspace {
        TensorT<T> g;        // data as (1, angles, detectors)
        std::vector<StageActs> stages;
        TensorT<T> out;      // f_I^(1) as (1, H, W)
    };

    // Runs Algorithm 2 with f0 = h0 = 0 and returns f_I^(1) in ws.out.
    void forward(const tomo::Sinogram& data, Workspace& ws) const;

    // Reverse pass seeded from ws.out.g; accumulates parameter gradients.
    void backward(Workspace& ws);

    // Canonical parameter order: stage-major, dual block before primal,
    // per layer w, b, slope (no slope on the last layer).
    std::vector<ParamT<T>*> parameters();
    std::vector<const ParamT<T>*> parameters() const;
    void zero_grads();

private:
    NetConfig cfg_;
    std::shared_ptr<const tomo::RayTransform> op_;
    double op_scale_ = 1.0;
    std::vector<ConvBlockT<T>> dual_blocks_, primal_blocks_;
};

// 2-norm of the discretized ray transform by power iteration on A^T A,
// deterministic from a fixed internal seed.
double operator_norm_estimate(const tomo::RayTransform& op, int iterations = 30);

using Tensor = TensorT<float>;
using PrimalDualNet = PrimalDualNetT<float>;

// --- losses -----------------------------------------------------------------

struct LossSpec {
    enum class Kind { MeanSquaredError, EntropicWasserstein };
    Kind kind = Kind::MeanSquaredError;
    transport::EntropicOTConfig ot;      // N = 10, eps = 1e-3, rho = 1e-6
    transport::TransportCost cost{transport::TransportCost::Form::BoundedQuartic, 10.0};
    double mass_penalty = 1.0;           // lambda on ((mass(out)-mass(f))/mass(f))^2
    // A nonpositive-mass output cannot enter the transport term. With
    // recovery on, such a step falls back to the mass penalty alone (whose
    // gradient is defined for any mass) so training can climb back out;
    // the step is still flagged degenerate and counted. With recovery off
    // the loss throws DegenerateOutput instead.
    bool degenerate_recovery = true;
};

struct LossResult {
    double loss = 0.0;
    double mass_out = 0.0;
    double mass_truth = 0.0;
    double transport_value = 0.0; // OT term only, 0 under MSE
    bool degenerate = false;      // transport term skipped, mass recovery applied
};

// Forward + reverse pass for one pair. MSE: |out - f|^2 / n. Entropic
// Wasserstein: the nonnegative part of the output is mass-normalized to the
// truth (the transport marginal must be >= 0), both marginals get the
// background floor, the fixed-depth Sinkhorn value is taken, and the penalty
// on the raw output mass is added; gradients flow through the whole chain
// including the clamp mask. The stencil must match (grid, spec.cost,
// spec.ot.epsilon); pass nullptr for MSE. mass(out) <= 0 is degenerate: see
// LossSpec::degenerate_recovery.
template <typename T>
LossResult loss_forward_backward(PrimalDualNetT<T>& net, const datagen::TrainingPair& pair,
                                 const LossSpec& spec, const transport::KernelStencil* stencil,
                                 typename PrimalDualNetT<T>::Workspace& ws);

// Loss value only, no gradients (validation).
template <typename T>
LossResult loss_forward(PrimalDualNetT<T>& net, const datagen::TrainingPair& pair,
                        const LossSpec& spec, const transport::KernelStencil* stencil,
                        typename PrimalDualNetT<T>::Workspace& ws);

// --- checkpoints -------------------------------------------------------------
//
// Binary format, little-endian: magic "OTPD", u32 version (1), u32 flags
// (bit 0: optimizer state present), then the config block (u32 stages,
// n_primal, n_dual, filters, grid width, grid height, f64 spacing, u32
// angles, detectors, f64 detector spacing), u64 total parameter count, the
// parameters as f32 in canonical order, and with flag bit 0 the ADAM step
// counter (u64) plus first/second moments in the same order.

struct Checkpoint {
    NetConfig config;
    PixelGrid grid;
    tomo::ParallelBeamGeometry geom;
    std::vector<std::vector<float>> params;
    bool has_optimizer = false;
    std::uint64_t adam_step = 0;
    std::vector<std::vector<float>> adam_m, adam_v;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint checkpoint_from_net(const PrimalDualNet& net);
void checkpoint_into_net(const Checkpoint& ck, PrimalDualNet& net);

} // namespace otrecon::diffnet
