#include "otrecon/diffnet.hpp"

#include <algorithm>
#include <cmath>

#include "binio.hpp"

namespace otrecon::diffnet {

// --- primitives -------------------------------------------------------------

template <typename T>
void conv3x3_forward(const TensorT<T>& in, const ParamT<T>& w, const ParamT<T>& b,
                     TensorT<T>& out) {
    const int H = in.h, W = in.w, IC = in.c, OC = out.c;
    if (out.h != H || out.w != W)
        throw ContractError("conv3x3_forward: output plane size mismatch");
    if (w.v.size() != static_cast<std::size_t>(OC) * IC * 9 || b.v.size() != static_cast<std::size_t>(OC))
        throw ContractError("conv3x3_forward: parameter shape mismatch for " + w.name);
    const std::size_t plane = in.plane_size();
    for (int oc = 0; oc < OC; ++oc) {
        T* op = out.plane(oc);
        std::fill(op, op + plane, b.v[static_cast<std::size_t>(oc)]);
        for (int ic = 0; ic < IC; ++ic) {
            const T* ip = in.plane(ic);
            const T* wk = &w.v[(static_cast<std::size_t>(oc) * IC + ic) * 9];
            for (int ky = 0; ky < 3; ++ky) {
                int dy = ky - 1;
                int ys = std::max(0, -dy), ye = H - std::max(0, dy);
                for (int kx = 0; kx < 3; ++kx) {
                    int dx = kx - 1;
                    T wv = wk[ky * 3 + kx];
                    if (wv == T(0)) continue;
                    int xs = std::max(0, -dx), xe = W - std::max(0, dx);
                    if (xs >= xe) continue;
                    for (int y = ys; y < ye; ++y)
                        kernels::add_scaled(op + static_cast<std::size_t>(y) * W + xs,
                                            ip + static_cast<std::size_t>(y + dy) * W + (xs + dx),
                                            wv, static_cast<std::size_t>(xe - xs));
                }
            }
        }
    }
}

template <typename T>
void conv3x3_backward(TensorT<T>& in, ParamT<T>& w, ParamT<T>& b, const TensorT<T>& out) {
    const int H = in.h, W = in.w, IC = in.c, OC = out.c;
    const std::size_t plane = in.plane_size();
    for (int oc = 0; oc < OC; ++oc) {
        const T* gop = out.gplane(oc);
        b.g[static_cast<std::size_t>(oc)] += static_cast<T>(kernels::sum(gop, plane));
        for (int ic = 0; ic < IC; ++ic) {
            const T* ip = in.plane(ic);
            T* gip = in.gplane(ic);
            const T* wk = &w.v[(static_cast<std::size_t>(oc) * IC + ic) * 9];
            T* wg = &w.g[(static_cast<std::size_t>(oc) * IC + ic) * 9];
            for (int ky = 0; ky < 3; ++ky) {
                int dy = ky - 1;
                int ys = std::max(0, -dy), ye = H - std::max(0, dy);
                for (int kx = 0; kx < 3; ++kx) {
                    int dx = kx - 1;
                    int xs = std::max(0, -dx), xe = W - std::max(0, dx);
                    if (xs >= xe || ys >= ye) continue;
                    double acc = 0.0;
                    for (int y = ys; y < ye; ++y)
                        acc += kernels::dot(gop + static_cast<std::size_t>(y) * W + xs,
                                            ip + static_cast<std::size_t>(y + dy) * W + (xs + dx),
                                            static_cast<std::size_t>(xe - xs));
                    wg[ky * 3 + kx] += static_cast<T>(acc);
                    T wv = wk[ky * 3 + kx];
                    if (wv == T(0)) continue;
                    for (int y = ys; y < ye; ++y)
                        kernels::add_scaled(gip + static_cast<std::size_t>(y + dy) * W + (xs + dx),
                                            gop + static_cast<std::size_t>(y) * W + xs,
                                            wv, static_cast<std::size_t>(xe - xs));
                }
            }
        }
    }
}

template <typename T>
void prelu_forward(const TensorT<T>& in, const ParamT<T>& slope, TensorT<T>& out) {
    if (slope.v.size() != static_cast<std::size_t>(in.c))
        throw ContractError("prelu_forward: slope count mismatch for " + slope.name);
    for (int ch = 0; ch < in.c; ++ch)
        kernels::prelu(in.plane(ch), slope.v[static_cast<std::size_t>(ch)], out.plane(ch),
                       in.plane_size());
}

// Overwrites in.g (pre-activations have a single consumer); slope grads
// accumulate.
template <typename T>
void prelu_backward(TensorT<T>& in, ParamT<T>& slope, const TensorT<T>& out) {
    for (int ch = 0; ch < in.c; ++ch) {
        slope.g[static_cast<std::size_t>(ch)] += static_cast<T>(
            kernels::dot_negpart(in.plane(ch), out.gplane(ch), in.plane_size()));
        kernels::prelu_backward(in.plane(ch), slope.v[static_cast<std::size_t>(ch)],
                                out.gplane(ch), in.gplane(ch), in.plane_size());
    }
}

// --- conv block ---------------------------------------------------------------

template <typename T>
void ConvBlockT<T>::init_shapes(const std::string& prefix, int in, int mid, int out) {
    in_ch = in;
    mid_ch = mid;
    out_ch = out;
    w1.init(prefix + ".conv1.w", static_cast<std::size_t>(mid) * in * 9);
    b1.init(prefix + ".conv1.b", static_cast<std::size_t>(mid));
    a1.init(prefix + ".conv1.slope", static_cast<std::size_t>(mid));
    w2.init(prefix + ".conv2.w", static_cast<std::size_t>(mid) * mid * 9);
    b2.init(prefix + ".conv2.b", static_cast<std::size_t>(mid));
    a2.init(prefix + ".conv2.slope", static_cast<std::size_t>(mid));
    w3.init(prefix + ".conv3.w", static_cast<std::size_t>(out) * mid * 9);
    b3.init(prefix + ".conv3.b", static_cast<std::size_t>(out));
}

template <typename T>
void ConvBlockT<T>::forward(const TensorT<T>& in, Activations& act) const {
    if (in.c != in_ch)
        throw ContractError("ConvBlock: input has " + std::to_string(in.c) + " channels, expected " +
                            std::to_string(in_ch));
    act.z1.resize(mid_ch, in.h, in.w);
    act.y1.resize(mid_ch, in.h, in.w);
    act.z2.resize(mid_ch, in.h, in.w);
    act.y2.resize(mid_ch, in.h, in.w);
    act.z3.resize(out_ch, in.h, in.w);
    conv3x3_forward(in, w1, b1, act.z1);
    prelu_forward(act.z1, a1, act.y1);
    conv3x3_forward(act.y1, w2, b2, act.z2);
    prelu_forward(act.z2, a2, act.y2);
    conv3x3_forward(act.y2, w3, b3, act.z3);
}

template <typename T>
void ConvBlockT<T>::backward(TensorT<T>& in, Activations& act) {
    conv3x3_backward(act.y2, w3, b3, act.z3);
    prelu_backward(act.z2, a2, act.y2);
    conv3x3_backward(act.y1, w2, b2, act.z2);
    prelu_backward(act.z1, a1, act.y1);
    conv3x3_backward(in, w1, b1, act.z1);
}

template <typename T>
std::vector<ParamT<T>*> ConvBlockT<T>::params() {
    return {&w1, &b1, &a1, &w2, &b2, &a2, &w3, &b3};
}

// --- network -------------------------------------------------------------------

double operator_norm_estimate(const tomo::RayTransform& op, int iterations) {
    const std::size_t n = static_cast<std::size_t>(op.grid().cells());
    const std::size_t m = static_cast<std::size_t>(op.geometry().rays());
    std::vector<double> x(n), ax(m), atax(n);
    SeededRng rng(0x6f706e6f726dull, 0); // fixed: the estimate is part of the model
    for (double& v : x) v = rng.uniform(0.5, 1.0);
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        op.forward(x.data(), ax.data());
        op.adjoint(ax.data(), atax.data());
        double nrm = std::sqrt(kernels::dot(atax.data(), atax.data(), n));
        if (!(nrm > 0.0)) return 1.0;
        lambda = nrm;
        for (std::size_t i = 0; i < n; ++i) x[i] = atax[i] / nrm;
    }
    return std::sqrt(lambda);
}

template <typename T>
PrimalDualNetT<T>::PrimalDualNetT(const NetConfig& cfg, std::shared_ptr<const tomo::RayTransform> op)
    : cfg_(cfg), op_(std::move(op)) {
    if (cfg.stages < 1 || cfg.filters < 1)
        throw ContractError("PrimalDualNet: stages and filters must be >= 1");
    if (cfg.n_primal < 2 || cfg.n_dual < 1)
        throw ContractError("PrimalDualNet: need n_primal >= 2 (the f^(2) channel) and n_dual >= 1");
    if (!op_) throw ContractError("PrimalDualNet: missing operator");
    op_scale_ = 1.0 / operator_norm_estimate(*op_);
    dual_blocks_.resize(static_cast<std::size_t>(cfg.stages));
    primal_blocks_.resize(static_cast<std::size_t>(cfg.stages));
    for (int s = 0; s < cfg.stages; ++s) {
        std::string base = "stage" + std::to_string(s + 1);
        // dual input: iterate, A(f^(2)), data g
        dual_blocks_[static_cast<std::size_t>(s)].init_shapes(base + ".dual", cfg.n_dual + 2,
                                                              cfg.filters, cfg.n_dual);
        // primal input: iterate, A*(h^(1))
        primal_blocks_[static_cast<std::size_t>(s)].init_shapes(base + ".primal", cfg.n_primal + 1,
                                                                cfg.filters, cfg.n_primal);
    }
}

template <typename T>
void PrimalDualNetT<T>::init_params(SeededRng& rng) {
    for (int s = 0; s < cfg_.stages; ++s) {
        for (ConvBlockT<T>* blk : {&dual_blocks_[static_cast<std::size_t>(s)],
                                   &primal_blocks_[static_cast<std::size_t>(s)]}) {
            struct Layer {
                ParamT<T>*w, *b, *a;
                int in, out;
            };
            Layer layers[3] = {{&blk->w1, &blk->b1, &blk->a1, blk->in_ch, blk->mid_ch},
                               {&blk->w2, &blk->b2, &blk->a2, blk->mid_ch, blk->mid_ch},
                               {&blk->w3, &blk->b3, nullptr, blk->mid_ch, blk->out_ch}};
            for (const Layer& l : layers) {
                double limit = std::sqrt(6.0 / (9.0 * (l.in + l.out)));
                for (T& x : l.w->v) x = static_cast<T>(rng.uniform(-limit, limit));
                std::fill(l.b->v.begin(), l.b->v.end(), T(0));
                if (l.a) std::fill(l.a->v.begin(), l.a->v.end(), T(0.25));
            }
        }
    }
}

namespace {

template <typename T>
void copy_plane(const T* src, T* dst, std::size_t n) {
    std::copy(src, src + n, dst);
}

template <typename T>
bool plane_finite(const T* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(static_cast<double>(p[i]))) return false;
    return true;
}

} // namespace

template <typename T>
void PrimalDualNetT<T>::forward(const tomo::Sinogram& data, Workspace& ws) const {
    const PixelGrid& grid = op_->grid();
    const tomo::ParallelBeamGeometry& geom = op_->geometry();
    if (!(data.geom == geom))
        throw ContractError("PrimalDualNet: sinogram geometry does not match the operator");
    const int H = grid.height, W = grid.width;
    const int AH = geom.angles, AW = geom.detectors;
    const std::size_t img_plane = static_cast<std::size_t>(H) * W;
    const std::size_t sino_plane = static_cast<std::size_t>(AH) * AW;

    ws.g.resize(1, AH, AW);
    for (std::size_t i = 0; i < sino_plane; ++i) ws.g.v[i] = static_cast<T>(data.values[i]);
    ws.stages.assign(static_cast<std::size_t>(cfg_.stages), StageActs{});

    // zero initial iterates
    TensorT<T> f0(cfg_.n_primal, H, W), h0(cfg_.n_dual, AH, AW);
    std::vector<double> dbuf_img(img_plane), dbuf_sino(sino_plane);

    const TensorT<T>* fp = &f0;
    const TensorT<T>* hp = &h0;
    for (int s = 0; s < cfg_.stages; ++s) {
        StageActs& st = ws.stages[static_cast<std::size_t>(s)];

        st.f2.resize(1, H, W);
        copy_plane(fp->plane(1), st.f2.plane(0), img_plane);

        st.Af2.resize(1, AH, AW);
        for (std::size_t i = 0; i < img_plane; ++i) dbuf_img[i] = static_cast<double>(st.f2.v[i]);
        op_->forward(dbuf_img.data(), dbuf_sino.data());
        for (std::size_t i = 0; i < sino_plane; ++i)
            st.Af2.v[i] = static_cast<T>(op_scale_ * dbuf_sino[i]);

        st.dual_in.resize(cfg_.n_dual + 2, AH, AW);
        for (int ch = 0; ch < cfg_.n_dual; ++ch)
            copy_plane(hp->plane(ch), st.dual_in.plane(ch), sino_plane);
        copy_plane(st.Af2.plane(0), st.dual_in.plane(cfg_.n_dual), sino_plane);
        copy_plane(ws.g.plane(0), st.dual_in.plane(cfg_.n_dual + 1), sino_plane);

        dual_blocks_[static_cast<std::size_t>(s)].forward(st.dual_in, st.dual);
        st.h.resize(cfg_.n_dual, AH, AW);
        st.h.v = hp->v;
        kernels::add_scaled(st.h.v.data(), st.dual.z3.v.data(), T(1), st.h.v.size());
        if (!plane_finite(st.h.v.data(), st.h.v.size()))
            throw NumericalBreakdown("PrimalDualNet: non-finite dual iterate at stage " +
                                     std::to_string(s + 1));

        st.h1.resize(1, AH, AW);
        copy_plane(st.h.plane(0), st.h1.plane(0), sino_plane);

        st.ATh1.resize(1, H, W);
        for (std::size_t i = 0; i < sino_plane; ++i) dbuf_sino[i] = static_cast<double>(st.h1.v[i]);
        op_->adjoint(dbuf_sino.data(), dbuf_img.data());
        for (std::size_t i = 0; i < img_plane; ++i)
            st.ATh1.v[i] = static_cast<T>(op_scale_ * dbuf_img[i]);

        st.primal_in.resize(cfg_.n_primal + 1, H, W);
        for (int ch = 0; ch < cfg_.n_primal; ++ch)
            copy_plane(fp->plane(ch), st.primal_in.plane(ch), img_plane);
        copy_plane(st.ATh1.plane(0), st.primal_in.plane(cfg_.n_primal), img_plane);

        primal_blocks_[static_cast<std::size_t>(s)].forward(st.primal_in, st.primal);
        st.f.resize(cfg_.n_primal, H, W);
        st.f.v = fp->v;
        kernels::add_scaled(st.f.v.data(), st.primal.z3.v.data(), T(1), st.f.v.size());
        if (!plane_finite(st.f.v.data(), st.f.v.size()))
            throw NumericalBreakdown("PrimalDualNet: non-finite primal iterate at stage " +
                                     std::to_string(s + 1));

        fp = &st.f;
        hp = &st.h;
    }

    ws.out.resize(1, H, W);
    copy_plane(fp->plane(0), ws.out.plane(0), img_plane);
}

template <typename T>
void PrimalDualNetT<T>::backward(Workspace& ws) {
    if (ws.stages.size() != static_cast<std::size_t>(cfg_.stages))
        throw ContractError("PrimalDualNet::backward: workspace does not hold a forward pass");
    const PixelGrid& grid = op_->grid();
    const tomo::ParallelBeamGeometry& geom = op_->geometry();
    const std::size_t img_plane = static_cast<std::size_t>(grid.height) * grid.width;
    const std::size_t sino_plane = static_cast<std::size_t>(geom.angles) * geom.detectors;
    std::vector<double> dbuf_img(img_plane), dbuf_sino(sino_plane);

    // initial iterates are constants; their grads land here and are dropped
    TensorT<T> f0(cfg_.n_primal, grid.height, grid.width);
    TensorT<T> h0(cfg_.n_dual, geom.angles, geom.detectors);

    // seed: out = channel 0 of f_I
    {
        TensorT<T>& flast = ws.stages.back().f;
        T* gf = flast.gplane(0);
        const T* src = ws.out.gplane(0);
        for (std::size_t i = 0; i < img_plane; ++i) gf[i] += src[i];
    }

    for (int s = cfg_.stages - 1; s >= 0; --s) {
        StageActs& st = ws.stages[static_cast<std::size_t>(s)];
        TensorT<T>& fprev = s > 0 ? ws.stages[static_cast<std::size_t>(s) - 1].f : f0;
        TensorT<T>& hprev = s > 0 ? ws.stages[static_cast<std::size_t>(s) - 1].h : h0;

        // f_s = f_{s-1} + primal correction
        kernels::add_scaled(st.primal.z3.g.data(), st.f.g.data(), T(1), st.f.g.size());
        kernels::add_scaled(fprev.g.data(), st.f.g.data(), T(1), st.f.g.size());
        primal_blocks_[static_cast<std::size_t>(s)].backward(st.primal_in, st.primal);

        // split primal_in = concat(f_{s-1}, A* h^(1))
        for (int ch = 0; ch < cfg_.n_primal; ++ch)
            kernels::add_scaled(fprev.gplane(ch), st.primal_in.gplane(ch), T(1), img_plane);
        kernels::add_scaled(st.ATh1.gplane(0), st.primal_in.gplane(cfg_.n_primal), T(1), img_plane);

        // ATh1 = scale * A* h1, so the adjoint applies scale * A
        for (std::size_t i = 0; i < img_plane; ++i) dbuf_img[i] = static_cast<double>(st.ATh1.g[i]);
        op_->forward(dbuf_img.data(), dbuf_sino.data());
        for (std::size_t i = 0; i < sino_plane; ++i)
            st.h.gplane(0)[i] += static_cast<T>(op_scale_ * dbuf_sino[i]);

        // h_s = h_{s-1} + dual correction
        kernels::add_scaled(st.dual.z3.g.data(), st.h.g.data(), T(1), st.h.g.size());
        kernels::add_scaled(hprev.g.data(), st.h.g.data(), T(1), st.h.g.size());
        dual_blocks_[static_cast<std::size_t>(s)].backward(st.dual_in, st.dual);

        // split dual_in = concat(h_{s-1}, A f^(2), g); the data channel is input
        for (int ch = 0; ch < cfg_.n_dual; ++ch)
            kernels::add_scaled(hprev.gplane(ch), st.dual_in.gplane(ch), T(1), sino_plane);
        kernels::add_scaled(st.Af2.gplane(0), st.dual_in.gplane(cfg_.n_dual), T(1), sino_plane);

        // Af2 = scale * A f2, so the adjoint applies scale * A*
        for (std::size_t i = 0; i < sino_plane; ++i) dbuf_sino[i] = static_cast<double>(st.Af2.g[i]);
        op_->adjoint(dbuf_sino.data(), dbuf_img.data());
        for (std::size_t i = 0; i < img_plane; ++i)
            st.f2.gplane(0)[i] += static_cast<T>(op_scale_ * dbuf_img[i]);

        // f2 = channel 1 of f_{s-1}
        kernels::add_scaled(fprev.gplane(1), st.f2.gplane(0), T(1), img_plane);
    }
}

template <typename T>
std::vector<ParamT<T>*> PrimalDualNetT<T>::parameters() {
    std::vector<ParamT<T>*> out;
    for (int s = 0; s < cfg_.stages; ++s) {
        for (ParamT<T>* p : dual_blocks_[static_cast<std::size_t>(s)].params()) out.push_back(p);
        for (ParamT<T>* p : primal_blocks_[static_cast<std::size_t>(s)].params()) out.push_back(p);
    }
    return out;
}

template <typename T>
std::vector<const ParamT<T>*> PrimalDualNetT<T>::parameters() const {
    std::vector<const ParamT<T>*> out;
    auto* self = const_cast<PrimalDualNetT<T>*>(this);
    for (ParamT<T>* p : self->parameters()) out.push_back(p);
    return out;
}

template <typename T>
void PrimalDualNetT<T>::zero_grads() {
    for (ParamT<T>* p : parameters()) std::fill(p->g.begin(), p->g.end(), T(0));
}

// --- losses ---------------------------------------------------------------------

namespace {

template <typename T>
LossResult loss_impl(PrimalDualNetT<T>& net, const datagen::TrainingPair& pair, const LossSpec& spec,
                     const transport::KernelStencil* stencil,
                     typename PrimalDualNetT<T>::Workspace& ws, bool with_grad) {
    const PixelGrid& grid = net.op().grid();
    if (!(pair.truth.grid == grid))
        throw ContractError("loss: truth grid does not match the network operator");
    const std::size_t n = static_cast<std::size_t>(grid.cells());

    net.forward(pair.data, ws);

    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = static_cast<double>(ws.out.v[i]);
    const std::vector<double>& f = pair.truth.values;

    LossResult res;
    res.mass_truth = kernels::sum(f.data(), n);
    res.mass_out = kernels::sum(r.data(), n);

    if (spec.kind == LossSpec::Kind::MeanSquaredError) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = r[i] - f[i];
            acc += d * d;
        }
        res.loss = acc / static_cast<double>(n);
        if (with_grad) {
            for (std::size_t i = 0; i < n; ++i)
                ws.out.g[i] = static_cast<T>(2.0 * (r[i] - f[i]) / static_cast<double>(n));
            net.backward(ws);
        }
        return res;
    }

    // entropic Wasserstein
    if (!stencil)
        throw ContractError("loss: the EntropicWasserstein loss needs a kernel stencil");
    if (!(stencil->grid == grid))
        throw ContractError("loss: stencil grid does not match the network operator");
    if (!(res.mass_truth > 0.0))
        throw ContractError("loss: ground truth has nonpositive mass");
    if (!(res.mass_out > 0.0)) {
        if (!spec.degenerate_recovery)
            throw DegenerateOutput("loss: network output has nonpositive mass " +
                                   std::to_string(res.mass_out));
        double rel_err = (res.mass_out - res.mass_truth) / res.mass_truth;
        res.loss = spec.mass_penalty * rel_err * rel_err;
        res.degenerate = true;
        if (with_grad) {
            double mass_term = 2.0 * spec.mass_penalty * rel_err / res.mass_truth;
            for (std::size_t i = 0; i < n; ++i) ws.out.g[i] = static_cast<T>(mass_term);
            net.backward(ws);
        }
        return res;
    }

    // The transport marginal must be nonnegative (sinkhorn precondition), so
    // the negative part of the output is clamped away before normalization;
    // signed marginals would blow the unrolled gradients past 1e20. The mass
    // penalty stays on the raw output mass.
    std::vector<double> pos(n);
    double mass_pos = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        pos[i] = r[i] > 0.0 ? r[i] : 0.0;
        mass_pos += pos[i];
    }
    double scale = res.mass_truth / mass_pos;
    std::vector<double> out_scaled(n);
    for (std::size_t i = 0; i < n; ++i) out_scaled[i] = pos[i] * scale;

    transport::SinkhornRun run = transport::sinkhorn_unchecked(out_scaled, f, *stencil, spec.ot);
    res.transport_value = run.value;
    double rel_err = (res.mass_out - res.mass_truth) / res.mass_truth;
    res.loss = run.value + spec.mass_penalty * rel_err * rel_err;

    if (with_grad) {
        transport::SinkhornGrad sg = transport::sinkhorn_grad(run, *stencil);
        // chain rule through out_scaled = max(r, 0) * mass(f)/mass(max(r, 0))
        double inner = kernels::dot(sg.wrt_mu0.data(), pos.data(), n);
        double mass_term = 2.0 * spec.mass_penalty * rel_err / res.mass_truth;
        double shift = -inner * res.mass_truth / (mass_pos * mass_pos);
        for (std::size_t i = 0; i < n; ++i) {
            double g_transport = r[i] > 0.0 ? sg.wrt_mu0[i] * scale + shift : 0.0;
            ws.out.g[i] = static_cast<T>(g_transport + mass_term);
        }
        net.backward(ws);
    }
    return res;
}

} // namespace

template <typename T>
LossResult loss_forward_backward(PrimalDualNetT<T>& net, const datagen::TrainingPair& pair,
                                 const LossSpec& spec, const transport::KernelStencil* stencil,
                                 typename PrimalDualNetT<T>::Workspace& ws) {
    return loss_impl(net, pair, spec, stencil, ws, true);
}

template <typename T>
LossResult loss_forward(PrimalDualNetT<T>& net, const datagen::TrainingPair& pair,
                        const LossSpec& spec, const transport::KernelStencil* stencil,
                        typename PrimalDualNetT<T>::Workspace& ws) {
    return loss_impl(net, pair, spec, stencil, ws, false);
}

// --- checkpoints ------------------------------------------------------------------

Checkpoint checkpoint_from_net(const PrimalDualNet& net) {
    Checkpoint ck;
    ck.config = net.config();
    ck.grid = net.op().grid();
    ck.geom = net.op().geometry();
    for (const ParamT<float>* p : net.parameters()) ck.params.push_back(p->v);
    return ck;
}

void checkpoint_into_net(const Checkpoint& ck, PrimalDualNet& net) {
    auto params = net.parameters();
    if (params.size() != ck.params.size())
        throw ContractError("checkpoint_into_net: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->v.size() != ck.params[i].size())
            throw ContractError("checkpoint_into_net: shape mismatch at " + params[i]->name);
        params[i]->v = ck.params[i];
    }
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("save_checkpoint: cannot open " + path);
    os.write("OTPD", 4);
    binio::put_u32(os, 1); // version
    binio::put_u32(os, ck.has_optimizer ? 1u : 0u);
    binio::put_u32(os, static_cast<std::uint32_t>(ck.config.stages));
    binio::put_u32(os, static_cast<std::uint32_t>(ck.config.n_primal));
    binio::put_u32(os, static_cast<std::uint32_t>(ck.config.n_dual));
    binio::put_u32(os, static_cast<std::uint32_t>(ck.config.filters));
    binio::put_u32(os, static_cast<std::uint32_t>(ck.grid.width));
    binio::put_u32(os, static_cast<std::uint32_t>(ck.grid.height));
    binio::put_f64(os, ck.grid.spacing);
    binio::put_u32(os, static_cast<std::uint32_t>(ck.geom.angles));
    binio::put_u32(os, static_cast<std::uint32_t>(ck.geom.detectors));
    binio::put_f64(os, ck.geom.det_spacing);
    std::uint64_t total = 0;
    for (const auto& p : ck.params) total += p.size();
    binio::put_u64(os, total);
    for (const auto& p : ck.params)
        for (float x : p) binio::put_f32(os, x);
    if (ck.has_optimizer) {
        binio::put_u64(os, ck.adam_step);
        for (const auto& p : ck.adam_m)
            for (float x : p) binio::put_f32(os, x);
        for (const auto& p : ck.adam_v)
            for (float x : p) binio::put_f32(os, x);
    }
    if (!os) throw ContractError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ContractError("load_checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::strncmp(magic, "OTPD", 4) != 0)
        throw ContractError("load_checkpoint: bad magic in " + path);
    std::uint32_t version = binio::get_u32(is);
    if (version != 1)
        throw ContractError("load_checkpoint: unsupported version in " + path);
    std::uint32_t flags = binio::get_u32(is);
    Checkpoint ck;
    ck.config.stages = static_cast<int>(binio::get_u32(is));
    ck.config.n_primal = static_cast<int>(binio::get_u32(is));
    ck.config.n_dual = static_cast<int>(binio::get_u32(is));
    ck.config.filters = static_cast<int>(binio::get_u32(is));
    int gw = static_cast<int>(binio::get_u32(is));
    int gh = static_cast<int>(binio::get_u32(is));
    double spacing = binio::get_f64(is);
    if (!is || gw < 1 || gh < 1 || !(spacing > 0.0))
        throw ContractError("load_checkpoint: corrupt config block in " + path);
    ck.grid = PixelGrid(gw, gh, spacing);
    ck.geom.angles = static_cast<int>(binio::get_u32(is));
    ck.geom.detectors = static_cast<int>(binio::get_u32(is));
    ck.geom.det_spacing = binio::get_f64(is);
    std::uint64_t total = binio::get_u64(is);

    // reconstruct per-parameter shapes from the config
    NetConfig c = ck.config;
    auto push_block = [&](int in, int mid, int out) {
        ck.params.push_back(std::vector<float>(static_cast<std::size_t>(mid) * in * 9));
        ck.params.push_back(std::vector<float>(static_cast<std::size_t>(mid)));
        ck.params.push_back(std::vector<float>(static_cast<std::size_t>(mid)));
        ck.params.push_back(std::vector<float>(static_cast<std::size_t>(mid) * mid * 9));
        ck.params.push_back(std::vector<float>(static_cast<std::size_t>(mid)));
        ck.params.push_back(std::vector<float>(static_cast<std::size_t>(mid)));
        ck.params.push_back(std::vector<float>(static_cast<std::size_t>(out) * mid * 9));
        ck.params.push_back(std::vector<float>(static_cast<std::size_t>(out)));
    };
    for (int s = 0; s < c.stages; ++s) {
        push_block(c.n_dual + 2, c.filters, c.n_dual);
        push_block(c.n_primal + 1, c.filters, c.n_primal);
    }
    std::uint64_t expect = 0;
    for (const auto& p : ck.params) expect += p.size();
    if (expect != total)
        throw ContractError("load_checkpoint: parameter count mismatch in " + path);
    for (auto& p : ck.params)
        for (float& x : p) x = binio::get_f32(is);
    if (flags & 1u) {
        ck.has_optimizer = true;
        ck.adam_step = binio::get_u64(is);
        ck.adam_m = ck.params;
        ck.adam_v = ck.params;
        for (auto& p : ck.adam_m)
            for (float& x : p) x = binio::get_f32(is);
        for (auto& p : ck.adam_v)
            for (float& x : p) x = binio::get_f32(is);
    }
    if (!is) throw ContractError("load_checkpoint: truncated file " + path);
    return ck;
}

// --- explicit instantiations ---------------------------------------------------

template void conv3x3_forward<float>(const TensorT<float>&, const ParamT<float>&,
                                     const ParamT<float>&, TensorT<float>&);
template void conv3x3_forward<double>(const TensorT<double>&, const ParamT<double>&,
                                      const ParamT<double>&, TensorT<double>&);
template void conv3x3_backward<float>(TensorT<float>&, ParamT<float>&, ParamT<float>&,
                                      const TensorT<float>&);
template void conv3x3_backward<double>(TensorT<double>&, ParamT<double>&, ParamT<double>&,
                                       const TensorT<double>&);
template void prelu_forward<float>(const TensorT<float>&, const ParamT<float>&, TensorT<float>&);
template void prelu_forward<double>(const TensorT<double>&, const ParamT<double>&, TensorT<double>&);
template void prelu_backward<float>(TensorT<float>&, ParamT<float>&, const TensorT<float>&);
template void prelu_backward<double>(TensorT<double>&, ParamT<double>&, const TensorT<double>&);
template struct ConvBlockT<float>;
template struct ConvBlockT<double>;
template class PrimalDualNetT<float>;
template class PrimalDualNetT<double>;
template LossResult loss_forward_backward<float>(PrimalDualNetT<float>&, const datagen::TrainingPair&,
                                                 const LossSpec&, const transport::KernelStencil*,
                                                 PrimalDualNetT<float>::Workspace&);
template LossResult loss_forward_backward<double>(PrimalDualNetT<double>&, const datagen::TrainingPair&,
                                                  const LossSpec&, const transport::KernelStencil*,
                                                  PrimalDualNetT<double>::Workspace&);
template LossResult loss_forward<float>(PrimalDualNetT<float>&, const datagen::TrainingPair&,
                                        const LossSpec&, const transport::KernelStencil*,
                                        PrimalDualNetT<float>::Workspace&);
template LossResult loss_forward<double>(PrimalDualNetT<double>&, const datagen::TrainingPair&,
                                         const LossSpec&, const transport::KernelStencil*,
                                         PrimalDualNetT<double>::Workspace&);

} // namespace otrecon::diffnet
