#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>

#include "otrecon/datagen.hpp"
#include "otrecon/diffnet.hpp"
#include "otrecon/training.hpp"

using namespace otrecon;
using namespace otrecon::diffnet;

namespace {

std::shared_ptr<const tomo::RayTransform> small_op() {
    static auto op = std::make_shared<tomo::RayTransform>(PixelGrid(16, 16),
                                                          tomo::ParallelBeamGeometry{10, 23, 1.0});
    return op;
}

NetConfig small_cfg() {
    NetConfig c;
    c.stages = 2;
    c.n_primal = 3;
    c.n_dual = 3;
    c.filters = 4;
    return c;
}

datagen::TrainingPair small_pair(std::uint64_t stream) {
    datagen::PhantomSpec ph;
    ph.grid = PixelGrid(16, 16);
    ph.count_min = 1;
    ph.count_max = 2;
    ph.radius_min = 2;
    ph.radius_max = 4;
    ph.margin = 5;
    datagen::MisalignmentSpec mis;
    mis.bound = 1.0;
    datagen::NoiseSpec noise;
    noise.level = 0.05;
    SeededRng rng(99, stream);
    return datagen::make_pair(ph, mis, noise, *small_op(), rng);
}

} // namespace

TEST_CASE("conv with an identity kernel reproduces the input") {
    TensorT<double> in(1, 6, 6);
    SeededRng rng(1, 0);
    for (double& v : in.v) v = rng.uniform(-1.0, 1.0);
    ParamT<double> w, b;
    w.init("w", 9);
    b.init("b", 1);
    w.v[4] = 1.0; // center tap
    TensorT<double> out(1, 6, 6);
    conv3x3_forward(in, w, b, out);
    for (std::size_t i = 0; i < in.v.size(); ++i) CHECK(out.v[i] == in.v[i]);
}

TEST_CASE("zero weights and biases give the zero correction") {
    ConvBlockT<float> block;
    block.init_shapes("z", 3, 4, 3);
    TensorT<float> in(3, 8, 8);
    SeededRng rng(2, 0);
    for (float& v : in.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    ConvBlockT<float>::Activations act;
    block.forward(in, act);
    for (float v : act.z3.v) CHECK(v == 0.0f);
}

TEST_CASE("conv rejects mismatched shapes") {
    ConvBlockT<float> block;
    block.init_shapes("m", 3, 4, 3);
    TensorT<float> wrong(2, 8, 8);
    ConvBlockT<float>::Activations act;
    CHECK_THROWS_AS(block.forward(wrong, act), ContractError);
}

TEST_CASE("conv block gradients match central differences in f64") {
    ConvBlockT<double> block;
    block.init_shapes("g", 2, 4, 2);
    TensorT<double> in(2, 8, 8);
    std::vector<double> proj;
    ConvBlockT<double>::Activations act;
    // kink margin: redraw until no pre-activation sits within reach of the step
    std::uint64_t attempt = 0;
    for (;; ++attempt) {
        REQUIRE(attempt < 200);
        SeededRng rng(3, attempt);
        for (auto* p : block.params())
            for (double& v : p->v) v = rng.uniform(-0.5, 0.5);
        for (double& v : in.v) v = rng.uniform(-1.0, 1.0);
        proj.clear();
        for (std::size_t i = 0; i < in.plane_size() * 2; ++i) proj.push_back(rng.uniform(-1.0, 1.0));
        block.forward(in, act);
        double minz = 1e300;
        for (const auto* t : {&act.z1, &act.z2})
            for (double v : t->v) minz = std::min(minz, std::abs(v));
        if (minz > 1e-4) break;
    }

    auto value = [&]() {
        ConvBlockT<double>::Activations a;
        block.forward(in, a);
        double acc = 0.0;
        for (std::size_t i = 0; i < a.z3.v.size(); ++i) acc += proj[i] * a.z3.v[i];
        return acc;
    };
    block.forward(in, act);
    for (std::size_t i = 0; i < act.z3.v.size(); ++i) act.z3.g[i] = proj[i];
    block.backward(in, act);

    double gmax = 0.0;
    for (auto* p : block.params())
        for (double g : p->g) gmax = std::max(gmax, std::abs(g));
    for (double g : in.g) gmax = std::max(gmax, std::abs(g));

    const double h = 1e-5;
    double worst = 0.0;
    auto check = [&](double* slot, double analytic) {
        double keep = *slot;
        *slot = keep + h;
        double up = value();
        *slot = keep - h;
        double dn = value();
        *slot = keep;
        double fd = (up - dn) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - analytic) /
                                    std::max({std::abs(fd), std::abs(analytic), 1e-4 * gmax}));
    };
    for (auto* p : block.params())
        for (std::size_t i = 0; i < p->v.size(); ++i) check(&p->v[i], p->g[i]);
    for (std::size_t i = 0; i < in.v.size(); ++i) check(&in.v[i], in.g[i]);
    CHECK(worst <= 1e-7);
}

TEST_CASE("zero-parameter network outputs zero for any data") {
    PrimalDualNet net(small_cfg(), small_op());
    // params default to zero
    PrimalDualNet::Workspace ws;
    net.forward(small_pair(0).data, ws);
    for (float v : ws.out.v) CHECK(v == 0.0f);
    net.forward(small_pair(1).data, ws);
    for (float v : ws.out.v) CHECK(v == 0.0f);
}

TEST_CASE("forward is bitwise deterministic") {
    PrimalDualNet net(small_cfg(), small_op());
    SeededRng init(5, 0);
    net.init_params(init);
    datagen::TrainingPair pair = small_pair(2);
    PrimalDualNet::Workspace w1, w2;
    net.forward(pair.data, w1);
    net.forward(pair.data, w2);
    CHECK(w1.out.v == w2.out.v);
}

TEST_CASE("geometry mismatch is a contract error") {
    PrimalDualNet net(small_cfg(), small_op());
    tomo::Sinogram wrong(tomo::ParallelBeamGeometry{9, 23, 1.0});
    PrimalDualNet::Workspace ws;
    CHECK_THROWS_AS(net.forward(wrong, ws), ContractError);
}

TEST_CASE("non-finite activations name the stage") {
    PrimalDualNet net(small_cfg(), small_op());
    SeededRng init(6, 0);
    net.init_params(init);
    net.parameters()[0]->v[0] = std::numeric_limits<float>::infinity();
    PrimalDualNet::Workspace ws;
    try {
        net.forward(small_pair(0).data, ws);
        CHECK(false);
    } catch (const NumericalBreakdown& e) {
        CHECK(std::string(e.what()).find("stage 1") != std::string::npos);
    }
}

TEST_CASE("mse loss of the zero network equals |f|^2/n") {
    PrimalDualNet net(small_cfg(), small_op());
    datagen::TrainingPair pair = small_pair(3);
    LossSpec spec;
    PrimalDualNet::Workspace ws;
    LossResult res = loss_forward(net, pair, spec, nullptr, ws);
    double expect = 0.0;
    for (double v : pair.truth.values) expect += v * v;
    expect /= static_cast<double>(pair.truth.grid.cells());
    CHECK(res.loss == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("wasserstein loss prefers the truth over a shifted copy") {
    // direct evaluation of the loss's transport term for two candidate outputs
    PixelGrid grid(32, 32);
    datagen::PhantomSpec ph;
    ph.grid = grid;
    ph.count_min = 2;
    ph.count_max = 2;
    ph.radius_min = 3;
    ph.radius_max = 5;
    ph.margin = 9;
    SeededRng rng(7, 0);
    DiscreteMeasure f = datagen::sample_phantom(ph, rng);

    LossSpec spec;
    spec.kind = LossSpec::Kind::EntropicWasserstein;
    spec.cost.sigma = 10.0 * grid.spacing;
    transport::KernelStencil st = transport::build_stencil(grid, spec.cost, spec.ot.epsilon);

    auto transport_term = [&](const DiscreteMeasure& out) {
        DiscreteMeasure scaled = normalize_mass(out, mass(f));
        return transport::sinkhorn_unchecked(scaled.values, f.values, st, spec.ot).value;
    };

    double self_loss = transport_term(f);
    // truth translated three pixels
    DiscreteMeasure shifted(grid);
    for (int j = 0; j < 32; ++j)
        for (int i = 3; i < 32; ++i) shifted.at(i, j) = f.at(i - 3, j);
    shifted = normalize_mass(shifted, mass(f));
    double shifted_loss = transport_term(shifted);

    CHECK(self_loss < 0.05); // entropic bias only
    CHECK(self_loss < shifted_loss);
}

TEST_CASE("the transport term is invariant to output scaling") {
    PixelGrid grid(16, 16);
    datagen::PhantomSpec ph;
    ph.grid = grid;
    ph.count_min = 1;
    ph.count_max = 1;
    ph.radius_min = 3;
    ph.radius_max = 4;
    ph.margin = 5;
    SeededRng rng(8, 0);
    DiscreteMeasure f = datagen::sample_phantom(ph, rng);
    SeededRng rng2(8, 1);
    DiscreteMeasure r = datagen::sample_phantom(ph, rng2);

    LossSpec spec;
    spec.kind = LossSpec::Kind::EntropicWasserstein;
    spec.cost.sigma = 5.0;
    transport::KernelStencil st = transport::build_stencil(grid, spec.cost, spec.ot.epsilon);
    auto term = [&](const DiscreteMeasure& out) {
        DiscreteMeasure scaled = normalize_mass(out, mass(f));
        return transport::sinkhorn_unchecked(scaled.values, f.values, st, spec.ot).value;
    };
    DiscreteMeasure r2 = r;
    for (double& v : r2.values) v *= 4.2;
    CHECK(term(r) == doctest::Approx(term(r2)).epsilon(1e-12));
}

TEST_CASE("ot loss end-to-end gradient matches the f64 twin") {
    auto op = small_op();
    PrimalDualNet net(small_cfg(), op);
    SeededRng init(9, 0);
    net.init_params(init);
    PrimalDualNetT<double> twin(small_cfg(), op);
    {
        auto src = net.parameters();
        auto dst = twin.parameters();
        for (std::size_t i = 0; i < src.size(); ++i)
            for (std::size_t j = 0; j < src[i]->v.size(); ++j)
                dst[i]->v[j] = static_cast<double>(src[i]->v[j]);
    }
    datagen::TrainingPair pair = small_pair(4);
    LossSpec spec;
    spec.kind = LossSpec::Kind::EntropicWasserstein;
    spec.cost.sigma = 5.0;
    transport::KernelStencil st =
        transport::build_stencil(PixelGrid(16, 16), spec.cost, spec.ot.epsilon);

    PrimalDualNet::Workspace ws;
    net.zero_grads();
    LossResult res = loss_forward_backward(net, pair, spec, &st, ws);
    REQUIRE_FALSE(res.degenerate);

    auto params = net.parameters();
    auto tparams = twin.parameters();
    SeededRng pick(9, 1);
    PrimalDualNetT<double>::Workspace tws;
    double num = 0.0, den = 0.0;
    for (int k = 0; k < 24; ++k) {
        std::size_t pi = pick.next_below(params.size());
        std::size_t xi = pick.next_below(params[pi]->v.size());
        double analytic = static_cast<double>(params[pi]->g[xi]);
        double& slot = tparams[pi]->v[xi];
        const double h = 1e-6;
        double keep = slot;
        slot = keep + h;
        double up = loss_forward(twin, pair, spec, &st, tws).loss;
        slot = keep - h;
        double dn = loss_forward(twin, pair, spec, &st, tws).loss;
        slot = keep;
        double fd = (up - dn) / (2.0 * h);
        num += (fd - analytic) * (fd - analytic);
        den += fd * fd;
    }
    CHECK(std::sqrt(num / den) <= 1e-3);
}

TEST_CASE("degenerate output raises or recovers per the spec flag") {
    PrimalDualNet net(small_cfg(), small_op()); // zero params: output mass 0
    datagen::TrainingPair pair = small_pair(5);
    LossSpec spec;
    spec.kind = LossSpec::Kind::EntropicWasserstein;
    spec.cost.sigma = 5.0;
    transport::KernelStencil st =
        transport::build_stencil(PixelGrid(16, 16), spec.cost, spec.ot.epsilon);
    PrimalDualNet::Workspace ws;

    spec.degenerate_recovery = false;
    CHECK_THROWS_AS(loss_forward_backward(net, pair, spec, &st, ws), DegenerateOutput);

    spec.degenerate_recovery = true;
    net.zero_grads();
    LossResult res = loss_forward_backward(net, pair, spec, &st, ws);
    CHECK(res.degenerate);
    CHECK(res.transport_value == 0.0);
    CHECK(res.loss == doctest::Approx(spec.mass_penalty).epsilon(1e-12)); // ((0-mf)/mf)^2
    // the recovery gradient pushes the output mass up
    bool any_nonzero = false;
    for (auto* p : net.parameters())
        for (float g : p->g)
            if (g != 0.0f) any_nonzero = true;
    CHECK(any_nonzero);
}

TEST_CASE("checkpoint round-trip is bit exact, with and without optimizer state") {
    PrimalDualNet net(small_cfg(), small_op());
    SeededRng init(11, 0);
    net.init_params(init);
    Checkpoint ck = checkpoint_from_net(net);
    std::string path = (std::filesystem::temp_directory_path() / "otpd_test.otpd").string();
    save_checkpoint(ck, path);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.config.stages == ck.config.stages);
    CHECK(back.grid == ck.grid);
    CHECK(back.geom == ck.geom);
    REQUIRE(back.params.size() == ck.params.size());
    for (std::size_t i = 0; i < ck.params.size(); ++i) CHECK(back.params[i] == ck.params[i]);
    CHECK_FALSE(back.has_optimizer);

    ck.has_optimizer = true;
    ck.adam_step = 1234;
    ck.adam_m = ck.params;
    ck.adam_v = ck.params;
    save_checkpoint(ck, path);
    Checkpoint back2 = load_checkpoint(path);
    CHECK(back2.has_optimizer);
    CHECK(back2.adam_step == 1234);
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
        CHECK(back2.adam_m[i] == ck.adam_m[i]);
        CHECK(back2.adam_v[i] == ck.adam_v[i]);
    }
    std::filesystem::remove(path);
}

TEST_CASE("corrupted checkpoints are rejected") {
    std::string path = (std::filesystem::temp_directory_path() / "otpd_bad.otpd").string();
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE this is not a checkpoint";
    }
    CHECK_THROWS_AS(load_checkpoint(path), ContractError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/path.otpd"), ContractError);
    std::filesystem::remove(path);
}

TEST_CASE("operator norm estimate is deterministic and positive") {
    double n1 = operator_norm_estimate(*small_op());
    double n2 = operator_norm_estimate(*small_op());
    CHECK(n1 == n2);
    CHECK(n1 > 0.0);
    PrimalDualNet net(small_cfg(), small_op());
    CHECK(net.op_scale() == doctest::Approx(1.0 / n1));
}
