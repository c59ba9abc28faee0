#include "otrecon/cli/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cli_util.hpp"
#include "otrecon/datagen.hpp"
#include "otrecon/diffnet.hpp"
#include "otrecon/version.hpp"

namespace otrecon::cli {

namespace fs = std::filesystem;

namespace detail {

void write_text(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("cannot open " + path);
    os << content;
    if (!os) throw ContractError("write failed for " + path);
}

void write_manifest(const std::string& out_dir, const std::string& command, const Resolved& r,
                    const std::vector<std::string>& artifacts,
                    const std::vector<std::string>& extra) {
    std::ostringstream m;
    m << "otrecon run manifest\n";
    m << "command = " << command << "\n";
    m << "version = " << VERSION << "\n";
    for (const std::string& line : extra) m << line << "\n";
    m << "\n# resolved configuration (replayable as --config)\n";
    m << r.echo();
    m << "\n# artifacts\n";
    for (const std::string& a : artifacts) m << a << "\n";
    write_text(out_dir + "/manifest.txt", m.str());
    write_text(out_dir + "/config.resolved", r.echo());
}

DiscreteMeasure compose_panels(const std::vector<DiscreteMeasure>& panels, int gap) {
    int height = 0, width = 0;
    for (const auto& p : panels) {
        height = std::max(height, p.grid.height);
        width += p.grid.width;
    }
    width += gap * (static_cast<int>(panels.size()) - 1);
    DiscreteMeasure sheet(PixelGrid(width, height, 1.0));
    int x0 = 0;
    for (const auto& p : panels) {
        double lo = *std::min_element(p.values.begin(), p.values.end());
        double hi = *std::max_element(p.values.begin(), p.values.end());
        double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
        for (int j = 0; j < p.grid.height; ++j)
            for (int i = 0; i < p.grid.width; ++i)
                sheet.at(x0 + i, j) = (p.at(i, j) - lo) * scale;
        x0 += p.grid.width + gap;
    }
    return sheet;
}

DiscreteMeasure sinogram_as_image(const tomo::Sinogram& s) {
    DiscreteMeasure img(PixelGrid(s.geom.detectors, s.geom.angles, 1.0));
    img.values = s.values;
    return img;
}

} // namespace detail

using detail::compose_panels;
using detail::sinogram_as_image;
using detail::write_manifest;
using detail::write_text;

namespace {

void add_data_keys(Schema& s) {
    s.add("seed", "1")
        .add("grid.size", "64")
        .add("grid.spacing", "1.0")
        .add("geom.angles", "30")
        .add("geom.detectors", "91")
        .add("geom.det_spacing", "1.0")
        .add("phantom.count_min", "2")
        .add("phantom.count_max", "6")
        .add("phantom.radius_min", "4")
        .add("phantom.radius_max", "12")
        .add("phantom.intensity_min", "0.5")
        .add("phantom.intensity_max", "1.0")
        .add("phantom.margin", "auto")
        .add("shift.bound", "5")
        .add("shift.per_circle", "true")
        .add("noise.level", "0.05");
}

void add_net_train_keys(Schema& s) {
    s.add("net.stages", "5")
        .add("net.filters", "16")
        .add("net.primal_channels", "5")
        .add("net.dual_channels", "5")
        .add("train.loss", "l2")
        .add("train.steps", "2000")
        .add("train.lr", "1e-3")
        .add("train.lr_min", "0")
        .add("train.clip", "1.0")
        .add("train.checkpoint_every", "500")
        .add("train.validate_every", "250")
        .add("train.val_pairs", "16")
        .add("ot.cost", "bounded_quartic")
        .add("ot.sigma", "10")
        .add("ot.epsilon", "1e-3")
        .add("ot.iterations", "10")
        .add("ot.rho", "1e-6")
        .add("ot.mass_penalty", "1.0");
}

} // namespace

Schema generate_schema() {
    Schema s;
    add_data_keys(s);
    s.add("generate.count", "16");
    return s;
}

Schema train_schema() {
    Schema s;
    add_data_keys(s);
    add_net_train_keys(s);
    return s;
}

Schema eval_schema() {
    Schema s;
    add_data_keys(s);
    s.add("eval.pairs", "16");
    return s;
}

training::TrainConfig train_config_from(const Resolved& r) {
    training::TrainConfig c;
    int size = static_cast<int>(r.integer("grid.size"));
    c.grid = PixelGrid(size, size, r.real("grid.spacing"));
    c.geom.angles = static_cast<int>(r.integer("geom.angles"));
    c.geom.detectors = static_cast<int>(r.integer("geom.detectors"));
    c.geom.det_spacing = r.real("geom.det_spacing");
    c.phantom.grid = c.grid;
    c.phantom.count_min = static_cast<int>(r.integer("phantom.count_min"));
    c.phantom.count_max = static_cast<int>(r.integer("phantom.count_max"));
    c.phantom.radius_min = r.real("phantom.radius_min");
    c.phantom.radius_max = r.real("phantom.radius_max");
    c.phantom.intensity_min = r.real("phantom.intensity_min");
    c.phantom.intensity_max = r.real("phantom.intensity_max");
    c.shift.bound = r.real("shift.bound");
    c.shift.per_circle = r.boolean("shift.per_circle");
    c.phantom.margin = r.str("phantom.margin") == "auto"
                           ? c.phantom.radius_max + c.shift.bound
                           : r.real("phantom.margin");
    c.noise.level = r.real("noise.level");
    c.seed = r.u64("seed");
    return c;
}

namespace {

void apply_train_keys(training::TrainConfig& c, const Resolved& r) {
    c.net.stages = static_cast<int>(r.integer("net.stages"));
    c.net.filters = static_cast<int>(r.integer("net.filters"));
    c.net.n_primal = static_cast<int>(r.integer("net.primal_channels"));
    c.net.n_dual = static_cast<int>(r.integer("net.dual_channels"));
    const std::string& loss = r.str("train.loss");
    if (loss == "l2")
        c.loss.kind = diffnet::LossSpec::Kind::MeanSquaredError;
    else if (loss == "ot")
        c.loss.kind = diffnet::LossSpec::Kind::EntropicWasserstein;
    else
        throw ConfigError("train.loss must be 'l2' or 'ot', got '" + loss + "'");
    const std::string& cost = r.str("ot.cost");
    if (cost == "bounded_quartic")
        c.loss.cost.form = transport::TransportCost::Form::BoundedQuartic;
    else if (cost == "squared")
        c.loss.cost.form = transport::TransportCost::Form::SquaredDistance;
    else
        throw ConfigError("ot.cost must be 'bounded_quartic' or 'squared', got '" + cost + "'");
    c.loss.cost.sigma = r.real("ot.sigma") * c.grid.spacing;
    c.loss.ot.epsilon = r.real("ot.epsilon");
    c.loss.ot.iterations = static_cast<int>(r.integer("ot.iterations"));
    c.loss.ot.rho = r.real("ot.rho");
    c.loss.mass_penalty = r.real("ot.mass_penalty");
    c.steps = r.u64("train.steps");
    c.schedule.eta0 = r.real("train.lr");
    c.schedule.eta_min = r.real("train.lr_min");
    c.schedule.total_steps = c.steps;
    c.clip_norm = r.real("train.clip");
    c.checkpoint_every = r.u64("train.checkpoint_every");
    c.validate_every = r.u64("train.validate_every");
    c.val_pairs = static_cast<int>(r.integer("train.val_pairs"));
}

std::string pair_stem(int index) {
    std::ostringstream os;
    os << "pair_" << std::setw(4) << std::setfill('0') << index;
    return os.str();
}

} // namespace

void cmd_generate(const Config& cfg, const std::string& out_dir) {
    Resolved r = generate_schema().resolve(cfg);
    training::TrainConfig base = train_config_from(r);
    long count = r.integer("generate.count");
    if (count < 0) throw ConfigError("generate.count must be >= 0");

    fs::create_directories(out_dir);
    std::vector<std::string> artifacts;
    std::ostringstream pairs_csv;
    pairs_csv << "index,seed,stream,redraws,shifts\n";

    std::optional<tomo::RayTransform> op;
    if (count > 0) op.emplace(base.grid, base.geom);

    for (long k = 0; k < count; ++k) {
        SeededRng rng(base.seed, static_cast<std::uint64_t>(k));
        datagen::TrainingPair pair =
            datagen::make_pair(base.phantom, base.shift, base.noise, *op, rng);
        std::string stem = pair_stem(static_cast<int>(k));
        save_raw(pair.truth, out_dir + "/" + stem + "_truth.otr");
        tomo::save_raw(pair.data, out_dir + "/" + stem + "_data.ots");
        artifacts.push_back(stem + "_truth.otr");
        artifacts.push_back(stem + "_data.ots");

        pairs_csv << k << "," << base.seed << "," << k << "," << pair.shift_redraws << ",";
        for (std::size_t c = 0; c < pair.shifts.size(); ++c) {
            if (c) pairs_csv << ";";
            pairs_csv << std::setprecision(17) << pair.shifts[c][0] << ":" << pair.shifts[c][1];
        }
        pairs_csv << "\n";

        if (k == 0) {
            DiscreteMeasure sheet = compose_panels(
                {pair.truth, pair.shifted_truth, sinogram_as_image(pair.data)});
            save_pgm16(sheet, out_dir + "/contact_sheet.pgm");
            artifacts.push_back("contact_sheet.pgm");
        }
    }
    write_text(out_dir + "/pairs.csv", pairs_csv.str());
    artifacts.push_back("pairs.csv");
    write_manifest(out_dir, "generate", r, artifacts);
}

void cmd_train(const Config& cfg, const std::string& out_dir,
               const std::optional<std::string>& resume_checkpoint) {
    Resolved r = train_schema().resolve(cfg);
    training::TrainConfig c = train_config_from(r);
    apply_train_keys(c, r);

    fs::create_directories(out_dir);
    training::TrainResult res = training::train(c, out_dir, resume_checkpoint);

    std::vector<std::string> extra;
    if (resume_checkpoint) extra.push_back("resumed_from = " + *resume_checkpoint);
    extra.push_back("steps_run = " + std::to_string(res.steps_run));
    extra.push_back("skipped = " + std::to_string(res.skipped));
    write_manifest(out_dir, "train", r, {"metrics.csv", "checkpoint.otpd"}, extra);
}

void cmd_eval(const Config& cfg, const std::string& out_dir,
              const std::vector<std::string>& checkpoints) {
    if (checkpoints.empty() || checkpoints.size() > 2)
        throw ContractError("eval: supply one or two --checkpoint paths");
    Resolved r = eval_schema().resolve(cfg);
    training::TrainConfig base = train_config_from(r);
    int pairs = static_cast<int>(r.integer("eval.pairs"));
    if (pairs < 1) throw ConfigError("eval.pairs must be >= 1");

    fs::create_directories(out_dir);

    auto op = std::make_shared<tomo::RayTransform>(base.grid, base.geom);
    base.val_pairs = pairs;
    std::vector<datagen::TrainingPair> val_set;
    for (int i = 0; i < pairs; ++i)
        val_set.push_back(training::validation_pair(base, *op, i));

    std::ostringstream table, summary;
    table << "checkpoint,pair,l2_error,mass_err,centroid_px,spread_ratio\n";
    summary << "checkpoint,mean_l2_error,mean_mass_err,mean_centroid_px,mean_spread_ratio\n";
    table << std::setprecision(17);
    summary << std::setprecision(17);

    std::vector<DiscreteMeasure> recon0; // reconstructions of pair 0 per checkpoint

    for (const std::string& ck_path : checkpoints) {
        diffnet::Checkpoint ck = diffnet::load_checkpoint(ck_path);
        if (!(ck.grid == base.grid) || !(ck.geom == base.geom))
            throw ContractError("eval: checkpoint geometry does not match the configured data: " +
                                ck_path);
        diffnet::PrimalDualNet net(ck.config, op);
        diffnet::checkpoint_into_net(ck, net);

        double sum_l2 = 0.0, sum_mass = 0.0, sum_centroid = 0.0, sum_spread = 0.0;
        diffnet::PrimalDualNet::Workspace ws;
        for (int i = 0; i < pairs; ++i) {
            const datagen::TrainingPair& pair = val_set[static_cast<std::size_t>(i)];
            net.forward(pair.data, ws);
            DiscreteMeasure rec(base.grid);
            for (int p = 0; p < base.grid.cells(); ++p)
                rec.values[static_cast<std::size_t>(p)] =
                    static_cast<double>(ws.out.v[static_cast<std::size_t>(p)]);
            if (i == 0) recon0.push_back(rec);

            double l2 = 0.0;
            for (int p = 0; p < base.grid.cells(); ++p) {
                double d = rec.values[static_cast<std::size_t>(p)] -
                           pair.truth.values[static_cast<std::size_t>(p)];
                l2 += d * d;
            }
            l2 /= static_cast<double>(base.grid.cells());

            double m_truth = mass(pair.truth);
            double m_rec = mass(rec);
            double mass_err = m_truth > 0.0 ? std::abs(m_rec - m_truth) / m_truth : 0.0;

            // moments on the nonnegative part; a density cannot carry negative mass
            DiscreteMeasure rec_pos = rec;
            for (double& v : rec_pos.values) v = std::max(v, 0.0);
            Moments mo_rec = image_moments(rec_pos);
            Moments mo_truth = image_moments(pair.truth);
            double centroid_px = 0.0, spread_ratio = 0.0;
            if (mo_rec.mass > 0.0 && mo_truth.mass > 0.0) {
                centroid_px = std::hypot(mo_rec.cx - mo_truth.cx, mo_rec.cy - mo_truth.cy) /
                              base.grid.spacing;
                spread_ratio = mo_truth.spread > 0.0 ? mo_rec.spread / mo_truth.spread : 0.0;
            }

            table << ck_path << "," << i << "," << l2 << "," << mass_err << "," << centroid_px
                  << "," << spread_ratio << "\n";
            sum_l2 += l2;
            sum_mass += mass_err;
            sum_centroid += centroid_px;
            sum_spread += spread_ratio;
        }
        double inv = 1.0 / static_cast<double>(pairs);
        summary << ck_path << "," << sum_l2 * inv << "," << sum_mass * inv << ","
                << sum_centroid * inv << "," << sum_spread * inv << "\n";
    }

    write_text(out_dir + "/eval_metrics.csv", table.str());
    write_text(out_dir + "/eval_summary.csv", summary.str());
    std::vector<std::string> artifacts = {"eval_metrics.csv", "eval_summary.csv"};

    if (checkpoints.size() == 2) {
        DiscreteMeasure sheet = compose_panels(
            {val_set[0].truth, val_set[0].shifted_truth, recon0[0], recon0[1]});
        save_pgm16(sheet, out_dir + "/eval_panel.pgm");
        artifacts.push_back("eval_panel.pgm");
    }

    std::vector<std::string> extra;
    for (std::size_t i = 0; i < checkpoints.size(); ++i)
        extra.push_back("checkpoint" + std::to_string(i + 1) + " = " + checkpoints[i]);
    write_manifest(out_dir, "eval", r, artifacts, extra);
}

} // namespace otrecon::cli
