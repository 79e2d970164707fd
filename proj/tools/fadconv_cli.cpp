// fadconv command line: dataset generation, training, evaluation, gradient
// checks, cost reports, attention heatmaps, and ablation sweeps.

#include <CLI11.hpp>
#include "json.hpp"

#include <Eigen/Core>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "fadconv/data.hpp"
#include "fadconv/freq.hpp"
#include "fadconv/model.hpp"
#include "fadconv/pnm.hpp"

namespace fs = std::filesystem;
using namespace fadconv;
using nlohmann::json;

static std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

static void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

// --set key=value; values parse as JSON when possible, else as strings.
static json apply_overrides(json base, const std::vector<std::string>& sets) {
    for (const std::string& kv : sets) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects key=value, got '" + kv + "'");
        const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        json parsed;
        try {
            parsed = json::parse(val);
        } catch (...) {
            parsed = val;
        }
        base[key] = parsed;
    }
    return base;
}

static model::ModelConfig resolve_config(const std::string& config_path,
                                         const std::vector<std::string>& sets,
                                         const int64_t* seed) {
    json j = config_path.empty() ? json::object() : json::parse(read_file(config_path));
    j = apply_overrides(j, sets);
    if (seed) j["seed"] = *seed;
    return model::ModelConfig::from_json(j.dump());
}

static uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

static std::string config_hash(const model::ModelConfig& cfg) {
    // seed excluded so that (hash, seed) identifies a sweep cell
    model::ModelConfig c = cfg;
    c.seed = 0;
    std::ostringstream os;
    os << std::hex << fnv1a(c.to_json());
    return os.str();
}

// ---- subcommands ---------------------------------------------------------------

static int cmd_gen_data(const std::string& out, const std::string& config_path, int64_t seed,
                        int count, int size, int classes) {
    data::DatasetSpec spec =
        config_path.empty()
            ? data::DatasetSpec::defaults(classes, size, count, static_cast<uint64_t>(seed))
            : data::spec_from_json(read_file(config_path));
    if (!config_path.empty()) spec.seed = static_cast<uint64_t>(seed);
    spec.validate();
    const data::Dataset ds = data::generate(spec);
    data::save_dataset(out, spec, ds);
    std::cout << "wrote " << ds.train.size() << " train / " << ds.test.size() << " test / "
              << ds.val.size() << " val samples to " << out << "\n";
    return 0;
}

static int cmd_train(const model::ModelConfig& cfg, const std::string& data_dir,
                     const std::string& out) {
    fs::create_directories(out);
    write_file(out + "/config.json", cfg.to_json());
    const data::Dataset ds = data::load_dataset(data_dir);

    model::SegModel m(cfg);
    nn::Adam opt(cfg.lr, cfg.weight_decay);
    const std::vector<model::EpochLog> log = model::train(m, opt, ds, out + "/train_log.csv");

    const metrics::MetricsReport final =
        log.empty() ? model::evaluate(m, ds.test) : log.back().test;
    write_file(out + "/final_metrics.csv", final.csv_header() + "\n" + final.csv_row() + "\n");
    model::save_checkpoint(out + "/checkpoint.bin", m, opt, cfg.epochs,
                           Rng::derive(cfg.seed, 0x7261696eULL));
    std::cout << final.pretty();
    return 0;
}

static int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
                    const std::string& out) {
    nn::Adam opt(1.0);
    int epoch = 0;
    Rng rng;
    std::unique_ptr<model::SegModel> m = model::load_checkpoint(checkpoint, opt, epoch, rng);
    const data::Dataset ds = data::load_dataset(data_dir);
    const metrics::MetricsReport rep = model::evaluate(*m, ds.test);
    if (!out.empty()) {
        fs::create_directories(out);
        write_file(out + "/metrics.csv", rep.csv_header() + "\n" + rep.csv_row() + "\n");
    }
    std::cout << rep.pretty();
    return 0;
}

static int cmd_cost(const model::ModelConfig& cfg, const std::string& out) {
    model::SegModel m(cfg);
    const std::string csv = m.cost_report().csv();
    if (!out.empty()) {
        fs::create_directories(out);
        write_file(out + "/cost.csv", csv);
    }
    std::cout << csv;
    return 0;
}

static int cmd_heatmap(const std::string& image_path, int n, int channel,
                       const std::string& out) {
    Matrix plane;
    if (image_path.size() >= 4 && image_path.substr(image_path.size() - 4) == ".pgm") {
        plane = pnm::read_pgm(image_path) / 255.0;
    } else {
        const Tensor4 img = pnm::read_ppm(image_path);
        if (channel < 0 || channel >= img.channels())
            throw std::runtime_error("channel out of range for " + image_path);
        plane = img.plane(0, channel);
    }
    const freq::HeatmapPair maps = freq::attention_heatmap(plane, n, true);
    fs::create_directories(out);
    pnm::write_pgm(out + "/freq.pgm", maps.freq_map * 255.0);
    pnm::write_pgm(out + "/gap.pgm", maps.gap_map * 255.0);
    std::cout << "wrote " << out << "/freq.pgm and " << out << "/gap.pgm\n";
    return 0;
}

// Small scalar head for layer-level checks: loss = <output, r>.
static nn::GradCheckResult check_layer(nn::Layer& layer, Tensor4& x, Rng& rng) {
    Vector r(x.size() * 8);  // generous upper bound, resized on first forward
    Tensor4 probe = layer.forward(x, true);
    r = Vector(probe.size());
    for (long i = 0; i < r.size(); ++i) r[i] = rng.uniform(-1.0, 1.0);

    std::vector<nn::GradPair*> params;
    layer.collect_params(params);
    Tensor4 input_grad;
    auto loss_and_grad = [&]() {
        for (nn::GradPair* p : params) p->zero_grad();
        Tensor4 y = layer.forward(x, true);
        Tensor4 g(y.batch(), y.channels(), y.height(), y.width());
        g.data() = r;
        input_grad = layer.backward(g);
        return y.data().dot(r);
    };
    auto loss_only = [&]() { return layer.forward(x, true).data().dot(r); };
    loss_and_grad();
    return nn::grad_check(loss_and_grad, loss_only, params, 1e-5, &x, &input_grad);
}

static int cmd_gradcheck() {
    Rng rng(99);
    bool ok = true;
    auto report = [&ok](const std::string& name, const nn::GradCheckResult& r, double tol) {
        const bool pass = r.ok(tol);
        ok = ok && pass;
        std::cout << (pass ? "pass" : "FAIL") << "  " << name << "  max_rel_err=" << r.max_rel_err
                  << " (tol " << tol << ", worst " << r.worst_path << ")\n";
    };

    auto rand_input = [&rng](int b, int c, int h, int w) {
        Tensor4 x(b, c, h, w);
        for (long i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
        return x;
    };

    {
        nn::ConvGeometry g;
        g.in_channels = 3;
        g.out_channels = 4;
        g.kernel = 3;
        g.padding = 1;
        g.stride = 2;
        Rng r2(1);
        nn::Conv2dLayer conv("conv", g, true, r2);
        Tensor4 x = rand_input(2, 3, 6, 6);
        report("conv2d", check_layer(conv, x, rng), 1e-6);
    }
    {
        nn::BatchNorm2d bn("bn", 3);
        Tensor4 x = rand_input(2, 3, 4, 4);
        report("batchnorm", check_layer(bn, x, rng), 1e-6);
    }
    {
        fat::FatParams p;
        p.poolsize = 4;
        p.freq_side = 2;
        p.reduction = 2;
        p.num_experts = 3;
        nn::ConvGeometry g;
        g.in_channels = 3;
        g.out_channels = 4;
        g.kernel = 3;
        g.padding = 1;
        Rng r2(2);
        dynconv::DynamicConvLayer layer("fad", g, 3, p, fat::AttentionKind::Fat, true, true, r2);
        // Zero-init leaves the attention exactly uniform, where the expert-bias
        // gradient cancels through BN; jitter off that symmetric point.
        std::vector<nn::GradPair*> lp;
        layer.collect_params(lp);
        for (nn::GradPair* pp : lp)
            for (long i = 0; i < pp->value.size(); ++i) pp->value[i] += rng.uniform(-0.1, 0.1);
        Tensor4 x = rand_input(2, 3, 8, 8);
        report("fadconv_layer", check_layer(layer, x, rng), 1e-4);
    }
    {
        model::ModelConfig cfg;
        cfg.conv_kind = model::ConvKind::FadConv;
        cfg.encoder_channels = {2, 4};
        cfg.input_size = 8;
        cfg.num_experts = 2;
        cfg.poolsize = 4;
        cfg.freq_side = 2;
        cfg.reduction = 2;
        cfg.seed = 5;
        model::SegModel m(cfg);
        for (nn::GradPair* pp : m.params())
            for (long i = 0; i < pp->value.size(); ++i) pp->value[i] += rng.uniform(-0.1, 0.1);
        Tensor4 x = rand_input(2, 3, 8, 8);
        std::vector<int> labels(2 * 8 * 8);
        for (int& l : labels) l = rng.uniform_int(0, 1);
        Tensor4 input_grad;
        auto loss_and_grad = [&]() {
            m.zero_grad();
            Tensor4 logits = m.forward(x, true);
            Tensor4 g;
            const double loss = nn::cross_entropy_loss(logits, labels, &g);
            input_grad = m.backward(g);
            return loss;
        };
        auto loss_only = [&]() {
            Tensor4 logits = m.forward(x, true);
            return nn::cross_entropy_loss(logits, labels, nullptr);
        };
        loss_and_grad();
        std::vector<nn::GradPair*> params = m.params();
        report("end_to_end_model",
               nn::grad_check(loss_and_grad, loss_only, params, 1e-5, &x, &input_grad), 1e-4);
    }
    return ok ? 0 : 1;
}

static int cmd_ablate(const model::ModelConfig& base, const std::string& data_dir,
                      const std::string& out, const std::vector<std::string>& sweeps,
                      const std::vector<int64_t>& seeds) {
    fs::create_directories(out);
    const std::string csv_path = out + "/ablate.csv";

    std::set<std::string> done;  // "hash,seed" keys already present
    if (fs::exists(csv_path)) {
        std::ifstream in(csv_path);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string sweep, arm, hash, seed;
            std::getline(ls, sweep, ',');
            std::getline(ls, arm, ',');
            std::getline(ls, hash, ',');
            std::getline(ls, seed, ',');
            done.insert(hash + "," + seed);
        }
    }
    std::ofstream csv(csv_path, std::ios::app);
    if (fs::file_size(csv_path) == 0)
        csv << "sweep,arm,config_hash,seed,oa,miou,train_loss\n";

    const data::Dataset ds = data::load_dataset(data_dir);

    struct Arm {
        std::string sweep, name;
        model::ModelConfig cfg;
    };
    std::vector<Arm> arms;
    auto fad = [&base]() {
        model::ModelConfig c = base;
        c.conv_kind = model::ConvKind::FadConv;
        return c;
    };
    for (const std::string& s : sweeps) {
        if (s == "experts") {
            for (int k : {2, 4, 6, 8}) {
                model::ModelConfig c = fad();
                c.num_experts = k;
                arms.push_back({s, "K" + std::to_string(k), c});
            }
        } else if (s == "poolsize") {
            for (int p : {8, 16, 32}) {
                model::ModelConfig c = fad();
                c.poolsize = p;
                arms.push_back({s, "p" + std::to_string(p), c});
            }
        } else if (s == "fusion") {
            for (fat::Fusion f :
                 {fat::Fusion::Sum, fat::Fusion::AbsSum, fat::Fusion::Learned, fat::Fusion::Fca}) {
                model::ModelConfig c = fad();
                c.fusion = f;
                arms.push_back({s, fat::to_string(f), c});
            }
        } else if (s == "attention") {
            model::ModelConfig g = base;
            g.conv_kind = model::ConvKind::DyConv;
            arms.push_back({s, "gap", g});
            arms.push_back({s, "fat", fad()});
        } else {
            throw std::runtime_error("unknown sweep '" + s +
                                     "' (expected experts|poolsize|fusion|attention)");
        }
    }

    for (const Arm& arm : arms) {
        for (int64_t seed : seeds) {
            model::ModelConfig cfg = arm.cfg;
            cfg.seed = static_cast<uint64_t>(seed);
            const std::string hash = config_hash(cfg);
            const std::string key = hash + "," + std::to_string(seed);
            if (done.count(key)) {
                std::cout << "skip " << arm.sweep << "/" << arm.name << " seed " << seed
                          << " (already recorded)\n";
                continue;
            }
            std::cout << "run  " << arm.sweep << "/" << arm.name << " seed " << seed << "\n";
            model::SegModel m(cfg);
            nn::Adam opt(cfg.lr, cfg.weight_decay);
            const std::vector<model::EpochLog> log = model::train(m, opt, ds);
            const metrics::MetricsReport rep =
                log.empty() ? model::evaluate(m, ds.test) : log.back().test;
            const double loss = log.empty() ? 0.0 : log.back().train_loss;
            csv << arm.sweep << "," << arm.name << "," << hash << "," << seed << ","
                << std::setprecision(10) << rep.oa << "," << rep.miou << "," << loss << "\n";
            csv.flush();
            done.insert(key);
        }
    }
    std::cout << "results in " << csv_path << "\n";
    return 0;
}

// ---- main ------------------------------------------------------------------------

int main(int argc, char** argv) {
    if (const char* t = std::getenv("FADCONV_THREADS")) Eigen::setNbThreads(std::atoi(t));

    CLI::App app{"frequency-aware dynamic convolution toolkit"};
    app.require_subcommand(1);

    std::string config_path, out = ".", data_dir, image_path, checkpoint;
    std::vector<std::string> sets;
    int64_t seed = 0;
    bool seed_given = false;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic segmentation dataset");
    int gd_count = 640, gd_size = 64, gd_classes = 2;
    gen->add_option("--out", out, "output directory")->required();
    gen->add_option("--config", config_path, "dataset spec JSON");
    gen->add_option("--seed", seed, "dataset seed");
    gen->add_option("--count", gd_count, "total sample count");
    gen->add_option("--size", gd_size, "image side");
    gen->add_option("--classes", gd_classes, "number of classes");

    auto add_cfg_flags = [&](CLI::App* cmd, bool need_data) {
        cmd->add_option("--config", config_path, "model config JSON");
        cmd->add_option("--set", sets, "config override key=value (repeatable)");
        cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
            seed_given = true;
        });
        if (need_data) cmd->add_option("--data", data_dir, "dataset directory")->required();
    };

    auto* train = app.add_subcommand("train", "train a segmentation model");
    add_cfg_flags(train, true);
    train->add_option("--out", out, "run output directory")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--out", out, "optional output directory");

    auto* cost = app.add_subcommand("cost", "per-layer multiply-add and parameter report");
    add_cfg_flags(cost, false);
    std::string cost_out;
    cost->add_option("--out", cost_out, "optional output directory");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");

    auto* heat = app.add_subcommand("heatmap", "frequency vs GAP attention surfaces");
    int hm_n = 4, hm_channel = 0;
    heat->add_option("--image", image_path, "input PPM or PGM")->required();
    heat->add_option("--n", hm_n, "retained low-frequency block side");
    heat->add_option("--channel", hm_channel, "channel for PPM inputs");
    heat->add_option("--out", out, "output directory");

    auto* abl = app.add_subcommand("ablate", "expert/poolsize/fusion/attention sweeps");
    add_cfg_flags(abl, true);
    abl->add_option("--out", out, "output directory")->required();
    std::vector<std::string> sweeps = {"experts", "poolsize", "fusion", "attention"};
    abl->add_option("--sweep", sweeps, "subset of sweeps to run");
    std::vector<int64_t> seeds = {0, 1, 2};
    abl->add_option("--seeds", seeds, "seeds per arm");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(out, config_path, seed, gd_count, gd_size,
                                               gd_classes);
        if (grad->parsed()) return cmd_gradcheck();
        if (heat->parsed()) return cmd_heatmap(image_path, hm_n, hm_channel, out);
        if (eval->parsed()) return cmd_eval(checkpoint, data_dir, out);

        const model::ModelConfig cfg =
            resolve_config(config_path, sets, seed_given ? &seed : nullptr);
        if (train->parsed()) return cmd_train(cfg, data_dir, out);
        if (cost->parsed()) return cmd_cost(cfg, cost_out);
        if (abl->parsed()) return cmd_ablate(cfg, data_dir, out, sweeps, seeds);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
