#include "dnetknn/cli/commands.hpp"

#include "dnetknn/classify.hpp"
#include "dnetknn/cli/config.hpp"
#include "dnetknn/dataset.hpp"
#include "dnetknn/encoder.hpp"
#include "dnetknn/error.hpp"
#include "dnetknn/parallel.hpp"
#include "dnetknn/trainer.hpp"

#include <CLI11.hpp>

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>

namespace dnetknn::cli {

namespace {

// ---------------------------------------------------------------------------
// Option registry: CLI flags first, then the --config file, then defaults.
// ---------------------------------------------------------------------------

template <typename T>
void parse_value(const std::string& key, const std::string& text, T& out) {
    if constexpr (std::is_same_v<T, std::string>) {
        out = text;
    } else if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1" || text == "on" || text == "yes") {
            out = true;
        } else if (text == "false" || text == "0" || text == "off" || text == "no") {
            out = false;
        } else {
            throw ConfigError("config key '" + key + "': expected a boolean, got '" + text + "'");
        }
    } else {
        T v{};
        auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || p != text.data() + text.size()) {
            throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
        }
        out = v;
    }
}

template <typename T>
std::string format_value(const T& v) {
    if constexpr (std::is_same_v<T, std::string>) {
        return v;
    } else if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    }
}

class Options {
public:
    explicit Options(CLI::App* app) : app_(app) {}

    template <typename T>
    CLI::Option* add(const std::string& name, T& var, const std::string& help) {
        CLI::Option* opt = app_->add_option("--" + name, var, help);
        if constexpr (!std::is_same_v<T, std::string>) {
            opt->capture_default_str();
        }
        entries_.push_back({name, opt, [&var, name](const std::string& s) { parse_value(name, s, var); },
                            [&var] { return format_value(var); }});
        return opt;
    }

    template <typename T>
    CLI::Option* add(const std::string& name, std::optional<T>& var, const std::string& help) {
        CLI::Option* opt = app_->add_option("--" + name, var, help);
        entries_.push_back({name, opt,
                            [&var, name](const std::string& s) {
                                T v{};
                                parse_value(name, s, v);
                                var = v;
                            },
                            [&var] { return var ? format_value(*var) : std::string{}; }});
        return opt;
    }

    CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
        CLI::Option* opt = app_->add_flag("--" + name, var, help);
        entries_.push_back({name, opt, [&var, name](const std::string& s) { parse_value(name, s, var); },
                            [&var] { return format_value(var); }});
        return opt;
    }

    // Fills every option that was not given on the command line from the map.
    void apply(const ConfigMap& config) const {
        for (const auto& e : entries_) {
            if (e.option->count() > 0) {
                continue;
            }
            if (auto it = config.find(e.name); it != config.end() && !it->second.empty()) {
                e.set(it->second);
            }
        }
    }

    void record(RunManifest& manifest) const {
        for (const auto& e : entries_) {
            if (e.name != "config") {
                manifest.set(e.name, e.get());
            }
        }
    }

private:
    struct Entry {
        std::string name;
        CLI::Option* option;
        std::function<void(const std::string&)> set;
        std::function<std::string()> get;
    };

    CLI::App* app_;
    std::vector<Entry> entries_;
};

// ---------------------------------------------------------------------------
// Shared argument groups.
// ---------------------------------------------------------------------------

struct DataArgs {
    std::string images;
    std::string labels;
    std::string csv;

    void add(Options& opts, const std::string& prefix, const std::string& what) {
        opts.add(prefix + "images", images, what + " images (IDX)");
        opts.add(prefix + "labels", labels, what + " labels (IDX)");
        opts.add(prefix + "csv", csv, what + " set as CSV (label, features...)");
    }

    bool given() const { return !csv.empty() || !images.empty() || !labels.empty(); }

    Dataset load(const std::string& what, std::optional<int> num_classes) const {
        if (!csv.empty()) {
            if (!images.empty() || !labels.empty()) {
                throw ConfigError(what + ": give either IDX files or a CSV file, not both");
            }
            return load_csv(csv, num_classes);
        }
        if (images.empty() || labels.empty()) {
            throw ConfigError(what + ": both --*images and --*labels (or --*csv) are required");
        }
        return load_idx(images, labels, num_classes);
    }
};

struct Common {
    std::string config;
    std::size_t threads = 0;
    bool header = false;

    void add(Options& opts) {
        opts.add("config", config, "key = value config file (flags override it)");
        opts.add("threads", threads, "worker thread cap (0 = all cores)");
        opts.flag("header", header, "write a header row in CSV outputs");
    }
};

std::vector<std::size_t> parse_layers(const std::string& text) {
    std::vector<std::size_t> sizes;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t v = 0;
        auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || p != item.data() + item.size() || v == 0) {
            throw ConfigError("layer spec '" + text + "': '" + item + "' is not a positive integer");
        }
        sizes.push_back(v);
    }
    if (sizes.size() < 2) {
        throw ConfigError("layer spec '" + text + "' needs at least an input and a code width");
    }
    return sizes;
}

std::string join_layers(const std::vector<std::size_t>& sizes) {
    std::string s;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        s += (i ? "," : "") + std::to_string(sizes[i]);
    }
    return s;
}

std::optional<int> classes_opt(int n) { return n > 0 ? std::optional<int>(n) : std::nullopt; }

std::string percent(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", 100.0 * rate);
    return buf;
}

// ---------------------------------------------------------------------------
// Commands. Each one owns its option storage and runs after parsing.
// ---------------------------------------------------------------------------

class Command {
public:
    virtual ~Command() = default;
    virtual void execute(std::ostream& out) = 0;

    void prepare() {
        if (!common.config.empty()) {
            opts.apply(load_config(common.config));
        }
        set_num_threads(common.threads);
    }

protected:
    Command(CLI::App& parent, const std::string& name, const std::string& help)
        : app(parent.add_subcommand(name, help)), opts(app) {
        common.add(opts);
    }

    RunManifest manifest(const std::string& name) const {
        RunManifest m(name);
        opts.record(m);
        return m;
    }

public:
    CLI::App* app;

protected:
    Options opts;
    Common common;
};

class PretrainCommand : public Command {
public:
    explicit PretrainCommand(CLI::App& parent)
        : Command(parent, "pretrain", "greedy RBM pretraining of the encoder") {
        data.add(opts, "train-", "training");
        opts.add("num-classes", num_classes, "number of classes (0 = max label + 1)");
        opts.add("layers", layers, "layer widths, input first");
        opts.add("epochs", cd.epochs, "CD-1 epochs per layer");
        opts.add("lr", cd.learning_rate, "CD-1 learning rate");
        opts.add("momentum-initial", cd.initial_momentum, "momentum for the first epochs");
        opts.add("momentum-final", cd.final_momentum, "momentum afterwards");
        opts.add("momentum-switch", cd.momentum_switch_epoch, "epoch at which momentum switches");
        opts.add("weight-decay", cd.weight_decay, "L2 weight decay");
        opts.add("cd-batch", cd.mini_batch, "CD-1 mini-batch size");
        opts.add("seed", seed, "random seed");
        opts.add("out", out_path, "output checkpoint");
    }

    void execute(std::ostream& out) override {
        if (out_path.empty()) {
            throw ConfigError("pretrain: --out is required");
        }
        RunManifest m = manifest("pretrain");
        m.stamp_start();
        const Dataset train = data.load("training data", classes_opt(num_classes));
        TrainConfig cfg;
        cfg.layer_sizes = parse_layers(layers);
        cfg.pretraining = cd;
        cfg.seed = seed;
        const EncoderParams params = initial_encoder(train, cfg, [&](const LayerProgress& p) {
            out << "layer " << p.layer << " epoch " << p.epoch + 1 << " reconstruction "
                << p.reconstruction_error << '\n';
        });
        save_checkpoint(params, out_path);
        m.stamp_finish();
        m.save(out_path + ".manifest");
        out << "wrote " << out_path << '\n';
    }

private:
    DataArgs data;
    int num_classes = 0;
    std::string layers = "784,500,500,2000,30";
    CdConfig cd;
    std::uint64_t seed = 0;
    std::string out_path;
};

class FinetuneCommand : public Command {
public:
    explicit FinetuneCommand(CLI::App& parent)
        : Command(parent, "finetune", "large-margin fine-tuning with conjugate gradient") {
        data.add(opts, "train-", "training");
        opts.add("num-classes", num_classes, "number of classes (0 = max label + 1)");
        opts.add("model", model, "pretrained checkpoint (required unless --init random)");
        opts.add("init", init, "pretrained | random");
        opts.add("layers", layers, "layer widths for --init random");
        opts.add("k", cfg.neighbors.k, "target neighbors per point");
        opts.add("m", cfg.neighbors.m, "impostors per foreign class");
        opts.add("batch", cfg.batch_size, "mini-batch size");
        opts.add("epochs", cfg.epochs, "fine-tuning epochs");
        opts.add("cg-iters", cfg.cg_line_searches, "CG line searches per batch");
        opts.add("seed", cfg.seed, "random seed");
        opts.add("out", out_path, "output checkpoint");
        opts.add("report", report_path, "training report (default: <out>.report.csv)");
    }

    void execute(std::ostream& out) override {
        if (out_path.empty()) {
            throw ConfigError("finetune: --out is required");
        }
        if (init != "pretrained" && init != "random") {
            throw ConfigError("finetune: --init must be 'pretrained' or 'random'");
        }
        cfg.neighbors.validate();
        if (report_path.empty()) {
            report_path = out_path + ".report.csv";
        }
        RunManifest m = manifest("finetune");
        m.stamp_start();
        const Dataset train = data.load("training data", classes_opt(num_classes));
        EncoderParams start;
        if (init == "pretrained") {
            if (model.empty()) {
                throw ConfigError("finetune: --model is required unless --init random");
            }
            start = load_checkpoint(model);
            cfg.layer_sizes = start.widths();
            if (!layers.empty() && parse_layers(layers) != cfg.layer_sizes) {
                throw ConfigError("finetune: --layers does not match the checkpoint widths " +
                                  join_layers(cfg.layer_sizes));
            }
        } else {
            cfg.layer_sizes = parse_layers(layers.empty() ? "784,500,500,2000,30" : layers);
            cfg.init = InitMode::random;
            if (cfg.layer_sizes.front() != train.dim()) {
                throw DimensionError("finetune: layer spec starts with " +
                                     std::to_string(cfg.layer_sizes.front()) + " but data has dimension " +
                                     std::to_string(train.dim()));
            }
            start = initial_encoder(train, cfg);
        }
        if (start.input_dim() != train.dim()) {
            throw DimensionError("finetune: model input " + std::to_string(start.input_dim()) +
                                 " does not match data dimension " + std::to_string(train.dim()));
        }
        auto [params, report] = finetune(train, cfg, start, [&](const EpochRecord& e) {
            out << "epoch " << e.epoch << " loss " << e.loss << " active " << e.active_triples << " ("
                << e.seconds << " s)\n";
        });
        report.checkpoint_path = out_path;
        save_checkpoint(params, out_path);
        std::ofstream rep(report_path);
        if (!rep) {
            throw IoError("cannot write report " + report_path);
        }
        report.write(rep, common.header);
        m.set("initial_loss", format_value(report.initial_loss));
        m.set("best_epoch", std::to_string(report.best_epoch));
        m.stamp_finish();
        m.save(out_path + ".manifest");
        out << "initial loss " << report.initial_loss << ", best epoch " << report.best_epoch << '\n';
        out << "wrote " << out_path << " and " << report_path << '\n';
    }

private:
    DataArgs data;
    int num_classes = 0;
    std::string model;
    std::string init = "pretrained";
    std::string layers;
    TrainConfig cfg;
    std::string out_path;
    std::string report_path;
};

class EvalCommand : public Command {
public:
    explicit EvalCommand(CLI::App& parent)
        : Command(parent, "eval", "test error of kNN / minimum-energy classification") {
        train_data.add(opts, "train-", "training");
        test_data.add(opts, "test-", "test");
        opts.add("num-classes", num_classes, "number of classes (0 = max training label + 1)");
        opts.add("model", model, "fine-tuned checkpoint");
        opts.add("mode", mode, "knn | energy | both");
        opts.add("baseline", baseline, "'pixels' classifies in the raw input space");
        opts.add("k", neighbors.k, "neighbors for kNN votes and energy targets");
        opts.add("m", neighbors.m, "impostors per foreign class for energy mode");
        opts.flag("train-error", train_error, "also report leave-one-out training error");
        opts.add("out", out_path, "error table (method,split,error_percent)");
        opts.add("predictions", predictions_path, "per-point test predictions CSV (optional)");
    }

    void execute(std::ostream& out) override {
        if (out_path.empty()) {
            throw ConfigError("eval: --out is required");
        }
        if (mode != "knn" && mode != "energy" && mode != "both") {
            throw ConfigError("eval: --mode must be knn, energy or both");
        }
        if (!baseline.empty() && baseline != "pixels") {
            throw ConfigError("eval: --baseline only accepts 'pixels'");
        }
        neighbors.validate();
        const bool pixels = baseline == "pixels";
        if (!pixels && model.empty()) {
            throw ConfigError("eval: --model is required unless --baseline pixels");
        }
        RunManifest m = manifest("eval");
        m.stamp_start();
        const Dataset train = train_data.load("training data", classes_opt(num_classes));
        const Dataset test = test_data.load("test data", train.num_classes());

        Matrix train_codes, test_codes;
        std::string prefix;
        if (pixels) {
            train_codes = train.features();
            test_codes = test.features();
            prefix = "pixel";
        } else {
            const EncoderParams params = load_checkpoint(model);
            if (params.input_dim() != train.dim() || params.input_dim() != test.dim()) {
                throw DimensionError("eval: model input " + std::to_string(params.input_dim()) +
                                     " does not match data dimension " + std::to_string(train.dim()) +
                                     "/" + std::to_string(test.dim()));
            }
            train_codes = forward(params, train.features());
            test_codes = forward(params, test.features());
            prefix = "dnet";
        }

        std::vector<std::array<std::string, 3>> rows;
        std::vector<Prediction> saved;
        if (mode == "knn" || mode == "both") {
            auto preds = knn_predict(train_codes, train.labels(), test_codes, neighbors.k);
            rows.push_back({prefix + "-knn", "test", percent(error_rate(preds, test.labels()))});
            if (train_error) {
                auto loo = knn_predict_leave_one_out(train_codes, train.labels(), neighbors.k);
                rows.push_back({prefix + "-knn", "train", percent(error_rate(loo, train.labels()))});
            }
            saved = std::move(preds);
        }
        if (mode == "energy" || mode == "both") {
            auto preds = energy_predict(train_codes, train.labels(), train.num_classes(), test_codes,
                                        neighbors);
            rows.push_back({prefix + "-energy", "test", percent(error_rate(preds, test.labels()))});
            if (saved.empty()) {
                saved = std::move(preds);
            }
        }

        std::ofstream table(out_path);
        if (!table) {
            throw IoError("cannot write " + out_path);
        }
        if (common.header) {
            table << "method,split,error_percent\n";
        }
        for (const auto& r : rows) {
            table << r[0] << ',' << r[1] << ',' << r[2] << '\n';
            out << r[0] << ',' << r[1] << ',' << r[2] << '\n';
        }
        if (!predictions_path.empty()) {
            save_predictions(saved, test.labels(), predictions_path, common.header);
        }
        m.stamp_finish();
        m.save(out_path + ".manifest");
    }

private:
    DataArgs train_data;
    DataArgs test_data;
    int num_classes = 0;
    std::string model;
    std::string mode = "knn";
    std::string baseline;
    NeighborConfig neighbors;
    bool train_error = false;
    std::string out_path;
    std::string predictions_path;
};

class EmbedCommand : public Command {
public:
    explicit EmbedCommand(CLI::App& parent)
        : Command(parent, "embed", "write code vectors (index,label,c1..cd)") {
        data.add(opts, "", "input");
        opts.add("num-classes", num_classes, "number of classes (0 = max label + 1)");
        opts.add("model", model, "encoder checkpoint");
        opts.add("out", out_path, "embedding CSV");
    }

    void execute(std::ostream& out) override {
        if (out_path.empty() || model.empty()) {
            throw ConfigError("embed: --model and --out are required");
        }
        RunManifest m = manifest("embed");
        m.stamp_start();
        const EncoderParams params = load_checkpoint(model);
        const Dataset input = data.load("input data", classes_opt(num_classes));
        if (params.input_dim() != input.dim()) {
            throw DimensionError("embed: model input " + std::to_string(params.input_dim()) +
                                 " does not match data dimension " + std::to_string(input.dim()));
        }
        const Matrix codes = forward(params, input.features());
        std::ofstream csv(out_path);
        if (!csv) {
            throw IoError("cannot write " + out_path);
        }
        csv.precision(17);
        if (common.header) {
            csv << "index,label";
            for (Eigen::Index c = 0; c < codes.cols(); ++c) {
                csv << ",c" << c + 1;
            }
            csv << '\n';
        }
        for (Eigen::Index r = 0; r < codes.rows(); ++r) {
            csv << r << ',' << input.label(static_cast<Index>(r));
            for (Eigen::Index c = 0; c < codes.cols(); ++c) {
                csv << ',' << codes(r, c);
            }
            csv << '\n';
        }
        m.stamp_finish();
        m.save(out_path + ".manifest");
        out << "wrote " << codes.rows() << " codes of width " << codes.cols() << " to " << out_path << '\n';
    }

private:
    DataArgs data;
    int num_classes = 0;
    std::string model;
    std::string out_path;
};

class SplitCommand : public Command {
public:
    explicit SplitCommand(CLI::App& parent)
        : Command(parent, "split", "materialize fixed or seeded per-class train/test splits") {
        data.add(opts, "input-", "input");
        opts.add("num-classes", num_classes, "number of classes (0 = max label + 1)");
        opts.add("style", style, "fixed | random");
        opts.add("seed", seed, "shuffle seed (required for --style random)");
        opts.add("per-class-train", spec.per_class_train, "training examples per class");
        opts.add("per-class-test", spec.per_class_test, "test examples per class");
        opts.add("out-prefix", prefix, "writes <prefix>-train.csv and <prefix>-test.csv");
    }

    void execute(std::ostream& out) override {
        if (prefix.empty()) {
            throw ConfigError("split: --out-prefix is required");
        }
        if (style == "fixed") {
            if (seed) {
                throw ConfigError("split: --seed is only meaningful with --style random");
            }
        } else if (style == "random") {
            if (!seed) {
                throw ConfigError("split: --style random needs --seed");
            }
            spec.shuffle_seed = *seed;
        } else {
            throw ConfigError("split: --style must be fixed or random");
        }
        RunManifest m = manifest("split");
        m.stamp_start();
        const Dataset input = data.load("input data", classes_opt(num_classes));
        const Split split = fixed_split(input, spec);
        save_csv(split.train, prefix + "-train.csv");
        save_csv(split.test, prefix + "-test.csv");
        m.stamp_finish();
        m.save(prefix + ".manifest");
        out << "wrote " << split.train.size() << " training and " << split.test.size()
            << " test examples\n";
    }

private:
    DataArgs data;
    int num_classes = 0;
    std::string style = "fixed";
    std::optional<std::uint64_t> seed;
    SplitSpec spec{800, 300, std::nullopt};
    std::string prefix;
};

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) {
        return kConfigError;
    }
    if (dynamic_cast<const DivergenceError*>(&e)) {
        return kNumericError;
    }
    if (dynamic_cast<const Error*>(&e)) {
        return kDataError;
    }
    return kDataError;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"DNet-kNN: deep encoders trained for large-margin kNN classification", "dnetknn"};
    app.require_subcommand(1);
    std::vector<std::unique_ptr<Command>> commands;
    commands.push_back(std::make_unique<PretrainCommand>(app));
    commands.push_back(std::make_unique<FinetuneCommand>(app));
    commands.push_back(std::make_unique<EvalCommand>(app));
    commands.push_back(std::make_unique<EmbedCommand>(app));
    commands.push_back(std::make_unique<SplitCommand>(app));

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) {
        reversed.pop_back(); // program name
    }
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }
    for (auto& cmd : commands) {
        if (!cmd->app->parsed()) {
            continue;
        }
        try {
            cmd->prepare();
            cmd->execute(out);
            return kOk;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return exit_code_for(e);
        }
    }
    return kConfigError;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    return run(std::vector<std::string>(argv, argv + argc), out, err);
}

} // namespace dnetknn::cli
