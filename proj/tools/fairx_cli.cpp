// fairx: train and evaluate explanation-invariant tabular classifiers.
//
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
// failure during training or evaluation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairx/data.hpp"
#include "fairx/eval.hpp"
#include "fairx/serialize.hpp"
#include "fairx/training.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::string data_dir() {
    const char* env = std::getenv("FAIRX_DATA_DIR");
    return env ? env : "";
}

struct CommonArgs {
    std::string manifest_path;
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_manifest = true) {
    if (needs_manifest)
        cmd->add_option("--manifest", args.manifest_path, "dataset manifest JSON")->required();
    cmd->add_option("--config", args.config_path, "training config JSON (defaults when omitted)");
    cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--seed", args.seed, "seed override");
    cmd->add_option("--override", args.overrides, "config override key=value (repeatable)");
    cmd->add_option("--threads", args.threads, "max concurrent folds/grid points");
}

/// Loads the config file (if any) and applies overrides and the seed flag.
/// Failures here are configuration errors.
fairx::training::TrainConfig resolve_config(const CommonArgs& args) {
    fairx::training::TrainConfig cfg;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw std::invalid_argument("cannot open config: " + args.config_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("config parse error: " + std::string(e.what()));
        }
        cfg = fairx::training::TrainConfig::from_json(j);
    }
    for (const auto& kv : args.overrides) cfg.apply_override(kv);
    if (args.seed) cfg.seed = *args.seed;
    cfg.validate();
    return cfg;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory: " + dir);
}

void write_json(const std::string& path, const ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << j.dump(2) << "\n";
}

/// Formats a double the way the JSON writer does, so CSV cells round-trip.
std::string fmt(double v) { return nlohmann::json(v).dump(); }

int classify_numerical(const std::exception& e, const char* what) {
    std::cerr << "error: " << what << ": " << e.what() << "\n";
    return kExitNumerical;
}

int cmd_train(const CommonArgs& args) {
    fairx::training::TrainConfig cfg;
    try {
        cfg = resolve_config(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    fairx::data::RawTable raw;
    fairx::data::DatasetManifest manifest;
    fairx::data::Dataset ds;
    fairx::data::SplitIndices split;
    try {
        manifest = fairx::data::DatasetManifest::load(args.manifest_path);
        raw = fairx::data::load_csv(manifest, data_dir());
        split = fairx::data::stratified_split(raw.y, raw.a, cfg.seed);
        ds = fairx::data::preprocess(raw, manifest, split.train);
        ensure_out_dir(args.out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }

    try {
        auto tr = fairx::training::fairx_train(cfg, ds, split.train);

        fairx::serialize::ModelDocument doc;
        doc.params = tr.params;
        doc.baselines = tr.baselines;
        doc.stats = ds.stats;
        doc.feature_names = ds.feature_names;
        doc.config = cfg;
        doc.split_seed = split.seed;
        doc.save(args.out_dir + "/model.json");

        std::ofstream hist(args.out_dir + "/history.jsonl");
        if (!hist) throw std::runtime_error("cannot write history.jsonl");
        for (std::size_t e = 0; e < tr.history.l_total.size(); ++e) {
            ordered_json rec;
            rec["epoch"] = e;
            rec["l_pred"] = tr.history.l_pred[e];
            rec["l_gcig"] = tr.history.l_gcig[e];
            rec["l_fair"] = tr.history.l_fair[e];
            rec["l_total"] = tr.history.l_total[e];
            rec["seconds"] = tr.history.epoch_seconds[e];  // timing lives only here
            hist << rec.dump() << "\n";
        }

        ordered_json metrics;
        metrics["train"] =
            fairx::eval::compute_metrics(tr.params, tr.baselines, ds, split.train, cfg).to_json();
        metrics["validation"] =
            fairx::eval::compute_metrics(tr.params, tr.baselines, ds, split.validation, cfg)
                .to_json();
        metrics["test"] =
            fairx::eval::compute_metrics(tr.params, tr.baselines, ds, split.test, cfg).to_json();
        write_json(args.out_dir + "/metrics.json", metrics);
    } catch (const std::exception& e) {
        return classify_numerical(e, "training failed");
    }
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& model_path, const std::string& split_name) {
    if (split_name != "train" && split_name != "validation" && split_name != "test") {
        std::cerr << "error: --split must be train, validation, or test\n";
        return kExitConfig;
    }
    fairx::serialize::ModelDocument doc;
    try {
        doc = fairx::serialize::ModelDocument::load(model_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    fairx::data::Dataset ds;
    fairx::data::SplitIndices split;
    try {
        auto manifest = fairx::data::DatasetManifest::load(args.manifest_path);
        auto raw = fairx::data::load_csv(manifest, data_dir());
        ds = fairx::data::apply_preprocessing(raw, doc.stats);
        if (ds.feature_names != doc.feature_names)
            throw std::runtime_error("feature schema does not match the trained model");
        split = fairx::data::stratified_split(raw.y, raw.a, doc.split_seed);
        ensure_out_dir(args.out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }

    try {
        const auto& idx = split_name == "train"        ? split.train
                          : split_name == "validation" ? split.validation
                                                       : split.test;
        auto m = fairx::eval::compute_metrics(doc.params, doc.baselines, ds, idx, doc.config);
        ordered_json metrics;
        metrics[split_name] = m.to_json();
        write_json(args.out_dir + "/metrics.json", metrics);
    } catch (const std::exception& e) {
        return classify_numerical(e, "evaluation failed");
    }
    return 0;
}

int cmd_xval(const CommonArgs& args, int k) {
    fairx::training::TrainConfig cfg;
    try {
        cfg = resolve_config(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    fairx::data::RawTable raw;
    fairx::data::DatasetManifest manifest;
    try {
        manifest = fairx::data::DatasetManifest::load(args.manifest_path);
        raw = fairx::data::load_csv(manifest, data_dir());
        ensure_out_dir(args.out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    try {
        auto cv = fairx::eval::crossvalidate(cfg, raw, manifest, k, cfg.seed, args.threads);
        ordered_json j;
        j["k"] = k;
        j["seed"] = cfg.seed;
        j.update(cv.to_json());
        write_json(args.out_dir + "/cv_summary.json", j);
    } catch (const std::exception& e) {
        return classify_numerical(e, "cross-validation failed");
    }
    return 0;
}

int cmd_ablate(const CommonArgs& args, int k) {
    fairx::training::TrainConfig cfg;
    try {
        cfg = resolve_config(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    fairx::data::RawTable raw;
    fairx::data::DatasetManifest manifest;
    try {
        manifest = fairx::data::DatasetManifest::load(args.manifest_path);
        raw = fairx::data::load_csv(manifest, data_dir());
        ensure_out_dir(args.out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    try {
        auto arms = fairx::eval::ablation(cfg, raw, manifest, k, cfg.seed, args.threads);
        ordered_json j;
        j["k"] = k;
        j["seed"] = cfg.seed;
        j["arms"] = ordered_json::array();
        for (const auto& arm : arms) {
            ordered_json a;
            a["name"] = arm.name;
            a["gcig_pct_change"] = arm.gcig_pct_change;
            a.update(arm.cv.to_json());
            j["arms"].push_back(a);
        }
        write_json(args.out_dir + "/ablation.json", j);
    } catch (const std::exception& e) {
        return classify_numerical(e, "ablation failed");
    }
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& axis, std::vector<double> values, int k) {
    fairx::training::TrainConfig cfg;
    try {
        cfg = resolve_config(args);
        if (axis != "lambda_ig" && axis != "lambda_fair")
            throw std::invalid_argument("--axis must be lambda_ig or lambda_fair");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    fairx::data::RawTable raw;
    fairx::data::DatasetManifest manifest;
    try {
        manifest = fairx::data::DatasetManifest::load(args.manifest_path);
        raw = fairx::data::load_csv(manifest, data_dir());
        ensure_out_dir(args.out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    try {
        auto grid = fairx::eval::sensitivity_sweep(cfg, raw, manifest, axis, std::move(values), k,
                                                   cfg.seed, args.threads);
        ordered_json j;
        j["axis"] = axis;
        j["k"] = k;
        j["seed"] = cfg.seed;
        j["points"] = ordered_json::array();
        std::ofstream csv(args.out_dir + "/sweep.csv");
        if (!csv) throw std::runtime_error("cannot write sweep.csv");
        csv << "axis,lambda,metric,mean,std\n";
        for (const auto& pt : grid) {
            ordered_json p;
            p["lambda"] = pt.lambda;
            p.update(pt.cv.to_json());
            j["points"].push_back(p);
            const std::pair<const char*, fairx::eval::MetricSummary> rows[] = {
                {"f1", pt.cv.f1},         {"auc", pt.cv.auc},   {"accuracy", pt.cv.accuracy},
                {"eo_gap", pt.cv.eo_gap}, {"gcig", pt.cv.gcig},
            };
            for (const auto& [name, s] : rows)
                csv << axis << "," << fmt(pt.lambda) << "," << name << "," << fmt(s.mean) << ","
                    << fmt(s.stddev) << "\n";
        }
        write_json(args.out_dir + "/sweep.json", j);
    } catch (const std::exception& e) {
        return classify_numerical(e, "sweep failed");
    }
    return 0;
}

int cmd_synth(const fairx::data::SynthSpec& spec, const std::string& out_dir) {
    try {
        ensure_out_dir(out_dir);
        auto sd = fairx::data::synth_biased_raw(spec);
        fairx::data::write_csv(sd.raw, out_dir + "/synth.csv");
        auto manifest = sd.manifest;
        manifest.csv_path = "synth.csv";  // relative to FAIRX_DATA_DIR (or cwd)
        write_json(out_dir + "/manifest.json", manifest.to_json());
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairx: explanation-invariant tabular classifiers"};
    app.require_subcommand(1);

    CommonArgs train_args;
    auto* train = app.add_subcommand("train", "train a model and write model/history/metrics");
    add_common(train, train_args);

    CommonArgs eval_args;
    std::string model_path, split_name = "test";
    auto* eval = app.add_subcommand("eval", "evaluate a saved model on one split");
    eval->add_option("--model", model_path, "model.json from a training run")->required();
    eval->add_option("--split", split_name, "train | validation | test");
    add_common(eval, eval_args);

    CommonArgs xval_args;
    int xval_k = 5;
    auto* xval = app.add_subcommand("xval", "stratified k-fold cross validation");
    xval->add_option("--k", xval_k, "number of folds");
    add_common(xval, xval_args);

    CommonArgs ablate_args;
    int ablate_k = 5;
    auto* ablate = app.add_subcommand("ablate", "four-arm loss ablation");
    ablate->add_option("--k", ablate_k, "number of folds");
    add_common(ablate, ablate_args);

    CommonArgs sweep_args;
    std::string axis;
    std::vector<double> sweep_values;
    int sweep_k = 5;
    auto* sweep = app.add_subcommand("sweep", "lambda sensitivity sweep");
    sweep->add_option("--axis", axis, "lambda_ig | lambda_fair")->required();
    sweep->add_option("--values", sweep_values, "grid values (default 0.1 0.5 1 2 5 10)");
    sweep->add_option("--k", sweep_k, "number of folds");
    add_common(sweep, sweep_args);

    fairx::data::SynthSpec synth_spec;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "generate the synthetic-bias dataset");
    synth->add_option("--n", synth_spec.n, "rows");
    synth->add_option("--p", synth_spec.p, "features (>= 4)");
    synth->add_option("--beta", synth_spec.beta, "group-flipped coefficient magnitude");
    synth->add_option("--noise", synth_spec.noise, "label logit noise std");
    synth->add_option("--seed", synth_spec.seed, "generator seed");
    synth->add_option("--out", synth_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args, model_path, split_name);
    if (*xval) return cmd_xval(xval_args, xval_k);
    if (*ablate) return cmd_ablate(ablate_args, ablate_k);
    if (*sweep) return cmd_sweep(sweep_args, axis, sweep_values, sweep_k);
    if (*synth) return cmd_synth(synth_spec, synth_out);
    return kExitConfig;
}
