#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "drugrec/analysis.hpp"
#include "drugrec/data.hpp"
#include "drugrec/error.hpp"
#include "drugrec/train.hpp"

namespace fs = std::filesystem;
using namespace drugrec;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "drugrec 0.1.0";

const std::map<std::string, std::string> kMetricLabels = {
    {"ddi", "DDI"},
    {"jaccard", "Jaccard"},
    {"f1", "F1-score"},
    {"prauc", "PRAUC"},
    {"avg_drugs", "Avg. # of Drugs"},
};

struct GenOptions {
    std::string out_dir;
    data::SyntheticSpec spec;
    std::uint64_t seed = 0;
};

struct TrainOptions {
    std::string data_dir;
    std::string out_dir;
    TrainConfig cfg;
};

ordered_json spec_to_json(const data::SyntheticSpec& spec, std::uint64_t seed) {
    return ordered_json{{"tool", kToolVersion},
                        {"patients", spec.patients},
                        {"drugs", spec.drugs},
                        {"diag_codes", spec.diag_codes},
                        {"proc_codes", spec.proc_codes},
                        {"clusters", spec.clusters},
                        {"mean_visits", spec.mean_visits},
                        {"max_visits", spec.max_visits},
                        {"med_keep_prob", spec.med_keep_prob},
                        {"med_noise_prob", spec.med_noise_prob},
                        {"diag_noise_prob", spec.diag_noise_prob},
                        {"seed", seed}};
}

ordered_json config_echo(const TrainConfig& cfg) {
    ordered_json j = ordered_json::parse(train_config_json(cfg));
    j["tool"] = kToolVersion;
    return j;
}

data::Cohort load_data_dir(const std::string& dir) {
    fs::path cohort_path = fs::path(dir) / "cohort.jsonl";
    if (!fs::exists(cohort_path)) {
        throw ValueError("no cohort file at " + cohort_path.string());
    }
    return data::load_cohort_file(cohort_path.string());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

int cmd_gen_data(const GenOptions& opt) {
    data::Cohort cohort = data::generate_cohort(opt.spec, opt.seed);
    fs::create_directories(opt.out_dir);
    data::save_cohort_file(cohort, (fs::path(opt.out_dir) / "cohort.jsonl").string());
    {
        std::ofstream out(fs::path(opt.out_dir) / "ddi_edges.tsv", std::ios::binary);
        data::save_ddi_edges(cohort.ddi, out);
    }
    {
        std::ofstream out(fs::path(opt.out_dir) / "drug_vocab.tsv", std::ios::binary);
        chem::save_drug_vocab(cohort.drugs, out);
    }
    {
        std::ofstream out(fs::path(opt.out_dir) / "mask.json", std::ios::binary);
        chem::write_mask_json(cohort.mask, out);
    }
    write_text(fs::path(opt.out_dir) / "gen_config.json",
               spec_to_json(opt.spec, opt.seed).dump(2) + "\n");

    // Table-style cohort statistics
    std::size_t visits = cohort.total_visits();
    std::size_t max_visits = 0, diag_total = 0, proc_total = 0, med_total = 0;
    std::size_t diag_max = 0, proc_max = 0, med_max = 0;
    for (const auto& p : cohort.patients) {
        max_visits = std::max(max_visits, p.visits.size());
        for (const auto& v : p.visits) {
            diag_total += v.diagnoses.size();
            proc_total += v.procedures.size();
            med_total += v.medications.size();
            diag_max = std::max(diag_max, v.diagnoses.size());
            proc_max = std::max(proc_max, v.procedures.size());
            med_max = std::max(med_max, v.medications.size());
        }
    }
    auto per_visit = [&](std::size_t total) {
        return static_cast<double>(total) / static_cast<double>(visits);
    };
    std::cout << "total # of visits\t" << visits << "\n"
              << "total # of patients\t" << cohort.patients.size() << "\n"
              << "diag / proc / med space size\t" << cohort.n_diag << " / " << cohort.n_proc
              << " / " << cohort.n_drugs() << "\n"
              << "avg. / max # of visits\t"
              << static_cast<double>(visits) / static_cast<double>(cohort.patients.size())
              << " / " << max_visits << "\n"
              << "avg. / max # of diagnoses per visit\t" << per_visit(diag_total) << " / "
              << diag_max << "\n"
              << "avg. / max # of procedures per visit\t" << per_visit(proc_total) << " / "
              << proc_max << "\n"
              << "avg. / max # of medicines per visit\t" << per_visit(med_total) << " / "
              << med_max << "\n"
              << "total # of DDI pairs\t" << cohort.ddi.nnz() / 2 << "\n"
              << "total # of substructures\t" << cohort.mask.substructures.size() << "\n"
              << "ground-truth DDI rate\t" << data::cohort_ddi_rate(cohort) << "\n";
    return 0;
}

int cmd_train(TrainOptions& opt) {
    opt.cfg.validate();
    data::Cohort cohort = load_data_dir(opt.data_dir);
    bind_vocab(opt.cfg.model, cohort);
    fs::create_directories(opt.out_dir);

    Model model(opt.cfg.model, cohort.drugs, cohort.mask);
    Rng init = Rng(opt.cfg.seed).split("init");
    model.init_params(init);
    Adam optimizer(AdamConfig{opt.cfg.learning_rate, 0.9, 0.999, 1e-8});
    data::Split split = data::split(cohort, {}, opt.cfg.seed);
    FitResult result = fit(model, optimizer, cohort, split, opt.cfg, opt.out_dir);

    {
        std::ofstream out(fs::path(opt.out_dir) / "train_log.jsonl", std::ios::binary);
        write_train_log(result.log, out);
    }
    write_text(fs::path(opt.out_dir) / "resolved_config.json",
               config_echo(opt.cfg).dump(2) + "\n");
    std::cout << "best epoch\t" << result.best_epoch << "\n"
              << "best validation jaccard\t" << result.best_val_jaccard << "\n"
              << "checkpoint\t" << (fs::path(opt.out_dir) / "best.ckpt").string() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& data_dir, const std::string& ckpt_path,
                 std::size_t rounds, double fraction, std::uint64_t seed,
                 const std::string& out_path) {
    data::Cohort cohort = load_data_dir(data_dir);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    require_vocab_match(ckpt, cohort);
    Model model = model_from_checkpoint(ckpt);

    data::Split split = data::split(cohort, {}, ckpt.config.seed);
    std::vector<metrics::PatientEval> evals = evaluate_patients(model, cohort, split.test);
    metrics::BootstrapReport report =
        metrics::bootstrap_eval(evals, cohort.ddi, rounds, fraction, seed);

    ordered_json j;
    j["tool"] = kToolVersion;
    j["rounds"] = report.rounds;
    j["fraction"] = report.fraction;
    j["seed"] = report.seed;
    j["metrics"] = ordered_json::object();
    for (const auto& [name, summary] : report.metrics) {
        ordered_json m;
        m["label"] = kMetricLabels.at(name);
        m["mean"] = summary.mean;
        if (summary.stddev_defined) {
            m["std"] = summary.stddev;
        } else {
            m["std"] = nullptr;
            m["std_undefined"] = true;
        }
        m["rounds"] = summary.rounds;
        j["metrics"][name] = std::move(m);
    }
    j["config"] = config_echo(ckpt.config);
    std::string text = j.dump(2) + "\n";
    if (!out_path.empty()) write_text(out_path, text);
    std::cout << text;
    return 0;
}

int cmd_recommend(const std::string& ckpt_path, const std::string& patient_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Model model = model_from_checkpoint(ckpt);

    std::ifstream in(patient_path);
    if (!in) throw ValueError("cannot read patient file: " + patient_path);
    ordered_json pj;
    try {
        in >> pj;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("patient file: " + std::string(e.what()));
    }
    std::vector<data::Visit> history;
    for (const auto& v : pj.at("visits")) {
        data::Visit visit;
        visit.diagnoses = v.at("d").get<std::vector<std::uint32_t>>();
        visit.procedures = v.at("p").get<std::vector<std::uint32_t>>();
        if (v.contains("m")) visit.medications = v.at("m").get<std::vector<std::uint32_t>>();
        history.push_back(std::move(visit));
    }

    std::vector<VisitPrediction> preds = infer(model, history);
    ordered_json j;
    j["tool"] = kToolVersion;
    j["patient"] = pj.value("id", std::string("unknown"));
    j["visits"] = ordered_json::array();
    for (std::size_t t = 0; t < preds.size(); ++t) {
        ordered_json visit;
        visit["visit"] = t;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < preds[t].recommended.size(); ++i) {
            if (preds[t].recommended[i]) ids.push_back(ckpt.drugs[i].id);
        }
        visit["recommended"] = ids;
        visit["scores"] = preds[t].scores;
        j["visits"].push_back(std::move(visit));
    }
    j["config"] = config_echo(ckpt.config);
    std::cout << j.dump(2) << "\n";
    return 0;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoull(item));
    }
    return out;
}

int cmd_sweep_gamma(const std::string& data_dir, const std::string& gammas_csv,
                    const std::string& seeds_csv, TrainConfig cfg,
                    const std::string& out_prefix) {
    cfg.validate();
    data::Cohort cohort = load_data_dir(data_dir);
    bind_vocab(cfg.model, cohort);
    std::vector<double> gammas = parse_double_list(gammas_csv);
    std::vector<std::uint64_t> seeds = parse_seed_list(seeds_csv);
    if (gammas.empty()) throw ValueError("sweep-gamma: no gammas given");
    if (seeds.empty()) seeds = {cfg.seed};

    analysis::SweepResult result = analysis::gamma_sweep(cohort, gammas, cfg, seeds);
    std::ostringstream csv;
    analysis::write_sweep_csv(result, csv);
    write_text(out_prefix + ".csv", csv.str());

    ordered_json j;
    j["tool"] = kToolVersion;
    j["seeds"] = seeds;
    j["rows"] = ordered_json::array();
    for (const auto& r : result.rows) {
        j["rows"].push_back(ordered_json{{"gamma", r.gamma},
                                         {"ddi", r.ddi},
                                         {"n_med", r.n_med},
                                         {"jaccard", r.jaccard},
                                         {"f1", r.f1},
                                         {"prauc", r.prauc}});
    }
    j["config"] = config_echo(cfg);
    write_text(out_prefix + ".json", j.dump(2) + "\n");
    std::cout << csv.str();
    return 0;
}

int cmd_analyze_mask(const std::string& ckpt_path, const std::string& data_dir,
                     const std::string& out_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Model model = model_from_checkpoint(ckpt);

    data::Cohort cohort = load_data_dir(data_dir);
    require_vocab_match(ckpt, cohort);
    const ByteMatrix& entries = cohort.mask.entries;
    ByteMatrix dense(entries.rows, entries.cols, 1);
    analysis::MaskCosines cos = analysis::mask_cosines(
        model.params().get("local.w4"),
        ckpt.config.model.use_mask ? entries : dense, cohort.ddi);

    data::Split split = data::split(cohort, {}, ckpt.config.seed);
    std::vector<metrics::PatientEval> evals = evaluate_patients(model, cohort, split.test);
    std::vector<double> rates;
    for (const auto& e : evals) rates.push_back(metrics::ddi_rate(e, cohort.ddi));

    ordered_json j;
    j["tool"] = kToolVersion;
    j["masked"] = ckpt.config.model.use_mask;
    if (cos.cos_interacted) {
        j["cos_interacted"] = *cos.cos_interacted;
    } else {
        j["cos_interacted"] = nullptr;
    }
    j["cos_all"] = cos.cos_all;
    j["output_ddi"] = metrics::cohort_mean(rates);
    j["config"] = config_echo(ckpt.config);
    std::string text = j.dump(2) + "\n";
    if (!out_path.empty()) write_text(out_path, text);
    std::cout << text;
    return 0;
}

int cmd_error_analysis(const std::string& data_dir, const std::string& ckpt_path,
                       const std::string& ddi_csv, const std::string& med_csv,
                       const std::string& out_prefix) {
    data::Cohort cohort = load_data_dir(data_dir);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    require_vocab_match(ckpt, cohort);
    Model model = model_from_checkpoint(ckpt);

    data::Split split = data::split(cohort, {}, ckpt.config.seed);
    std::vector<metrics::PatientEval> evals = evaluate_patients(model, cohort, split.test);
    analysis::ErrorAnalysisResult result = analysis::error_analysis(
        evals, cohort.ddi, parse_double_list(ddi_csv), parse_double_list(med_csv));

    std::ostringstream csv;
    analysis::write_error_analysis_csv(result, csv);
    write_text(out_prefix + ".csv", csv.str());

    auto rows_json = [](const std::vector<analysis::FilterRow>& rows) {
        ordered_json arr = ordered_json::array();
        for (const auto& r : rows) {
            arr.push_back(ordered_json{{"threshold", r.threshold},
                                       {"empty", r.empty},
                                       {"retained", r.retained},
                                       {"ddi", r.ddi},
                                       {"jaccard", r.jaccard},
                                       {"f1", r.f1},
                                       {"prauc", r.prauc},
                                       {"avg_drugs", r.avg_drugs}});
        }
        return arr;
    };
    ordered_json j;
    j["tool"] = kToolVersion;
    j["by_truth_ddi"] = rows_json(result.by_truth_ddi);
    j["by_truth_drugs"] = rows_json(result.by_truth_drugs);
    j["config"] = config_echo(ckpt.config);
    write_text(out_prefix + ".json", j.dump(2) + "\n");
    std::cout << csv.str();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"DDI-controllable drug-combination recommender"};
    app.set_version_flag("--version", kToolVersion);
    app.set_config("--config", "", "TOML-style config file; flags override file values");
    app.require_subcommand(1);

    GenOptions gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic cohort");
    gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
    gen_cmd->add_option("--patients", gen.spec.patients, "number of patients");
    gen_cmd->add_option("--drugs", gen.spec.drugs, "number of drugs");
    gen_cmd->add_option("--diag-codes", gen.spec.diag_codes, "diagnosis vocabulary size");
    gen_cmd->add_option("--proc-codes", gen.spec.proc_codes, "procedure vocabulary size");
    gen_cmd->add_option("--clusters", gen.spec.clusters, "latent condition clusters");
    gen_cmd->add_option("--seed", gen.seed, "generator seed");

    TrainOptions train_opt;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model on a cohort");
    train_cmd->add_option("--data", train_opt.data_dir, "cohort directory")->required();
    train_cmd->add_option("--out", train_opt.out_dir, "output directory")->required();
    train_cmd->add_option("--gamma", train_opt.cfg.loss.gamma, "acceptance DDI rate");
    train_cmd->add_option("--alpha", train_opt.cfg.loss.alpha, "prediction loss mix");
    train_cmd->add_option("--kp", train_opt.cfg.loss.kp, "proportional correction factor");
    train_cmd->add_option("--epochs", train_opt.cfg.epochs, "training epochs");
    train_cmd->add_option("--seed", train_opt.cfg.seed, "master seed");
    train_cmd->add_option("--lr", train_opt.cfg.learning_rate, "learning rate");
    train_cmd->add_option("--dim", train_opt.cfg.model.dim, "embedding width");
    train_cmd->add_option("--layers", train_opt.cfg.model.mpnn_layers, "message passes");
    train_cmd->add_option("--dropout", train_opt.cfg.model.dropout, "dropout rate");
    train_cmd->add_option("--threshold", train_opt.cfg.model.threshold,
                          "recommendation threshold");
    train_cmd->add_flag("--no-mask,!--mask", train_opt.cfg.model.use_mask,
                        "disable the bipartite mask (ablation)")
        ->default_val(true);
    train_cmd->add_option("--checkpoint-every", train_opt.cfg.checkpoint_every,
                          "epochs between checkpoints (0 = best only)");

    std::string eval_data, eval_ckpt, eval_out;
    std::size_t eval_rounds = 10;
    double eval_fraction = 0.8;
    std::uint64_t eval_seed = 0;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "bootstrap-evaluate a checkpoint");
    eval_cmd->add_option("--data", eval_data, "cohort directory")->required();
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--rounds", eval_rounds, "bootstrap rounds");
    eval_cmd->add_option("--fraction", eval_fraction, "sample fraction per round");
    eval_cmd->add_option("--seed", eval_seed, "bootstrap seed");
    eval_cmd->add_option("--out", eval_out, "report file (also printed)");

    std::string rec_ckpt, rec_patient;
    CLI::App* rec_cmd = app.add_subcommand("recommend", "score one patient history");
    rec_cmd->add_option("--ckpt", rec_ckpt, "checkpoint file")->required();
    rec_cmd->add_option("--patient", rec_patient, "patient JSON file")->required();

    std::string sweep_data, sweep_gammas, sweep_seeds, sweep_out = "sweep";
    TrainConfig sweep_cfg;
    CLI::App* sweep_cmd = app.add_subcommand("sweep-gamma", "train across DDI targets");
    sweep_cmd->add_option("--data", sweep_data, "cohort directory")->required();
    sweep_cmd->add_option("--gammas", sweep_gammas, "comma-separated gamma list")
        ->required();
    sweep_cmd->add_option("--seeds", sweep_seeds, "comma-separated seed list");
    sweep_cmd->add_option("--epochs", sweep_cfg.epochs, "epochs per cell");
    sweep_cmd->add_option("--dim", sweep_cfg.model.dim, "embedding width");
    sweep_cmd->add_option("--lr", sweep_cfg.learning_rate, "learning rate");
    sweep_cmd->add_option("--seed", sweep_cfg.seed, "split seed / default cell seed");
    sweep_cmd->add_option("--out", sweep_out, "output prefix for .csv/.json");

    std::string mask_ckpt, mask_data, mask_out;
    CLI::App* mask_cmd = app.add_subcommand("analyze-mask", "cosine statistics of the local layer");
    mask_cmd->add_option("--ckpt", mask_ckpt, "checkpoint file")->required();
    mask_cmd->add_option("--data", mask_data, "cohort directory")->required();
    mask_cmd->add_option("--out", mask_out, "report file (also printed)");

    std::string err_data, err_ckpt, err_out = "error_analysis";
    std::string err_ddi = "0.0,0.02,0.04,0.06,0.08,0.10,0.12,0.14,0.16,0.18,0.20";
    std::string err_med = "0,5,10,15,20,25,30";
    CLI::App* err_cmd = app.add_subcommand("error-analysis", "metrics on filtered test subsets");
    err_cmd->add_option("--data", err_data, "cohort directory")->required();
    err_cmd->add_option("--ckpt", err_ckpt, "checkpoint file")->required();
    err_cmd->add_option("--ddi-thresholds", err_ddi, "comma-separated truth-DDI cuts");
    err_cmd->add_option("--med-thresholds", err_med, "comma-separated truth-size cuts");
    err_cmd->add_option("--out", err_out, "output prefix for .csv/.json");

    try {
        app.parse(argc, argv);
        if (gen_cmd->parsed()) return cmd_gen_data(gen);
        if (train_cmd->parsed()) return cmd_train(train_opt);
        if (eval_cmd->parsed()) {
            return cmd_evaluate(eval_data, eval_ckpt, eval_rounds, eval_fraction, eval_seed,
                                eval_out);
        }
        if (rec_cmd->parsed()) return cmd_recommend(rec_ckpt, rec_patient);
        if (sweep_cmd->parsed()) {
            return cmd_sweep_gamma(sweep_data, sweep_gammas, sweep_seeds, sweep_cfg,
                                   sweep_out);
        }
        if (mask_cmd->parsed()) return cmd_analyze_mask(mask_ckpt, mask_data, mask_out);
        if (err_cmd->parsed()) {
            return cmd_error_analysis(err_data, err_ckpt, err_ddi, err_med, err_out);
        }
        return 2;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage errors exit 2, --help/--version exit 0
    } catch (const SpecError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ValueError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const VocabMismatchError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
