#include "drugrec/analysis.hpp"

#include <cmath>
#include <ostream>

#include "drugrec/error.hpp"

namespace drugrec {
namespace analysis {

namespace {

struct TestMetrics {
    double ddi, jaccard, f1, prauc, avg_drugs;
};

TestMetrics test_metrics(const std::vector<metrics::PatientEval>& evals,
                         const ByteMatrix& ddi) {
    std::vector<double> ddis, jacs, f1s, prs;
    for (const metrics::PatientEval& e : evals) {
        ddis.push_back(metrics::ddi_rate(e, ddi));
        jacs.push_back(metrics::jaccard(e));
        f1s.push_back(metrics::f1(e));
        prs.push_back(metrics::prauc(e));
    }
    return TestMetrics{metrics::cohort_mean(ddis), metrics::cohort_mean(jacs),
                       metrics::cohort_mean(f1s), metrics::cohort_mean(prs),
                       metrics::avg_drug_count(evals)};
}

/// One model trained to the configured epoch budget and evaluated in its
/// converged (final-epoch) state; the sweep reads controller equilibria,
/// which early-epoch validation snapshots would mask.
TestMetrics train_and_test(const data::Cohort& cohort, const data::Split& split,
                           const TrainConfig& cfg) {
    Model model(cfg.model, cohort.drugs, cohort.mask);
    Rng init = Rng(cfg.seed).split("init");
    model.init_params(init);
    Adam optimizer(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
    fit(model, optimizer, cohort, split, cfg);
    return test_metrics(evaluate_patients(model, cohort, split.test), cohort.ddi);
}

} // namespace

SweepResult gamma_sweep(const data::Cohort& cohort, const std::vector<double>& gammas,
                        const TrainConfig& base, const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ValueError("gamma_sweep: no seeds");
    data::Split sp = data::split(cohort, {}, base.seed);

    SweepResult result;
    result.seeds = seeds;
    for (double gamma : gammas) {
        std::vector<SweepRow> cell_rows;
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base;
            cfg.loss.gamma = gamma;
            cfg.seed = seed;
            TestMetrics m = train_and_test(cohort, sp, cfg);
            cell_rows.push_back(
                SweepRow{gamma, m.ddi, m.avg_drugs, m.jaccard, m.f1, m.prauc});
        }
        SweepRow mean{gamma, 0, 0, 0, 0, 0};
        for (const SweepRow& r : cell_rows) {
            mean.ddi += r.ddi;
            mean.n_med += r.n_med;
            mean.jaccard += r.jaccard;
            mean.f1 += r.f1;
            mean.prauc += r.prauc;
        }
        double n = static_cast<double>(cell_rows.size());
        mean.ddi /= n;
        mean.n_med /= n;
        mean.jaccard /= n;
        mean.f1 /= n;
        mean.prauc /= n;
        result.rows.push_back(mean);
        result.per_seed.push_back(std::move(cell_rows));
    }
    return result;
}

MaskCosines mask_cosines(const Tensor& local_weights, const ByteMatrix& mask,
                         const ByteMatrix& ddi) {
    if (local_weights.rank() != 2 || local_weights.rows() != mask.rows ||
        local_weights.cols() != mask.cols) {
        throw ShapeError("mask_cosines: weights " + local_weights.shape_str() +
                         " vs mask [" + std::to_string(mask.rows) + ", " +
                         std::to_string(mask.cols) + "]");
    }
    require_interaction_matrix(ddi);
    std::size_t s = mask.rows, m = mask.cols;
    if (ddi.rows != m) {
        throw ShapeError("mask_cosines: DDI size " + std::to_string(ddi.rows) +
                         " vs " + std::to_string(m) + " drugs");
    }

    // effective columns and their norms
    std::vector<std::vector<double>> cols(m, std::vector<double>(s, 0.0));
    std::vector<double> norms(m, 0.0);
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double w = mask.at(i, j) ? local_weights.at(i, j) : 0.0;
            cols[j][i] = w;
            norms[j] += w * w;
        }
    }
    for (double& n : norms) n = std::sqrt(n);

    auto cosine = [&](std::size_t a, std::size_t b) {
        if (norms[a] == 0.0 || norms[b] == 0.0) return 0.0;
        double dot = 0.0;
        for (std::size_t i = 0; i < s; ++i) dot += cols[a][i] * cols[b][i];
        return dot / (norms[a] * norms[b]);
    };

    double sum_all = 0.0, sum_inter = 0.0;
    std::size_t n_all = 0, n_inter = 0;
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < m; ++b) {
            if (a == b) continue;
            double c = cosine(a, b);
            sum_all += c;
            ++n_all;
            if (ddi.at(a, b)) {
                sum_inter += c;
                ++n_inter;
            }
        }
    }
    MaskCosines result;
    result.cos_all = n_all ? sum_all / static_cast<double>(n_all) : 0.0;
    if (n_inter) result.cos_interacted = sum_inter / static_cast<double>(n_inter);
    return result;
}

MaskAblationResult mask_ablation(const data::Cohort& cohort, const TrainConfig& base,
                                 const std::vector<std::uint64_t>& seeds) {
    data::Split sp = data::split(cohort, {}, base.seed);
    MaskAblationResult result;
    for (bool masked : {true, false}) {
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base;
            cfg.seed = seed;
            cfg.model.use_mask = masked;
            Model model(cfg.model, cohort.drugs, cohort.mask);
            Rng init = Rng(cfg.seed).split("init");
            model.init_params(init);
            Adam optimizer(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
            fit(model, optimizer, cohort, sp, cfg); // converged-state weights

            ByteMatrix dense(cohort.mask.entries.rows, cohort.mask.entries.cols, 1);
            MaskCosines cos = mask_cosines(model.params().get("local.w4"),
                                           masked ? cohort.mask.entries : dense,
                                           cohort.ddi);
            TestMetrics m = test_metrics(evaluate_patients(model, cohort, sp.test),
                                         cohort.ddi);
            AblationRun run;
            run.seed = seed;
            run.masked = masked;
            run.cos_interacted = cos.cos_interacted.value_or(0.0);
            run.cos_all = cos.cos_all;
            run.output_ddi = m.ddi;
            (masked ? result.masked : result.unmasked).push_back(run);
        }
    }
    return result;
}

namespace {

FilterRow metrics_row(double threshold, const std::vector<metrics::PatientEval>& subset,
                      std::size_t retained, const ByteMatrix& ddi) {
    FilterRow row;
    row.threshold = threshold;
    row.retained = retained;
    if (subset.empty()) {
        row.empty = true;
        return row;
    }
    TestMetrics m = test_metrics(subset, ddi);
    row.ddi = m.ddi;
    row.jaccard = m.jaccard;
    row.f1 = m.f1;
    row.prauc = m.prauc;
    row.avg_drugs = m.avg_drugs;
    return row;
}

double truth_ddi(const metrics::PatientEval& eval, const ByteMatrix& ddi) {
    metrics::PatientEval truth_as_pred;
    for (const metrics::VisitEval& v : eval.visits) {
        truth_as_pred.visits.push_back(metrics::VisitEval{v.truth, v.truth, {}});
    }
    return metrics::ddi_rate(truth_as_pred, ddi);
}

} // namespace

ErrorAnalysisResult error_analysis(const std::vector<metrics::PatientEval>& test_evals,
                                   const ByteMatrix& ddi,
                                   const std::vector<double>& ddi_thresholds,
                                   const std::vector<double>& med_thresholds) {
    ErrorAnalysisResult result;
    for (double t : ddi_thresholds) {
        std::vector<metrics::PatientEval> subset;
        for (const metrics::PatientEval& e : test_evals) {
            if (truth_ddi(e, ddi) >= t) subset.push_back(e);
        }
        std::size_t retained = subset.size();
        result.by_truth_ddi.push_back(metrics_row(t, subset, retained, ddi));
    }
    for (double t : med_thresholds) {
        std::vector<metrics::PatientEval> subset;
        std::size_t retained_visits = 0;
        for (const metrics::PatientEval& e : test_evals) {
            metrics::PatientEval kept;
            for (const metrics::VisitEval& v : e.visits) {
                std::size_t n_truth = 0;
                for (auto b : v.truth) n_truth += (b != 0);
                if (static_cast<double>(n_truth) >= t) kept.visits.push_back(v);
            }
            if (!kept.visits.empty()) {
                retained_visits += kept.visits.size();
                subset.push_back(std::move(kept));
            }
        }
        result.by_truth_drugs.push_back(metrics_row(t, subset, retained_visits, ddi));
    }
    return result;
}

void write_sweep_csv(const SweepResult& result, std::ostream& out) {
    out.precision(17);
    out << "gamma,ddi,n_med,jaccard,f1,prauc\n";
    for (const SweepRow& r : result.rows) {
        out << r.gamma << ',' << r.ddi << ',' << r.n_med << ',' << r.jaccard << ','
            << r.f1 << ',' << r.prauc << '\n';
    }
}

void write_error_analysis_csv(const ErrorAnalysisResult& result, std::ostream& out) {
    out.precision(17);
    out << "scenario,threshold,empty,retained,ddi,jaccard,f1,prauc,avg_drugs\n";
    auto emit = [&](const char* scenario, const FilterRow& r) {
        out << scenario << ',' << r.threshold << ',' << (r.empty ? 1 : 0) << ','
            << r.retained << ',' << r.ddi << ',' << r.jaccard << ',' << r.f1 << ','
            << r.prauc << ',' << r.avg_drugs << '\n';
    };
    for (const FilterRow& r : result.by_truth_ddi) emit("truth_ddi", r);
    for (const FilterRow& r : result.by_truth_drugs) emit("truth_drugs", r);
}

} // namespace analysis
} // namespace drugrec
