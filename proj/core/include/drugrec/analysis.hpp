#ifndef DRUGREC_ANALYSIS_HPP
#define DRUGREC_ANALYSIS_HPP

#include <optional>
#include <vector>

#include "drugrec/train.hpp"

namespace drugrec {
namespace analysis {

struct SweepRow {
    double gamma = 0.0;
    double ddi = 0.0;
    double n_med = 0.0;
    double jaccard = 0.0;
    double f1 = 0.0;
    double prauc = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;            // one per gamma, seed-averaged
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<SweepRow>> per_seed; // rows[gamma][seed]
};

/// Trains one model per (gamma, seed) on the same split and evaluates the
/// test patients; rows are seed means. Cells are independent, so permuting
/// the gamma list only permutes rows.
SweepResult gamma_sweep(const data::Cohort& cohort, const std::vector<double>& gammas,
                        const TrainConfig& base, const std::vector<std::uint64_t>& seeds);

struct MaskCosines {
    std::optional<double> cos_interacted; // absent when D has no pairs
    double cos_all = 0.0;
};

/// Column cosine statistics of the effective local weights W (.) mask.
/// Zero-norm columns contribute cosine 0.
MaskCosines mask_cosines(const Tensor& local_weights, const ByteMatrix& mask,
                         const ByteMatrix& ddi);

struct AblationRun {
    std::uint64_t seed = 0;
    bool masked = true;
    double cos_interacted = 0.0;
    double cos_all = 0.0;
    double output_ddi = 0.0;
};

struct MaskAblationResult {
    std::vector<AblationRun> masked;
    std::vector<AblationRun> unmasked;
};

/// Trains the masked and dense variants per seed and reports the cosine
/// statistics plus the realized test DDI rate of each run.
MaskAblationResult mask_ablation(const data::Cohort& cohort, const TrainConfig& base,
                                 const std::vector<std::uint64_t>& seeds);

struct FilterRow {
    double threshold = 0.0;
    bool empty = false;
    std::size_t retained = 0; // patients (scenario i) or visits (scenario ii)
    double ddi = 0.0;
    double jaccard = 0.0;
    double f1 = 0.0;
    double prauc = 0.0;
    double avg_drugs = 0.0;
};

struct ErrorAnalysisResult {
    std::vector<FilterRow> by_truth_ddi;   // keep patients with truth DDI >= t
    std::vector<FilterRow> by_truth_drugs; // keep visits with truth |m| >= t
};

/// Recomputes every metric on threshold-filtered subsets of the test
/// evaluations. Threshold 0 reproduces the unfiltered numbers exactly;
/// exhausted subsets are flagged, not fatal.
ErrorAnalysisResult error_analysis(const std::vector<metrics::PatientEval>& test_evals,
                                   const ByteMatrix& ddi,
                                   const std::vector<double>& ddi_thresholds,
                                   const std::vector<double>& med_thresholds);

void write_sweep_csv(const SweepResult& result, std::ostream& out);
void write_error_analysis_csv(const ErrorAnalysisResult& result, std::ostream& out);

} // namespace analysis
} // namespace drugrec

#endif
