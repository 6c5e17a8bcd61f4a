#ifndef DRUGREC_METRICS_HPP
#define DRUGREC_METRICS_HPP

#include <map>
#include <string>
#include <vector>

#include "drugrec/rng.hpp"
#include "drugrec/tensor.hpp"

namespace drugrec {
namespace metrics {

struct VisitEval {
    BitVec truth;
    BitVec predicted;
    std::vector<double> scores;
};

struct PatientEval {
    std::vector<VisitEval> visits;
};

/// Fraction of co-prescribed ordered pairs (k != l) that are known
/// interactions, pooled over the patient's visits. 0 when no visit
/// prescribes two or more drugs.
double ddi_rate(const PatientEval& patient, const ByteMatrix& ddi);

/// Per-visit |truth n pred| / |truth u pred| (empty/empty -> 1), averaged
/// over visits.
double jaccard(const PatientEval& patient);

/// Per-visit harmonic mean of precision and recall (0 when undefined),
/// averaged over visits.
double f1(const PatientEval& patient);

/// Per-visit area under the precision-recall curve over the score ranking
/// (ties broken by ascending drug index), averaged over visits. A visit
/// with no positive truth scores 0.
double prauc(const PatientEval& patient);

/// Mean predicted-set size pooled over every visit of every patient.
double avg_drug_count(const std::vector<PatientEval>& patients);

/// Unweighted mean over patients; rejects an empty cohort.
double cohort_mean(const std::vector<double>& per_patient);

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;        // sample std over rounds; 0 when undefined
    bool stddev_defined = false;
    std::vector<double> rounds;
};

struct BootstrapReport {
    std::size_t rounds = 0;
    double fraction = 0.0;
    std::uint64_t seed = 0;
    std::map<std::string, MetricSummary> metrics; // ddi, jaccard, f1, prauc, avg_drugs
};

/// Repeated with-replacement sampling of floor(fraction * n) patients;
/// every metric is evaluated per round and summarized as mean and sample
/// standard deviation across rounds.
BootstrapReport bootstrap_eval(const std::vector<PatientEval>& test_set,
                               const ByteMatrix& ddi, std::size_t rounds,
                               double fraction, std::uint64_t seed);

/// Two-tailed p-value of the equal-size pooled-variance two-sample t-test.
/// Degenerate zero-variance samples give p = 1 when the means agree and
/// p = 0 otherwise.
double t_test(const std::vector<double>& rounds_a, const std::vector<double>& rounds_b);

void write_report_json(const BootstrapReport& report, const std::string& config_echo,
                       std::ostream& out);

} // namespace metrics
} // namespace drugrec

#endif
