#include "drugrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "drugrec/error.hpp"

namespace drugrec {
namespace metrics {

namespace {

void require_visit(const VisitEval& v) {
    if (v.truth.size() != v.predicted.size()) {
        throw ShapeError("visit eval: truth " + std::to_string(v.truth.size()) +
                         " vs predicted " + std::to_string(v.predicted.size()));
    }
}

std::size_t popcount(const BitVec& v) {
    std::size_t n = 0;
    for (auto b : v) n += (b != 0);
    return n;
}

double mean_over_visits(const PatientEval& patient, double (*per_visit)(const VisitEval&)) {
    if (patient.visits.empty()) throw EmptyInputError("patient eval has no visits");
    double acc = 0.0;
    for (const VisitEval& v : patient.visits) acc += per_visit(v);
    return acc / static_cast<double>(patient.visits.size());
}

double visit_jaccard(const VisitEval& v) {
    require_visit(v);
    std::size_t both = 0, either = 0;
    for (std::size_t i = 0; i < v.truth.size(); ++i) {
        bool t = v.truth[i], p = v.predicted[i];
        both += (t && p);
        either += (t || p);
    }
    if (either == 0) return 1.0; // empty vs empty
    return static_cast<double>(both) / static_cast<double>(either);
}

double visit_f1(const VisitEval& v) {
    require_visit(v);
    std::size_t both = 0, n_truth = 0, n_pred = 0;
    for (std::size_t i = 0; i < v.truth.size(); ++i) {
        bool t = v.truth[i], p = v.predicted[i];
        both += (t && p);
        n_truth += t;
        n_pred += p;
    }
    double precision = n_pred ? static_cast<double>(both) / static_cast<double>(n_pred) : 0.0;
    double recall = n_truth ? static_cast<double>(both) / static_cast<double>(n_truth) : 0.0;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double visit_prauc(const VisitEval& v) {
    require_visit(v);
    std::size_t m = v.truth.size();
    if (v.scores.size() != m) {
        throw ShapeError("visit eval: scores " + std::to_string(v.scores.size()) +
                         " vs truth " + std::to_string(m));
    }
    std::size_t n_rel = popcount(v.truth);
    if (n_rel == 0) return 0.0;
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (v.scores[a] != v.scores[b]) return v.scores[a] > v.scores[b];
        return a < b;
    });
    double auc = 0.0;
    std::size_t hits = 0;
    double prev_recall = 0.0;
    for (std::size_t k = 1; k <= m; ++k) {
        hits += (v.truth[order[k - 1]] != 0);
        double precision = static_cast<double>(hits) / static_cast<double>(k);
        double recall = static_cast<double>(hits) / static_cast<double>(n_rel);
        auc += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    return auc;
}

} // namespace

double ddi_rate(const PatientEval& patient, const ByteMatrix& ddi) {
    std::size_t num = 0, den = 0;
    for (const VisitEval& v : patient.visits) {
        require_visit(v);
        std::vector<std::size_t> pred;
        for (std::size_t i = 0; i < v.predicted.size(); ++i) {
            if (v.predicted[i]) pred.push_back(i);
        }
        for (std::size_t a : pred) {
            for (std::size_t b : pred) {
                if (a == b) continue;
                ++den;
                if (ddi.at(a, b)) ++num;
            }
        }
    }
    if (den == 0) return 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
}

double jaccard(const PatientEval& patient) { return mean_over_visits(patient, visit_jaccard); }

double f1(const PatientEval& patient) { return mean_over_visits(patient, visit_f1); }

double prauc(const PatientEval& patient) { return mean_over_visits(patient, visit_prauc); }

double avg_drug_count(const std::vector<PatientEval>& patients) {
    std::size_t total = 0, visits = 0;
    for (const PatientEval& p : patients) {
        for (const VisitEval& v : p.visits) {
            total += popcount(v.predicted);
            ++visits;
        }
    }
    if (visits == 0) return 0.0;
    return static_cast<double>(total) / static_cast<double>(visits);
}

double cohort_mean(const std::vector<double>& per_patient) {
    if (per_patient.empty()) throw EmptyInputError("cohort_mean: empty cohort");
    double acc = 0.0;
    for (double v : per_patient) acc += v;
    return acc / static_cast<double>(per_patient.size());
}

namespace {

struct RoundValues {
    double ddi, jac, f1v, pr, avg;
};

RoundValues evaluate_subset(const std::vector<PatientEval>& all,
                            const std::vector<std::size_t>& subset, const ByteMatrix& ddi) {
    std::vector<double> ddis, jacs, f1s, prs;
    std::vector<PatientEval> chosen;
    for (std::size_t idx : subset) {
        ddis.push_back(ddi_rate(all[idx], ddi));
        jacs.push_back(jaccard(all[idx]));
        f1s.push_back(f1(all[idx]));
        prs.push_back(prauc(all[idx]));
        chosen.push_back(all[idx]);
    }
    return RoundValues{cohort_mean(ddis), cohort_mean(jacs), cohort_mean(f1s),
                       cohort_mean(prs), avg_drug_count(chosen)};
}

MetricSummary summarize(std::vector<double> rounds) {
    MetricSummary s;
    s.rounds = std::move(rounds);
    double acc = 0.0;
    for (double v : s.rounds) acc += v;
    s.mean = acc / static_cast<double>(s.rounds.size());
    if (s.rounds.size() >= 2) {
        double ss = 0.0;
        for (double v : s.rounds) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(s.rounds.size() - 1));
        s.stddev_defined = true;
    }
    return s;
}

} // namespace

BootstrapReport bootstrap_eval(const std::vector<PatientEval>& test_set,
                               const ByteMatrix& ddi, std::size_t rounds,
                               double fraction, std::uint64_t seed) {
    if (test_set.empty()) throw EmptyInputError("bootstrap_eval: empty test set");
    if (rounds < 1) throw ValueError("bootstrap_eval: rounds must be >= 1");
    if (fraction <= 0.0 || fraction > 1.0) {
        throw ValueError("bootstrap_eval: fraction " + std::to_string(fraction) +
                         " outside (0, 1]");
    }
    std::size_t per_round =
        std::max<std::size_t>(1, static_cast<std::size_t>(fraction * test_set.size()));

    Rng root(seed);
    Rng sampler = root.split("bootstrap");
    std::vector<double> ddis, jacs, f1s, prs, avgs;
    for (std::size_t r = 0; r < rounds; ++r) {
        Rng round_rng = sampler.split(static_cast<std::uint64_t>(r));
        std::vector<std::size_t> subset(per_round);
        for (std::size_t i = 0; i < per_round; ++i) subset[i] = round_rng.index(test_set.size());
        RoundValues v = evaluate_subset(test_set, subset, ddi);
        ddis.push_back(v.ddi);
        jacs.push_back(v.jac);
        f1s.push_back(v.f1v);
        prs.push_back(v.pr);
        avgs.push_back(v.avg);
    }
    BootstrapReport report;
    report.rounds = rounds;
    report.fraction = fraction;
    report.seed = seed;
    report.metrics["ddi"] = summarize(std::move(ddis));
    report.metrics["jaccard"] = summarize(std::move(jacs));
    report.metrics["f1"] = summarize(std::move(f1s));
    report.metrics["prauc"] = summarize(std::move(prs));
    report.metrics["avg_drugs"] = summarize(std::move(avgs));
    return report;
}

namespace {

// Regularized incomplete beta via Lentz's continued fraction.
double beta_cf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double eps = 1e-14;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

double reg_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log(1.0 - x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

} // namespace

double t_test(const std::vector<double>& rounds_a, const std::vector<double>& rounds_b) {
    if (rounds_a.empty() || rounds_b.empty()) {
        throw EmptyInputError("t_test: empty sample");
    }
    auto stats = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::pair<double, double>(mean, ss);
    };
    auto [mean_a, ss_a] = stats(rounds_a);
    auto [mean_b, ss_b] = stats(rounds_b);
    double na = static_cast<double>(rounds_a.size());
    double nb = static_cast<double>(rounds_b.size());
    double df = na + nb - 2.0;
    double pooled = df > 0.0 ? (ss_a + ss_b) / df : 0.0;
    if (pooled == 0.0) return mean_a == mean_b ? 1.0 : 0.0;
    double t = (mean_a - mean_b) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    return reg_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

void write_report_json(const BootstrapReport& report, const std::string& config_echo,
                       std::ostream& out) {
    out.precision(17);
    out << "{\"rounds\": " << report.rounds << ", \"fraction\": " << report.fraction
        << ", \"seed\": " << report.seed << ", \"metrics\": {";
    bool first = true;
    for (const auto& [name, summary] : report.metrics) {
        if (!first) out << ", ";
        first = false;
        out << "\"" << name << "\": {\"mean\": " << summary.mean;
        if (summary.stddev_defined) {
            out << ", \"std\": " << summary.stddev;
        } else {
            out << ", \"std\": null";
        }
        out << ", \"rounds\": [";
        for (std::size_t i = 0; i < summary.rounds.size(); ++i) {
            if (i) out << ", ";
            out << summary.rounds[i];
        }
        out << "]}";
    }
    out << "}, \"config\": " << (config_echo.empty() ? "null" : config_echo) << "}\n";
}

} // namespace metrics
} // namespace drugrec
