#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "drugrec/error.hpp"
#include "drugrec/metrics.hpp"
#include "metric_oracles.hpp"
#include "testutil.hpp"

using namespace drugrec;
using metrics::PatientEval;
using metrics::VisitEval;

namespace {

double oracle_jaccard(const VisitEval& v) { return oracles::jaccard(v); }
double oracle_f1(const VisitEval& v) { return oracles::f1(v); }
double oracle_prauc(const VisitEval& v) { return oracles::prauc(v); }
double oracle_ddi(const PatientEval& p, const ByteMatrix& d) { return oracles::ddi_rate(p, d); }

PatientEval one_visit(BitVec truth, BitVec pred, std::vector<double> scores = {}) {
    if (scores.empty()) scores.assign(truth.size(), 0.0);
    return PatientEval{{VisitEval{std::move(truth), std::move(pred), std::move(scores)}}};
}

} // namespace

TEST_CASE("ddi rate examples") {
    ByteMatrix ddi(4, 4);
    ddi.at(0, 1) = ddi.at(1, 0) = 1;
    // one visit prescribing {0,1,2}: 6 ordered pairs, the (0,1) bond twice
    CHECK(metrics::ddi_rate(one_visit({1, 1, 1, 0}, {1, 1, 1, 0}), ddi) ==
          doctest::Approx(1.0 / 3.0));
    ByteMatrix zero(4, 4);
    CHECK(metrics::ddi_rate(one_visit({1, 1, 1, 0}, {1, 1, 1, 0}), zero) == 0.0);
    // single-drug visits have no pairs: degenerate denominator gives 0
    PatientEval p;
    p.visits.push_back(VisitEval{{1, 0, 0, 0}, {1, 0, 0, 0}, {}});
    p.visits.push_back(VisitEval{{0, 1, 0, 0}, {0, 1, 0, 0}, {}});
    CHECK(metrics::ddi_rate(p, ddi) == 0.0);
}

TEST_CASE("jaccard examples") {
    CHECK(metrics::jaccard(one_visit({1, 1, 1, 0}, {0, 1, 1, 1})) == doctest::Approx(0.5));
    CHECK(metrics::jaccard(one_visit({1, 0, 1, 0}, {1, 0, 1, 0})) == 1.0);
    CHECK(metrics::jaccard(one_visit({1, 1, 0, 0}, {0, 0, 1, 1})) == 0.0);
    CHECK(metrics::jaccard(one_visit({0, 0}, {0, 0})) == 1.0); // empty vs empty
}

TEST_CASE("f1 examples") {
    CHECK(metrics::f1(one_visit({1, 1, 1, 0}, {0, 1, 1, 1})) == doctest::Approx(2.0 / 3.0));
    // prediction covers the truth at twice the size: P=0.5, R=1
    CHECK(metrics::f1(one_visit({1, 1, 0, 0}, {1, 1, 1, 1})) == doctest::Approx(2.0 / 3.0));
    CHECK(metrics::f1(one_visit({1, 1, 0, 0}, {0, 0, 0, 0})) == 0.0);
}

TEST_CASE("prauc examples") {
    CHECK(metrics::prauc(one_visit({1, 0}, {0, 0}, {0.9, 0.1})) == doctest::Approx(1.0));
    // relevant item ranked second: steps k=1 (precision 0), k=2 (precision .5, full recall)
    CHECK(metrics::prauc(one_visit({1, 0}, {0, 0}, {0.1, 0.9})) == doctest::Approx(0.5));
    CHECK(metrics::prauc(one_visit({0, 0}, {0, 0}, {0.4, 0.6})) == 0.0);
}

TEST_CASE("avg drug count") {
    std::vector<PatientEval> patients;
    patients.push_back(one_visit({1, 1, 1, 0}, {1, 1, 1, 0}));
    CHECK(metrics::avg_drug_count(patients) == doctest::Approx(3.0));
    PatientEval p;
    p.visits.push_back(VisitEval{{0, 0, 0, 0}, {1, 1, 0, 0}, {}});
    p.visits.push_back(VisitEval{{0, 0, 0, 0}, {1, 1, 1, 1}, {}});
    CHECK(metrics::avg_drug_count({p}) == doctest::Approx(3.0));
    PatientEval none = one_visit({0, 0}, {0, 0});
    CHECK(metrics::avg_drug_count({none}) == 0.0);
}

TEST_CASE("cohort mean") {
    CHECK(metrics::cohort_mean({1.0}) == 1.0);
    CHECK(metrics::cohort_mean({0.0, 1.0}) == 0.5);
    CHECK(metrics::cohort_mean({0.2, 0.4, 0.6}) == doctest::Approx(0.4));
    CHECK_THROWS_AS(metrics::cohort_mean({}), EmptyInputError);
}

TEST_CASE("per-visit metrics match the brute-force oracles on random triples") {
    Rng rng(2024);
    for (int trial = 0; trial < 10000; ++trial) {
        std::size_t m = 1 + rng.index(12);
        VisitEval v;
        v.truth.resize(m);
        v.predicted.resize(m);
        v.scores.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            v.truth[i] = rng.bernoulli(0.4);
            v.predicted[i] = rng.bernoulli(0.4);
            v.scores[i] = rng.uniform();
        }
        PatientEval p{{v}};
        CHECK(std::fabs(metrics::jaccard(p) - oracle_jaccard(v)) <= 1e-12);
        CHECK(std::fabs(metrics::f1(p) - oracle_f1(v)) <= 1e-12);
        CHECK(std::fabs(metrics::prauc(p) - oracle_prauc(v)) <= 1e-12);

        ByteMatrix ddi(m, m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j)
                ddi.at(i, j) = ddi.at(j, i) = rng.bernoulli(0.3);
        CHECK(std::fabs(metrics::ddi_rate(p, ddi) - oracle_ddi(p, ddi)) <= 1e-12);
    }
}

TEST_CASE("jaccard and f1 satisfy the classical bound") {
    // J <= F1 <= 2J/(1+J) whenever the union is nonempty
    Rng rng(77);
    for (int trial = 0; trial < 2000; ++trial) {
        std::size_t m = 1 + rng.index(10);
        VisitEval v;
        v.truth.resize(m);
        v.predicted.resize(m);
        v.scores.assign(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            v.truth[i] = rng.bernoulli(0.5);
            v.predicted[i] = rng.bernoulli(0.5);
        }
        bool any = false;
        for (std::size_t i = 0; i < m; ++i) any = any || v.truth[i] || v.predicted[i];
        if (!any) continue;
        PatientEval p{{v}};
        double j = metrics::jaccard(p);
        double f = metrics::f1(p);
        CHECK(j <= f + 1e-12);
        CHECK(f <= 2.0 * j / (1.0 + j) + 1e-12);
    }
}

TEST_CASE("prauc range and perfect-ranking property") {
    Rng rng(99);
    for (int trial = 0; trial < 2000; ++trial) {
        std::size_t m = 2 + rng.index(10);
        VisitEval v;
        v.truth.resize(m);
        v.predicted.assign(m, 0);
        v.scores.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            v.truth[i] = rng.bernoulli(0.4);
            v.scores[i] = rng.uniform();
        }
        double auc = metrics::prauc(PatientEval{{v}});
        CHECK(auc >= 0.0);
        CHECK(auc <= 1.0 + 1e-12);

        // force all relevant items above all irrelevant ones
        for (std::size_t i = 0; i < m; ++i) {
            v.scores[i] = v.truth[i] ? 0.5 + rng.uniform(0.0, 0.5) : rng.uniform(0.0, 0.49);
        }
        bool has_rel = std::any_of(v.truth.begin(), v.truth.end(), [](auto b) { return b; });
        if (has_rel) {
            CHECK(metrics::prauc(PatientEval{{v}}) == doctest::Approx(1.0));
        }
    }
}

TEST_CASE("ddi rate is invariant to consistent index permutation") {
    Rng rng(123);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t m = 3 + rng.index(8);
        PatientEval p;
        std::size_t visits = 1 + rng.index(3);
        for (std::size_t t = 0; t < visits; ++t) {
            VisitEval v;
            v.truth.assign(m, 0);
            v.predicted.resize(m);
            v.scores.assign(m, 0.0);
            for (std::size_t i = 0; i < m; ++i) v.predicted[i] = rng.bernoulli(0.5);
            p.visits.push_back(std::move(v));
        }
        ByteMatrix ddi(m, m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j)
                ddi.at(i, j) = ddi.at(j, i) = rng.bernoulli(0.4);

        std::vector<std::size_t> perm(m);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);

        PatientEval permuted = p;
        ByteMatrix permuted_ddi(m, m);
        for (std::size_t t = 0; t < p.visits.size(); ++t) {
            for (std::size_t i = 0; i < m; ++i) {
                permuted.visits[t].predicted[perm[i]] = p.visits[t].predicted[i];
            }
        }
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                permuted_ddi.at(perm[i], perm[j]) = ddi.at(i, j);

        CHECK(metrics::ddi_rate(p, ddi) == doctest::Approx(metrics::ddi_rate(permuted, permuted_ddi)));
    }
}

TEST_CASE("bootstrap evaluation") {
    Rng rng(5);
    std::vector<PatientEval> cohort;
    std::size_t m = 6;
    ByteMatrix ddi(m, m);
    ddi.at(0, 1) = ddi.at(1, 0) = 1;
    for (int i = 0; i < 12; ++i) {
        VisitEval v;
        v.truth.resize(m);
        v.predicted.resize(m);
        v.scores.resize(m);
        for (std::size_t k = 0; k < m; ++k) {
            v.truth[k] = rng.bernoulli(0.5);
            v.predicted[k] = rng.bernoulli(0.5);
            v.scores[k] = rng.uniform();
        }
        cohort.push_back(PatientEval{{v, v}});
    }

    SUBCASE("fixed seed reproduces the report bit for bit") {
        auto a = metrics::bootstrap_eval(cohort, ddi, 10, 0.8, 42);
        auto b = metrics::bootstrap_eval(cohort, ddi, 10, 0.8, 42);
        for (const auto& [name, summary] : a.metrics) {
            CHECK(summary.mean == b.metrics.at(name).mean);
            CHECK(summary.rounds == b.metrics.at(name).rounds);
        }
    }
    SUBCASE("round values stay inside the per-patient hull") {
        auto report = metrics::bootstrap_eval(cohort, ddi, 10, 0.8, 7);
        std::vector<double> per_patient;
        for (const auto& p : cohort) per_patient.push_back(metrics::jaccard(p));
        double lo = *std::min_element(per_patient.begin(), per_patient.end());
        double hi = *std::max_element(per_patient.begin(), per_patient.end());
        for (double round : report.metrics.at("jaccard").rounds) {
            CHECK(round >= lo - 1e-12);
            CHECK(round <= hi + 1e-12);
        }
    }
    SUBCASE("constant metric collapses to zero deviation") {
        std::vector<PatientEval> same(8, cohort[0]);
        auto report = metrics::bootstrap_eval(same, ddi, 10, 0.8, 3);
        CHECK(report.metrics.at("jaccard").stddev == doctest::Approx(0.0));
        CHECK(report.metrics.at("jaccard").mean ==
              doctest::Approx(metrics::jaccard(cohort[0])));
    }
    SUBCASE("single round leaves the deviation undefined") {
        auto report = metrics::bootstrap_eval(cohort, ddi, 1, 0.8, 3);
        CHECK_FALSE(report.metrics.at("jaccard").stddev_defined);
    }
    SUBCASE("empty test set rejected") {
        CHECK_THROWS_AS(metrics::bootstrap_eval({}, ddi, 10, 0.8, 1), EmptyInputError);
    }
}

TEST_CASE("t test") {
    SUBCASE("identical samples give p = 1") {
        std::vector<double> a(10, 0.4);
        CHECK(metrics::t_test(a, a) == 1.0);
    }
    SUBCASE("clearly separated samples give a tiny p") {
        std::vector<double> a, b;
        Rng rng(1);
        for (int i = 0; i < 10; ++i) {
            a.push_back(0.0 + rng.uniform(-1e-4, 1e-4));
            b.push_back(1.0 + rng.uniform(-1e-4, 1e-4));
        }
        CHECK(metrics::t_test(a, b) < 1e-6);
    }
    SUBCASE("symmetric in its arguments") {
        std::vector<double> a{0.1, 0.2, 0.3, 0.15, 0.25};
        std::vector<double> b{0.3, 0.4, 0.2, 0.35, 0.3};
        CHECK(metrics::t_test(a, b) == doctest::Approx(metrics::t_test(b, a)));
    }
    SUBCASE("matches the critical value of the reference table") {
        // two-tailed critical value at df=18 and p=0.05 is t=2.100922
        std::vector<double> a, b;
        for (int i = 0; i < 10; ++i) a.push_back(i % 2 == 0 ? -1.0 : 1.0);
        double ss = 10.0, n = 10.0, df = 18.0;
        double pooled = (ss + ss) / df;
        double delta = 2.100922 * std::sqrt(pooled * (2.0 / n));
        for (int i = 0; i < 10; ++i) b.push_back(a[i] + delta);
        CHECK(metrics::t_test(a, b) == doctest::Approx(0.05).epsilon(1e-3));
    }
    SUBCASE("zero variance handled") {
        std::vector<double> a(10, 0.0), b(10, 1.0);
        CHECK(metrics::t_test(a, b) == 0.0);
    }
}
