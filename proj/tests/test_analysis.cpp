#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "drugrec/analysis.hpp"
#include "drugrec/error.hpp"
#include "testutil.hpp"

using namespace drugrec;

namespace {

// Brute-force cosine oracle over explicit column vectors.
analysis::MaskCosines oracle_cosines(const Tensor& w, const ByteMatrix& mask,
                                     const ByteMatrix& ddi) {
    std::size_t s = mask.rows, m = mask.cols;
    auto column = [&](std::size_t j) {
        std::vector<double> col(s);
        for (std::size_t i = 0; i < s; ++i) col[i] = mask.at(i, j) ? w.at(i, j) : 0.0;
        return col;
    };
    auto cosine = [&](std::size_t a, std::size_t b) {
        std::vector<double> ca = column(a), cb = column(b);
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < s; ++i) {
            dot += ca[i] * cb[i];
            na += ca[i] * ca[i];
            nb += cb[i] * cb[i];
        }
        if (na == 0.0 || nb == 0.0) return 0.0;
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };
    double sum_inter = 0, sum_all = 0;
    std::size_t n_inter = 0, n_all = 0;
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
    analysis::MaskCosines out;
    out.cos_all = n_all ? sum_all / n_all : 0.0;
    if (n_inter) out.cos_interacted = sum_inter / n_inter;
    return out;
}

data::Cohort small_cohort(std::uint64_t seed = 5) {
    data::SyntheticSpec spec;
    spec.patients = 8;
    spec.drugs = 6;
    spec.diag_codes = 10;
    spec.proc_codes = 6;
    spec.clusters = 2;
    return data::generate_cohort(spec, seed);
}

TrainConfig small_config(const data::Cohort& cohort) {
    TrainConfig cfg;
    cfg.model.dim = 8;
    cfg.epochs = 2;
    cfg.seed = 7;
    bind_vocab(cfg.model, cohort);
    return cfg;
}

std::vector<metrics::PatientEval> fake_evals(Rng& rng, std::size_t patients,
                                             std::size_t m) {
    std::vector<metrics::PatientEval> evals;
    for (std::size_t p = 0; p < patients; ++p) {
        metrics::PatientEval e;
        std::size_t visits = 1 + rng.index(3);
        for (std::size_t t = 0; t < visits; ++t) {
            metrics::VisitEval v;
            v.truth.resize(m);
            v.predicted.resize(m);
            v.scores.resize(m);
            for (std::size_t i = 0; i < m; ++i) {
                v.truth[i] = rng.bernoulli(0.5);
                v.predicted[i] = rng.bernoulli(0.5);
                v.scores[i] = rng.uniform();
            }
            e.visits.push_back(std::move(v));
        }
        evals.push_back(std::move(e));
    }
    return evals;
}

} // namespace

TEST_CASE("mask cosine examples") {
    ByteMatrix mask(2, 2, 1);
    ByteMatrix ddi(2, 2);
    ddi.at(0, 1) = ddi.at(1, 0) = 1;

    SUBCASE("orthogonal one-hot columns") {
        Tensor w = Tensor::matrix(2, 2, {1, 0, 0, 1});
        analysis::MaskCosines c = analysis::mask_cosines(w, mask, ddi);
        CHECK(c.cos_all == doctest::Approx(0.0));
        REQUIRE(c.cos_interacted.has_value());
        CHECK(*c.cos_interacted == doctest::Approx(0.0));
    }
    SUBCASE("identical columns") {
        Tensor w = Tensor::matrix(2, 2, {0.4, 0.4, -0.3, -0.3});
        analysis::MaskCosines c = analysis::mask_cosines(w, mask, ddi);
        CHECK(*c.cos_interacted == doctest::Approx(1.0));
    }
    SUBCASE("zero-norm columns contribute zero") {
        Tensor w = Tensor::matrix(2, 2, {0.0, 0.7, 0.0, 0.2});
        analysis::MaskCosines c = analysis::mask_cosines(w, mask, ddi);
        CHECK(*c.cos_interacted == doctest::Approx(0.0));
    }
    SUBCASE("no interacting pairs leaves the interacted mean absent") {
        ByteMatrix no_ddi(2, 2);
        Tensor w = Tensor::matrix(2, 2, {1, 0, 0, 1});
        analysis::MaskCosines c = analysis::mask_cosines(w, mask, no_ddi);
        CHECK_FALSE(c.cos_interacted.has_value());
    }
}

TEST_CASE("mask cosines match the brute-force oracle") {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        Rng rng(seed);
        std::size_t s = 2 + rng.index(8);
        std::size_t m = 2 + rng.index(6);
        Tensor w = testutil::random_tensor({s, m}, rng);
        ByteMatrix mask(s, m);
        for (auto& b : mask.data) b = rng.bernoulli(0.5);
        ByteMatrix ddi(m, m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j)
                ddi.at(i, j) = ddi.at(j, i) = rng.bernoulli(0.4);

        analysis::MaskCosines got = analysis::mask_cosines(w, mask, ddi);
        analysis::MaskCosines expected = oracle_cosines(w, mask, ddi);
        CHECK(std::fabs(got.cos_all - expected.cos_all) <= 1e-12);
        REQUIRE(got.cos_interacted.has_value() == expected.cos_interacted.has_value());
        if (got.cos_interacted) {
            CHECK(std::fabs(*got.cos_interacted - *expected.cos_interacted) <= 1e-12);
        }
        CHECK(got.cos_all >= -1.0 - 1e-12);
        CHECK(got.cos_all <= 1.0 + 1e-12);
    }
}

TEST_CASE("gamma sweep") {
    data::Cohort cohort = small_cohort();
    TrainConfig cfg = small_config(cohort);

    SUBCASE("single gamma gives a single row") {
        analysis::SweepResult r = analysis::gamma_sweep(cohort, {0.05}, cfg, {1});
        REQUIRE(r.rows.size() == 1);
        CHECK(r.rows[0].gamma == 0.05);
        CHECK(r.rows[0].jaccard >= 0.0);
    }
    SUBCASE("permuting the gamma list permutes rows without value changes") {
        analysis::SweepResult fwd = analysis::gamma_sweep(cohort, {0.02, 0.08}, cfg, {1});
        analysis::SweepResult rev = analysis::gamma_sweep(cohort, {0.08, 0.02}, cfg, {1});
        REQUIRE(fwd.rows.size() == 2);
        REQUIRE(rev.rows.size() == 2);
        CHECK(fwd.rows[0].ddi == rev.rows[1].ddi);
        CHECK(fwd.rows[0].jaccard == rev.rows[1].jaccard);
        CHECK(fwd.rows[1].f1 == rev.rows[0].f1);
        CHECK(fwd.rows[1].prauc == rev.rows[0].prauc);
    }
    SUBCASE("csv writer emits one row per gamma") {
        analysis::SweepResult r = analysis::gamma_sweep(cohort, {0.05}, cfg, {1});
        std::ostringstream out;
        analysis::write_sweep_csv(r, out);
        std::string csv = out.str();
        CHECK(csv.find("gamma,ddi,n_med,jaccard,f1,prauc\n") == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    }
    SUBCASE("no seeds rejected") {
        CHECK_THROWS_AS(analysis::gamma_sweep(cohort, {0.05}, cfg, {}), ValueError);
    }
}

TEST_CASE("mask ablation produces both variants") {
    data::Cohort cohort = small_cohort();
    TrainConfig cfg = small_config(cohort);
    cfg.epochs = 1;
    analysis::MaskAblationResult r = analysis::mask_ablation(cohort, cfg, {1, 2});
    REQUIRE(r.masked.size() == 2);
    REQUIRE(r.unmasked.size() == 2);
    for (const auto& run : r.masked) {
        CHECK(run.masked);
        CHECK(run.cos_all >= -1.0);
        CHECK(run.cos_all <= 1.0);
        CHECK(run.output_ddi >= 0.0);
    }
    for (const auto& run : r.unmasked) CHECK_FALSE(run.masked);
}

TEST_CASE("error analysis") {
    Rng rng(11);
    std::size_t m = 8;
    std::vector<metrics::PatientEval> evals = fake_evals(rng, 20, m);
    ByteMatrix ddi(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j)
            ddi.at(i, j) = ddi.at(j, i) = rng.bernoulli(0.3);

    SUBCASE("threshold zero reproduces the unfiltered metrics exactly") {
        analysis::ErrorAnalysisResult r =
            analysis::error_analysis(evals, ddi, {0.0}, {0.0});
        std::vector<double> jacs, ddis, f1s, prs;
        for (const auto& e : evals) {
            jacs.push_back(metrics::jaccard(e));
            ddis.push_back(metrics::ddi_rate(e, ddi));
            f1s.push_back(metrics::f1(e));
            prs.push_back(metrics::prauc(e));
        }
        REQUIRE(r.by_truth_ddi.size() == 1);
        CHECK_FALSE(r.by_truth_ddi[0].empty);
        CHECK(r.by_truth_ddi[0].jaccard == metrics::cohort_mean(jacs));
        CHECK(r.by_truth_ddi[0].ddi == metrics::cohort_mean(ddis));
        CHECK(r.by_truth_ddi[0].f1 == metrics::cohort_mean(f1s));
        CHECK(r.by_truth_ddi[0].prauc == metrics::cohort_mean(prs));
        CHECK(r.by_truth_ddi[0].avg_drugs == metrics::avg_drug_count(evals));
        REQUIRE(r.by_truth_drugs.size() == 1);
        CHECK(r.by_truth_drugs[0].jaccard == metrics::cohort_mean(jacs));
    }
    SUBCASE("threshold above the maximum flags an empty row") {
        analysis::ErrorAnalysisResult r =
            analysis::error_analysis(evals, ddi, {2.0}, {100.0});
        CHECK(r.by_truth_ddi[0].empty);
        CHECK(r.by_truth_ddi[0].retained == 0);
        CHECK(r.by_truth_drugs[0].empty);
    }
    SUBCASE("retained counts never increase with the threshold") {
        std::vector<double> ddi_ts = {0.0, 0.05, 0.1, 0.15, 0.2};
        std::vector<double> med_ts = {0, 1, 2, 3, 4, 5};
        analysis::ErrorAnalysisResult r =
            analysis::error_analysis(evals, ddi, ddi_ts, med_ts);
        for (std::size_t i = 1; i < r.by_truth_ddi.size(); ++i) {
            CHECK(r.by_truth_ddi[i].retained <= r.by_truth_ddi[i - 1].retained);
        }
        for (std::size_t i = 1; i < r.by_truth_drugs.size(); ++i) {
            CHECK(r.by_truth_drugs[i].retained <= r.by_truth_drugs[i - 1].retained);
        }
    }
    SUBCASE("csv writer labels both scenarios") {
        analysis::ErrorAnalysisResult r =
            analysis::error_analysis(evals, ddi, {0.0, 0.1}, {0.0});
        std::ostringstream out;
        analysis::write_error_analysis_csv(r, out);
        CHECK(out.str().find("truth_ddi") != std::string::npos);
        CHECK(out.str().find("truth_drugs") != std::string::npos);
    }
}
