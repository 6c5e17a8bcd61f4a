#include <benchmark/benchmark.h>

#include "drugrec/analysis.hpp"
#include "drugrec/train.hpp"

using namespace drugrec;

namespace {

const char* kAspirin = "CC(=O)Oc1ccccc1C(=O)O";

data::Cohort& bench_cohort() {
    static data::Cohort cohort = [] {
        data::SyntheticSpec spec;
        spec.patients = 50;
        return data::generate_cohort(spec, 1);
    }();
    return cohort;
}

TrainConfig bench_config(const data::Cohort& cohort, std::size_t dim) {
    TrainConfig cfg;
    cfg.model.dim = dim;
    cfg.model.dropout = 0.0;
    cfg.seed = 1;
    bind_vocab(cfg.model, cohort);
    return cfg;
}

Model bench_model(const data::Cohort& cohort, const TrainConfig& cfg) {
    Model model(cfg.model, cohort.drugs, cohort.mask);
    Rng init = Rng(cfg.seed).split("init");
    model.init_params(init);
    return model;
}

} // namespace

static void BM_ParseSmiles(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(chem::parse_smiles(kAspirin));
    }
}
BENCHMARK(BM_ParseSmiles);

static void BM_FragmentMolecule(benchmark::State& state) {
    chem::MoleculeGraph mol = chem::parse_smiles(kAspirin);
    for (auto _ : state) {
        benchmark::DoNotOptimize(chem::fragment(mol));
    }
}
BENCHMARK(BM_FragmentMolecule);

static void BM_BuildMask(benchmark::State& state) {
    std::vector<chem::DrugEntry> drugs;
    for (std::size_t j = 0; j < 20; ++j) {
        const auto& [name, smiles] = data::builtin_smiles()[j];
        drugs.push_back({name, {smiles}, {}});
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(chem::build_mask(drugs));
    }
}
BENCHMARK(BM_BuildMask);

static void BM_DrugMemory(benchmark::State& state) {
    data::Cohort& cohort = bench_cohort();
    TrainConfig cfg = bench_config(cohort, state.range(0));
    Model model = bench_model(cohort, cfg);
    for (auto _ : state) {
        ad::Tape tape;
        ParamRefs refs = model.bind(tape, false);
        benchmark::DoNotOptimize(tape.val(model.drug_memory(tape, refs)));
    }
}
BENCHMARK(BM_DrugMemory)->Arg(16)->Arg(64);

static void BM_TrainEpoch(benchmark::State& state) {
    data::Cohort& cohort = bench_cohort();
    TrainConfig cfg = bench_config(cohort, 16);
    Model model = bench_model(cohort, cfg);
    Adam optimizer(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < cohort.patients.size(); ++i) train_idx.push_back(i);
    std::size_t epoch = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            train_epoch(model, optimizer, cohort, train_idx, cfg, ++epoch));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(train_idx.size()));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

static void BM_InferPatient(benchmark::State& state) {
    data::Cohort& cohort = bench_cohort();
    TrainConfig cfg = bench_config(cohort, 16);
    Model model = bench_model(cohort, cfg);
    const data::PatientRecord& rec = cohort.patients[0];
    for (auto _ : state) {
        benchmark::DoNotOptimize(infer(model, rec.visits));
    }
}
BENCHMARK(BM_InferPatient);

static void BM_PatientMetrics(benchmark::State& state) {
    data::Cohort& cohort = bench_cohort();
    TrainConfig cfg = bench_config(cohort, 16);
    Model model = bench_model(cohort, cfg);
    metrics::PatientEval eval = evaluate_patient(model, cohort.patients[0]);
    for (auto _ : state) {
        benchmark::DoNotOptimize(metrics::ddi_rate(eval, cohort.ddi));
        benchmark::DoNotOptimize(metrics::jaccard(eval));
        benchmark::DoNotOptimize(metrics::f1(eval));
        benchmark::DoNotOptimize(metrics::prauc(eval));
    }
}
BENCHMARK(BM_PatientMetrics);

BENCHMARK_MAIN();
