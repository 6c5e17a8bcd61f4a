#include <algorithm>
#include <cmath>
#include <set>

#include "drugrec/data.hpp"
#include "drugrec/error.hpp"
#include "drugrec/metrics.hpp"

namespace drugrec {
namespace data {

const std::vector<std::pair<std::string, std::string>>& builtin_smiles() {
    static const std::vector<std::pair<std::string, std::string>> corpus = {
        {"ethanol", "CCO"},
        {"acetic-acid", "CC(=O)O"},
        {"acetone", "CC(=O)C"},
        {"urea", "NC(=O)N"},
        {"nitromethane", "C[N+](=O)[O-]"},
        {"dmso", "CS(=O)C"},
        {"ethanolamine", "NCCO"},
        {"glycine", "NCC(=O)O"},
        {"diethyl-ether", "CCOCC"},
        {"tetrahydrofuran", "C1CCOC1"},
        {"furan", "c1ccoc1"},
        {"thiophene", "c1ccsc1"},
        {"pyrrole", "c1cc[nH]c1"},
        {"imidazole", "c1cnc[nH]1"},
        {"alanine", "CC(N)C(=O)O"},
        {"lactic-acid", "CC(O)C(=O)O"},
        {"glycerol", "OCC(O)CO"},
        {"benzene", "c1ccccc1"},
        {"pyridine", "c1ccncc1"},
        {"cyclohexane", "C1CCCCC1"},
        {"morpholine", "C1COCCN1"},
        {"piperazine", "C1CNCCN1"},
        {"piperidine", "C1CCNCC1"},
        {"choline", "C[N+](C)(C)CCO"},
        {"taurine", "NCCS(=O)(=O)O"},
        {"cysteine", "NC(CS)C(=O)O"},
        {"serine", "NC(CO)C(=O)O"},
        {"toluene", "Cc1ccccc1"},
        {"phenol", "Oc1ccccc1"},
        {"aniline", "Nc1ccccc1"},
        {"cyclohexanol", "OC1CCCCC1"},
        {"anisole", "COc1ccccc1"},
        {"styrene", "C=Cc1ccccc1"},
        {"succinic-acid", "OC(=O)CCC(=O)O"},
        {"benzoic-acid", "OC(=O)c1ccccc1"},
        {"metformin", "CN(C)C(=N)NC(=N)N"},
        {"indole", "c1ccc2[nH]ccc2c1"},
        {"salicylic-acid", "OC(=O)c1ccccc1O"},
        {"naphthalene", "c1ccc2ccccc2c1"},
        {"quinoline", "c1ccc2ncccc2c1"},
        {"paracetamol", "CC(=O)Nc1ccc(O)cc1"},
        {"histidine", "NC(Cc1cnc[nH]1)C(=O)O"},
        {"nicotine", "CN1CCCC1c1cccnc1"},
        {"phenylalanine", "NC(Cc1ccccc1)C(=O)O"},
        {"pseudoephedrine", "CC(NC)C(O)c1ccccc1"},
        {"aspirin", "CC(=O)Oc1ccccc1C(=O)O"},
        {"tyrosine", "NC(Cc1ccc(O)cc1)C(=O)O"},
        {"citric-acid", "OC(=O)CC(O)(CC(=O)O)C(=O)O"},
        {"caffeine", "Cn1cnc2c1c(=O)n(C)c(=O)n2C"},
        {"ibuprofen", "CC(C)Cc1ccc(cc1)C(C)C(=O)O"},
    };
    return corpus;
}

std::size_t Cohort::total_visits() const {
    std::size_t n = 0;
    for (const PatientRecord& p : patients) n += p.visits.size();
    return n;
}

void Cohort::validate() const {
    auto check_ids = [](const std::vector<std::uint32_t>& ids, std::size_t bound,
                        const std::string& what) {
        std::uint32_t prev = 0;
        bool first = true;
        for (std::uint32_t id : ids) {
            if (id >= bound) throw SpecError(what + " id " + std::to_string(id) + " out of range");
            if (!first && id <= prev) throw SpecError(what + " ids not sorted/unique");
            prev = id;
            first = false;
        }
    };
    for (const PatientRecord& p : patients) {
        if (p.visits.size() < 2) {
            throw SpecError("patient " + p.patient_id + " has fewer than 2 visits");
        }
        for (const Visit& v : p.visits) {
            check_ids(v.diagnoses, n_diag, "diagnosis");
            check_ids(v.procedures, n_proc, "procedure");
            check_ids(v.medications, n_drugs(), "medication");
        }
    }
    if (ddi.rows != n_drugs() || ddi.cols != n_drugs()) {
        throw SpecError("DDI matrix size does not match drug count");
    }
}

void SyntheticSpec::validate() const {
    if (drugs < 2) throw SpecError("spec: need at least 2 drugs");
    if (diag_codes < 1) throw SpecError("spec: need at least 1 diagnosis code");
    if (proc_codes < 1) throw SpecError("spec: need at least 1 procedure code");
    if (patients < 1) throw SpecError("spec: need at least 1 patient");
    if (clusters < 1) throw SpecError("spec: need at least 1 cluster");
    if (mean_visits < 2.0) throw SpecError("spec: mean visits below the 2-visit floor");
    if (max_visits < 2) throw SpecError("spec: max visits below 2");
    if (ddi_rate_lo <= 0.0 || ddi_rate_hi >= 1.0 || ddi_rate_lo > ddi_rate_hi) {
        throw SpecError("spec: bad DDI rate bracket");
    }
}

double cohort_ddi_rate(const Cohort& cohort) {
    std::vector<double> rates;
    rates.reserve(cohort.patients.size());
    for (const PatientRecord& p : cohort.patients) {
        metrics::PatientEval eval;
        for (const Visit& v : p.visits) {
            BitVec m = to_multihot(v.medications, cohort.n_drugs());
            eval.visits.push_back(metrics::VisitEval{m, m, {}});
        }
        rates.push_back(metrics::ddi_rate(eval, cohort.ddi));
    }
    return metrics::cohort_mean(rates);
}

BitVec to_multihot(const std::vector<std::uint32_t>& ids, std::size_t size) {
    BitVec v(size, 0);
    for (std::uint32_t id : ids) {
        if (id >= size) throw IdRangeError("id " + std::to_string(id) + " out of range");
        v[id] = 1;
    }
    return v;
}

namespace {

std::vector<std::uint32_t> sorted_unique(std::vector<std::uint32_t> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

struct Cluster {
    std::vector<std::uint32_t> drugs;
    std::vector<std::uint32_t> diagnoses;
    std::vector<std::uint32_t> procedures;
};

std::vector<chem::DrugEntry> make_drug_table(const SyntheticSpec& spec) {
    const auto& corpus = builtin_smiles();
    std::vector<chem::DrugEntry> drugs;
    drugs.reserve(spec.drugs);
    for (std::size_t j = 0; j < spec.drugs; ++j) {
        // walk the corpus largest-first: multi-fragment molecules give the
        // bipartite columns enough support to carry signal
        std::size_t pick = corpus.size() - 1 - (j % corpus.size());
        const auto& [name, smiles] = corpus[pick];
        std::size_t generation = j / corpus.size();
        chem::DrugEntry entry;
        entry.id = "D" + std::to_string(j);
        // past the corpus size, decorate with alkyl prefixes to stay unique
        entry.smiles.push_back(std::string(generation, 'C') + smiles);
        drugs.push_back(std::move(entry));
    }
    return drugs;
}

std::vector<Cluster> make_clusters(const SyntheticSpec& spec, const chem::MaskMatrix& mask,
                                   Rng& rng) {
    std::vector<Cluster> clusters(spec.clusters);

    // substructures shared by several drugs make good cluster anchors
    std::vector<std::size_t> shared_rows;
    for (std::size_t i = 0; i < mask.substructures.size(); ++i) {
        std::size_t count = 0;
        for (std::size_t j = 0; j < mask.drugs.size(); ++j) count += mask.entries.at(i, j);
        if (count >= 2) shared_rows.push_back(i);
    }

    // wide prescriptions keep per-patient interaction rates fine-grained,
    // which the proportional controller needs to discriminate targets
    std::size_t max_pref = std::min<std::size_t>(10, spec.drugs);
    std::size_t min_pref = std::min<std::size_t>(5, spec.drugs);
    for (Cluster& cluster : clusters) {
        std::set<std::uint32_t> chosen;
        if (!shared_rows.empty()) {
            std::size_t anchor = shared_rows[rng.index(shared_rows.size())];
            for (std::size_t j = 0; j < mask.drugs.size(); ++j) {
                if (mask.entries.at(anchor, j)) chosen.insert(static_cast<std::uint32_t>(j));
            }
        }
        std::size_t target = min_pref + rng.index(max_pref - min_pref + 1);
        while (chosen.size() < target) {
            chosen.insert(static_cast<std::uint32_t>(rng.index(spec.drugs)));
        }
        while (chosen.size() > max_pref) chosen.erase(std::prev(chosen.end()));
        cluster.drugs.assign(chosen.begin(), chosen.end());

        std::size_t diag_block = std::max<std::size_t>(1, spec.diag_codes / spec.clusters);
        std::size_t n_diag = std::min<std::size_t>(diag_block, 3 + rng.index(4));
        std::set<std::uint32_t> diag;
        while (diag.size() < n_diag) {
            diag.insert(static_cast<std::uint32_t>(rng.index(spec.diag_codes)));
        }
        cluster.diagnoses.assign(diag.begin(), diag.end());

        std::size_t n_proc = std::min<std::size_t>(spec.proc_codes, 2 + rng.index(3));
        std::set<std::uint32_t> proc;
        while (proc.size() < n_proc) {
            proc.insert(static_cast<std::uint32_t>(rng.index(spec.proc_codes)));
        }
        cluster.procedures.assign(proc.begin(), proc.end());
    }
    return clusters;
}

std::vector<PatientRecord> make_patients(const SyntheticSpec& spec,
                                         const std::vector<Cluster>& clusters, Rng& root) {
    // mean extra visits beyond the 2-visit floor sets the geometric rate
    double extra_mean = spec.mean_visits - 2.0;
    double continue_prob = extra_mean / (1.0 + extra_mean);

    std::vector<PatientRecord> patients;
    patients.reserve(spec.patients);
    for (std::size_t p = 0; p < spec.patients; ++p) {
        Rng rng = root.split("patient").split(static_cast<std::uint64_t>(p));
        PatientRecord rec;
        rec.patient_id = "P" + std::to_string(p);

        std::set<std::size_t> own;
        own.insert(rng.index(clusters.size()));
        if (clusters.size() > 1 && rng.bernoulli(0.3)) own.insert(rng.index(clusters.size()));

        std::size_t n_visits = 2;
        while (n_visits < spec.max_visits && rng.bernoulli(continue_prob)) ++n_visits;

        for (std::size_t t = 0; t < n_visits; ++t) {
            Visit visit;
            std::vector<std::uint32_t> diag, proc, meds;
            for (std::size_t c : own) {
                for (std::uint32_t code : clusters[c].diagnoses) {
                    if (rng.bernoulli(0.8)) diag.push_back(code);
                }
                for (std::uint32_t code : clusters[c].procedures) {
                    if (rng.bernoulli(0.7)) proc.push_back(code);
                }
                for (std::uint32_t d : clusters[c].drugs) {
                    if (rng.bernoulli(spec.med_keep_prob)) meds.push_back(d);
                }
            }
            for (std::uint32_t code = 0; code < spec.diag_codes; ++code) {
                if (rng.bernoulli(spec.diag_noise_prob)) diag.push_back(code);
            }
            for (std::uint32_t d = 0; d < spec.drugs; ++d) {
                if (rng.bernoulli(spec.med_noise_prob)) meds.push_back(d);
            }
            if (diag.empty()) {
                diag.push_back(clusters[*own.begin()].diagnoses[0]);
            }
            if (meds.empty()) {
                meds.push_back(clusters[*own.begin()].drugs[0]);
            }
            visit.diagnoses = sorted_unique(std::move(diag));
            visit.procedures = sorted_unique(std::move(proc));
            visit.medications = sorted_unique(std::move(meds));
            rec.visits.push_back(std::move(visit));
        }
        patients.push_back(std::move(rec));
    }
    return patients;
}

// Greedy planting: walk candidate pairs (within-cluster first, so the
// interactions actually show up in prescriptions) and keep adding while the
// measured ground-truth rate stays under the bracket; overshoots are undone.
void plant_ddi_pairs(Cohort& cohort, const SyntheticSpec& spec,
                     const std::vector<Cluster>& clusters, Rng& rng) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> within;
    for (const Cluster& c : clusters) {
        for (std::size_t a = 0; a < c.drugs.size(); ++a) {
            for (std::size_t b = a + 1; b < c.drugs.size(); ++b) {
                within.insert({c.drugs[a], c.drugs[b]});
            }
        }
    }
    std::vector<std::pair<std::uint32_t, std::uint32_t>> candidates(within.begin(),
                                                                    within.end());
    rng.shuffle(candidates);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> across;
    for (std::uint32_t a = 0; a < spec.drugs; ++a) {
        for (std::uint32_t b = a + 1; b < spec.drugs; ++b) {
            if (!within.count({a, b})) across.push_back({a, b});
        }
    }
    rng.shuffle(across);
    candidates.insert(candidates.end(), across.begin(), across.end());

    cohort.ddi = ByteMatrix(spec.drugs, spec.drugs);
    double rate = 0.0;
    for (const auto& [a, b] : candidates) {
        if (rate >= spec.ddi_rate_lo) break;
        cohort.ddi.at(a, b) = 1;
        cohort.ddi.at(b, a) = 1;
        double next = cohort_ddi_rate(cohort);
        if (next > spec.ddi_rate_hi) {
            cohort.ddi.at(a, b) = 0;
            cohort.ddi.at(b, a) = 0;
            continue;
        }
        rate = next;
    }
}

} // namespace

Cohort generate_cohort(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng root = Rng(seed).split("data");

    Cohort cohort;
    cohort.n_diag = spec.diag_codes;
    cohort.n_proc = spec.proc_codes;
    cohort.drugs = make_drug_table(spec);
    cohort.mask = chem::build_mask(cohort.drugs);
    cohort.mask_provenance = "builtin-rules";

    Rng cluster_rng = root.split("clusters");
    std::vector<Cluster> clusters = make_clusters(spec, cohort.mask, cluster_rng);
    cohort.patients = make_patients(spec, clusters, root);

    Rng ddi_rng = root.split("ddi");
    plant_ddi_pairs(cohort, spec, clusters, ddi_rng);

    cohort.validate();
    return cohort;
}

Split split(const Cohort& cohort, const SplitRatios& ratios, std::uint64_t seed) {
    double sum = ratios.train + ratios.val + ratios.test;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValueError("split: ratios sum to " + std::to_string(sum) + ", expected 1");
    }
    std::size_t n = cohort.patients.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng(seed).split("split");
    rng.shuffle(order);

    // largest-remainder rounding keeps sizes within one of the exact ratios
    double exact[3] = {ratios.train * n, ratios.val * n, ratios.test * n};
    std::size_t counts[3];
    double rem[3];
    std::size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
        counts[k] = static_cast<std::size_t>(exact[k]);
        rem[k] = exact[k] - static_cast<double>(counts[k]);
        assigned += counts[k];
    }
    while (assigned < n) {
        int best = 0;
        for (int k = 1; k < 3; ++k) {
            if (rem[k] > rem[best]) best = k;
        }
        ++counts[best];
        rem[best] = -1.0;
        ++assigned;
    }

    Split result;
    std::size_t at = 0;
    for (std::size_t i = 0; i < counts[0]; ++i) result.train.push_back(order[at++]);
    for (std::size_t i = 0; i < counts[1]; ++i) result.val.push_back(order[at++]);
    for (std::size_t i = 0; i < counts[2]; ++i) result.test.push_back(order[at++]);
    return result;
}

} // namespace data
} // namespace drugrec
