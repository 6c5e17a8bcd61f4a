#ifndef DRUGREC_DATA_HPP
#define DRUGREC_DATA_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "drugrec/chem.hpp"
#include "drugrec/tensor.hpp"

namespace drugrec {
namespace data {

struct Visit {
    std::vector<std::uint32_t> diagnoses;  // sorted, unique
    std::vector<std::uint32_t> procedures; // sorted, unique
    std::vector<std::uint32_t> medications; // sorted, unique
};

struct PatientRecord {
    std::string patient_id;
    std::vector<Visit> visits; // always >= 2
};

struct Cohort {
    std::size_t n_diag = 0;
    std::size_t n_proc = 0;
    std::vector<chem::DrugEntry> drugs;
    std::vector<PatientRecord> patients;
    ByteMatrix ddi; // |M| x |M|, symmetric, zero diagonal
    chem::MaskMatrix mask;
    std::string mask_provenance; // rule table or "external-keys"

    std::size_t n_drugs() const { return drugs.size(); }
    std::size_t total_visits() const;
    void validate() const;
};

/// Knobs of the synthetic generator. Latent condition clusters each prefer
/// a drug subset anchored on a shared fragment key, so the bipartite
/// encoder has actual signal; interaction pairs are planted both inside
/// and across the preferred subsets, then trimmed/extended until the
/// ground-truth interaction rate lands in [ddi_rate_lo, ddi_rate_hi].
struct SyntheticSpec {
    std::size_t patients = 200;
    std::size_t drugs = 20;
    std::size_t diag_codes = 40;
    std::size_t proc_codes = 24;
    std::size_t clusters = 6;
    double mean_visits = 2.37; // truncated-geometric target, >= 2
    std::size_t max_visits = 29;
    double med_keep_prob = 0.9;   // preferred drug kept in a visit
    double med_noise_prob = 0.04; // per non-preferred drug
    double diag_noise_prob = 0.05;
    double ddi_rate_lo = 0.05;
    double ddi_rate_hi = 0.12;

    void validate() const;
};

Cohort generate_cohort(const SyntheticSpec& spec, std::uint64_t seed);

/// Ground-truth interaction rate of the cohort's own prescriptions.
double cohort_ddi_rate(const Cohort& cohort);

struct SplitRatios {
    double train = 2.0 / 3.0;
    double val = 1.0 / 6.0;
    double test = 1.0 / 6.0;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Patient-level disjoint split after a seeded shuffle. Sizes land within
/// one patient of the exact ratios (largest-remainder rounding).
Split split(const Cohort& cohort, const SplitRatios& ratios, std::uint64_t seed);

// Cohort file: JSON Lines, header object first, one patient per line,
// UTF-8, LF. Saving is canonical (same cohort -> same bytes).
void save_cohort(const Cohort& cohort, std::ostream& out);
Cohort load_cohort(std::istream& in);
void save_cohort_file(const Cohort& cohort, const std::string& path);
Cohort load_cohort_file(const std::string& path);

/// Edge list `a<TAB>b`, one pair per line; symmetrized regardless of
/// orientation, duplicates idempotent.
ByteMatrix load_ddi_edges(std::istream& in, std::size_t n_drugs);
void save_ddi_edges(const ByteMatrix& ddi, std::ostream& out);

/// Bundled small-molecule corpus (name, SMILES) backing the generator.
const std::vector<std::pair<std::string, std::string>>& builtin_smiles();

BitVec to_multihot(const std::vector<std::uint32_t>& ids, std::size_t size);

} // namespace data
} // namespace drugrec

#endif
