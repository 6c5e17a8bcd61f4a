#ifndef DRUGREC_MODEL_HPP
#define DRUGREC_MODEL_HPP

#include <optional>
#include <string>
#include <vector>

#include "drugrec/chem.hpp"
#include "drugrec/optim.hpp"
#include "drugrec/tape.hpp"
#include "drugrec/tensor.hpp"

namespace drugrec {

struct ModelConfig {
    std::size_t dim = 64;         // embedding width
    std::size_t mpnn_layers = 2;  // message-passing radius
    double threshold = 0.5;       // recommendation cutoff on scores
    double dropout = 0.5;         // on code embeddings before the GRUs
    bool use_mask = true;         // ablation switch: dense local layer when off

    std::size_t n_diag = 0;
    std::size_t n_proc = 0;
    std::size_t n_drugs = 0;
    std::size_t n_substructures = 0;
    std::size_t n_atom_types = 0;

    void validate() const;
};

/// Per-tape handles for every parameter tensor plus the derived GRU views.
struct ParamRefs {
    ad::Value embed_diag, embed_proc, embed_atom;
    ad::GruParamRefs gru_diag, gru_proc;
    ad::Value w_patient, b_patient;
    std::vector<ad::Value> mpnn_self, mpnn_nbr, mpnn_bias;
    ad::Value w_match, b_match, ln_gain, ln_bias;
    ad::Value w_func, b_func;
    ad::Value w_local;
    std::vector<std::pair<std::string, ad::Value>> named; // for gradient harvest
};

/// Hidden GRU state carried across one patient's visits.
struct PatientState {
    ad::Value diag_hidden;
    ad::Value proc_hidden;
};

struct ForwardTrace {
    ad::Value patient;   // h
    ad::Value matching;  // m_r
    ad::Value global;    // m_g
    ad::Value functional; // m_f
    ad::Value local;     // m_l
    ad::Value scores;    // o_hat, sigmoid output
    BitVec recommended;  // scores > threshold
};

/// The recommendation model: longitudinal patient encoder, shared
/// molecule message-passing encoder, masked bipartite encoder, and the
/// elementwise score head. Parameters live here; computation graphs are
/// built per call on a caller-owned tape.
class Model {
public:
    /// Molecules are parsed from the drug entries; every drug needs at
    /// least one SMILES. When atom_vocab is supplied (checkpoint restore),
    /// any element outside it raises UnknownAtomError.
    Model(ModelConfig cfg, const std::vector<chem::DrugEntry>& drugs,
          chem::MaskMatrix mask,
          std::optional<std::vector<std::string>> atom_vocab = std::nullopt);

    void init_params(Rng& rng) { params_.init_uniform(rng); }

    ModelConfig& config() { return cfg_; }
    const ModelConfig& config() const { return cfg_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    const chem::MaskMatrix& mask() const { return mask_; }
    const std::vector<std::string>& atom_vocab() const { return atom_vocab_; }

    std::size_t mask_nnz() const;
    /// Scalar count with masked local-layer entries excluded.
    std::size_t effective_parameter_count() const;

    ParamRefs bind(ad::Tape& tape, bool trainable = true) const;

    /// Message-passing embedding of one molecule given its atom embedding
    /// rows and neighbor lists; the readout is the mean over atom states.
    ad::Value molecule_readout(ad::Tape& tape, const ParamRefs& p,
                               const std::vector<std::uint32_t>& atom_rows,
                               const ad::NeighborLists* neighbors) const;

    /// Stacks the shared-encoder embedding of every drug into |M| x dim.
    ad::Value drug_memory(ad::Tape& tape, const ParamRefs& p) const;

    PatientState initial_state(ad::Tape& tape) const;

    /// One visit of the longitudinal encoder; updates state in place.
    ad::Value encode_visit(ad::Tape& tape, const ParamRefs& p, const BitVec& diag,
                           const BitVec& proc, PatientState& state, bool training,
                           Rng& dropout_rng) const;

    /// m_r and m_g from the patient query against the drug memory.
    std::pair<ad::Value, ad::Value> match_global(ad::Tape& tape, const ParamRefs& p,
                                                 ad::Value patient,
                                                 ad::Value memory) const;

    /// m_f and m_l through the (optionally dense) bipartite layer.
    std::pair<ad::Value, ad::Value> encode_local(ad::Tape& tape, const ParamRefs& p,
                                                 ad::Value patient) const;

    ad::Value combine_scores(ad::Tape& tape, ad::Value global, ad::Value local) const;

    BitVec threshold(const Tensor& scores) const;

    ForwardTrace forward_visit(ad::Tape& tape, const ParamRefs& p, const BitVec& diag,
                               const BitVec& proc, PatientState& state,
                               ad::Value memory, bool training, Rng& dropout_rng) const;

private:
    struct MoleculeData {
        std::vector<std::uint32_t> atom_rows; // into the atom embedding table
        ad::NeighborLists neighbors;
    };

    ModelConfig cfg_;
    chem::MaskMatrix mask_;
    ByteMatrix dense_ones_; // stand-in mask for the ablation variant
    std::vector<std::vector<MoleculeData>> drug_molecules_;
    std::vector<std::string> atom_vocab_;
    ParameterStore params_;
};

} // namespace drugrec

#endif
