#include "drugrec/model.hpp"

#include <algorithm>
#include <set>

#include "drugrec/error.hpp"

namespace drugrec {

void ModelConfig::validate() const {
    if (dim < 1) throw ValueError("model: dim must be >= 1");
    if (mpnn_layers < 1) throw ValueError("model: mpnn_layers must be >= 1");
    if (threshold <= 0.0 || threshold >= 1.0) {
        throw ValueError("model: threshold " + std::to_string(threshold) +
                         " outside (0, 1)");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        throw ValueError("model: dropout " + std::to_string(dropout) + " outside [0, 1)");
    }
    if (n_diag == 0 || n_drugs == 0 || n_substructures == 0 || n_atom_types == 0) {
        throw ValueError("model: vocabulary sizes must be bound before use");
    }
}

Model::Model(ModelConfig cfg, const std::vector<chem::DrugEntry>& drugs,
             chem::MaskMatrix mask, std::optional<std::vector<std::string>> atom_vocab)
    : cfg_(cfg), mask_(std::move(mask)) {
    if (drugs.size() != mask_.drugs.size()) {
        throw ShapeError("model: " + std::to_string(drugs.size()) + " drugs vs mask with " +
                         std::to_string(mask_.drugs.size()) + " columns");
    }

    // Parse every molecule once; the graphs are static for the model's life.
    std::vector<std::vector<chem::MoleculeGraph>> parsed(drugs.size());
    std::set<std::string> elements;
    for (std::size_t j = 0; j < drugs.size(); ++j) {
        if (drugs[j].smiles.empty()) {
            throw ValueError("model: drug " + drugs[j].id + " has no SMILES");
        }
        for (const std::string& s : drugs[j].smiles) {
            parsed[j].push_back(chem::parse_smiles(s));
            for (const chem::Atom& a : parsed[j].back().atoms) elements.insert(a.element);
        }
    }

    if (atom_vocab) {
        atom_vocab_ = std::move(*atom_vocab);
    } else {
        atom_vocab_.assign(elements.begin(), elements.end());
    }
    auto row_of = [&](const std::string& element, const std::string& drug_id) {
        auto it = std::find(atom_vocab_.begin(), atom_vocab_.end(), element);
        if (it == atom_vocab_.end()) {
            throw UnknownAtomError("unknown atom '" + element + "' in drug " + drug_id);
        }
        return static_cast<std::uint32_t>(it - atom_vocab_.begin());
    };

    drug_molecules_.resize(drugs.size());
    for (std::size_t j = 0; j < drugs.size(); ++j) {
        for (const chem::MoleculeGraph& mol : parsed[j]) {
            MoleculeData md;
            md.atom_rows.reserve(mol.atoms.size());
            for (const chem::Atom& a : mol.atoms) md.atom_rows.push_back(row_of(a.element, drugs[j].id));
            md.neighbors = mol.neighbor_lists();
            drug_molecules_[j].push_back(std::move(md));
        }
    }

    cfg_.n_drugs = drugs.size();
    cfg_.n_substructures = mask_.substructures.size();
    cfg_.n_atom_types = atom_vocab_.size();
    cfg_.validate();

    dense_ones_ = ByteMatrix(cfg_.n_substructures, cfg_.n_drugs, 1);

    std::size_t dim = cfg_.dim;
    params_.add("embed.diag", Tensor::zeros({cfg_.n_diag, dim}));
    params_.add("embed.proc", Tensor::zeros({cfg_.n_proc, dim}));
    params_.add("embed.atom", Tensor::zeros({cfg_.n_atom_types, dim}));
    for (const char* rnn : {"gru_d", "gru_p"}) {
        for (const char* gate : {"update", "reset", "cand"}) {
            params_.add(std::string(rnn) + ".w_" + gate, Tensor::zeros({dim, dim}));
            params_.add(std::string(rnn) + ".u_" + gate, Tensor::zeros({dim, dim}));
            params_.add(std::string(rnn) + ".b_" + gate, Tensor::zeros({dim}));
        }
    }
    params_.add("patient.w1", Tensor::zeros({dim, 2 * dim}));
    params_.add("patient.b1", Tensor::zeros({dim}));
    for (std::size_t l = 0; l < cfg_.mpnn_layers; ++l) {
        std::string prefix = "mpnn.l" + std::to_string(l);
        params_.add(prefix + ".w_self", Tensor::zeros({dim, dim}));
        params_.add(prefix + ".w_nbr", Tensor::zeros({dim, dim}));
        params_.add(prefix + ".bias", Tensor::zeros({dim}));
    }
    params_.add("match.w2", Tensor::zeros({cfg_.n_drugs, cfg_.n_drugs}));
    params_.add("match.b2", Tensor::zeros({cfg_.n_drugs}));
    params_.add("match.ln_gain", Tensor::zeros({cfg_.n_drugs}));
    params_.add("match.ln_bias", Tensor::zeros({cfg_.n_drugs}));
    params_.add("local.w3", Tensor::zeros({cfg_.n_substructures, dim}));
    params_.add("local.b3", Tensor::zeros({cfg_.n_substructures}));
    params_.add("local.w4", Tensor::zeros({cfg_.n_substructures, cfg_.n_drugs}));
}

std::size_t Model::mask_nnz() const { return mask_.entries.nnz(); }

std::size_t Model::effective_parameter_count() const {
    std::size_t total = params_.count_scalars();
    if (!cfg_.use_mask) return total;
    std::size_t w4 = params_.get("local.w4").numel();
    return total - (w4 - mask_nnz());
}

ParamRefs Model::bind(ad::Tape& tape, bool trainable) const {
    ParamRefs r;
    auto bind_one = [&](const std::string& name) {
        ad::Value v = tape.leaf(params_.get(name), trainable);
        r.named.push_back({name, v});
        return v;
    };
    r.embed_diag = bind_one("embed.diag");
    r.embed_proc = bind_one("embed.proc");
    r.embed_atom = bind_one("embed.atom");
    auto bind_gru = [&](const std::string& prefix) {
        ad::GruParamRefs g;
        g.w_update = bind_one(prefix + ".w_update");
        g.u_update = bind_one(prefix + ".u_update");
        g.b_update = bind_one(prefix + ".b_update");
        g.w_reset = bind_one(prefix + ".w_reset");
        g.u_reset = bind_one(prefix + ".u_reset");
        g.b_reset = bind_one(prefix + ".b_reset");
        g.w_cand = bind_one(prefix + ".w_cand");
        g.u_cand = bind_one(prefix + ".u_cand");
        g.b_cand = bind_one(prefix + ".b_cand");
        return g;
    };
    r.gru_diag = bind_gru("gru_d");
    r.gru_proc = bind_gru("gru_p");
    r.w_patient = bind_one("patient.w1");
    r.b_patient = bind_one("patient.b1");
    for (std::size_t l = 0; l < cfg_.mpnn_layers; ++l) {
        std::string prefix = "mpnn.l" + std::to_string(l);
        r.mpnn_self.push_back(bind_one(prefix + ".w_self"));
        r.mpnn_nbr.push_back(bind_one(prefix + ".w_nbr"));
        r.mpnn_bias.push_back(bind_one(prefix + ".bias"));
    }
    r.w_match = bind_one("match.w2");
    r.b_match = bind_one("match.b2");
    r.ln_gain = bind_one("match.ln_gain");
    r.ln_bias = bind_one("match.ln_bias");
    r.w_func = bind_one("local.w3");
    r.b_func = bind_one("local.b3");
    r.w_local = bind_one("local.w4");
    return r;
}

ad::Value Model::molecule_readout(ad::Tape& tape, const ParamRefs& p,
                                  const std::vector<std::uint32_t>& atom_rows,
                                  const ad::NeighborLists* neighbors) const {
    ad::Value y = tape.rows_lookup(p.embed_atom, atom_rows);
    for (std::size_t l = 0; l < cfg_.mpnn_layers; ++l) {
        // message(i<-j) = relu(W_self y_i + W_nbr y_j + b), summed over
        // neighbors; update = two-point mean with the old state
        ad::Value self_part = tape.matmul_nt(y, p.mpnn_self[l]);
        ad::Value nbr_part = tape.matmul_nt(y, p.mpnn_nbr[l]);
        ad::Value msgs =
            tape.neighbor_message_sum(self_part, nbr_part, p.mpnn_bias[l], neighbors);
        y = tape.scale(tape.add(y, msgs), 0.5);
    }
    return tape.mean_pool(y);
}

ad::Value Model::drug_memory(ad::Tape& tape, const ParamRefs& p) const {
    std::vector<ad::Value> rows;
    rows.reserve(drug_molecules_.size());
    for (const auto& molecules : drug_molecules_) {
        std::vector<ad::Value> readouts;
        readouts.reserve(molecules.size());
        for (const MoleculeData& mol : molecules) {
            readouts.push_back(molecule_readout(tape, p, mol.atom_rows, &mol.neighbors));
        }
        // several molecules under one drug code: average their embeddings
        rows.push_back(readouts.size() == 1 ? readouts[0]
                                            : tape.mean_pool(tape.stack_rows(readouts)));
    }
    return tape.stack_rows(rows);
}

PatientState Model::initial_state(ad::Tape& tape) const {
    return PatientState{tape.constant(Tensor::zeros({cfg_.dim})),
                        tape.constant(Tensor::zeros({cfg_.dim}))};
}

ad::Value Model::encode_visit(ad::Tape& tape, const ParamRefs& p, const BitVec& diag,
                              const BitVec& proc, PatientState& state, bool training,
                              Rng& dropout_rng) const {
    ad::Value d_e = tape.embedding_lookup(p.embed_diag, diag);
    ad::Value p_e = tape.embedding_lookup(p.embed_proc, proc);
    d_e = tape.dropout(d_e, cfg_.dropout, training, dropout_rng);
    p_e = tape.dropout(p_e, cfg_.dropout, training, dropout_rng);
    state.diag_hidden = ad::gru_cell(tape, d_e, state.diag_hidden, p.gru_diag);
    state.proc_hidden = ad::gru_cell(tape, p_e, state.proc_hidden, p.gru_proc);
    ad::Value joint = tape.concat(state.diag_hidden, state.proc_hidden);
    return tape.relu(tape.add(tape.matmul(p.w_patient, joint), p.b_patient));
}

std::pair<ad::Value, ad::Value> Model::match_global(ad::Tape& tape, const ParamRefs& p,
                                                    ad::Value patient,
                                                    ad::Value memory) const {
    ad::Value matching = tape.sigmoid(tape.matmul(memory, patient));
    ad::Value refined = tape.add(tape.matmul(p.w_match, matching), p.b_match);
    ad::Value global =
        tape.layer_norm(tape.add(matching, refined), p.ln_gain, p.ln_bias);
    return {matching, global};
}

std::pair<ad::Value, ad::Value> Model::encode_local(ad::Tape& tape, const ParamRefs& p,
                                                    ad::Value patient) const {
    ad::Value functional =
        tape.sigmoid(tape.add(tape.matmul(p.w_func, patient), p.b_func));
    const ByteMatrix* mask = cfg_.use_mask ? &mask_.entries : &dense_ones_;
    ad::Value local = tape.masked_linear(functional, p.w_local, mask);
    return {functional, local};
}

ad::Value Model::combine_scores(ad::Tape& tape, ad::Value global, ad::Value local) const {
    return tape.sigmoid(tape.mul(global, local));
}

BitVec Model::threshold(const Tensor& scores) const {
    BitVec out(scores.numel(), 0);
    for (std::size_t i = 0; i < scores.numel(); ++i) {
        out[i] = scores[i] > cfg_.threshold ? 1 : 0; // strict: ties recommend nothing
    }
    return out;
}

ForwardTrace Model::forward_visit(ad::Tape& tape, const ParamRefs& p, const BitVec& diag,
                                  const BitVec& proc, PatientState& state,
                                  ad::Value memory, bool training,
                                  Rng& dropout_rng) const {
    ForwardTrace trace;
    trace.patient = encode_visit(tape, p, diag, proc, state, training, dropout_rng);
    auto [matching, global] = match_global(tape, p, trace.patient, memory);
    trace.matching = matching;
    trace.global = global;
    auto [functional, local] = encode_local(tape, p, trace.patient);
    trace.functional = functional;
    trace.local = local;
    trace.scores = combine_scores(tape, global, local);
    trace.recommended = threshold(tape.val(trace.scores));
    return trace;
}

} // namespace drugrec
