#ifndef DRUGREC_CHEM_HPP
#define DRUGREC_CHEM_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "drugrec/error.hpp"
#include "drugrec/tensor.hpp"

namespace drugrec {
namespace chem {

/// SMILES rejected by the grammar. offset() is the byte position of the
/// offending token within the input string.
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& what, std::size_t offset)
        : Error(what + " (byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Grammar understood but feature deliberately outside scope (e.g. the
/// '.' component separator).
class UnsupportedFeature : public Error {
public:
    UnsupportedFeature(const std::string& what, std::size_t offset)
        : Error(what + " (byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

enum class BondOrder : std::uint8_t { Single, Double, Triple, Aromatic };

char bond_symbol(BondOrder order);

struct Atom {
    std::string element; // symbol from the supported set
    bool aromatic = false;
    std::uint32_t index = 0;
};

struct Bond {
    std::uint32_t from = 0;
    std::uint32_t to = 0;
    BondOrder order = BondOrder::Single;
    bool in_ring = false;
};

struct MoleculeGraph {
    std::vector<Atom> atoms;
    std::vector<Bond> bonds;
    ByteMatrix adjacency;      // symmetric, zero diagonal
    bool stereo_ignored = false; // '/', '\', '@' were seen and dropped

    std::size_t size() const { return atoms.size(); }
    bool atom_in_ring(std::uint32_t idx) const;
    std::vector<std::vector<std::uint32_t>> neighbor_lists() const;
};

/// True if the symbol is in the supported element set.
bool element_supported(const std::string& symbol);

/// Parses one connected SMILES component. Grammar: organic-subset and
/// bracket atoms, bonds - = # :, branches, ring closures (incl. %nn),
/// charges in brackets. Stereo markers are accepted and dropped with
/// stereo_ignored set. Implicit hydrogens never become atoms.
MoleculeGraph parse_smiles(const std::string& smiles);

struct Substructure {
    std::string canonical_key;
    std::size_t atom_count = 0;
};

/// Which acyclic single bonds get cut. The default table covers the two
/// highest-yield bond classes; full third-party fragmentation can be
/// slotted in upstream via precomputed keys on DrugEntry.
struct FragmentationRules {
    bool cut_heteroatom_bonds = true;   // >= 1 endpoint in heteroatoms
    bool cut_ring_attachments = true;   // ring atom bonded to non-ring atom
    std::vector<std::string> heteroatoms = {"N", "O", "S"};
};

/// Atom index sets of the connected components left after cutting.
std::vector<std::vector<std::uint32_t>> fragment_components(
    const MoleculeGraph& mol, const FragmentationRules& rules);

/// Fragments of mol under the rule set, sorted by canonical key. A
/// molecule with no cuttable bond yields itself as the single fragment.
std::vector<Substructure> fragment(const MoleculeGraph& mol,
                                   const FragmentationRules& rules = {});

/// Key for the induced subgraph on the given atoms: iterative
/// neighborhood-refinement colors, then a DFS emission from the minimal
/// color. Stable under input reordering except across automorphic ties.
std::string canonical_key(const MoleculeGraph& mol,
                          const std::vector<std::uint32_t>& atom_subset);

struct DrugEntry {
    std::string id;
    std::vector<std::string> smiles;        // one or more molecules
    std::vector<std::string> fragment_keys; // optional, bypasses fragmentation
};

struct MaskMatrix {
    ByteMatrix entries; // |S| x |M|
    std::vector<std::string> substructures; // row -> key, sorted
    std::vector<std::string> drugs;         // column -> drug id, input order
    std::map<std::string, std::size_t> substructure_index;
    std::map<std::string, std::size_t> drug_index;
};

/// Substructure/drug incidence over the union of all fragment keys.
/// Rows are sorted keys, columns follow input order; output is
/// byte-for-byte deterministic. Parse failures carry the drug id.
MaskMatrix build_mask(const std::vector<DrugEntry>& drugs,
                      const FragmentationRules& rules = {});

void write_mask_json(const MaskMatrix& mask, std::ostream& out);

/// Tab-separated vocabulary: drug_id <TAB> smiles [<TAB> key;key;...].
/// '#' lines are comments. Repeated ids merge into one entry (union of
/// molecules and keys).
std::vector<DrugEntry> load_drug_vocab(std::istream& in);
void save_drug_vocab(const std::vector<DrugEntry>& drugs, std::ostream& out);

} // namespace chem
} // namespace drugrec

#endif
