#include "drugrec/chem.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <map>
#include <set>

namespace drugrec {
namespace chem {

namespace {

// Organic subset, readable without brackets.
const std::set<std::string> kOrganicSubset = {"B", "C", "N", "O", "P",
                                              "S", "F", "Cl", "Br", "I"};
const std::set<std::string> kAromaticOrganic = {"b", "c", "n", "o", "p", "s"};

// Everything else needs brackets. Covers the bundled corpus plus common
// salts and metals.
const std::set<std::string> kBracketOnly = {
    "H",  "Na", "K",  "Li", "Ca", "Mg", "Zn", "Fe", "Se", "Si",
    "As", "Pt", "Mn", "Cu", "Co", "Ni", "Al", "Au", "Ag", "Ba"};

const std::set<std::string> kAromaticBracket = {"b", "c", "n", "o", "p", "s", "se", "as"};

std::string capitalize(const std::string& s) {
    std::string r = s;
    if (!r.empty()) r[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(r[0])));
    return r;
}

struct PendingBond {
    bool set = false;
    BondOrder order = BondOrder::Single;
    bool stereo = false; // came from '/' or '\'
};

struct RingOpen {
    std::uint32_t atom;
    PendingBond bond;
    std::size_t offset;
};

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    MoleculeGraph run() {
        if (s_.empty()) throw SyntaxError("empty SMILES", 0);
        while (pos_ < s_.size()) {
            step();
        }
        finish();
        return build();
    }

private:
    void step() {
        char c = s_[pos_];
        switch (c) {
        case '(': {
            if (prev_ < 0) throw SyntaxError("branch before first atom", pos_);
            if (pending_.set) throw SyntaxError("bond before branch open", pos_);
            branch_stack_.push_back({prev_, pos_});
            ++pos_;
            return;
        }
        case ')': {
            if (branch_stack_.empty()) throw SyntaxError("unbalanced ')'", pos_);
            if (pending_.set) throw SyntaxError("dangling bond before ')'", pos_);
            prev_ = branch_stack_.back().first;
            branch_stack_.pop_back();
            ++pos_;
            return;
        }
        case '-': set_bond(BondOrder::Single, false); return;
        case '=': set_bond(BondOrder::Double, false); return;
        case '#': set_bond(BondOrder::Triple, false); return;
        case ':': set_bond(BondOrder::Aromatic, false); return;
        case '/':
        case '\\': set_bond(BondOrder::Single, true); return;
        case '.': throw UnsupportedFeature("multi-component SMILES ('.')", pos_);
        case '%': {
            if (pos_ + 2 >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])) ||
                !std::isdigit(static_cast<unsigned char>(s_[pos_ + 2]))) {
                throw SyntaxError("'%' needs two digits", pos_);
            }
            int num = (s_[pos_ + 1] - '0') * 10 + (s_[pos_ + 2] - '0');
            ring_closure(num, pos_);
            pos_ += 3;
            return;
        }
        case '[': parse_bracket_atom(); return;
        default: break;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            ring_closure(c - '0', pos_);
            ++pos_;
            return;
        }
        parse_organic_atom();
    }

    void set_bond(BondOrder order, bool stereo) {
        if (pending_.set) throw SyntaxError("two bond symbols in a row", pos_);
        if (prev_ < 0) throw SyntaxError("bond before first atom", pos_);
        pending_ = {true, order, stereo};
        if (stereo) stereo_seen_ = true;
        ++pos_;
    }

    void parse_organic_atom() {
        std::size_t at = pos_;
        char c = s_[pos_];
        // two-letter symbols first
        if (pos_ + 1 < s_.size()) {
            std::string two = s_.substr(pos_, 2);
            if (two == "Cl" || two == "Br") {
                pos_ += 2;
                add_atom(two, false, at);
                return;
            }
        }
        std::string one(1, c);
        if (kOrganicSubset.count(one)) {
            ++pos_;
            add_atom(one, false, at);
            return;
        }
        if (kAromaticOrganic.count(one)) {
            ++pos_;
            add_atom(capitalize(one), true, at);
            return;
        }
        throw SyntaxError(std::string("unexpected character '") + c + "'", pos_);
    }

    void parse_bracket_atom() {
        std::size_t open = pos_;
        ++pos_; // '['
        // isotope (ignored)
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (pos_ >= s_.size()) throw SyntaxError("unterminated bracket atom", open);

        std::string symbol;
        bool aromatic = false;
        char c = s_[pos_];
        if (std::isupper(static_cast<unsigned char>(c))) {
            symbol.push_back(c);
            ++pos_;
            if (pos_ < s_.size() && std::islower(static_cast<unsigned char>(s_[pos_]))) {
                std::string two = symbol + s_[pos_];
                if (element_supported(two)) {
                    symbol = two;
                    ++pos_;
                }
            }
        } else if (std::islower(static_cast<unsigned char>(c))) {
            symbol.push_back(c);
            ++pos_;
            if (pos_ < s_.size() && std::islower(static_cast<unsigned char>(s_[pos_]))) {
                std::string two = symbol + s_[pos_];
                if (kAromaticBracket.count(two)) {
                    symbol = two;
                    ++pos_;
                }
            }
            if (!kAromaticBracket.count(symbol)) {
                throw SyntaxError("unknown aromatic element '" + symbol + "'", open);
            }
            aromatic = true;
            symbol = capitalize(symbol);
        } else {
            throw SyntaxError("expected element symbol in brackets", pos_);
        }

        if (!element_supported(symbol)) {
            throw SyntaxError("unknown element '" + symbol + "'", open);
        }

        // chirality, hydrogen count, charge, atom class: validated, dropped
        while (pos_ < s_.size() && s_[pos_] != ']') {
            char t = s_[pos_];
            if (t == '@') {
                stereo_seen_ = true;
                ++pos_;
                if (pos_ < s_.size() && s_[pos_] == '@') ++pos_;
            } else if (t == 'H') {
                ++pos_;
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            } else if (t == '+' || t == '-') {
                char sign = t;
                ++pos_;
                if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
                } else {
                    while (pos_ < s_.size() && s_[pos_] == sign) ++pos_;
                }
            } else if (t == ':') {
                ++pos_;
                if (pos_ >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                    throw SyntaxError("atom class needs digits", pos_);
                }
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            } else {
                throw SyntaxError(std::string("unexpected '") + t + "' in bracket atom", pos_);
            }
        }
        if (pos_ >= s_.size()) throw SyntaxError("unterminated bracket atom", open);
        ++pos_; // ']'
        add_atom(symbol, aromatic, open);
    }

    void add_atom(const std::string& symbol, bool aromatic, std::size_t offset) {
        std::uint32_t idx = static_cast<std::uint32_t>(atoms_.size());
        atoms_.push_back(Atom{symbol, aromatic, idx});
        if (prev_ >= 0) {
            add_bond(static_cast<std::uint32_t>(prev_), idx,
                     take_pending(aromatic_pair(prev_, idx)), offset);
        } else if (pending_.set) {
            throw SyntaxError("bond with no preceding atom", offset);
        }
        prev_ = static_cast<int>(idx);
    }

    bool aromatic_pair(int a, std::uint32_t b) const {
        return atoms_[static_cast<std::size_t>(a)].aromatic && atoms_[b].aromatic;
    }

    BondOrder take_pending(bool both_aromatic) {
        if (pending_.set) {
            BondOrder o = pending_.order;
            pending_ = {};
            return o;
        }
        return both_aromatic ? BondOrder::Aromatic : BondOrder::Single;
    }

    void ring_closure(int num, std::size_t offset) {
        if (prev_ < 0) throw SyntaxError("ring closure before first atom", offset);
        auto it = ring_open_.find(num);
        if (it == ring_open_.end()) {
            ring_open_.emplace(num, RingOpen{static_cast<std::uint32_t>(prev_), pending_, offset});
            pending_ = {};
            return;
        }
        RingOpen open = it->second;
        ring_open_.erase(it);
        std::uint32_t a = open.atom;
        std::uint32_t b = static_cast<std::uint32_t>(prev_);
        if (a == b) throw SyntaxError("ring closure to the same atom", offset);
        BondOrder order;
        bool open_set = open.bond.set && !open.bond.stereo;
        bool close_set = pending_.set && !pending_.stereo;
        if (open_set && close_set && open.bond.order != pending_.order) {
            throw SyntaxError("conflicting ring closure bond orders", offset);
        }
        if (open_set) {
            order = open.bond.order;
        } else if (close_set) {
            order = pending_.order;
        } else {
            order = aromatic_pair(static_cast<int>(a), b) ? BondOrder::Aromatic
                                                          : BondOrder::Single;
        }
        pending_ = {};
        add_bond(a, b, order, offset);
    }

    void add_bond(std::uint32_t a, std::uint32_t b, BondOrder order,
                  std::size_t offset = std::string::npos) {
        for (const Bond& bond : bonds_) {
            if ((bond.from == a && bond.to == b) || (bond.from == b && bond.to == a)) {
                throw SyntaxError("duplicate bond between atoms",
                                  offset == std::string::npos ? pos_ : offset);
            }
        }
        bonds_.push_back(Bond{a, b, order, false});
    }

    void finish() {
        if (!branch_stack_.empty()) {
            throw SyntaxError("unbalanced '('", branch_stack_.back().second);
        }
        if (!ring_open_.empty()) {
            throw SyntaxError("unmatched ring closure", ring_open_.begin()->second.offset);
        }
        if (pending_.set) throw SyntaxError("trailing bond symbol", s_.size() - 1);
    }

    MoleculeGraph build() {
        MoleculeGraph mol;
        mol.atoms = std::move(atoms_);
        mol.bonds = std::move(bonds_);
        mol.stereo_ignored = stereo_seen_;
        std::size_t n = mol.atoms.size();
        mol.adjacency = ByteMatrix(n, n);
        for (const Bond& b : mol.bonds) {
            mol.adjacency.at(b.from, b.to) = 1;
            mol.adjacency.at(b.to, b.from) = 1;
        }
        mark_ring_bonds(mol);
        return mol;
    }

    // A bond is in a ring iff it is not a bridge.
    static void mark_ring_bonds(MoleculeGraph& mol) {
        std::size_t n = mol.atoms.size();
        std::vector<std::vector<std::pair<std::uint32_t, std::size_t>>> adj(n);
        for (std::size_t e = 0; e < mol.bonds.size(); ++e) {
            adj[mol.bonds[e].from].push_back({mol.bonds[e].to, e});
            adj[mol.bonds[e].to].push_back({mol.bonds[e].from, e});
        }
        std::vector<int> disc(n, -1), low(n, 0);
        int timer = 0;
        std::function<void(std::uint32_t, std::size_t)> dfs =
            [&](std::uint32_t u, std::size_t parent_edge) {
                disc[u] = low[u] = timer++;
                for (auto [v, e] : adj[u]) {
                    if (e == parent_edge) continue;
                    if (disc[v] == -1) {
                        dfs(v, e);
                        low[u] = std::min(low[u], low[v]);
                        if (low[v] > disc[u]) {
                            // bridge: stays acyclic
                        } else {
                            mol.bonds[e].in_ring = true;
                        }
                    } else {
                        low[u] = std::min(low[u], disc[v]);
                        if (disc[v] < disc[u]) mol.bonds[e].in_ring = true;
                    }
                }
            };
        for (std::uint32_t u = 0; u < n; ++u) {
            if (disc[u] == -1) dfs(u, static_cast<std::size_t>(-1));
        }
    }

    const std::string& s_;
    std::size_t pos_ = 0;
    int prev_ = -1;
    PendingBond pending_;
    bool stereo_seen_ = false;
    std::vector<Atom> atoms_;
    std::vector<Bond> bonds_;
    std::vector<std::pair<int, std::size_t>> branch_stack_;
    std::map<int, RingOpen> ring_open_;
};

} // namespace

char bond_symbol(BondOrder order) {
    switch (order) {
    case BondOrder::Single: return '-';
    case BondOrder::Double: return '=';
    case BondOrder::Triple: return '#';
    case BondOrder::Aromatic: return ':';
    }
    return '?';
}

bool element_supported(const std::string& symbol) {
    return kOrganicSubset.count(symbol) != 0 || kBracketOnly.count(symbol) != 0;
}

bool MoleculeGraph::atom_in_ring(std::uint32_t idx) const {
    for (const Bond& b : bonds) {
        if (b.in_ring && (b.from == idx || b.to == idx)) return true;
    }
    return false;
}

std::vector<std::vector<std::uint32_t>> MoleculeGraph::neighbor_lists() const {
    std::vector<std::vector<std::uint32_t>> nbr(atoms.size());
    for (const Bond& b : bonds) {
        nbr[b.from].push_back(b.to);
        nbr[b.to].push_back(b.from);
    }
    for (auto& row : nbr) std::sort(row.begin(), row.end());
    return nbr;
}

MoleculeGraph parse_smiles(const std::string& smiles) {
    return Parser(smiles).run();
}

} // namespace chem
} // namespace drugrec
