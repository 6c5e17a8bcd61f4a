#include "drugrec/chem.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <functional>
#include <map>
#include <tuple>

namespace drugrec {
namespace chem {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

std::uint64_t hash_str(const std::string& s, std::uint64_t seed) {
    std::uint64_t h = seed ^ 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return mix64(h);
}

bool matches_rules(const MoleculeGraph& mol, const Bond& bond,
                   const FragmentationRules& rules) {
    if (bond.order != BondOrder::Single || bond.in_ring) return false;
    const std::string& ea = mol.atoms[bond.from].element;
    const std::string& eb = mol.atoms[bond.to].element;
    if (rules.cut_heteroatom_bonds) {
        auto is_hetero = [&](const std::string& e) {
            return std::find(rules.heteroatoms.begin(), rules.heteroatoms.end(), e) !=
                   rules.heteroatoms.end();
        };
        if (is_hetero(ea) || is_hetero(eb)) return true;
    }
    if (rules.cut_ring_attachments) {
        bool ra = mol.atom_in_ring(bond.from);
        bool rb = mol.atom_in_ring(bond.to);
        if (ra != rb) return true;
    }
    return false;
}

} // namespace

std::vector<std::vector<std::uint32_t>> fragment_components(
    const MoleculeGraph& mol, const FragmentationRules& rules) {
    std::size_t n = mol.atoms.size();
    std::vector<std::vector<std::uint32_t>> adj(n);
    for (const Bond& b : mol.bonds) {
        if (matches_rules(mol, b, rules)) continue;
        adj[b.from].push_back(b.to);
        adj[b.to].push_back(b.from);
    }
    std::vector<std::uint8_t> seen(n, 0);
    std::vector<std::vector<std::uint32_t>> components;
    for (std::uint32_t start = 0; start < n; ++start) {
        if (seen[start]) continue;
        std::vector<std::uint32_t> comp;
        std::vector<std::uint32_t> stack{start};
        seen[start] = 1;
        while (!stack.empty()) {
            std::uint32_t u = stack.back();
            stack.pop_back();
            comp.push_back(u);
            for (std::uint32_t v : adj[u]) {
                if (!seen[v]) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        components.push_back(std::move(comp));
    }
    return components;
}

std::string canonical_key(const MoleculeGraph& mol,
                          const std::vector<std::uint32_t>& atom_subset) {
    // local index per subset atom
    std::map<std::uint32_t, std::uint32_t> local;
    for (std::uint32_t i = 0; i < atom_subset.size(); ++i) local[atom_subset[i]] = i;
    std::size_t n = atom_subset.size();

    // induced bonds
    struct Edge {
        std::uint32_t to;
        BondOrder order;
    };
    std::vector<std::vector<Edge>> adj(n);
    for (const Bond& b : mol.bonds) {
        auto fa = local.find(b.from);
        auto fb = local.find(b.to);
        if (fa == local.end() || fb == local.end()) continue;
        adj[fa->second].push_back({fb->second, b.order});
        adj[fb->second].push_back({fa->second, b.order});
    }

    auto token = [&](std::uint32_t li) {
        const Atom& a = mol.atoms[atom_subset[li]];
        std::string t = a.element;
        if (a.aromatic) {
            for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        return t;
    };

    // neighborhood color refinement; n rounds reach the stable partition
    std::vector<std::uint64_t> color(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        color[i] = hash_str(token(i), 0x517CC1B7ull) ^ mix64(adj[i].size());
    }
    for (std::size_t round = 0; round < n; ++round) {
        std::vector<std::uint64_t> next(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            std::vector<std::uint64_t> sig;
            sig.reserve(adj[i].size());
            for (const Edge& e : adj[i]) {
                sig.push_back(mix64(color[e.to] ^
                                    (static_cast<std::uint64_t>(e.order) << 56)));
            }
            std::sort(sig.begin(), sig.end());
            std::uint64_t h = color[i];
            for (std::uint64_t s : sig) h = mix64(h ^ s);
            next[i] = h;
        }
        color = std::move(next);
    }

    // DFS emission from the minimal (color, token) atom; neighbor order by
    // (bond, color, token). Ties across automorphic atoms are harmless by
    // construction; other ties are accepted as documented.
    std::uint32_t start = 0;
    for (std::uint32_t i = 1; i < n; ++i) {
        if (std::tuple(color[i], token(i)) < std::tuple(color[start], token(start))) {
            start = i;
        }
    }

    std::vector<int> disc(n, -1);
    int timer = 0;
    std::string out;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> used_edges;
    auto edge_used = [&](std::uint32_t a, std::uint32_t b) {
        for (auto [x, y] : used_edges) {
            if ((x == a && y == b) || (x == b && y == a)) return true;
        }
        return false;
    };

    std::function<void(std::uint32_t)> emit = [&](std::uint32_t u) {
        disc[u] = timer++;
        out += token(u);
        std::vector<Edge> order = adj[u];
        std::stable_sort(order.begin(), order.end(), [&](const Edge& a, const Edge& b) {
            return std::tuple(a.order, color[a.to], token(a.to)) <
                   std::tuple(b.order, color[b.to], token(b.to));
        });
        // ring closures before descending
        for (const Edge& e : order) {
            if (disc[e.to] != -1 && !edge_used(u, e.to)) {
                used_edges.push_back({u, e.to});
                out += bond_symbol(e.order);
                out += '@';
                out += std::to_string(disc[e.to]);
            }
        }
        for (const Edge& e : order) {
            if (disc[e.to] == -1) {
                used_edges.push_back({u, e.to});
                out += '(';
                out += bond_symbol(e.order);
                emit(e.to);
                out += ')';
            }
        }
    };
    if (n > 0) emit(start);
    return out;
}

std::vector<Substructure> fragment(const MoleculeGraph& mol,
                                   const FragmentationRules& rules) {
    std::vector<Substructure> out;
    for (const auto& comp : fragment_components(mol, rules)) {
        out.push_back(Substructure{canonical_key(mol, comp), comp.size()});
    }
    std::sort(out.begin(), out.end(), [](const Substructure& a, const Substructure& b) {
        return std::tie(a.canonical_key, a.atom_count) <
               std::tie(b.canonical_key, b.atom_count);
    });
    return out;
}

} // namespace chem
} // namespace drugrec
