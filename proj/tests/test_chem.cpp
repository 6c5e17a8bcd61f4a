#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "drugrec/chem.hpp"
#include "drugrec/data.hpp"

using namespace drugrec;
using chem::BondOrder;

TEST_CASE("ethanol") {
    chem::MoleculeGraph mol = chem::parse_smiles("CCO");
    REQUIRE(mol.atoms.size() == 3);
    CHECK(mol.atoms[0].element == "C");
    CHECK(mol.atoms[1].element == "C");
    CHECK(mol.atoms[2].element == "O");
    REQUIRE(mol.bonds.size() == 2);
    for (const chem::Bond& b : mol.bonds) {
        CHECK(b.order == BondOrder::Single);
        CHECK_FALSE(b.in_ring);
    }
    CHECK_FALSE(mol.stereo_ignored);
}

TEST_CASE("benzene") {
    chem::MoleculeGraph mol = chem::parse_smiles("c1ccccc1");
    REQUIRE(mol.atoms.size() == 6);
    REQUIRE(mol.bonds.size() == 6);
    for (const chem::Atom& a : mol.atoms) {
        CHECK(a.element == "C");
        CHECK(a.aromatic);
    }
    for (const chem::Bond& b : mol.bonds) {
        CHECK(b.order == BondOrder::Aromatic);
        CHECK(b.in_ring);
    }
}

TEST_CASE("carboxyl group") {
    chem::MoleculeGraph mol = chem::parse_smiles("C(=O)O");
    REQUIRE(mol.atoms.size() == 3);
    REQUIRE(mol.bonds.size() == 2);
    std::map<BondOrder, int> orders;
    for (const chem::Bond& b : mol.bonds) orders[b.order]++;
    CHECK(orders[BondOrder::Double] == 1);
    CHECK(orders[BondOrder::Single] == 1);
}

TEST_CASE("ring closure with percent notation") {
    chem::MoleculeGraph mol = chem::parse_smiles("C%10CCCC%10");
    CHECK(mol.atoms.size() == 5);
    CHECK(mol.bonds.size() == 5);
}

TEST_CASE("bracket atoms") {
    SUBCASE("charges are accepted and dropped") {
        chem::MoleculeGraph mol = chem::parse_smiles("C[N+](=O)[O-]");
        REQUIRE(mol.atoms.size() == 4);
        CHECK(mol.atoms[1].element == "N");
        CHECK(mol.atoms[3].element == "O");
    }
    SUBCASE("aromatic nitrogen with hydrogen count") {
        chem::MoleculeGraph mol = chem::parse_smiles("c1cc[nH]c1");
        REQUIRE(mol.atoms.size() == 5);
        CHECK(mol.atoms[3].element == "N");
        CHECK(mol.atoms[3].aromatic);
    }
    SUBCASE("isotopes are accepted and dropped") {
        chem::MoleculeGraph mol = chem::parse_smiles("[13C]O");
        CHECK(mol.atoms.size() == 2);
    }
    SUBCASE("two-letter bracket elements") {
        chem::MoleculeGraph mol = chem::parse_smiles("[Na+]");
        REQUIRE(mol.atoms.size() == 1);
        CHECK(mol.atoms[0].element == "Na");
    }
}

TEST_CASE("stereo markers pass through with a warning flag") {
    chem::MoleculeGraph mol = chem::parse_smiles("C/C=C/C");
    CHECK(mol.atoms.size() == 4);
    CHECK(mol.stereo_ignored);
    chem::MoleculeGraph chiral = chem::parse_smiles("N[C@H](C)O");
    CHECK(chiral.atoms.size() == 4);
    CHECK(chiral.stereo_ignored);
}

TEST_CASE("syntax errors carry byte offsets") {
    auto offset_of = [](const std::string& smiles) -> std::size_t {
        try {
            chem::parse_smiles(smiles);
        } catch (const chem::SyntaxError& e) {
            return e.offset();
        }
        return static_cast<std::size_t>(-1);
    };
    CHECK(offset_of("CC(C") == 2);       // unbalanced '('
    CHECK(offset_of("C1CC") == 1);       // dangling ring closure
    CHECK(offset_of("C[Xx]C") == 1);     // unknown element
    CHECK(offset_of("CC)C") == 2);       // unbalanced ')'
    CHECK(offset_of("") == 0);           // empty input
    CHECK(offset_of("C=") == 1);         // trailing bond
    CHECK(offset_of("C==C") == 2);       // doubled bond symbol, second one flagged
    CHECK(offset_of("C=1CCCC#1") != static_cast<std::size_t>(-1)); // conflicting closure
    CHECK(offset_of("C12CC12") != static_cast<std::size_t>(-1));   // duplicate bond
    CHECK_THROWS_AS(chem::parse_smiles("CC.CC"), chem::UnsupportedFeature);
}

TEST_CASE("parser is deterministic") {
    const std::string smiles = "CC(=O)Oc1ccccc1C(=O)O";
    chem::MoleculeGraph a = chem::parse_smiles(smiles);
    chem::MoleculeGraph b = chem::parse_smiles(smiles);
    REQUIRE(a.atoms.size() == b.atoms.size());
    REQUIRE(a.bonds.size() == b.bonds.size());
    for (std::size_t i = 0; i < a.atoms.size(); ++i) {
        CHECK(a.atoms[i].element == b.atoms[i].element);
        CHECK(a.atoms[i].aromatic == b.atoms[i].aromatic);
    }
    CHECK(a.adjacency == b.adjacency);
}

TEST_CASE("adjacency is symmetric with zero diagonal across the corpus") {
    for (const auto& [name, smiles] : data::builtin_smiles()) {
        CAPTURE(name);
        chem::MoleculeGraph mol = chem::parse_smiles(smiles);
        std::size_t n = mol.atoms.size();
        REQUIRE(mol.adjacency.rows == n);
        REQUIRE(mol.adjacency.cols == n);
        std::size_t edges = 0;
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(mol.adjacency.at(i, i) == 0);
            for (std::size_t j = 0; j < n; ++j) {
                CHECK(mol.adjacency.at(i, j) == mol.adjacency.at(j, i));
                edges += mol.adjacency.at(i, j);
            }
        }
        CHECK(edges == 2 * mol.bonds.size());
        for (std::size_t i = 0; i < n; ++i) CHECK(mol.atoms[i].index == i);
    }
}

TEST_CASE("corpus matches the hand-verified manifest") {
    std::ifstream in(std::string(DRUGREC_TEST_DATA_DIR) + "/smiles_manifest.tsv");
    REQUIRE(in.good());
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string name, smiles;
        std::size_t atoms = 0, bonds = 0;
        REQUIRE((fields >> name >> smiles >> atoms >> bonds));
        CAPTURE(name);
        chem::MoleculeGraph mol = chem::parse_smiles(smiles);
        CHECK(mol.atoms.size() == atoms);
        CHECK(mol.bonds.size() == bonds);
        ++rows;
    }
    CHECK(rows == 50);
    CHECK(data::builtin_smiles().size() == 50);
}

TEST_CASE("fragmentation") {
    SUBCASE("benzene has no cuttable bond") {
        auto frags = chem::fragment(chem::parse_smiles("c1ccccc1"));
        REQUIRE(frags.size() == 1);
        CHECK(frags[0].atom_count == 6);
    }
    SUBCASE("ethane has no matching bond either") {
        auto frags = chem::fragment(chem::parse_smiles("CC"));
        REQUIRE(frags.size() == 1);
        CHECK(frags[0].atom_count == 2);
    }
    SUBCASE("ethanol cuts at the heteroatom bond") {
        // hand enumeration: C-C matches no rule, C-O touches a heteroatom
        auto frags = chem::fragment(chem::parse_smiles("CCO"));
        REQUIRE(frags.size() == 2);
        std::multiset<std::size_t> sizes{frags[0].atom_count, frags[1].atom_count};
        CHECK(sizes == std::multiset<std::size_t>{1, 2});
    }
    SUBCASE("toluene cuts at the ring attachment") {
        // hand enumeration: the only acyclic bond joins ring and non-ring atoms
        auto frags = chem::fragment(chem::parse_smiles("Cc1ccccc1"));
        REQUIRE(frags.size() == 2);
        std::multiset<std::size_t> sizes{frags[0].atom_count, frags[1].atom_count};
        CHECK(sizes == std::multiset<std::size_t>{1, 6});
    }
    SUBCASE("aromatic rings always stay whole") {
        auto frags = chem::fragment(chem::parse_smiles("c1ccncc1"));
        REQUIRE(frags.size() == 1);
    }
    SUBCASE("rule switches narrow the cut set") {
        chem::FragmentationRules only_rings;
        only_rings.cut_heteroatom_bonds = false;
        auto frags = chem::fragment(chem::parse_smiles("CCO"), only_rings);
        CHECK(frags.size() == 1);
    }
}

TEST_CASE("fragment completeness over the corpus") {
    for (const auto& [name, smiles] : data::builtin_smiles()) {
        CAPTURE(name);
        chem::MoleculeGraph mol = chem::parse_smiles(smiles);
        auto components = chem::fragment_components(mol, {});
        std::vector<bool> seen(mol.atoms.size(), false);
        std::size_t total = 0;
        for (const auto& comp : components) {
            for (std::uint32_t idx : comp) {
                CHECK_FALSE(seen[idx]);
                seen[idx] = true;
                ++total;
            }
        }
        CHECK(total == mol.atoms.size());
    }
}

TEST_CASE("canonical keys are stable under input reordering") {
    auto key_multiset = [](const std::string& smiles) {
        std::multiset<std::string> keys;
        for (const auto& f : chem::fragment(chem::parse_smiles(smiles))) {
            keys.insert(f.canonical_key);
        }
        return keys;
    };
    CHECK(key_multiset("CCO") == key_multiset("C(O)C"));
    CHECK(key_multiset("CCO") == key_multiset("OCC"));
    CHECK(key_multiset("CC(=O)O") == key_multiset("OC(=O)C"));
    CHECK(key_multiset("Cc1ccccc1") == key_multiset("c1ccccc1C"));
    CHECK(key_multiset("NC(CO)C(=O)O") == key_multiset("OCC(N)C(=O)O"));
}

TEST_CASE("build_mask") {
    SUBCASE("disjoint fragment keys give an identity block") {
        std::vector<chem::DrugEntry> drugs = {{"a", {}, {"ka"}}, {"b", {}, {"kb"}}};
        chem::MaskMatrix mask = chem::build_mask(drugs);
        REQUIRE(mask.entries.rows == 2);
        REQUIRE(mask.entries.cols == 2);
        CHECK(mask.entries.at(0, 0) == 1);
        CHECK(mask.entries.at(0, 1) == 0);
        CHECK(mask.entries.at(1, 0) == 0);
        CHECK(mask.entries.at(1, 1) == 1);
    }
    SUBCASE("identical SMILES give identical columns") {
        std::vector<chem::DrugEntry> drugs = {{"a", {"CC(=O)O"}, {}},
                                              {"b", {"CC(=O)O"}, {}}};
        chem::MaskMatrix mask = chem::build_mask(drugs);
        for (std::size_t i = 0; i < mask.entries.rows; ++i) {
            CHECK(mask.entries.at(i, 0) == mask.entries.at(i, 1));
        }
    }
    SUBCASE("every drug column has at least one entry") {
        std::vector<chem::DrugEntry> drugs;
        for (std::size_t j = 0; j < 20; ++j) {
            const auto& [name, smiles] = data::builtin_smiles()[j];
            drugs.push_back({name, {smiles}, {}});
        }
        chem::MaskMatrix mask = chem::build_mask(drugs);
        for (std::size_t j = 0; j < mask.entries.cols; ++j) {
            std::size_t nnz = 0;
            for (std::size_t i = 0; i < mask.entries.rows; ++i) nnz += mask.entries.at(i, j);
            CHECK(nnz >= 1);
        }
    }
    SUBCASE("export is byte-identical across runs") {
        std::vector<chem::DrugEntry> drugs = {{"a", {"CCO"}, {}}, {"b", {"CC(=O)O"}, {}}};
        auto dump = [&]() {
            std::ostringstream out;
            chem::write_mask_json(chem::build_mask(drugs), out);
            return out.str();
        };
        std::string first = dump();
        CHECK(first == dump());
        CHECK(first.find("\"substructures\"") != std::string::npos);
        CHECK(first.find("\"drugs\"") != std::string::npos);
        CHECK(first.find("\"entries\"") != std::string::npos);
    }
    SUBCASE("parse failures carry the drug id") {
        std::vector<chem::DrugEntry> drugs = {{"bad-one", {"CC(C"}, {}}};
        try {
            chem::build_mask(drugs);
            FAIL("expected SyntaxError");
        } catch (const chem::SyntaxError& e) {
            CHECK(std::string(e.what()).find("bad-one") != std::string::npos);
        }
    }
    SUBCASE("duplicate ids rejected") {
        std::vector<chem::DrugEntry> drugs = {{"a", {"CCO"}, {}}, {"a", {"CC"}, {}}};
        CHECK_THROWS_AS(chem::build_mask(drugs), ParseError);
    }
}

TEST_CASE("drug vocabulary file round trip") {
    std::string text =
        "# comment line\n"
        "d0\tCCO\n"
        "d1\tCC(=O)O\tk1;k2\n"
        "d0\tCC\n"; // repeated id merges
    std::istringstream in(text);
    std::vector<chem::DrugEntry> drugs = chem::load_drug_vocab(in);
    REQUIRE(drugs.size() == 2);
    CHECK(drugs[0].id == "d0");
    REQUIRE(drugs[0].smiles.size() == 2);
    CHECK(drugs[0].smiles[1] == "CC");
    REQUIRE(drugs[1].fragment_keys.size() == 2);
    CHECK(drugs[1].fragment_keys[0] == "k1");

    std::ostringstream out;
    chem::save_drug_vocab(drugs, out);
    std::istringstream in2(out.str());
    std::vector<chem::DrugEntry> reloaded = chem::load_drug_vocab(in2);
    REQUIRE(reloaded.size() == 2);
    CHECK(reloaded[0].smiles == drugs[0].smiles);
    CHECK(reloaded[1].fragment_keys == drugs[1].fragment_keys);
}

TEST_CASE("malformed vocabulary line reports its line number") {
    std::istringstream in("d0\tCCO\nno-tabs-here\n");
    try {
        chem::load_drug_vocab(in);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
}
