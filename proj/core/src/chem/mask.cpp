#include "drugrec/chem.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace drugrec {
namespace chem {

namespace {

std::set<std::string> fragment_key_set(const DrugEntry& drug,
                                       const FragmentationRules& rules) {
    std::set<std::string> keys(drug.fragment_keys.begin(), drug.fragment_keys.end());
    if (!keys.empty()) return keys;
    if (drug.smiles.empty()) {
        throw ParseError("drug " + drug.id + ": no SMILES and no fragment keys");
    }
    for (const std::string& s : drug.smiles) {
        MoleculeGraph mol;
        try {
            mol = parse_smiles(s);
        } catch (const SyntaxError& e) {
            throw SyntaxError("drug " + drug.id + ": " + e.what(), e.offset());
        } catch (const UnsupportedFeature& e) {
            throw UnsupportedFeature("drug " + drug.id + ": " + e.what(), e.offset());
        }
        // multiple molecules under one drug id: union of their fragments
        for (const Substructure& sub : fragment(mol, rules)) {
            keys.insert(sub.canonical_key);
        }
    }
    return keys;
}

} // namespace

MaskMatrix build_mask(const std::vector<DrugEntry>& drugs,
                      const FragmentationRules& rules) {
    std::set<std::string> seen_ids;
    for (const DrugEntry& d : drugs) {
        if (!seen_ids.insert(d.id).second) {
            throw ParseError("duplicate drug id: " + d.id);
        }
    }

    std::vector<std::set<std::string>> per_drug;
    per_drug.reserve(drugs.size());
    std::set<std::string> all_keys;
    for (const DrugEntry& d : drugs) {
        per_drug.push_back(fragment_key_set(d, rules));
        all_keys.insert(per_drug.back().begin(), per_drug.back().end());
    }

    MaskMatrix mask;
    mask.substructures.assign(all_keys.begin(), all_keys.end()); // sorted by set order
    for (std::size_t i = 0; i < mask.substructures.size(); ++i) {
        mask.substructure_index[mask.substructures[i]] = i;
    }
    for (std::size_t j = 0; j < drugs.size(); ++j) {
        mask.drugs.push_back(drugs[j].id);
        mask.drug_index[drugs[j].id] = j;
    }
    mask.entries = ByteMatrix(mask.substructures.size(), drugs.size());
    for (std::size_t j = 0; j < drugs.size(); ++j) {
        for (const std::string& key : per_drug[j]) {
            mask.entries.at(mask.substructure_index.at(key), j) = 1;
        }
    }
    return mask;
}

void write_mask_json(const MaskMatrix& mask, std::ostream& out) {
    auto quote = [](const std::string& s) {
        std::string r = "\"";
        for (char c : s) {
            if (c == '"' || c == '\\') r += '\\';
            r += c;
        }
        return r + "\"";
    };
    out << "{\"substructures\": [";
    for (std::size_t i = 0; i < mask.substructures.size(); ++i) {
        if (i) out << ", ";
        out << quote(mask.substructures[i]);
    }
    out << "], \"drugs\": [";
    for (std::size_t j = 0; j < mask.drugs.size(); ++j) {
        if (j) out << ", ";
        out << quote(mask.drugs[j]);
    }
    out << "], \"entries\": [";
    for (std::size_t j = 0; j < mask.drugs.size(); ++j) {
        if (j) out << ", ";
        out << "[";
        bool first = true;
        for (std::size_t i = 0; i < mask.substructures.size(); ++i) {
            if (!mask.entries.at(i, j)) continue;
            if (!first) out << ", ";
            out << i;
            first = false;
        }
        out << "]";
    }
    out << "]}\n";
}

std::vector<DrugEntry> load_drug_vocab(std::istream& in) {
    std::vector<DrugEntry> drugs;
    std::map<std::string, std::size_t> by_id;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
            throw ParseError("drug vocabulary: expected id<TAB>smiles", lineno);
        }
        DrugEntry entry;
        entry.id = fields[0];
        entry.smiles.push_back(fields[1]);
        if (fields.size() >= 3 && !fields[2].empty()) {
            std::stringstream keys(fields[2]);
            std::string key;
            while (std::getline(keys, key, ';')) {
                if (!key.empty()) entry.fragment_keys.push_back(key);
            }
        }
        auto it = by_id.find(entry.id);
        if (it == by_id.end()) {
            by_id[entry.id] = drugs.size();
            drugs.push_back(std::move(entry));
        } else {
            DrugEntry& existing = drugs[it->second];
            existing.smiles.insert(existing.smiles.end(), entry.smiles.begin(),
                                   entry.smiles.end());
            existing.fragment_keys.insert(existing.fragment_keys.end(),
                                          entry.fragment_keys.begin(),
                                          entry.fragment_keys.end());
        }
    }
    return drugs;
}

void save_drug_vocab(const std::vector<DrugEntry>& drugs, std::ostream& out) {
    for (const DrugEntry& d : drugs) {
        for (std::size_t i = 0; i < d.smiles.size(); ++i) {
            out << d.id << '\t' << d.smiles[i];
            if (i == 0 && !d.fragment_keys.empty()) {
                out << '\t';
                for (std::size_t k = 0; k < d.fragment_keys.size(); ++k) {
                    if (k) out << ';';
                    out << d.fragment_keys[k];
                }
            }
            out << '\n';
        }
    }
}

} // namespace chem
} // namespace drugrec
