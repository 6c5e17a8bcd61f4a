#include <fstream>
#include <sstream>

#include "drugrec/data.hpp"
#include "drugrec/error.hpp"

#include <json.hpp>

namespace drugrec {
namespace data {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kCohortVersion = 1;

} // namespace

void save_cohort(const Cohort& cohort, std::ostream& out) {
    ordered_json header;
    header["version"] = kCohortVersion;
    header["n_diag"] = cohort.n_diag;
    header["n_proc"] = cohort.n_proc;
    ordered_json drugs = ordered_json::array();
    for (const chem::DrugEntry& d : cohort.drugs) {
        ordered_json j;
        j["id"] = d.id;
        j["smiles"] = d.smiles;
        if (!d.fragment_keys.empty()) j["fragment_keys"] = d.fragment_keys;
        drugs.push_back(std::move(j));
    }
    header["drugs"] = std::move(drugs);
    ordered_json edges = ordered_json::array();
    for (std::size_t i = 0; i < cohort.ddi.rows; ++i) {
        for (std::size_t j = i + 1; j < cohort.ddi.cols; ++j) {
            if (cohort.ddi.at(i, j)) edges.push_back(ordered_json::array({i, j}));
        }
    }
    header["ddi_edges"] = std::move(edges);
    header["mask_provenance"] = cohort.mask_provenance;
    out << header.dump() << "\n";

    for (const PatientRecord& p : cohort.patients) {
        ordered_json j;
        j["id"] = p.patient_id;
        ordered_json visits = ordered_json::array();
        for (const Visit& v : p.visits) {
            visits.push_back(ordered_json{{"d", v.diagnoses}, {"p", v.procedures},
                                          {"m", v.medications}});
        }
        j["visits"] = std::move(visits);
        out << j.dump() << "\n";
    }
}

Cohort load_cohort(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("cohort file: missing header", 1);
    ++lineno;
    ordered_json header;
    try {
        header = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("cohort header: ") + e.what(), lineno);
    }
    if (!header.contains("version")) throw VersionError("cohort file has no version field");
    int version = header.at("version").get<int>();
    if (version != kCohortVersion) {
        throw VersionError("unsupported cohort version " + std::to_string(version));
    }

    Cohort cohort;
    try {
        cohort.n_diag = header.at("n_diag").get<std::size_t>();
        cohort.n_proc = header.at("n_proc").get<std::size_t>();
        for (const auto& j : header.at("drugs")) {
            chem::DrugEntry d;
            d.id = j.at("id").get<std::string>();
            d.smiles = j.at("smiles").get<std::vector<std::string>>();
            if (j.contains("fragment_keys")) {
                d.fragment_keys = j.at("fragment_keys").get<std::vector<std::string>>();
            }
            cohort.drugs.push_back(std::move(d));
        }
        cohort.mask_provenance = header.value("mask_provenance", std::string());
        cohort.ddi = ByteMatrix(cohort.drugs.size(), cohort.drugs.size());
        for (const auto& e : header.at("ddi_edges")) {
            std::size_t a = e.at(0).get<std::size_t>();
            std::size_t b = e.at(1).get<std::size_t>();
            if (a >= cohort.drugs.size() || b >= cohort.drugs.size()) {
                throw IdRangeError("DDI edge (" + std::to_string(a) + ", " +
                                   std::to_string(b) + ") out of range");
            }
            cohort.ddi.at(a, b) = 1;
            cohort.ddi.at(b, a) = 1;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("cohort header: ") + e.what(), lineno);
    }

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
            PatientRecord rec;
            rec.patient_id = j.at("id").get<std::string>();
            for (const auto& v : j.at("visits")) {
                Visit visit;
                visit.diagnoses = v.at("d").get<std::vector<std::uint32_t>>();
                visit.procedures = v.at("p").get<std::vector<std::uint32_t>>();
                visit.medications = v.at("m").get<std::vector<std::uint32_t>>();
                rec.visits.push_back(std::move(visit));
            }
            cohort.patients.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("cohort patient: ") + e.what(), lineno);
        }
    }

    cohort.mask = chem::build_mask(cohort.drugs);
    cohort.validate();
    return cohort;
}

void save_cohort_file(const Cohort& cohort, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write cohort: " + path);
    save_cohort(cohort, out);
}

Cohort load_cohort_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read cohort: " + path);
    return load_cohort(in);
}

ByteMatrix load_ddi_edges(std::istream& in, std::size_t n_drugs) {
    ByteMatrix ddi(n_drugs, n_drugs);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        long a = -1, b = -1;
        if (!(fields >> a >> b)) {
            throw ParseError("DDI edge list: expected two ids", lineno);
        }
        if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n_drugs ||
            static_cast<std::size_t>(b) >= n_drugs) {
            throw IdRangeError("DDI edge (" + std::to_string(a) + ", " + std::to_string(b) +
                               ") out of range for " + std::to_string(n_drugs) + " drugs");
        }
        if (a == b) continue; // self-pairs carry no information
        ddi.at(static_cast<std::size_t>(a), static_cast<std::size_t>(b)) = 1;
        ddi.at(static_cast<std::size_t>(b), static_cast<std::size_t>(a)) = 1;
    }
    return ddi;
}

void save_ddi_edges(const ByteMatrix& ddi, std::ostream& out) {
    for (std::size_t i = 0; i < ddi.rows; ++i) {
        for (std::size_t j = i + 1; j < ddi.cols; ++j) {
            if (ddi.at(i, j)) out << i << '\t' << j << '\n';
        }
    }
}

} // namespace data
} // namespace drugrec
