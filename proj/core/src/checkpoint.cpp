#include <fstream>

#include "drugrec/error.hpp"
#include "drugrec/train.hpp"

#include <json.hpp>

namespace drugrec {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json tensor_to_json(const Tensor& t) {
    ordered_json j;
    j["shape"] = t.shape();
    j["values"] = t.data();
    return j;
}

Tensor tensor_from_json(const ordered_json& j) {
    std::vector<std::size_t> shape = j.at("shape").get<std::vector<std::size_t>>();
    std::vector<double> values = j.at("values").get<std::vector<double>>();
    if (shape.size() == 1) {
        if (values.size() != shape[0]) throw ParseError("tensor: shape/value mismatch");
        return Tensor::vector(std::move(values));
    }
    if (shape.size() == 2) return Tensor::matrix(shape[0], shape[1], std::move(values));
    throw ParseError("tensor: unsupported rank " + std::to_string(shape.size()));
}

ordered_json params_to_json(const std::map<std::string, Tensor>& params) {
    ordered_json j = ordered_json::object();
    for (const auto& [name, t] : params) j[name] = tensor_to_json(t);
    return j;
}

std::map<std::string, Tensor> params_from_json(const ordered_json& j) {
    std::map<std::string, Tensor> out;
    for (auto it = j.begin(); it != j.end(); ++it) out.emplace(it.key(), tensor_from_json(it.value()));
    return out;
}

ordered_json config_to_json(const TrainConfig& cfg) {
    ordered_json j;
    j["model"] = {{"dim", cfg.model.dim},
                  {"mpnn_layers", cfg.model.mpnn_layers},
                  {"threshold", cfg.model.threshold},
                  {"dropout", cfg.model.dropout},
                  {"use_mask", cfg.model.use_mask},
                  {"n_diag", cfg.model.n_diag},
                  {"n_proc", cfg.model.n_proc},
                  {"n_drugs", cfg.model.n_drugs},
                  {"n_substructures", cfg.model.n_substructures},
                  {"n_atom_types", cfg.model.n_atom_types}};
    j["loss"] = {{"alpha", cfg.loss.alpha}, {"kp", cfg.loss.kp}, {"gamma", cfg.loss.gamma}};
    j["learning_rate"] = cfg.learning_rate;
    j["epochs"] = cfg.epochs;
    j["seed"] = cfg.seed;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["check_finite"] = cfg.check_finite;
    return j;
}

TrainConfig config_from_json(const ordered_json& j) {
    TrainConfig cfg;
    const auto& m = j.at("model");
    cfg.model.dim = m.at("dim").get<std::size_t>();
    cfg.model.mpnn_layers = m.at("mpnn_layers").get<std::size_t>();
    cfg.model.threshold = m.at("threshold").get<double>();
    cfg.model.dropout = m.at("dropout").get<double>();
    cfg.model.use_mask = m.at("use_mask").get<bool>();
    cfg.model.n_diag = m.at("n_diag").get<std::size_t>();
    cfg.model.n_proc = m.at("n_proc").get<std::size_t>();
    cfg.model.n_drugs = m.at("n_drugs").get<std::size_t>();
    cfg.model.n_substructures = m.at("n_substructures").get<std::size_t>();
    cfg.model.n_atom_types = m.at("n_atom_types").get<std::size_t>();
    const auto& l = j.at("loss");
    cfg.loss.alpha = l.at("alpha").get<double>();
    cfg.loss.kp = l.at("kp").get<double>();
    cfg.loss.gamma = l.at("gamma").get<double>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
    cfg.check_finite = j.at("check_finite").get<bool>();
    return cfg;
}

ordered_json drugs_to_json(const std::vector<chem::DrugEntry>& drugs) {
    ordered_json arr = ordered_json::array();
    for (const chem::DrugEntry& d : drugs) {
        ordered_json j;
        j["id"] = d.id;
        j["smiles"] = d.smiles;
        if (!d.fragment_keys.empty()) j["fragment_keys"] = d.fragment_keys;
        arr.push_back(std::move(j));
    }
    return arr;
}

std::vector<chem::DrugEntry> drugs_from_json(const ordered_json& arr) {
    std::vector<chem::DrugEntry> drugs;
    for (const auto& j : arr) {
        chem::DrugEntry d;
        d.id = j.at("id").get<std::string>();
        d.smiles = j.at("smiles").get<std::vector<std::string>>();
        if (j.contains("fragment_keys")) {
            d.fragment_keys = j.at("fragment_keys").get<std::vector<std::string>>();
        }
        drugs.push_back(std::move(d));
    }
    return drugs;
}

} // namespace

std::string train_config_json(const TrainConfig& cfg) { return config_to_json(cfg).dump(); }

Checkpoint make_checkpoint(const Model& model, const Adam& optimizer,
                           const TrainConfig& cfg,
                           const std::vector<chem::DrugEntry>& drugs,
                           std::size_t epoch, double val_jaccard) {
    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.config.model = model.config();
    ckpt.drugs = drugs;
    ckpt.atom_vocab = model.atom_vocab();
    ckpt.params = model.params().all();
    ckpt.adam_step = optimizer.steps_taken();
    ckpt.adam_m = optimizer.first_moments();
    ckpt.adam_v = optimizer.second_moments();
    ckpt.epoch = epoch;
    ckpt.val_jaccard = val_jaccard;
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    ordered_json j;
    j["version"] = ckpt.version;
    j["config"] = config_to_json(ckpt.config);
    j["drugs"] = drugs_to_json(ckpt.drugs);
    j["atom_vocab"] = ckpt.atom_vocab;
    j["params"] = params_to_json(ckpt.params);
    j["adam"] = {{"step", ckpt.adam_step},
                 {"m", params_to_json(ckpt.adam_m)},
                 {"v", params_to_json(ckpt.adam_v)}};
    j["epoch"] = ckpt.epoch;
    j["val_jaccard"] = ckpt.val_jaccard;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read checkpoint: " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint " + path + ": " + e.what());
    }
    if (!j.contains("version")) throw VersionError("checkpoint has no version field");
    int version = j.at("version").get<int>();
    if (version != 1) {
        throw VersionError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.version = version;
    ckpt.config = config_from_json(j.at("config"));
    ckpt.drugs = drugs_from_json(j.at("drugs"));
    ckpt.atom_vocab = j.at("atom_vocab").get<std::vector<std::string>>();
    ckpt.params = params_from_json(j.at("params"));
    ckpt.adam_step = j.at("adam").at("step").get<std::size_t>();
    ckpt.adam_m = params_from_json(j.at("adam").at("m"));
    ckpt.adam_v = params_from_json(j.at("adam").at("v"));
    ckpt.epoch = j.at("epoch").get<std::size_t>();
    ckpt.val_jaccard = j.at("val_jaccard").get<double>();
    return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    chem::MaskMatrix mask = chem::build_mask(ckpt.drugs);
    Model model(ckpt.config.model, ckpt.drugs, std::move(mask), ckpt.atom_vocab);
    for (const auto& [name, t] : ckpt.params) {
        Tensor& dst = model.params().get(name);
        if (!dst.same_shape(t)) {
            throw ShapeError("checkpoint parameter " + name + ": " + t.shape_str() +
                             " vs model " + dst.shape_str());
        }
        dst = t;
    }
    return model;
}

void require_vocab_match(const Checkpoint& ckpt, const data::Cohort& cohort) {
    const ModelConfig& m = ckpt.config.model;
    if (m.n_diag != cohort.n_diag || m.n_proc != cohort.n_proc ||
        m.n_drugs != cohort.n_drugs()) {
        throw VocabMismatchError(
            "checkpoint vocabulary (diag " + std::to_string(m.n_diag) + ", proc " +
            std::to_string(m.n_proc) + ", drugs " + std::to_string(m.n_drugs) +
            ") does not match cohort (diag " + std::to_string(cohort.n_diag) + ", proc " +
            std::to_string(cohort.n_proc) + ", drugs " + std::to_string(cohort.n_drugs()) +
            ")");
    }
}

} // namespace drugrec
