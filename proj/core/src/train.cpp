#include "drugrec/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "drugrec/error.hpp"

namespace drugrec {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ValueError("train: learning rate must be positive");
    if (epochs < 1) throw ValueError("train: epochs must be >= 1");
    loss.validate();
}

void bind_vocab(ModelConfig& cfg, const data::Cohort& cohort) {
    cfg.n_diag = cohort.n_diag;
    cfg.n_proc = cohort.n_proc;
    cfg.n_drugs = cohort.n_drugs();
    cfg.n_substructures = cohort.mask.substructures.size();
}

namespace {

struct PatientStep {
    LossBreakdown loss;
    double patient_ddi = 0.0;
    std::map<std::string, Tensor> grads;
};

PatientStep run_patient(const Model& model, const data::Cohort& cohort,
                        const data::PatientRecord& rec, const TrainConfig& cfg,
                        Rng dropout_rng, bool compute_grads) {
    ad::Tape tape(cfg.check_finite);
    ParamRefs refs = model.bind(tape, compute_grads);
    ad::Value memory = model.drug_memory(tape, refs);
    PatientState state = model.initial_state(tape);

    std::vector<ad::Value> bces, hinges, ddis;
    metrics::PatientEval eval;
    for (const data::Visit& visit : rec.visits) {
        BitVec d = data::to_multihot(visit.diagnoses, cohort.n_diag);
        BitVec p = data::to_multihot(visit.procedures, cohort.n_proc);
        BitVec m = data::to_multihot(visit.medications, cohort.n_drugs());
        ForwardTrace trace =
            model.forward_visit(tape, refs, d, p, state, memory, compute_grads, dropout_rng);
        bces.push_back(bce_loss(tape, m, trace.scores));
        hinges.push_back(multi_hinge_loss(tape, m, trace.scores));
        ddis.push_back(ddi_loss(tape, trace.scores, cohort.ddi));
        const Tensor& s = tape.val(trace.scores);
        eval.visits.push_back(metrics::VisitEval{m, trace.recommended,
                                                 std::vector<double>(s.data())});
    }

    ad::Value bce_mean = tape.mean_of(bces);
    ad::Value hinge_mean = tape.mean_of(hinges);
    ad::Value ddi_mean = tape.mean_of(ddis);

    PatientStep step;
    step.patient_ddi = metrics::ddi_rate(eval, cohort.ddi);
    step.loss.beta = controller_beta(step.patient_ddi, cfg.loss);
    ad::Value total = combine(tape, bce_mean, hinge_mean, ddi_mean, step.loss.beta, cfg.loss);

    step.loss.bce = tape.scalar(bce_mean);
    step.loss.multi = tape.scalar(hinge_mean);
    step.loss.ddi = tape.scalar(ddi_mean);
    step.loss.total = tape.scalar(total);
    if (!std::isfinite(step.loss.total)) {
        throw NonFiniteError("non-finite loss for patient " + rec.patient_id);
    }

    if (compute_grads) {
        tape.backward(total);
        for (const auto& [name, value] : refs.named) {
            step.grads.emplace(name, tape.grad(value));
        }
    }
    return step;
}

} // namespace

std::vector<TrainLogEntry> train_epoch(Model& model, Adam& optimizer,
                                       const data::Cohort& cohort,
                                       const std::vector<std::size_t>& train_idx,
                                       const TrainConfig& cfg, std::size_t epoch) {
    std::vector<std::size_t> order = train_idx;
    Rng shuffle_rng = Rng(cfg.seed).split("shuffle").split(static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    Rng dropout_root = Rng(cfg.seed).split("dropout").split(static_cast<std::uint64_t>(epoch));

    std::vector<TrainLogEntry> log;
    log.reserve(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const data::PatientRecord& rec = cohort.patients[order[i]];
        auto t0 = std::chrono::steady_clock::now();
        PatientStep step;
        try {
            step = run_patient(model, cohort, rec, cfg,
                               dropout_root.split(static_cast<std::uint64_t>(i)), true);
        } catch (const NonFiniteError& e) {
            throw NonFiniteError("epoch " + std::to_string(epoch) + ", patient " +
                                 rec.patient_id + ": " + e.what());
        }
        optimizer.step(model.params(), step.grads);
        auto t1 = std::chrono::steady_clock::now();

        TrainLogEntry entry;
        entry.epoch = epoch;
        entry.patient_index = i;
        entry.patient_id = rec.patient_id;
        entry.loss = step.loss;
        entry.patient_ddi = step.patient_ddi;
        entry.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        log.push_back(std::move(entry));
    }
    return log;
}

FitResult fit(Model& model, Adam& optimizer, const data::Cohort& cohort,
              const data::Split& split, const TrainConfig& cfg,
              const std::string& checkpoint_dir) {
    cfg.validate();
    FitResult result;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<TrainLogEntry> entries =
            train_epoch(model, optimizer, cohort, split.train, cfg, epoch);
        double mean_loss = 0.0;
        for (const TrainLogEntry& e : entries) mean_loss += e.loss.total;
        if (!entries.empty()) mean_loss /= static_cast<double>(entries.size());
        result.epoch_mean_loss.push_back(mean_loss);
        result.log.insert(result.log.end(), entries.begin(), entries.end());

        double val = split.val.empty()
                         ? 0.0
                         : mean_jaccard(evaluate_patients(model, cohort, split.val));
        result.epoch_val_jaccard.push_back(val);
        if (result.best_epoch == 0 || val > result.best_val_jaccard) {
            result.best_epoch = epoch;
            result.best_val_jaccard = val;
            result.best_params = model.params().all();
        }
        if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
            epoch % cfg.checkpoint_every == 0) {
            Checkpoint ckpt = make_checkpoint(model, optimizer, cfg, cohort.drugs, epoch,
                                              val);
            save_checkpoint(ckpt, checkpoint_dir + "/epoch_" + std::to_string(epoch) +
                                      ".ckpt");
        }
    }
    if (!checkpoint_dir.empty()) {
        Model best(model.config(), cohort.drugs, model.mask(), model.atom_vocab());
        best.params().all() = result.best_params;
        Checkpoint ckpt = make_checkpoint(best, optimizer, cfg, cohort.drugs,
                                          result.best_epoch, result.best_val_jaccard);
        save_checkpoint(ckpt, checkpoint_dir + "/best.ckpt");
    }
    return result;
}

std::vector<VisitPrediction> infer(const Model& model,
                                   const std::vector<data::Visit>& history) {
    if (history.empty()) throw EmptyInputError("infer: empty history");
    ad::Tape tape;
    ParamRefs refs = model.bind(tape, false);
    ad::Value memory = model.drug_memory(tape, refs);
    PatientState state = model.initial_state(tape);
    Rng unused(0); // eval mode never draws from it

    std::vector<VisitPrediction> out;
    for (const data::Visit& visit : history) {
        BitVec d = data::to_multihot(visit.diagnoses, model.config().n_diag);
        BitVec p = data::to_multihot(visit.procedures, model.config().n_proc);
        ForwardTrace trace =
            model.forward_visit(tape, refs, d, p, state, memory, false, unused);
        const Tensor& s = tape.val(trace.scores);
        out.push_back(VisitPrediction{std::vector<double>(s.data()), trace.recommended});
    }
    return out;
}

metrics::PatientEval evaluate_patient(const Model& model, const data::PatientRecord& rec) {
    std::vector<VisitPrediction> preds = infer(model, rec.visits);
    metrics::PatientEval eval;
    for (std::size_t t = 0; t < rec.visits.size(); ++t) {
        BitVec truth = data::to_multihot(rec.visits[t].medications, model.config().n_drugs);
        eval.visits.push_back(
            metrics::VisitEval{truth, preds[t].recommended, preds[t].scores});
    }
    return eval;
}

std::vector<metrics::PatientEval> evaluate_patients(const Model& model,
                                                    const data::Cohort& cohort,
                                                    const std::vector<std::size_t>& idx) {
    std::vector<metrics::PatientEval> evals;
    evals.reserve(idx.size());
    for (std::size_t i : idx) evals.push_back(evaluate_patient(model, cohort.patients[i]));
    return evals;
}

double mean_jaccard(const std::vector<metrics::PatientEval>& evals) {
    std::vector<double> per_patient;
    per_patient.reserve(evals.size());
    for (const metrics::PatientEval& e : evals) per_patient.push_back(metrics::jaccard(e));
    return metrics::cohort_mean(per_patient);
}

void write_train_log(const std::vector<TrainLogEntry>& log, std::ostream& out) {
    out.precision(17);
    for (const TrainLogEntry& e : log) {
        out << "{\"epoch\": " << e.epoch << ", \"patient_index\": " << e.patient_index
            << ", \"patient_id\": \"" << e.patient_id << "\", \"bce\": " << e.loss.bce
            << ", \"multi\": " << e.loss.multi << ", \"ddi\": " << e.loss.ddi
            << ", \"beta\": " << e.loss.beta << ", \"total\": " << e.loss.total
            << ", \"patient_ddi\": " << e.patient_ddi << "}\n";
    }
}

} // namespace drugrec
