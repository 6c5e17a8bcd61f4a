#ifndef DRUGREC_TRAIN_HPP
#define DRUGREC_TRAIN_HPP

#include <map>
#include <string>
#include <vector>

#include "drugrec/data.hpp"
#include "drugrec/loss.hpp"
#include "drugrec/metrics.hpp"
#include "drugrec/model.hpp"
#include "drugrec/optim.hpp"

namespace drugrec {

struct TrainConfig {
    ModelConfig model;
    LossConfig loss;
    double learning_rate = 2e-4;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0; // epochs between epoch_<n>.ckpt files; 0 = off
    bool check_finite = false;        // tape-level NaN/Inf screen

    void validate() const;
};

/// Copies cohort vocabulary sizes into the model config.
void bind_vocab(ModelConfig& cfg, const data::Cohort& cohort);

struct TrainLogEntry {
    std::size_t epoch = 0;
    std::size_t patient_index = 0; // position within the shuffled epoch
    std::string patient_id;
    LossBreakdown loss;
    double patient_ddi = 0.0;
    double wall_ms = 0.0; // diagnostic only; kept out of serialized logs
};

/// One pass over the training patients in seeded shuffled order: the drug
/// memory is refreshed per patient, visits run sequentially through the
/// shared state, per-visit losses are averaged, the controller picks beta
/// from the thresholded predictions, and one optimizer step is taken per
/// patient.
std::vector<TrainLogEntry> train_epoch(Model& model, Adam& optimizer,
                                       const data::Cohort& cohort,
                                       const std::vector<std::size_t>& train_idx,
                                       const TrainConfig& cfg, std::size_t epoch);

struct FitResult {
    std::size_t best_epoch = 0;            // 1-based
    double best_val_jaccard = 0.0;
    std::map<std::string, Tensor> best_params;
    std::vector<TrainLogEntry> log;
    std::vector<double> epoch_mean_loss;
    std::vector<double> epoch_val_jaccard;
};

/// Trains for cfg.epochs, scoring validation Jaccard after each epoch and
/// retaining the best parameters (ties go to the earlier epoch). The model
/// is left at its final-epoch state; restore best_params for evaluation.
FitResult fit(Model& model, Adam& optimizer, const data::Cohort& cohort,
              const data::Split& split, const TrainConfig& cfg,
              const std::string& checkpoint_dir = "");

struct VisitPrediction {
    std::vector<double> scores;
    BitVec recommended;
};

/// Eval-mode scores and thresholded sets for every prefix of the history.
std::vector<VisitPrediction> infer(const Model& model,
                                   const std::vector<data::Visit>& history);

metrics::PatientEval evaluate_patient(const Model& model, const data::PatientRecord& rec);

std::vector<metrics::PatientEval> evaluate_patients(const Model& model,
                                                    const data::Cohort& cohort,
                                                    const std::vector<std::size_t>& idx);

/// Cohort-mean validation metric used for model selection.
double mean_jaccard(const std::vector<metrics::PatientEval>& evals);

void write_train_log(const std::vector<TrainLogEntry>& log, std::ostream& out);

// ---- checkpoints ----

struct Checkpoint {
    int version = 1;
    TrainConfig config;
    std::vector<chem::DrugEntry> drugs; // rebuilds molecules and mask on load
    std::vector<std::string> atom_vocab;
    std::map<std::string, Tensor> params;
    std::size_t adam_step = 0;
    std::map<std::string, Tensor> adam_m;
    std::map<std::string, Tensor> adam_v;
    std::size_t epoch = 0;
    double val_jaccard = 0.0;
};

Checkpoint make_checkpoint(const Model& model, const Adam& optimizer,
                           const TrainConfig& cfg,
                           const std::vector<chem::DrugEntry>& drugs,
                           std::size_t epoch, double val_jaccard);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Reconstructs the model (molecules, mask, parameters) from a checkpoint.
Model model_from_checkpoint(const Checkpoint& ckpt);

/// Raises VocabMismatchError unless checkpoint and cohort vocabularies agree.
void require_vocab_match(const Checkpoint& ckpt, const data::Cohort& cohort);

std::string train_config_json(const TrainConfig& cfg);

} // namespace drugrec

#endif
