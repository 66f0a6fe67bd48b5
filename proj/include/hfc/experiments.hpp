#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hfc/features.hpp"
#include "hfc/nn.hpp"

namespace hfc {

/// One train/test partition over subject indices.
struct Split {
    std::vector<int> train_ids;  // ascending
    std::vector<int> test_ids;   // ascending
    std::uint64_t seed = 0;
    int rejections = 0;
    double train_frac_a = 0.0;  // class fractions on each side; a = smaller
    double train_frac_b = 0.0;  // label value, b = larger
    double test_frac_a = 0.0;
    double test_frac_b = 0.0;
    double train_gap = 0.0;  // |train_frac_a - train_frac_b|
};

/// Uniform draw of ceil(test_fraction*n) test subjects, redrawn under
/// derived seeds until the training side's two class fractions differ by at
/// most balance_tol. The published 429-subject protocol (fraction 0.20) is
/// special-cased to its reported 109/320 partition. 1,000 consecutive
/// rejections raise an infeasibility error.
Split make_split(const std::vector<int>& labels, double test_fraction, double balance_tol,
                 std::uint64_t seed);

struct ConfusionCounts {
    long long tp = 0, tn = 0, fp = 0, fn = 0;
    long long total() const { return tp + tn + fp + fn; }
    double acc() const { return total() ? double(tp + tn) / double(total()) : 0.0; }
    double se() const { return tp + fn ? double(tp) / double(tp + fn) : 0.0; }
    double sp() const { return tn + fp ? double(tn) / double(tn + fp) : 0.0; }
};

/// Mean per-batch softmax cross-entropy sampled every 25 epochs; the epoch-0
/// entry is a no-update evaluation pass over the training set.
struct TrainResult {
    std::vector<std::pair<int, double>> loss_trace;
};

/// Seeded-shuffle epochs over batches of batch_size (final partial batch
/// kept), one Adam step per batch on the batch-mean gradient.
TrainResult train(Model& model, const std::vector<const CorrelationMatrix*>& matrices,
                  const std::vector<int>& labels, int epochs, int batch_size, double lr,
                  std::uint64_t seed);

/// Argmax over the two logits, ties toward class index 0. positive_class
/// selects which label counts as positive (the disease class).
ConfusionCounts evaluate(Model& model, const std::vector<const CorrelationMatrix*>& matrices,
                         const std::vector<int>& labels, int positive_class);

struct ExperimentConfig {
    std::string arch = "net4";
    int epochs = 200;
    int batch_size = 4;
    double lr = 1e-4;
    int repetitions = 30;
    double test_fraction = 0.20;
    double balance_tol = 0.20;
    std::uint64_t master_seed = 1;
    std::string class_a;  // mapped to class index 0
    std::string class_b;  // mapped to class index 1; treated as positive
    int half_length = 50;
    // Extra key=value pairs recorded in the config echo (data provenance).
    std::vector<std::pair<std::string, std::string>> extra_config;
};

struct RepResult {
    int rep = 0;
    std::uint64_t seed = 0;
    int rejections = 0;
    int train_n = 0, test_n = 0;
    ConfusionCounts counts;
    double acc = 0, se = 0, sp = 0;  // percent
    double tp_pct = 0, fn_pct = 0;   // of positives
    double tn_pct = 0, fp_pct = 0;   // of negatives
    std::vector<std::pair<int, double>> loss_trace;
};

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;  // population std over repetitions
};

struct ExperimentReport {
    ExperimentConfig config;
    int matrix_side = 0;
    std::vector<RepResult> reps;
    Aggregate acc, se, sp, tp_pct, fn_pct, tn_pct, fp_pct;
};

/// Per repetition: derive seed, split, fresh init, train, evaluate.
/// Dataset rows not labeled class_a/class_b are ignored.
ExperimentReport run_experiment(const std::vector<CorrelationMatrix>& dataset,
                                const ExperimentConfig& config);

/// Writes summary.csv (one row per repetition plus one aggregate row),
/// loss_rep_NNN.csv traces, and config.txt, a key=value echo sufficient to
/// re-run bit-identically.
void emit_report(const ExperimentReport& report, const std::string& out_dir);

}  // namespace hfc
