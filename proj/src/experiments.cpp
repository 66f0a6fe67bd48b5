#include "hfc/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hfc/common.hpp"

namespace hfc {

namespace {

constexpr int kMaxSplitRejections = 1000;
constexpr int kLossSampleInterval = 25;

void check_dataset(const std::vector<const CorrelationMatrix*>& mats,
                   const std::vector<int>& labels, const Model& model) {
    if (mats.empty()) throw config_error("empty training or evaluation set");
    if (mats.size() != labels.size()) throw config_error("matrix/label count mismatch");
    std::size_t want = model.input_shape().count();
    for (std::size_t i = 0; i < mats.size(); ++i) {
        if (!mats[i] || mats[i]->values.size() != want)
            throw config_error("matrix " + std::to_string(i) + " does not match the model input");
        if (labels[i] < 0 || labels[i] >= model.num_classes())
            throw config_error("label " + std::to_string(labels[i]) + " out of range");
    }
}

}  // namespace

Split make_split(const std::vector<int>& labels, double test_fraction, double balance_tol,
                 std::uint64_t seed) {
    int n = int(labels.size());
    if (n < 10) throw config_error("make_split: need at least 10 subjects, got " + std::to_string(n));
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw config_error("make_split: test_fraction must lie in (0, 1)");
    if (!(balance_tol >= 0.0)) throw config_error("make_split: balance_tol must be >= 0");

    int va = labels[0], vb = labels[0];
    for (int l : labels) {
        va = std::min(va, l);
        vb = std::max(vb, l);
    }
    if (va == vb) throw config_error("make_split: need two classes, found one");
    for (int l : labels)
        if (l != va && l != vb)
            throw config_error("make_split: more than two classes in the label set");

    // The 109/320 partition reported for the 429-subject protocol is kept
    // verbatim even though it is not ceil(0.20*429).
    int test_n;
    if (n == 429 && test_fraction == 0.20) {
        test_n = 109;
    } else {
        test_n = int(std::ceil(test_fraction * double(n)));
        test_n = std::clamp(test_n, 1, n - 1);
    }

    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[std::size_t(i)] = i;

    for (int attempt = 0; attempt < kMaxSplitRejections; ++attempt) {
        Rng rng(derive_seed(seed, std::uint64_t(attempt)));
        rng.shuffle(perm);
        Split s;
        s.seed = seed;
        s.rejections = attempt;
        s.test_ids.assign(perm.begin(), perm.begin() + test_n);
        s.train_ids.assign(perm.begin() + test_n, perm.end());
        std::sort(s.test_ids.begin(), s.test_ids.end());
        std::sort(s.train_ids.begin(), s.train_ids.end());

        long long ca = 0, cb = 0, ta = 0, tb = 0;
        for (int id : s.train_ids) (labels[std::size_t(id)] == va ? ca : cb) += 1;
        for (int id : s.test_ids) (labels[std::size_t(id)] == va ? ta : tb) += 1;
        double train_total = double(s.train_ids.size());
        double test_total = double(s.test_ids.size());
        s.train_frac_a = double(ca) / train_total;
        s.train_frac_b = double(cb) / train_total;
        s.test_frac_a = double(ta) / test_total;
        s.test_frac_b = double(tb) / test_total;
        s.train_gap = std::abs(s.train_frac_a - s.train_frac_b);
        if (s.train_gap <= balance_tol) return s;
    }
    throw infeasible_error("make_split: no class-balanced split after " +
                           std::to_string(kMaxSplitRejections) + " attempts (tolerance " +
                           g17(balance_tol) + ")");
}

TrainResult train(Model& model, const std::vector<const CorrelationMatrix*>& matrices,
                  const std::vector<int>& labels, int epochs, int batch_size, double lr,
                  std::uint64_t seed) {
    check_dataset(matrices, labels, model);
    if (epochs < 0) throw config_error("train: epochs must be >= 0");
    if (batch_size < 1) throw config_error("train: batch_size must be >= 1");
    if (!(lr > 0.0)) throw config_error("train: learning rate must be positive");

    TrainResult result;
    std::size_t n = matrices.size();

    double loss0 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        loss0 += softmax_ce(model.forward(matrices[i]->values), labels[i]);
    result.loss_trace.emplace_back(0, loss0 / double(n));

    Rng rng(seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<double> dlogits;

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < n; start += std::size_t(batch_size)) {
            std::size_t end = std::min(n, start + std::size_t(batch_size));
            model.zero_grads();
            double batch_loss = 0.0;
            for (std::size_t b = start; b < end; ++b) {
                std::size_t i = order[b];
                batch_loss += softmax_ce(model.forward(matrices[i]->values), labels[i], &dlogits);
                model.backward(dlogits);
            }
            double inv = 1.0 / double(end - start);
            model.adam_step(lr, inv);
            epoch_loss += batch_loss * inv;
            ++batches;
        }
        if (epoch % kLossSampleInterval == 0)
            result.loss_trace.emplace_back(epoch, epoch_loss / double(batches));
    }
    return result;
}

ConfusionCounts evaluate(Model& model, const std::vector<const CorrelationMatrix*>& matrices,
                         const std::vector<int>& labels, int positive_class) {
    check_dataset(matrices, labels, model);
    if (model.num_classes() != 2) throw config_error("evaluate: model is not a binary classifier");
    if (positive_class != 0 && positive_class != 1)
        throw config_error("evaluate: positive_class must be 0 or 1");

    ConfusionCounts c;
    for (std::size_t i = 0; i < matrices.size(); ++i) {
        const std::vector<double>& logits = model.forward(matrices[i]->values);
        int pred = logits[1] > logits[0] ? 1 : 0;  // tie resolves to class 0
        bool pp = pred == positive_class;
        bool ap = labels[i] == positive_class;
        if (pp && ap)
            ++c.tp;
        else if (pp && !ap)
            ++c.fp;
        else if (!pp && ap)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

namespace {

Aggregate aggregate_of(const std::vector<double>& xs) {
    Aggregate a;
    if (xs.empty()) return a;
    for (double v : xs) a.mean += v;
    a.mean /= double(xs.size());
    double ss = 0.0;
    for (double v : xs) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / double(xs.size()));
    return a;
}

}  // namespace

ExperimentReport run_experiment(const std::vector<CorrelationMatrix>& dataset,
                                const ExperimentConfig& config) {
    if (config.repetitions < 1) throw config_error("run_experiment: repetitions must be >= 1");
    if (config.class_a.empty() || config.class_b.empty() || config.class_a == config.class_b)
        throw config_error("run_experiment: need two distinct class names");

    std::vector<const CorrelationMatrix*> mats;
    std::vector<int> labels;
    for (const CorrelationMatrix& m : dataset) {
        if (m.label == config.class_a) {
            mats.push_back(&m);
            labels.push_back(0);
        } else if (m.label == config.class_b) {
            mats.push_back(&m);
            labels.push_back(1);
        }
    }
    if (mats.empty()) throw config_error("run_experiment: no subjects match the class pair");
    int side = mats.front()->r;
    for (const CorrelationMatrix* m : mats)
        if (m->r != side || m->values.size() != std::size_t(side) * std::size_t(side))
            throw config_error("run_experiment: matrices have mixed sizes");

    ExperimentReport report;
    report.config = config;
    report.matrix_side = side;

    std::vector<double> accs, ses, sps, tps, fns, tns, fps;
    for (int rep = 1; rep <= config.repetitions; ++rep) {
        std::uint64_t rep_seed = derive_seed(config.master_seed, std::uint64_t(rep));
        Split split = make_split(labels, config.test_fraction, config.balance_tol,
                                 derive_seed(rep_seed, 1));

        std::vector<const CorrelationMatrix*> train_m, test_m;
        std::vector<int> train_l, test_l;
        for (int id : split.train_ids) {
            train_m.push_back(mats[std::size_t(id)]);
            train_l.push_back(labels[std::size_t(id)]);
        }
        for (int id : split.test_ids) {
            test_m.push_back(mats[std::size_t(id)]);
            test_l.push_back(labels[std::size_t(id)]);
        }

        Model model = build_model(config.arch, side);
        init_weights(model, derive_seed(rep_seed, 2));
        TrainResult tr = train(model, train_m, train_l, config.epochs, config.batch_size,
                               config.lr, derive_seed(rep_seed, 3));
        ConfusionCounts counts = evaluate(model, test_m, test_l, 1);

        RepResult r;
        r.rep = rep;
        r.seed = rep_seed;
        r.rejections = split.rejections;
        r.train_n = int(train_m.size());
        r.test_n = int(test_m.size());
        r.counts = counts;
        r.acc = 100.0 * counts.acc();
        r.se = 100.0 * counts.se();
        r.sp = 100.0 * counts.sp();
        long long pos = counts.tp + counts.fn, neg = counts.tn + counts.fp;
        r.tp_pct = pos ? 100.0 * double(counts.tp) / double(pos) : 0.0;
        r.fn_pct = pos ? 100.0 * double(counts.fn) / double(pos) : 0.0;
        r.tn_pct = neg ? 100.0 * double(counts.tn) / double(neg) : 0.0;
        r.fp_pct = neg ? 100.0 * double(counts.fp) / double(neg) : 0.0;
        r.loss_trace = std::move(tr.loss_trace);

        accs.push_back(r.acc);
        ses.push_back(r.se);
        sps.push_back(r.sp);
        tps.push_back(r.tp_pct);
        fns.push_back(r.fn_pct);
        tns.push_back(r.tn_pct);
        fps.push_back(r.fp_pct);
        report.reps.push_back(std::move(r));
    }

    report.acc = aggregate_of(accs);
    report.se = aggregate_of(ses);
    report.sp = aggregate_of(sps);
    report.tp_pct = aggregate_of(tps);
    report.fn_pct = aggregate_of(fns);
    report.tn_pct = aggregate_of(tns);
    report.fp_pct = aggregate_of(fps);
    return report;
}

void emit_report(const ExperimentReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create output directory " + out_dir + ": " + ec.message());

    {
        std::ofstream f(out_dir + "/summary.csv");
        if (!f) throw io_error("cannot open " + out_dir + "/summary.csv for writing");
        f << "row,seed,rejections,train_n,test_n,tp,tn,fp,fn,acc,se,sp,"
             "tp_pct,fn_pct,tn_pct,fp_pct,acc_std,se_std,sp_std\n";
        for (const RepResult& r : report.reps) {
            char tag[16];
            std::snprintf(tag, sizeof tag, "rep_%03d", r.rep);
            f << tag << "," << r.seed << "," << r.rejections << "," << r.train_n << ","
              << r.test_n << "," << r.counts.tp << "," << r.counts.tn << "," << r.counts.fp << ","
              << r.counts.fn << "," << g17(r.acc) << "," << g17(r.se) << "," << g17(r.sp) << ","
              << g17(r.tp_pct) << "," << g17(r.fn_pct) << "," << g17(r.tn_pct) << ","
              << g17(r.fp_pct) << ",,,\n";
        }
        f << "aggregate,,,,,,,,," << g17(report.acc.mean) << "," << g17(report.se.mean) << ","
          << g17(report.sp.mean) << "," << g17(report.tp_pct.mean) << ","
          << g17(report.fn_pct.mean) << "," << g17(report.tn_pct.mean) << ","
          << g17(report.fp_pct.mean) << "," << g17(report.acc.stddev) << ","
          << g17(report.se.stddev) << "," << g17(report.sp.stddev) << "\n";
        if (!f) throw io_error("failed writing " + out_dir + "/summary.csv");
    }

    for (const RepResult& r : report.reps) {
        char name[32];
        std::snprintf(name, sizeof name, "/loss_rep_%03d.csv", r.rep);
        std::ofstream f(out_dir + name);
        if (!f) throw io_error("cannot open " + out_dir + name + " for writing");
        f << "epoch,loss\n";
        for (const auto& [epoch, loss] : r.loss_trace) f << epoch << "," << g17(loss) << "\n";
        if (!f) throw io_error("failed writing " + out_dir + name);
    }

    {
        std::ofstream f(out_dir + "/config.txt");
        if (!f) throw io_error("cannot open " + out_dir + "/config.txt for writing");
        f << "[train-eval]\n";
        f << "arch=" << report.config.arch << "\n";
        f << "half-length=" << report.config.half_length << "\n";
        f << "epochs=" << report.config.epochs << "\n";
        f << "batch=" << report.config.batch_size << "\n";
        f << "lr=" << g17(report.config.lr) << "\n";
        f << "reps=" << report.config.repetitions << "\n";
        f << "test-fraction=" << g17(report.config.test_fraction) << "\n";
        f << "balance-tol=" << g17(report.config.balance_tol) << "\n";
        f << "seed=" << report.config.master_seed << "\n";
        f << "class-a=" << report.config.class_a << "\n";
        f << "class-b=" << report.config.class_b << "\n";
        for (const auto& [k, v] : report.config.extra_config) f << k << "=" << v << "\n";
        if (!f) throw io_error("failed writing " + out_dir + "/config.txt");
    }
}

}  // namespace hfc
