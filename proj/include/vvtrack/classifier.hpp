#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "vvtrack/vocabulary.hpp"

namespace vvtrack {

struct LabeledSet {
    std::vector<Vec> samples;
    std::vector<int> labels;           // indices into classes
    std::vector<std::string> classes;  // no whitespace in names

    void validate() const;
};

// (x.y + c)^3
double cubic_kernel(const Vec& x, const Vec& y, double c);

struct SvmParams {
    double C = 1.0;
    double c = 1.0;
    double tolerance = 1e-3;   // KKT gap m - M
    long max_passes = 10000;   // iteration budget is max_passes * n
    std::uint64_t seed = 0;    // orders tied working-pair candidates

    void validate() const;
};

// f(x) = sum_i coef_i K(sv_i, x) + bias; positive means `positive` class.
struct BinaryMachine {
    int positive = 0, negative = 1;
    std::vector<Vec> support;
    std::vector<double> coef;  // alpha_i y_i
    double bias = 0;

    double decision(const Vec& x, double c) const;
};

struct SvmModel {
    std::vector<std::string> classes;
    double C = 1.0, c = 1.0;
    std::vector<BinaryMachine> machines;  // pairs (a,b), a < b, in lexicographic order
};

// Full dual state of one binary SMO run, for invariant checks.
struct BinaryTrace {
    std::vector<double> alpha;
    std::vector<int> y;  // +1 / -1
    std::vector<double> objective;  // dual objective after each accepted pair update
    long iterations = 0;
    double gap = 0;     // final m - M
};

// Labels are +1/-1. Throws ConvergenceError when the budget runs out.
BinaryMachine train_binary(const std::vector<Vec>& x, const std::vector<int>& y, const SvmParams& params,
                           BinaryTrace* trace = nullptr);

// One-vs-one machines over every class pair.
SvmModel train_svm(const LabeledSet& data, const SvmParams& params = {},
                   std::vector<BinaryTrace>* traces = nullptr);

struct Prediction {
    int label = -1;
    std::vector<double> votes;    // per class
    std::vector<double> margins;  // per class, summed signed decisions in the class's favour
};

Prediction predict(const SvmModel& m, const Vec& x);

struct RocPoint {
    double fpr = 0, tpr = 0;
};

// Threshold sweep over descending scores; tied scores move together. Starts at (0,0), ends at (1,1).
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<bool>& positive);
double roc_auc(const std::vector<RocPoint>& roc);

struct EvalReport {
    std::vector<std::string> classes;
    std::vector<std::vector<long>> confusion;  // [truth][predicted]
    double accuracy = 0;
    std::vector<std::vector<RocPoint>> roc;    // class-vs-rest on summed margins
    std::vector<double> auc;
};

EvalReport evaluate_predictions(const std::vector<std::string>& classes, const std::vector<int>& truth,
                                const std::vector<Prediction>& predictions);

// Stratified k-fold with a seeded shuffle per class.
EvalReport cross_validate(const LabeledSet& data, int folds, const SvmParams& params = {});

std::string save_svm(const SvmModel& m);
SvmModel load_svm(std::istream& in, const std::string& source = "<stream>");

std::string confusion_csv(const EvalReport& r);
std::string roc_csv(const EvalReport& r);

}  // namespace vvtrack
