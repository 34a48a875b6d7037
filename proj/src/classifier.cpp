#include "vvtrack/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "vvtrack/error.hpp"
#include "vvtrack/textio.hpp"

namespace vvtrack {

void LabeledSet::validate() const {
    if (samples.size() != labels.size()) throw InvalidArgument("labeled set: sample/label count mismatch");
    for (int l : labels)
        if (l < 0 || l >= static_cast<int>(classes.size())) throw InvalidArgument("labeled set: label out of range");
    for (const auto& c : classes)
        if (c.empty() || c.find_first_of(" \t\r\n,") != std::string::npos)
            throw InvalidArgument("class name '" + c + "' must be non-empty without whitespace or commas");
    for (const auto& s : samples)
        if (s.size() != samples.front().size()) throw InvalidArgument("labeled set: samples differ in dimension");
}

double cubic_kernel(const Vec& x, const Vec& y, double c) {
    if (x.size() != y.size()) throw InvalidArgument("cubic_kernel: dimension mismatch");
    const double t = std::inner_product(x.begin(), x.end(), y.begin(), 0.0) + c;
    return t * t * t;
}

void SvmParams::validate() const {
    if (!(C > 0)) throw InvalidArgument("SVM box constraint C must be > 0");
    if (!(c >= 0)) throw InvalidArgument("kernel offset c must be >= 0");
    if (!(tolerance > 0)) throw InvalidArgument("SVM tolerance must be > 0");
    if (max_passes < 1) throw InvalidArgument("SVM max_passes must be >= 1");
}

double BinaryMachine::decision(const Vec& x, double c) const {
    double f = bias;
    for (std::size_t i = 0; i < support.size(); ++i) f += coef[i] * cubic_kernel(support[i], x, c);
    return f;
}

BinaryMachine train_binary(const std::vector<Vec>& x, const std::vector<int>& y, const SvmParams& params,
                           BinaryTrace* trace) {
    params.validate();
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) throw InvalidArgument("train_binary: need >= 2 labeled samples");
    if (std::none_of(y.begin(), y.end(), [](int v) { return v == 1; }) ||
        std::none_of(y.begin(), y.end(), [](int v) { return v == -1; }))
        throw InvalidArgument("train_binary: both +1 and -1 labels required");

    std::vector<double> K(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) K[i * n + j] = K[j * n + i] = cubic_kernel(x[i], x[j], params.c);
    auto Q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * K[i * n + j]; };

    const double C = params.C;
    std::vector<double> alpha(n, 0.0), G(n, -1.0);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(params.seed);
    std::shuffle(order.begin(), order.end(), rng);

    auto in_up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0); };
    auto in_low = [&](std::size_t t) { return (y[t] == 1 && alpha[t] > 0) || (y[t] == -1 && alpha[t] < C); };
    auto dual_objective = [&] {
        double f = 0;
        for (std::size_t t = 0; t < n; ++t) f += alpha[t] * (G[t] - 1.0);
        return -0.5 * f;
    };

    const long budget = params.max_passes * static_cast<long>(n);
    long it = 0;
    double gap = 0;
    std::vector<double> objective;
    for (;; ++it) {
        double m = -std::numeric_limits<double>::infinity(), M = std::numeric_limits<double>::infinity();
        std::size_t i = n, j = n;
        for (std::size_t t : order) {
            const double v = -y[t] * G[t];
            if (in_up(t) && v > m) {
                m = v;
                i = t;
            }
            if (in_low(t) && v < M) {
                M = v;
                j = t;
            }
        }
        gap = m - M;
        if (i == n || j == n || gap < params.tolerance) break;
        if (it >= budget)
            throw ConvergenceError("SMO did not converge within " + std::to_string(params.max_passes) +
                                       " passes (KKT gap " + std::to_string(gap) + ")",
                                   gap, it);

        const double Ci = C, Cj = C;
        const double old_i = alpha[i], old_j = alpha[j];
        if (y[i] != y[j]) {
            double quad = Q(i, i) + Q(j, j) + 2 * Q(i, j);
            if (quad <= 0) quad = 1e-12;
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
            } else {
                if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
            }
            if (diff > Ci - Cj) {
                if (alpha[i] > Ci) { alpha[i] = Ci; alpha[j] = Ci - diff; }
            } else {
                if (alpha[j] > Cj) { alpha[j] = Cj; alpha[i] = Cj + diff; }
            }
        } else {
            double quad = Q(i, i) + Q(j, j) - 2 * Q(i, j);
            if (quad <= 0) quad = 1e-12;
            const double delta = (G[i] - G[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > Ci) {
                if (alpha[i] > Ci) { alpha[i] = Ci; alpha[j] = sum - Ci; }
            } else {
                if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
            }
            if (sum > Cj) {
                if (alpha[j] > Cj) { alpha[j] = Cj; alpha[i] = sum - Cj; }
            } else {
                if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
            }
        }
        const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
        for (std::size_t t = 0; t < n; ++t) G[t] += Q(t, i) * di + Q(t, j) * dj;
        if (trace) objective.push_back(dual_objective());
    }

    // Bias from free vectors, else the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0;
    long n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yG = y[t] * G[t];
        if (alpha[t] >= C) {
            if (y[t] == -1) ub = std::min(ub, yG); else lb = std::max(lb, yG);
        } else if (alpha[t] <= 0) {
            if (y[t] == 1) ub = std::min(ub, yG); else lb = std::max(lb, yG);
        } else {
            ++n_free;
            sum_free += yG;
        }
    }
    const double rho = n_free > 0 ? sum_free / n_free : (ub + lb) / 2;

    BinaryMachine bm;
    bm.bias = -rho;
    for (std::size_t t = 0; t < n; ++t)
        if (alpha[t] > 0) {
            bm.support.push_back(x[t]);
            bm.coef.push_back(alpha[t] * y[t]);
        }
    if (trace) {
        trace->alpha = alpha;
        trace->y = y;
        trace->objective = std::move(objective);
        trace->iterations = it;
        trace->gap = gap;
    }
    return bm;
}

SvmModel train_svm(const LabeledSet& data, const SvmParams& params, std::vector<BinaryTrace>* traces) {
    data.validate();
    params.validate();
    const int k = static_cast<int>(data.classes.size());
    std::vector<long> counts(static_cast<std::size_t>(k), 0);
    for (int l : data.labels) ++counts[static_cast<std::size_t>(l)];
    if (k < 2 || std::count_if(counts.begin(), counts.end(), [](long c) { return c > 0; }) < 2)
        throw InvalidArgument("train_svm: need samples from at least 2 classes");

    SvmModel model;
    model.classes = data.classes;
    model.C = params.C;
    model.c = params.c;
    if (traces) traces->clear();
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) {
            std::vector<Vec> xs;
            std::vector<int> ys;
            for (std::size_t i = 0; i < data.samples.size(); ++i) {
                if (data.labels[i] == a || data.labels[i] == b) {
                    xs.push_back(data.samples[i]);
                    ys.push_back(data.labels[i] == a ? 1 : -1);
                }
            }
            BinaryMachine bm;
            if (counts[static_cast<std::size_t>(a)] == 0 || counts[static_cast<std::size_t>(b)] == 0) {
                // A class absent from this set never wins this pair.
                bm.bias = counts[static_cast<std::size_t>(a)] > 0 ? 1.0 : -1.0;
                if (traces) traces->push_back({});
            } else {
                BinaryTrace t;
                bm = train_binary(xs, ys, params, traces ? &t : nullptr);
                if (traces) traces->push_back(std::move(t));
            }
            bm.positive = a;
            bm.negative = b;
            model.machines.push_back(std::move(bm));
        }
    return model;
}

Prediction predict(const SvmModel& m, const Vec& x) {
    const std::size_t k = m.classes.size();
    Prediction p;
    p.votes.assign(k, 0.0);
    p.margins.assign(k, 0.0);
    for (const auto& bm : m.machines) {
        const double f = bm.decision(x, m.c);
        p.votes[static_cast<std::size_t>(f > 0 ? bm.positive : bm.negative)] += 1;
        p.margins[static_cast<std::size_t>(bm.positive)] += f;
        p.margins[static_cast<std::size_t>(bm.negative)] -= f;
    }
    p.label = 0;
    for (std::size_t c = 1; c < k; ++c) {
        const auto best = static_cast<std::size_t>(p.label);
        if (p.votes[c] > p.votes[best] || (p.votes[c] == p.votes[best] && p.margins[c] > p.margins[best]))
            p.label = static_cast<int>(c);
    }
    return p;
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) throw InvalidArgument("roc_curve: size mismatch");
    const long P = std::count(positive.begin(), positive.end(), true);
    const long N = static_cast<long>(positive.size()) - P;
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<RocPoint> roc{{0, 0}};
    long tp = 0, fp = 0;
    for (std::size_t k = 0; k < idx.size();) {
        const double s = scores[idx[k]];
        while (k < idx.size() && scores[idx[k]] == s) {
            if (positive[idx[k]]) ++tp; else ++fp;
            ++k;
        }
        roc.push_back({N > 0 ? double(fp) / N : 1.0, P > 0 ? double(tp) / P : 1.0});
    }
    if (roc.back().fpr != 1.0 || roc.back().tpr != 1.0) roc.push_back({1, 1});
    return roc;
}

double roc_auc(const std::vector<RocPoint>& roc) {
    double a = 0;
    for (std::size_t i = 1; i < roc.size(); ++i)
        a += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2;
    return a;
}

EvalReport evaluate_predictions(const std::vector<std::string>& classes, const std::vector<int>& truth,
                                const std::vector<Prediction>& predictions) {
    if (truth.size() != predictions.size()) throw InvalidArgument("evaluate_predictions: size mismatch");
    const std::size_t k = classes.size();
    EvalReport r;
    r.classes = classes;
    r.confusion.assign(k, std::vector<long>(k, 0));
    long correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predictions[i].label)];
        correct += truth[i] == predictions[i].label;
    }
    r.accuracy = truth.empty() ? 0.0 : double(correct) / double(truth.size());
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> scores;
        std::vector<bool> pos;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            scores.push_back(predictions[i].margins[c]);
            pos.push_back(truth[i] == static_cast<int>(c));
        }
        r.roc.push_back(roc_curve(scores, pos));
        r.auc.push_back(roc_auc(r.roc.back()));
    }
    return r;
}

EvalReport cross_validate(const LabeledSet& data, int folds, const SvmParams& params) {
    data.validate();
    if (folds < 2) throw InvalidArgument("cross_validate: folds must be >= 2");
    const std::size_t k = data.classes.size();
    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t i = 0; i < data.labels.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    std::mt19937_64 rng(params.seed);
    std::vector<int> fold_of(data.samples.size(), 0);
    for (std::size_t c = 0; c < k; ++c) {
        if (static_cast<int>(by_class[c].size()) < folds)
            throw InvalidArgument("cross_validate: class '" + data.classes[c] + "' has " +
                                  std::to_string(by_class[c].size()) + " samples for " + std::to_string(folds) + " folds");
        std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
        for (std::size_t p = 0; p < by_class[c].size(); ++p) fold_of[by_class[c][p]] = static_cast<int>(p % static_cast<std::size_t>(folds));
    }
    std::vector<int> truth;
    std::vector<Prediction> preds;
    for (int f = 0; f < folds; ++f) {
        LabeledSet train{{}, {}, data.classes};
        for (std::size_t i = 0; i < data.samples.size(); ++i)
            if (fold_of[i] != f) {
                train.samples.push_back(data.samples[i]);
                train.labels.push_back(data.labels[i]);
            }
        const SvmModel m = train_svm(train, params);
        for (std::size_t i = 0; i < data.samples.size(); ++i)
            if (fold_of[i] == f) {
                truth.push_back(data.labels[i]);
                preds.push_back(predict(m, data.samples[i]));
            }
    }
    return evaluate_predictions(data.classes, truth, preds);
}

std::string save_svm(const SvmModel& m) {
    std::ostringstream out;
    out << "vvtrack-svm v1\n";
    out << "classes " << m.classes.size();
    for (const auto& c : m.classes) out << ' ' << c;
    out << '\n';
    out << "params " << format_double(m.C) << ' ' << format_double(m.c) << '\n';
    out << "machines " << m.machines.size() << '\n';
    for (const auto& bm : m.machines) {
        const std::size_t dim = bm.support.empty() ? 0 : bm.support.front().size();
        out << "machine " << bm.positive << ' ' << bm.negative << ' ' << bm.support.size() << ' ' << dim << ' '
            << format_double(bm.bias) << '\n';
        for (std::size_t i = 0; i < bm.support.size(); ++i) {
            out << "sv " << format_double(bm.coef[i]);
            for (double v : bm.support[i]) out << ' ' << format_double(v);
            out << '\n';
        }
    }
    return out.str();
}

SvmModel load_svm(std::istream& in, const std::string& source) {
    LineReader r(in, source);
    r.expect_header("vvtrack-svm", 1);
    SvmModel m;
    auto cls = r.expect("classes");
    if (cls.empty()) r.fail("classes needs a count");
    const long k = LineReader::to_long(cls[0]);
    if (k < 2 || static_cast<long>(cls.size()) != k + 1) r.fail("bad class list");
    m.classes.assign(cls.begin() + 1, cls.end());
    auto params = r.expect("params");
    if (params.size() != 2) r.fail("params needs C and c");
    m.C = parse_double(params[0]);
    m.c = parse_double(params[1]);
    const auto nm = r.expect("machines");
    if (nm.size() != 1) r.fail("machines needs a count");
    const long machines = LineReader::to_long(nm[0]);
    if (machines != k * (k - 1) / 2) r.fail("machine count does not match class count");
    for (long q = 0; q < machines; ++q) {
        const auto h = r.expect("machine");
        if (h.size() != 5) r.fail("machine header needs 5 values");
        BinaryMachine bm;
        bm.positive = static_cast<int>(LineReader::to_long(h[0]));
        bm.negative = static_cast<int>(LineReader::to_long(h[1]));
        if (bm.positive < 0 || bm.negative < 0 || bm.positive >= k || bm.negative >= k) r.fail("machine class out of range");
        const long nsv = LineReader::to_long(h[2]), dim = LineReader::to_long(h[3]);
        if (nsv < 0 || dim < 0 || nsv > 10'000'000 || dim > 1'000'000) r.fail("bad machine size");
        bm.bias = parse_double(h[4]);
        for (long s = 0; s < nsv; ++s) {
            const auto t = r.expect("sv");
            if (static_cast<long>(t.size()) != dim + 1) r.fail("support vector has wrong dimension");
            bm.coef.push_back(parse_double(t[0]));
            Vec v;
            for (std::size_t j = 1; j < t.size(); ++j) v.push_back(parse_double(t[j]));
            bm.support.push_back(std::move(v));
        }
        m.machines.push_back(std::move(bm));
    }
    return m;
}

std::string confusion_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "truth\\predicted";
    for (const auto& c : r.classes) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < r.classes.size(); ++i) {
        out << r.classes[i];
        for (long v : r.confusion[i]) out << ',' << v;
        out << '\n';
    }
    return out.str();
}

std::string roc_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "class,fpr,tpr\n";
    for (std::size_t c = 0; c < r.classes.size(); ++c)
        for (const auto& p : r.roc[c]) out << r.classes[c] << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
    return out.str();
}

}  // namespace vvtrack
