#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "canopy/errors.hpp"
#include "canopy/random.hpp"
#include "canopy/select.hpp"

namespace canopy {
namespace {

// Exact running sum as non-overlapping partials (Shewchuk), rounded once.
class ExactSum {
public:
    void add(double x) {
        std::size_t i = 0;
        for (double y : partials_) {
            if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
            const double hi = x + y;
            const double lo = y - (hi - x);
            if (lo != 0.0) partials_[i++] = lo;
            x = hi;
        }
        partials_.resize(i);
        partials_.push_back(x);
    }

    double value() const {
        if (partials_.empty()) return 0.0;
        std::size_t n = partials_.size();
        double hi = partials_[--n];
        double lo = 0.0;
        while (n > 0) {
            const double x = hi;
            const double y = partials_[--n];
            hi = x + y;
            lo = y - (hi - x);
            if (lo != 0.0) break;
        }
        if (n > 0 && ((lo < 0 && partials_[n - 1] < 0) || (lo > 0 && partials_[n - 1] > 0))) {
            const double y = lo * 2;
            const double x = hi + y;
            if (y == x - hi) hi = x;
        }
        return hi;
    }

private:
    std::vector<double> partials_;
};

struct ErrorStats {
    double mean = 0.0;
    double sd = 0.0;
    std::vector<double> values;
};

ErrorStats replicate_oob(const Dataset& ds, const ForestParams& params, std::vector<int> vars, int nrep,
                         std::uint64_t seed, std::uint64_t stream, int workers) {
    ErrorStats s;
    TrainOptions topts;
    topts.workers = workers;
    ForestParams fp = params;
    fp.variables = std::move(vars);
    for (int r = 0; r < nrep; ++r) {
        fp.seed = derive_seed(seed, {stream, static_cast<std::uint64_t>(r)});
        const Forest f = train_forest(ds, fp, topts);
        s.values.push_back(oob_error(f, ds).error);
    }
    double sum = 0;
    for (double v : s.values) sum += v;
    s.mean = sum / nrep;
    if (nrep > 1) {
        double ss = 0;
        for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
        s.sd = std::sqrt(ss / (nrep - 1));
    }
    return s;
}

std::string join_names(const std::vector<int>& vars, const std::vector<std::string>& names) {
    std::string out;
    for (int j : vars) {
        if (!out.empty()) out += ", ";
        out += names[static_cast<std::size_t>(j)];
    }
    return out.empty() ? "(none)" : out;
}

}  // namespace

ThresholdResult threshold_step(const ImportanceReport& report, std::uint64_t seed, int folds) {
    if (!report.sd_defined) throw ArgumentError("thresholding needs importance replicated at least twice");
    if (folds < 2) throw ArgumentError("folds must be at least 2");
    const std::size_t G = report.ranking.size();
    if (G == 0) throw ArgumentError("empty importance report");

    ThresholdResult res;
    Column rank{"rank", ColumnKind::numeric(), {}, std::vector<std::uint8_t>(G, 0), {}};
    Target sd{"sd", Task::regression, {}, {}, {}};
    for (std::size_t r = 0; r < G; ++r) {
        rank.values.push_back(static_cast<double>(r + 1));
        sd.y.push_back(report.sd[static_cast<std::size_t>(report.ranking[r])]);
    }
    const Dataset ds({std::move(rank)}, std::move(sd));
    Tree tree;
    if (G >= 2) {
        tree = select_subtree_cv(ds, cart_defaults(), std::min<int>(folds, static_cast<int>(G)), CvRule::one_se, seed)
                   .tree;
    } else {
        GrowParams gp = cart_defaults();
        gp.min_node_size = 2;
        tree = grow_maximal(ds, gp);
    }
    res.leaves = tree.leaf_count();
    res.threshold = std::numeric_limits<double>::infinity();
    for (const auto& nd : tree.nodes())
        if (nd.is_leaf()) res.threshold = std::min(res.threshold, nd.value);
    for (std::size_t r = 0; r < G; ++r) res.fitted.push_back(tree.predict(ds, r));
    for (int g : report.ranking)
        if (report.mean[static_cast<std::size_t>(g)] > res.threshold) res.kept.push_back(g);
    if (res.kept.empty()) {
        res.fallback = true;
        res.kept.push_back(report.ranking.front());
    }
    return res;
}

std::size_t interpretation_choice(std::span<const CurvePoint> curve, std::size_t* argmin) {
    if (curve.empty()) throw ArgumentError("empty curve");
    std::size_t best = 0;
    for (std::size_t k = 1; k < curve.size(); ++k)
        if (curve[k].mean < curve[best].mean) best = k;
    if (argmin) *argmin = best + 1;
    const double bound = curve[best].mean + curve[best].sd;
    for (std::size_t k = 0; k < curve.size(); ++k)
        if (curve[k].mean <= bound) return k + 1;
    return best + 1;
}

InterpretationResult interpretation_step(const Dataset& ds, const std::vector<int>& kept, const ForestParams& params,
                                         int nrep, std::uint64_t seed, const SelectOptions& options) {
    if (kept.empty()) throw ArgumentError("no variables to interpret");
    if (nrep < 1) throw ArgumentError("nrep must be at least 1");
    InterpretationResult res;
    const std::size_t m = kept.size();
    for (std::size_t k = 1; k <= m; ++k) {
        std::vector<int> vars(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(k));
        auto s = replicate_oob(ds, params, std::move(vars), nrep, seed, k, options.workers);
        res.curve.push_back(CurvePoint{k, kept[k - 1], s.mean, s.sd, std::move(s.values)});
        if (options.progress) options.progress("interpretation", k, m);
    }
    const std::size_t chosen = interpretation_choice(res.curve, &res.argmin);
    res.selected.assign(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(chosen));
    return res;
}

double mean_jump_threshold(std::span<const double> errors, std::size_t m_prime) {
    const std::size_t m = errors.size();
    if (m_prime < 1 || m_prime > m) throw ArgumentError("m' must lie in 1..m");
    if (m_prime == m) return 0.0;
    ExactSum sum;
    for (std::size_t j = m_prime; j < m; ++j) {
        const double a = errors[j];
        const double b = errors[j - 1];
        double hi = a - b;
        const double bb = hi - a;
        double lo = (a - (hi - bb)) + (-b - bb);
        if (hi < 0 || (hi == 0 && lo < 0)) {
            hi = -hi;
            lo = -lo;
        }
        sum.add(hi);
        sum.add(lo);
    }
    return sum.value() / static_cast<double>(m - m_prime);
}

PredictionResult prediction_step(const Dataset& ds, const std::vector<int>& interpretation,
                                 std::span<const double> curve, const ForestParams& params, int nrep,
                                 std::uint64_t seed, const SelectOptions& options) {
    if (interpretation.empty()) throw ArgumentError("empty interpretation set");
    if (nrep < 1) throw ArgumentError("nrep must be at least 1");
    const std::size_t mp = interpretation.size();
    if (curve.size() < mp) throw ArgumentError("curve shorter than the interpretation set");
    PredictionResult res;
    res.threshold_fallback = mp == curve.size();
    res.threshold = mean_jump_threshold(curve, mp);

    double current = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < mp; ++s) {
        std::vector<int> vars = res.selected;
        vars.push_back(interpretation[s]);
        const auto e = replicate_oob(ds, params, vars, nrep, seed, s + 1, options.workers);
        PathPoint pt{interpretation[s], e.mean, e.sd, false};
        if (e.mean < current - res.threshold) {
            pt.added = true;
            res.selected = std::move(vars);
            current = e.mean;
        }
        res.path.push_back(pt);
        if (options.progress) options.progress("prediction", s + 1, mp);
    }
    return res;
}

std::string to_string(SelectSteps s) {
    switch (s) {
        case SelectSteps::threshold: return "threshold";
        case SelectSteps::interpretation: return "interpretation";
        case SelectSteps::full: return "full";
    }
    return "full";
}

SelectSteps parse_select_steps(const std::string& text) {
    if (text == "threshold") return SelectSteps::threshold;
    if (text == "interpretation") return SelectSteps::interpretation;
    if (text == "full") return SelectSteps::full;
    throw ArgumentError("unknown selection steps: " + text);
}

SelectionReport vsurf(const Dataset& ds, const VsurfParams& params, std::uint64_t seed, const SelectOptions& options) {
    if (ds.degenerate()) throw DegenerateError("dataset has no rows or a single class");
    SelectionReport r;
    r.steps = params.steps;
    r.seed = seed;
    r.seed_importance = derive_seed(seed, {1});
    r.seed_threshold = derive_seed(seed, {2});
    r.seed_interpretation = derive_seed(seed, {3});
    r.seed_prediction = derive_seed(seed, {4});
    for (std::size_t j = 0; j < ds.p(); ++j) r.names.push_back(ds.column(j).name);

    ImportanceOptions iopts;
    iopts.nrep = params.nrep_vi;
    iopts.workers = options.workers;
    if (options.progress)
        iopts.progress = [&](int done, int total) {
            options.progress("importance", static_cast<std::size_t>(done), static_cast<std::size_t>(total));
        };
    r.importance = replicated_importance(ds, params.forest, r.seed_importance, iopts);
    r.threshold = threshold_step(r.importance, r.seed_threshold, params.folds);
    if (params.steps == SelectSteps::threshold) return r;

    r.interpretation = interpretation_step(ds, r.threshold.kept, params.forest, params.nrep_interp,
                                           r.seed_interpretation, options);
    if (params.steps == SelectSteps::interpretation) return r;

    std::vector<double> curve;
    for (const auto& c : r.interpretation.curve) curve.push_back(c.mean);
    r.prediction = prediction_step(ds, r.interpretation.selected, curve, params.forest, params.nrep_interp,
                                   r.seed_prediction, options);
    return r;
}

std::string selection_text(const SelectionReport& r) {
    std::ostringstream out;
    out << "steps: " << to_string(r.steps) << '\n';
    out << "seed: " << r.seed << '\n';
    out << "seed.importance: " << r.seed_importance << '\n';
    out << "seed.threshold: " << r.seed_threshold << '\n';
    out << "seed.interpretation: " << r.seed_interpretation << '\n';
    out << "seed.prediction: " << r.seed_prediction << '\n';
    out << "importance.nrep: " << r.importance.nrep() << '\n';
    out << "importance.trees_skipped: " << r.importance.trees_skipped << '\n';
    std::vector<int> ranking(r.importance.ranking.begin(), r.importance.ranking.end());
    out << "ranking: " << join_names(ranking, r.names) << '\n';
    out << "threshold.value: " << format_double(r.threshold.threshold) << '\n';
    out << "threshold.tree_leaves: " << r.threshold.leaves << '\n';
    out << "threshold.fallback: " << (r.threshold.fallback ? "yes" : "no") << '\n';
    out << "kept.size: " << r.threshold.kept.size() << '\n';
    out << "kept: " << join_names(r.threshold.kept, r.names) << '\n';
    if (r.steps == SelectSteps::threshold) return out.str();
    out << "interpretation.argmin_k: " << r.interpretation.argmin << '\n';
    out << "interpretation.size: " << r.interpretation.selected.size() << '\n';
    out << "interpretation: " << join_names(r.interpretation.selected, r.names) << '\n';
    if (r.steps == SelectSteps::interpretation) return out.str();
    out << "prediction.mean_jump: " << format_double(r.prediction.threshold) << '\n';
    out << "prediction.mean_jump_fallback: " << (r.prediction.threshold_fallback ? "yes" : "no") << '\n';
    out << "prediction.size: " << r.prediction.selected.size() << '\n';
    out << "prediction: " << join_names(r.prediction.selected, r.names) << '\n';
    return out.str();
}

std::string vi_mean_csv(const SelectionReport& r) { return importance_series_csv(r.importance); }

std::string vi_sd_csv(const SelectionReport& r) {
    std::string out = "rank,variable,sd_vi,fitted_sd,threshold\n";
    const auto& imp = r.importance;
    for (std::size_t k = 0; k < imp.ranking.size(); ++k) {
        const auto g = static_cast<std::size_t>(imp.ranking[k]);
        out += std::to_string(k + 1) + ',' + csv_field(imp.names[g]) + ',' + format_double(imp.sd[g]) + ',' +
               format_double(r.threshold.fitted[k]) + ',' + format_double(r.threshold.threshold) + '\n';
    }
    return out;
}

std::string interpretation_csv(const SelectionReport& r) {
    std::string out = "k,variable,mean_oob,sd_oob\n";
    for (const auto& c : r.interpretation.curve)
        out += std::to_string(c.k) + ',' + csv_field(r.names[static_cast<std::size_t>(c.added)]) + ',' +
               format_double(c.mean) + ',' + format_double(c.sd) + '\n';
    return out;
}

std::string prediction_csv(const SelectionReport& r) {
    std::string out = "step,variable,mean_oob,sd_oob,added\n";
    for (std::size_t s = 0; s < r.prediction.path.size(); ++s) {
        const auto& p = r.prediction.path[s];
        out += std::to_string(s + 1) + ',' + csv_field(r.names[static_cast<std::size_t>(p.variable)]) + ',' +
               format_double(p.error) + ',' + format_double(p.sd) + ',' + (p.added ? "1" : "0") + '\n';
    }
    return out;
}

}  // namespace canopy
