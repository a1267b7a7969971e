#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "canopy/cart.hpp"
#include "canopy/cli.hpp"
#include "canopy/data.hpp"
#include "canopy/ensemble.hpp"
#include "canopy/errors.hpp"
#include "canopy/importance.hpp"
#include "canopy/random.hpp"
#include "canopy/scale.hpp"
#include "canopy/select.hpp"
#include "options.hpp"

namespace canopy::cli {
namespace {

namespace fs = std::filesystem;

struct Data {
    Dataset train;
    Dataset test;
    bool has_test = false;
};

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

fs::path prepare_out(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
    return fs::path(dir);
}

Data load_data(const DataArgs& a) {
    const SchemaDecl decl = a.schema.empty() ? SchemaDecl{} : read_schema_file(a.schema);
    Data d;
    Dataset all = load_csv(a.data, decl, a.target);
    if (a.split > 0) {
        if (!a.test.empty()) throw ArgumentError("--split and --test are exclusive");
        if (a.split >= all.n()) throw ArgumentError("--split must be smaller than the number of rows");
        auto [tr, te] = split_train_test(all, a.split, a.split_seed);
        d.train = std::move(tr);
        d.test = std::move(te);
        d.has_test = true;
    } else {
        d.train = std::move(all);
        if (!a.test.empty()) {
            const Schema ref = d.train.schema();
            CsvOptions opts;
            opts.reference = &ref;
            d.test = load_csv(a.test, SchemaDecl{}, a.target, opts);
            d.has_test = true;
        }
    }
    if (d.train.degenerate()) throw DegenerateError("training data has no rows or a single class");
    return d;
}

std::string fmt(double x) { return format_double(x); }

ForestParams forest_params(const ForestArgs& a, const Dataset& ds, std::uint64_t seed) {
    ForestParams p;
    p.ntree = a.ntree;
    p.mtry = a.mtry;
    p.nodesize = a.nodesize;
    p.random_splits = a.random_splits;
    p.seed = seed;
    if (a.mode == "bagging") {
        if (a.mtry != 0 && static_cast<std::size_t>(a.mtry) != ds.p())
            throw ArgumentError("bagging mode uses every variable; drop --mtry or set it to p");
        p.mtry = static_cast<int>(ds.p());
    } else if (a.mode == "extra") {
        p.split_mode = SplitMode::extra_randomized;
    }
    if (!a.resample.empty()) p.resample = parse_resample_kind(a.resample);
    return p;
}

std::string forest_mode_line(const ForestParams& resolved, const Dataset& ds) {
    const std::size_t allowed = resolved.variables.empty() ? ds.p() : resolved.variables.size();
    if (resolved.split_mode == SplitMode::extra_randomized) return "extra-randomized trees";
    if (static_cast<std::size_t>(resolved.mtry) >= allowed) return "bagging (mtry equals the number of variables)";
    return "random forest with random inputs";
}

std::string resolved_text(const ForestParams& p) {
    std::string s;
    s += "resolved.ntree = " + std::to_string(p.ntree) + "\n";
    s += "resolved.mtry = " + std::to_string(p.mtry) + "\n";
    s += "resolved.nodesize = " + std::to_string(p.nodesize) + "\n";
    s += "resolved.resample = " + to_string(*p.resample) + "\n";
    s += "resolved.split_mode = " +
         std::string(p.split_mode == SplitMode::extra_randomized ? "extra_randomized" : "exhaustive") + "\n";
    s += "resolved.random_splits = " + std::to_string(p.random_splits) + "\n";
    return s;
}

std::string names_of(const std::vector<int>& vars, const Dataset& ds) {
    std::string s;
    for (int j : vars) {
        if (!s.empty()) s += ", ";
        s += ds.column(static_cast<std::size_t>(j)).name;
    }
    return s.empty() ? "(none)" : s;
}

std::string oob_line(const Forest& f, const Dataset& ds) {
    if (!f.oob_available()) return "oob_error = unavailable\n";
    EvalReport rep;
    try {
        rep = oob_error(f, ds);
    } catch (const DegenerateError&) {
        return "oob_error = unavailable (no out-of-bag rows)\n";
    }
    return "oob_error = " + fmt(rep.error) + "\noob_rows = " + std::to_string(rep.evaluated) +
           "\noob_excluded = " + std::to_string(rep.excluded) + "\n";
}

std::string test_line(const Forest& f, const Data& d) {
    if (!d.has_test) return "test_error = NA\n";
    if (d.test.n() == 0) return "test_error = NA (empty test set)\n";
    return "test_error = " + fmt(test_error(f, d.test).error) + "\ntest_rows = " + std::to_string(d.test.n()) + "\n";
}

// Root split of T_max with both children as leaves.
Tree two_leaf(const Tree& t_max) {
    if (t_max.root().is_leaf()) return t_max;
    std::vector<Node> nodes;
    Node root = t_max.root();
    const Node& l = t_max.node(static_cast<std::size_t>(root.left));
    const Node& r = t_max.node(static_cast<std::size_t>(root.right));
    root.left = 1;
    root.right = 2;
    nodes.push_back(root);
    for (const Node* c : {&l, &r}) {
        Node leaf = *c;
        leaf.left = leaf.right = -1;
        leaf.split = Split{};
        leaf.competing.clear();
        leaf.surrogates.clear();
        nodes.push_back(leaf);
    }
    return Tree(t_max.schema_ptr(), t_max.params(), std::move(nodes));
}

}  // namespace

int cmd_tree(const CommonArgs& c, const TreeArgs& t, const ConfigEcho& echo, std::ostream& out, std::ostream&) {
    const Data d = load_data(c.data);
    const fs::path dir = prepare_out(c.out);
    GrowParams gp = cart_defaults();
    gp.min_node_size = t.min_node_size;
    gp.max_surrogates = t.max_surrogates;
    if (static_cast<std::size_t>(t.folds) > d.train.n()) throw ArgumentError("more folds than training rows");
    const CvRule rule = t.rule == "min" ? CvRule::min : CvRule::one_se;
    const CvResult cv = select_subtree_cv(d.train, gp, t.folds, rule, c.seed, c.workers);

    save_tree(cv.tree, (dir / "model.tree").string());

    std::string seq = "k,alpha,leaves,train_error\n";
    for (std::size_t k = 0; k < cv.sequence.size(); ++k)
        seq += std::to_string(k + 1) + ',' + fmt(cv.sequence.alphas[k]) + ',' +
               std::to_string(cv.sequence.leaves[k]) + ',' + fmt(cv.sequence.errors[k]) + '\n';
    write_text(dir / "pruning.csv", seq);

    std::string curve = "k,alpha,beta,leaves,cv_error,cv_se,chosen_min,chosen_one_se\n";
    for (std::size_t k = 0; k < cv.curve.size(); ++k) {
        const auto& p = cv.curve[k];
        curve += std::to_string(k + 1) + ',' + fmt(p.alpha) + ',' + fmt(p.beta) + ',' + std::to_string(p.leaves) +
                 ',' + fmt(p.error) + ',' + fmt(p.se) + ',' + (cv.chosen_min == k + 1 ? "1" : "0") + ',' +
                 (cv.chosen_one_se == k + 1 ? "1" : "0") + '\n';
    }
    write_text(dir / "cv.csv", curve);

    const Tree t_min = subtree(cv.maximal, cv.sequence, cv.chosen_min);
    const Tree t_1se = subtree(cv.maximal, cv.sequence, cv.chosen_one_se);
    const Tree t_two = two_leaf(cv.maximal);
    std::ostringstream s;
    s << echo_text("tree", echo);
    s << "train_rows = " << d.train.n() << '\n';
    s << "test_rows = " << (d.has_test ? std::to_string(d.test.n()) : std::string("NA")) << '\n';
    s << "sequence_length = " << cv.sequence.size() << '\n';
    s << "chosen_rule = " << t.rule << '\n';
    s << "chosen_leaves = " << cv.tree.leaf_count() << '\n';
    const auto vars = cv.tree.split_variables();
    s << "chosen_split_variable_count = " << vars.size() << '\n';
    s << "chosen_split_variables = " << names_of(vars, d.train) << '\n';
    s << "\ntree,leaves,train_error,test_error\n";
    const std::pair<const char*, const Tree*> rows[] = {
        {"two_leaf", &t_two}, {"one_se", &t_1se}, {"maximal", &cv.maximal}, {"min", &t_min}};
    for (const auto& [name, tree] : rows) {
        s << name << ',' << tree->leaf_count() << ',' << fmt(tree_error(*tree, d.train)) << ',';
        s << (d.has_test && d.test.n() > 0 ? fmt(tree_error(*tree, d.test)) : std::string("NA")) << '\n';
    }
    write_text(dir / "summary.txt", s.str());
    out << s.str();
    return kOk;
}

int cmd_forest(const CommonArgs& c, const ForestArgs& f, const ConfigEcho& echo, std::ostream& out,
               std::ostream& err) {
    const Data d = load_data(c.data);
    const fs::path dir = prepare_out(c.out);
    const ForestParams params = forest_params(f, d.train, c.seed);
    TrainOptions opts;
    opts.workers = c.workers;
    const Forest forest = train_forest(d.train, params, opts);
    save_forest(forest, (dir / "model.forest").string());

    std::ostringstream s;
    s << echo_text("forest", echo) << resolved_text(forest.params());
    s << "mode = " << forest_mode_line(forest.params(), d.train) << '\n';
    if (forest.ntree() == 1) {
        s << "warning = a single tree gives a high-variance estimate\n";
        err << "warning: a single tree gives a high-variance estimate\n";
    }
    s << oob_line(forest, d.train) << test_line(forest, d);
    write_text(dir / "report.txt", s.str());
    out << s.str();
    return kOk;
}

int cmd_importance(const CommonArgs& c, const ForestArgs& f, const ImportanceArgs& i, const ConfigEcho& echo,
                   std::ostream& out, std::ostream& err) {
    const Data d = load_data(c.data);
    const fs::path dir = prepare_out(c.out);
    const ForestParams params = forest_params(f, d.train, c.seed);
    ImportanceOptions opts;
    opts.nrep = i.nrep;
    opts.workers = c.workers;
    if (!i.groups.empty()) opts.groups = parse_groups(read_text(i.groups), d.train);
    const ImportanceReport rep = replicated_importance(d.train, params, c.seed, opts);

    write_text(dir / "importance.csv", importance_csv(rep));
    write_text(dir / "importance_series.csv", importance_series_csv(rep));
    std::string per = "forest,seed";
    for (const auto& n : rep.names) per += ',' + csv_field(n);
    per += '\n';
    for (std::size_t r = 0; r < rep.nrep(); ++r) {
        per += std::to_string(r + 1) + ',' + std::to_string(rep.forest_seeds[r]);
        for (double v : rep.per_forest[r]) per += ',' + fmt(v);
        per += '\n';
    }
    write_text(dir / "importance_per_forest.csv", per);

    std::ostringstream s;
    s << echo_text("importance", echo) << resolved_text(resolve(params, d.train));
    s << "entries = " << rep.names.size() << '\n';
    s << "trees_skipped = " << rep.trees_skipped << '\n';
    if (!rep.sd_defined) {
        s << "warning = a single replication leaves the sd undefined; reported as 0\n";
        err << "warning: a single replication leaves the sd undefined; reported as 0\n";
    }
    s << "top = " << rep.names[static_cast<std::size_t>(rep.ranking.front())] << '\n';
    write_text(dir / "report.txt", s.str());
    out << s.str() << importance_csv(rep);
    return kOk;
}

int cmd_select(const CommonArgs& c, const ForestArgs& f, const SelectArgs& a, const ConfigEcho& echo,
               std::ostream& out, std::ostream& err) {
    const Data d = load_data(c.data);
    const fs::path dir = prepare_out(c.out);
    VsurfParams vp;
    vp.forest = forest_params(f, d.train, c.seed);
    vp.nrep_vi = a.nrep_vi;
    vp.nrep_interp = a.nrep_interp;
    vp.folds = a.folds;
    vp.steps = parse_select_steps(a.steps);
    SelectOptions opts;
    opts.workers = c.workers;
    opts.progress = [&err](const std::string& stage, std::size_t done, std::size_t total) {
        if (done == total) err << stage << ": done\n";
    };
    const SelectionReport r = vsurf(d.train, vp, c.seed, opts);

    write_text(dir / "vi_mean.csv", vi_mean_csv(r));
    write_text(dir / "vi_sd.csv", vi_sd_csv(r));
    if (vp.steps != SelectSteps::threshold) write_text(dir / "interpretation.csv", interpretation_csv(r));
    if (vp.steps == SelectSteps::full) write_text(dir / "prediction.csv", prediction_csv(r));

    std::ostringstream s;
    s << echo_text("select", echo) << resolved_text(resolve(vp.forest, d.train)) << selection_text(r);
    if (d.has_test && d.test.n() > 0) {
        TrainOptions topts;
        topts.workers = c.workers;
        const std::pair<const char*, const std::vector<int>*> sets[] = {
            {"kept", &r.threshold.kept}, {"interpretation", &r.interpretation.selected},
            {"prediction", &r.prediction.selected}};
        std::uint64_t stream = 0;
        ForestParams all = vp.forest;
        all.seed = derive_seed(c.seed, {5, stream});
        s << "test_error.all = " << fmt(test_error(train_forest(d.train, all, topts), d.test).error) << '\n';
        for (const auto& [name, set] : sets) {
            ++stream;
            if (set->empty()) continue;
            ForestParams fp = vp.forest;
            fp.variables = *set;
            fp.seed = derive_seed(c.seed, {5, stream});
            s << "test_error." << name << " = " << fmt(test_error(train_forest(d.train, fp, topts), d.test).error)
              << '\n';
        }
    }
    write_text(dir / "report.txt", s.str());
    out << s.str();
    return kOk;
}

int cmd_partition(const CommonArgs& c, const ForestArgs& f, const PartitionArgs& p, const ConfigEcho& echo,
                  std::ostream& out, std::ostream& err) {
    const Data d = load_data(c.data);
    const fs::path dir = prepare_out(c.out);
    const ForestParams params = forest_params(f, d.train, c.seed);
    const PartitionPlan plan =
        make_partition(d.train, p.blocks, parse_block_strategy(p.strategy), derive_seed(c.seed, {0x626c6f636bULL}));
    const PartitionedResult res = train_partitioned(d.train, plan, params, c.seed, c.workers);

    save_forest(res.forest, (dir / "model.forest").string());
    for (const auto& b : res.blocks)
        save_forest(b.forest, (dir / ("block_" + std::to_string(b.block) + ".forest")).string());
    write_text(dir / "blocks.csv", block_manifest_csv(res));
    write_text(dir / "block_importance.csv",
               block_importance_csv(d.train, block_importance(d.train, res, derive_seed(c.seed, {6}), c.workers)));

    std::ostringstream s;
    s << echo_text("partition", echo) << resolved_text(resolve(params, d.train));
    s << "blocks = " << plan.size() << '\n';
    s << "trees = " << res.forest.ntree() << '\n';
    s << "mean_block_oob_error = " << (res.mean_block_oob_defined ? fmt(res.mean_block_oob) : std::string("NA"))
      << '\n';
    if (plan.size() > 1)
        s << "oob_error = unavailable (rows of one block are never in-bag for other blocks)\n";
    else
        s << oob_line(res.forest, d.train);
    if (res.heterogeneous) {
        s << "warning = block target distributions diverge from the whole data\n";
        err << "warning: block target distributions diverge from the whole data\n";
    }
    s << test_line(res.forest, d);
    write_text(dir / "report.txt", s.str());
    out << s.str();
    return kOk;
}

int cmd_blb(const CommonArgs& c, const ForestArgs& f, const BlbArgs& b, const ConfigEcho& echo, std::ostream& out,
            std::ostream&) {
    const Data d = load_data(c.data);
    const fs::path dir = prepare_out(c.out);
    if (b.m > d.train.n()) throw ArgumentError("--blb-m exceeds the number of training rows");
    const ForestParams params = forest_params(f, d.train, c.seed);
    const BlbResult res = train_blb(d.train, b.m, b.subsamples, params, c.seed, c.workers);
    save_forest(res.forest, (dir / "model.forest").string());

    std::ostringstream s;
    s << echo_text("blb", echo);
    s << "subsamples = " << res.supports.size() << '\n';
    s << "distinct_rows_per_subsample = " << b.m << '\n';
    s << "draws_per_tree = " << d.train.n() << '\n';
    s << "trees = " << res.forest.ntree() << '\n';
    s << oob_line(res.forest, d.train) << test_line(res.forest, d);
    write_text(dir / "report.txt", s.str());
    out << s.str();
    return kOk;
}

int cmd_predict(const PredictArgs& p, std::ostream& out, std::ostream&) {
    std::string head;
    {
        std::ifstream in(p.model, std::ios::binary);
        if (!in) throw IoError("cannot open model '" + p.model + "'");
        in >> head;
    }
    std::optional<Tree> tree;
    std::optional<Forest> forest;
    if (head == "canopy-tree")
        tree = load_tree(p.model);
    else if (head == "canopy-forest")
        forest = load_forest(p.model);
    else
        throw ParseError(1, 1, "unrecognized model file");
    const Schema& schema = tree ? tree->schema() : forest->schema();

    CsvOptions opts;
    opts.reference = &schema;
    opts.target_optional = true;
    const Dataset ds = load_csv(p.data, SchemaDecl{}, schema.target_name, opts);
    const bool cls = schema.task == Task::classification;
    const auto L = static_cast<std::size_t>(schema.n_classes());

    std::string text = "row,prediction";
    if (cls)
        for (const auto& c : schema.classes) text += ',' + csv_field("p_" + c);
    text += '\n';
    for (std::size_t i = 0; i < ds.n(); ++i) {
        text += std::to_string(i + 1) + ',';
        if (tree) {
            const Node& leaf = tree->node(tree->leaf_for(DatasetRow{&ds, i}));
            if (cls) {
                text += csv_field(schema.classes[static_cast<std::size_t>(leaf.value)]);
                for (std::size_t k = 0; k < L; ++k) text += ',' + fmt(leaf.distribution[k]);
            } else {
                text += fmt(leaf.value);
            }
        } else {
            const ForestPrediction pr = forest->predict(ds, i);
            if (cls) {
                text += csv_field(schema.classes[static_cast<std::size_t>(pr.value)]);
                for (std::size_t k = 0; k < L; ++k)
                    text += ',' + fmt(pr.votes[k] / static_cast<double>(forest->ntree()));
            } else {
                text += fmt(pr.value);
            }
        }
        text += '\n';
    }
    const fs::path target(p.out);
    if (target.has_parent_path()) prepare_out(target.parent_path().string());
    write_text(target, text);
    out << "predictions = " << ds.n() << '\n';
    return kOk;
}

}  // namespace canopy::cli
