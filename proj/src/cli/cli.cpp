#include "canopy/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "canopy/errors.hpp"
#include "options.hpp"

namespace canopy::cli {
namespace {

std::string quote(const std::string& s) { return s.empty() ? "\"\"" : s; }

class Registry {
public:
    explicit Registry(CLI::App* app) : app_(app) {}

    template <class T>
    CLI::Option* add(const std::string& name, T& var, const std::string& help, bool echo = true) {
        auto* opt = app_->add_option("--" + name, var, help)->capture_default_str();
        if (echo) {
            echo_.emplace_back(name, [&var] {
                if constexpr (std::is_same_v<T, std::string>)
                    return quote(var);
                else
                    return std::to_string(var);
            });
        }
        return opt;
    }

    const ConfigEcho& echo() const { return echo_; }

private:
    CLI::App* app_;
    ConfigEcho echo_;
};

void add_common(Registry& r, CommonArgs& c) {
    r.add("data", c.data.data, "training data CSV")->required();
    r.add("schema", c.data.schema, "schema file (name:numeric|categorical per line); empty infers kinds");
    r.add("target", c.data.target, "target column name")->required();
    r.add("test", c.data.test, "optional labelled test CSV");
    r.add("split", c.data.split, "if positive, train on this many random rows of --data and test on the rest");
    r.add("split-seed", c.data.split_seed, "seed of the train/test split");
    r.add("out", c.out, "output directory")->required();
    r.add("seed", c.seed, "master seed");
    r.add("workers", c.workers, "worker threads", false)->check(CLI::Range(1, 1024));
}

void add_forest(Registry& r, ForestArgs& f) {
    r.add("ntree", f.ntree, "trees per forest")->check(CLI::Range(1, 1000000));
    r.add("mtry", f.mtry, "candidate variables per node; 0 uses the task default")->check(CLI::NonNegativeNumber);
    r.add("nodesize", f.nodesize, "minimum node weight to split; 0 uses the task default")
        ->check(CLI::NonNegativeNumber);
    r.add("mode", f.mode, "rf | bagging | extra")->check(CLI::IsMember({"rf", "bagging", "extra"}));
    r.add("random-splits", f.random_splits, "extra mode: random thresholds per variable")
        ->check(CLI::Range(1, 1000000));
    r.add("resample", f.resample, "bootstrap | bootstrap:N | subsample:K | blb:M | identity; empty uses the default");
}

}  // namespace

std::vector<std::string> config_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ArgumentError("config line " + std::to_string(line_no) + " lacks '='");
        const std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (key.empty() || key == "config") throw ArgumentError("invalid config key on line " + std::to_string(line_no));
        tokens.push_back("--" + key);
        tokens.push_back(value);
    }
    return tokens;
}

std::string echo_text(const std::string& command, const ConfigEcho& echo) {
    std::string s = "command = " + command + "\n";
    for (const auto& [name, value] : echo) s += name + " = " + value() + "\n";
    return s;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Decision trees, random forests, variable importance and selection"};
    app.name("canopy");
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1, 1);

    CommonArgs common;
    ForestArgs forest;
    TreeArgs tree;
    ImportanceArgs importance;
    SelectArgs select;
    PartitionArgs partition;
    BlbArgs blb;
    PredictArgs predict;
    std::string config_path;

    std::vector<std::pair<CLI::App*, Registry>> subs;
    auto make = [&](const std::string& name, const std::string& help) -> Registry& {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "key=value file; command-line flags take precedence");
        subs.emplace_back(sub, Registry(sub));
        return subs.back().second;
    };
    subs.reserve(7);

    {
        auto& r = make("tree", "grow, prune and select a CART tree");
        add_common(r, common);
        r.add("folds", tree.folds, "cross-validation folds")->check(CLI::Range(2, 1000000));
        r.add("rule", tree.rule, "one-se | min")->check(CLI::IsMember({"one-se", "min"}));
        r.add("min-node-size", tree.min_node_size, "minimum weight of a node to split")->check(CLI::Range(1, 1 << 30));
        r.add("max-surrogates", tree.max_surrogates, "surrogate splits kept per node")->check(CLI::Range(0, 1000));
    }
    {
        auto& r = make("forest", "train a bagging, random or extra-trees forest");
        add_common(r, common);
        add_forest(r, forest);
    }
    {
        auto& r = make("importance", "replicated permutation variable importance");
        add_common(r, common);
        add_forest(r, forest);
        r.add("nrep", importance.nrep, "forests to replicate")->check(CLI::Range(1, 100000));
        r.add("groups", importance.groups, "file with one group of variable names per line");
    }
    {
        auto& r = make("select", "two-step variable selection");
        add_common(r, common);
        add_forest(r, forest);
        r.add("nrep-vi", select.nrep_vi, "forests for importance")->check(CLI::Range(2, 100000));
        r.add("nrep-interp", select.nrep_interp, "forests per nested model")->check(CLI::Range(1, 100000));
        r.add("folds", select.folds, "cross-validation folds of the threshold tree")->check(CLI::Range(2, 1000000));
        r.add("steps", select.steps, "threshold | interpretation | full")
            ->check(CLI::IsMember({"threshold", "interpretation", "full"}));
    }
    {
        auto& r = make("partition", "train sub-forests on data blocks and merge them");
        add_common(r, common);
        add_forest(r, forest);
        r.add("blocks", partition.blocks, "number of blocks")->check(CLI::PositiveNumber);
        r.add("block-strategy", partition.strategy, "contiguous | random | stratified")
            ->check(CLI::IsMember({"contiguous", "random", "stratified"}));
    }
    {
        auto& r = make("blb", "bag of little bootstraps forest");
        add_common(r, common);
        add_forest(r, forest);
        r.add("blb-m", blb.m, "distinct rows per subsample")->required()->check(CLI::PositiveNumber);
        r.add("subsamples", blb.subsamples, "number of subsamples")->check(CLI::PositiveNumber);
    }
    {
        auto& r = make("predict", "predict with a saved tree or forest");
        r.add("model", predict.model, "model file")->required();
        r.add("data", predict.data, "CSV with the model's feature columns")->required();
        r.add("out", predict.out, "predictions CSV")->required();
    }

    try {
        std::vector<std::string> tokens = args;
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            std::string path;
            if (tokens[i] == "--config" && i + 1 < tokens.size())
                path = tokens[i + 1];
            else if (tokens[i].rfind("--config=", 0) == 0)
                path = tokens[i].substr(9);
            else
                continue;
            std::ifstream in(path, std::ios::binary);
            if (!in) throw IoError("cannot open config file '" + path + "'");
            std::ostringstream buf;
            buf << in.rdbuf();
            auto extra = config_tokens(buf.str());
            tokens.insert(tokens.begin() + 1, extra.begin(), extra.end());
            break;
        }
        std::vector<std::string> reversed(tokens.rbegin(), tokens.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    try {
        for (auto& [sub, reg] : subs) {
            if (!sub->parsed()) continue;
            const std::string name = sub->get_name();
            const auto& echo = reg.echo();
            if (name == "tree") return cmd_tree(common, tree, echo, out, err);
            if (name == "forest") return cmd_forest(common, forest, echo, out, err);
            if (name == "importance") return cmd_importance(common, forest, importance, echo, out, err);
            if (name == "select") return cmd_select(common, forest, select, echo, out, err);
            if (name == "partition") return cmd_partition(common, forest, partition, echo, out, err);
            if (name == "blb") return cmd_blb(common, forest, blb, echo, out, err);
            if (name == "predict") return cmd_predict(predict, out, err);
        }
        return kUsage;
    } catch (const ParseError& e) {
        err << "parse error (row " << e.row() << ", column " << e.column() << "): " << e.what() << '\n';
        return kParse;
    } catch (const TargetMissingError& e) {
        err << "parse error: " << e.what() << '\n';
        return kParse;
    } catch (const SchemaError& e) {
        err << "schema error: " << e.what() << '\n';
        return kSchema;
    } catch (const ArgumentError& e) {
        err << "argument error: " << e.what() << '\n';
        return kUsage;
    } catch (const DegenerateError& e) {
        err << "degenerate data: " << e.what() << '\n';
        return kDegenerate;
    } catch (const UnavailableError& e) {
        err << "unavailable: " << e.what() << '\n';
        return kDegenerate;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << '\n';
        return kIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

}  // namespace canopy::cli
