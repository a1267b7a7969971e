#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace canopy::cli {

struct DataArgs {
    std::string data;
    std::string schema;
    std::string target;
    std::string test;
    std::size_t split = 0;
    std::uint64_t split_seed = 1;
};

struct CommonArgs {
    DataArgs data;
    std::string out;
    std::uint64_t seed = 1;
    int workers = 1;
};

struct ForestArgs {
    int ntree = 500;
    int mtry = 0;
    int nodesize = 0;
    int random_splits = 1;
    std::string mode = "rf";
    std::string resample;
};

struct TreeArgs {
    int folds = 10;
    std::string rule = "one-se";
    int min_node_size = 1;
    int max_surrogates = 5;
};

struct ImportanceArgs {
    int nrep = 50;
    std::string groups;
};

struct SelectArgs {
    int nrep_vi = 50;
    int nrep_interp = 25;
    int folds = 10;
    std::string steps = "full";
};

struct PartitionArgs {
    std::size_t blocks = 4;
    std::string strategy = "random";
};

struct BlbArgs {
    std::size_t m = 0;
    std::size_t subsamples = 1;
};

struct PredictArgs {
    std::string model;
    std::string data;
    std::string out;
};

/// Resolved option values in declaration order, for report headers.
using ConfigEcho = std::vector<std::pair<std::string, std::function<std::string()>>>;

std::string echo_text(const std::string& command, const ConfigEcho& echo);

int cmd_tree(const CommonArgs& c, const TreeArgs& t, const ConfigEcho& echo, std::ostream& out, std::ostream& err);
int cmd_forest(const CommonArgs& c, const ForestArgs& f, const ConfigEcho& echo, std::ostream& out,
               std::ostream& err);
int cmd_importance(const CommonArgs& c, const ForestArgs& f, const ImportanceArgs& i, const ConfigEcho& echo,
                   std::ostream& out, std::ostream& err);
int cmd_select(const CommonArgs& c, const ForestArgs& f, const SelectArgs& s, const ConfigEcho& echo,
               std::ostream& out, std::ostream& err);
int cmd_partition(const CommonArgs& c, const ForestArgs& f, const PartitionArgs& p, const ConfigEcho& echo,
                  std::ostream& out, std::ostream& err);
int cmd_blb(const CommonArgs& c, const ForestArgs& f, const BlbArgs& b, const ConfigEcho& echo, std::ostream& out,
            std::ostream& err);
int cmd_predict(const PredictArgs& p, std::ostream& out, std::ostream& err);

}  // namespace canopy::cli
