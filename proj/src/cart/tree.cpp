#include <algorithm>
#include <set>

#include "canopy/cart.hpp"
#include "canopy/errors.hpp"

namespace canopy {

Tree::Tree(std::shared_ptr<const Schema> schema, GrowParams params, std::vector<Node> nodes)
    : schema_(std::move(schema)), params_(std::move(params)), nodes_(std::move(nodes)) {
    if (!schema_) throw ArgumentError("tree without schema");
    if (nodes_.empty()) throw ArgumentError("tree without nodes");
}

std::size_t Tree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
}

std::vector<int> Tree::split_variables() const {
    std::set<int> vars;
    for (const auto& n : nodes_)
        if (!n.is_leaf()) vars.insert(n.split.variable);
    return {vars.begin(), vars.end()};
}

bool Tree::operator==(const Tree& other) const {
    return *schema_ == *other.schema_ && params_ == other.params_ && nodes_ == other.nodes_;
}

double tree_error(const Tree& tree, const Dataset& ds) {
    if (ds.n() == 0) throw DegenerateError("cannot evaluate on an empty dataset");
    double loss = 0;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const double pred = tree.predict(ds, i);
        if (ds.task() == Task::classification)
            loss += pred != static_cast<double>(ds.label(i)) ? 1.0 : 0.0;
        else
            loss += (pred - ds.y(i)) * (pred - ds.y(i));
    }
    return loss / static_cast<double>(ds.n());
}

}  // namespace canopy
