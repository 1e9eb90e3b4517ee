#include "cvxboost/learners.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <numeric>

namespace cvxboost {

// ---------------------------------------------------------------------------
// Tree

Tree Tree::zero(TreeFlavor flavor) { return constant(0.0, flavor); }

Tree Tree::constant(double value, TreeFlavor flavor) {
    TreeNode leaf;
    leaf.value = value;
    return Tree(flavor, {leaf});
}

Tree::Tree(TreeFlavor flavor, std::vector<TreeNode> nodes, int grid_level)
    : flavor_(flavor), nodes_(std::move(nodes)), grid_level_(grid_level) {
    if (nodes_.empty()) throw SchemaError("tree has no nodes");
    const int count = static_cast<int>(nodes_.size());
    for (const auto& n : nodes_) {
        if (n.is_leaf()) {
            if (!std::isfinite(n.value)) throw SchemaError("non-finite leaf value");
            continue;
        }
        if (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count)
            throw SchemaError("tree child index out of range");
        if (!std::isfinite(n.threshold)) throw SchemaError("non-finite split threshold");
        if (n.dim < 0) throw SchemaError("negative split dimension");
        required_dim_ = std::max(required_dim_, static_cast<std::size_t>(n.dim) + 1);
    }
    if (flavor_ == TreeFlavor::SignLeaf && !is_zero()) {
        for (const auto& n : nodes_)
            if (n.is_leaf() && n.value != 1.0 && n.value != -1.0)
                throw SchemaError("sign tree leaf must be -1 or +1");
    }
}

double Tree::operator()(std::span<const double> x) const {
    if (x.size() < required_dim_)
        throw DimensionError("tree splits on dimension " + std::to_string(required_dim_ - 1) +
                             " but input has " + std::to_string(x.size()));
    std::size_t k = 0;
    while (!nodes_[k].is_leaf()) {
        const auto& n = nodes_[k];
        k = static_cast<std::size_t>(x[n.dim] < n.threshold ? n.left : n.right);
    }
    return nodes_[k].value;
}

std::vector<double> Tree::evaluate(const Dataset& data) const {
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = (*this)(data.x(i));
    return out;
}

std::size_t Tree::leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const auto& n) { return n.is_leaf(); }));
}

bool Tree::is_zero() const {
    return std::all_of(nodes_.begin(), nodes_.end(),
                       [](const auto& n) { return !n.is_leaf() || n.value == 0.0; });
}

Tree Tree::negated() const {
    Tree t = *this;
    for (auto& n : t.nodes_)
        if (n.is_leaf()) n.value = -n.value + 0.0;
    return t;
}

nlohmann::json Tree::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    std::function<void(int)> visit = [&](int k) {
        const auto& n = nodes_[static_cast<std::size_t>(k)];
        if (n.is_leaf()) {
            nodes.push_back({{"leaf", n.value}});
            return;
        }
        nodes.push_back({{"dim", n.dim}, {"thr", n.threshold}});
        visit(n.left);
        visit(n.right);
    };
    visit(0);
    nlohmann::json j{{"flavor", flavor_ == TreeFlavor::SignLeaf ? "sign" : "free"}};
    if (grid_level_ >= 0) j["grid_level"] = grid_level_;
    j["nodes"] = std::move(nodes);
    return j;
}

Tree Tree::from_json(const nlohmann::json& j) {
    try {
        const auto flavor_name = j.at("flavor").get<std::string>();
        TreeFlavor flavor;
        if (flavor_name == "sign") flavor = TreeFlavor::SignLeaf;
        else if (flavor_name == "free") flavor = TreeFlavor::FreeLeaf;
        else throw SchemaError("unknown tree flavor '" + flavor_name + "'");
        const int level = j.contains("grid_level") ? j.at("grid_level").get<int>() : -1;
        const auto& pre = j.at("nodes");
        std::vector<TreeNode> nodes;
        std::size_t pos = 0;
        std::function<int()> build = [&]() -> int {
            if (pos >= pre.size()) throw SchemaError("truncated tree node list");
            const auto& item = pre[pos++];
            const int idx = static_cast<int>(nodes.size());
            nodes.emplace_back();
            if (item.contains("leaf")) {
                nodes[static_cast<std::size_t>(idx)].value = item.at("leaf").get<double>();
                return idx;
            }
            TreeNode n;
            n.dim = item.at("dim").get<int>();
            n.threshold = item.at("thr").get<double>();
            if (n.dim < 0) throw SchemaError("negative split dimension");
            n.left = build();
            n.right = build();
            nodes[static_cast<std::size_t>(idx)] = n;
            return idx;
        };
        build();
        if (pos != pre.size()) throw SchemaError("trailing tree nodes");
        return Tree(flavor, std::move(nodes), level);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed tree: ") + e.what());
    }
}

bool operator==(const Tree& a, const Tree& b) {
    if (a.flavor_ != b.flavor_ || a.grid_level_ != b.grid_level_ || a.nodes_.size() != b.nodes_.size())
        return false;
    for (std::size_t k = 0; k < a.nodes_.size(); ++k) {
        const auto& x = a.nodes_[k];
        const auto& y = b.nodes_[k];
        if (x.dim != y.dim || x.left != y.left || x.right != y.right) return false;
        if (x.is_leaf() ? x.value != y.value : x.threshold != y.threshold) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// WeakClassConfig

namespace {

std::size_t parse_count(const std::string& text, const std::string& what) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError("bad " + what + " '" + text + "'");
    return v;
}

}  // namespace

WeakClassConfig WeakClassConfig::parse(const std::string& text, TreeFlavor flavor) {
    WeakClassConfig cfg;
    cfg.flavor = flavor;
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    if (kind == "const" && arg.empty()) {
        cfg.max_leaves = 1;
    } else if (kind == "stump" && arg.empty()) {
        cfg.max_leaves = 2;
    } else if (kind == "tree") {
        cfg.max_leaves = parse_count(arg, "leaf count");
        if (cfg.max_leaves < 1) throw ConfigError("tree class needs at least one leaf");
    } else if (kind == "depth") {
        cfg.max_depth = parse_count(arg, "depth");
        if (cfg.max_depth < 1 || cfg.max_depth > 20) throw ConfigError("depth must be in [1, 20]");
        cfg.max_leaves = std::size_t{1} << cfg.max_depth;
    } else if (kind == "grid") {
        const auto level = parse_count(arg, "grid level");
        if (level > static_cast<std::size_t>(GridPartition::kMaxBits))
            throw CapacityError("grid level " + arg + " exceeds the cell-count guard");
        cfg.thresholds = ThresholdPolicy::GridMidpoints;
        cfg.grid_level = static_cast<int>(level);
        cfg.max_leaves = 0;
    } else {
        throw ConfigError("unknown weak-learner class '" + text + "'");
    }
    return cfg;
}

std::string WeakClassConfig::describe() const {
    if (thresholds == ThresholdPolicy::GridMidpoints) return "grid:" + std::to_string(grid_level);
    if (max_leaves == 1) return "const";
    if (max_leaves == 2) return "stump";
    if (max_depth > 0 && max_leaves == (std::size_t{1} << max_depth))
        return "depth:" + std::to_string(max_depth);
    return "tree:" + std::to_string(max_leaves);
}

// ---------------------------------------------------------------------------
// WeakLearner

WeakLearner::WeakLearner(WeakClassConfig cfg, const Measure& m) : cfg_(cfg), m_(&m) {
    const auto& data = m.data();
    if (cfg_.thresholds == ThresholdPolicy::GridMidpoints) {
        if (static_cast<std::size_t>(cfg_.grid_level) * data.dim() > GridPartition::kMaxBits)
            throw CapacityError("grid class with d * k = " +
                                std::to_string(cfg_.grid_level * static_cast<int>(data.dim())) +
                                " exceeds the cell-count guard of " +
                                std::to_string(GridPartition::kMaxBits));
        build_grid_topology();
        return;
    }
    if (cfg_.max_leaves < 1) throw ConfigError("weak-learner class needs at least one leaf");
    sorted_.resize(data.dim());
    for (std::size_t d = 0; d < data.dim(); ++d) {
        auto& order = sorted_[d];
        order.resize(data.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return data.x(a)[d] < data.x(b)[d]; });
    }
}

std::string WeakLearner::search() const {
    if (cfg_.thresholds == ThresholdPolicy::GridMidpoints) return "grid";
    return cfg_.max_leaves <= 2 ? "exhaustive" : "greedy";
}

void WeakLearner::build_grid_topology() {
    const auto& data = m_->data();
    const std::size_t d = data.dim();
    const std::size_t depth = static_cast<std::size_t>(cfg_.grid_level) * d;
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});

    // Returns the node index for the region [lo, hi) holding `samples` at cut `level`.
    std::function<int(std::vector<std::size_t>, std::vector<double>, std::vector<double>, std::size_t, int)>
        build = [&](std::vector<std::size_t> samples, std::vector<double> lo, std::vector<double> hi,
                    std::size_t level, int parent) -> int {
        while (level < depth) {
            const std::size_t dim = level % d;
            const double mid = 0.5 * (lo[dim] + hi[dim]);
            std::vector<std::size_t> left;
            std::vector<std::size_t> right;
            for (auto i : samples) (data.x(i)[dim] < mid ? left : right).push_back(i);
            if (left.empty() || right.empty()) {
                // discard the cut with an empty side and keep refining the occupied half
                (left.empty() ? lo : hi)[dim] = mid;
                ++level;
                continue;
            }
            const int idx = static_cast<int>(grid_nodes_.size());
            TreeNode node;
            node.dim = static_cast<int>(dim);
            node.threshold = mid;
            grid_nodes_.push_back(node);
            grid_node_samples_.push_back(samples);
            grid_parent_.push_back(parent);

            auto left_hi = hi;
            left_hi[dim] = mid;
            auto right_lo = lo;
            right_lo[dim] = mid;
            const int l = build(std::move(left), lo, std::move(left_hi), level + 1, idx);
            const int r = build(std::move(right), std::move(right_lo), hi, level + 1, idx);
            grid_nodes_[static_cast<std::size_t>(idx)].left = l;
            grid_nodes_[static_cast<std::size_t>(idx)].right = r;
            return idx;
        }
        const int idx = static_cast<int>(grid_nodes_.size());
        grid_nodes_.emplace_back();
        grid_node_samples_.push_back(std::move(samples));
        grid_parent_.push_back(parent);
        return idx;
    };
    build(std::move(all), std::vector<double>(d, 0.0), std::vector<double>(d, 1.0), 0, -1);

    grid_node_weight_.resize(grid_nodes_.size());
    for (std::size_t k = 0; k < grid_nodes_.size(); ++k) {
        double w = 0.0;
        for (auto i : grid_node_samples_[k]) w += m_->weight(i);
        grid_node_weight_[k] = w;
    }
}

Tree WeakLearner::grid_tree(std::span<const double> residual, TreeFlavor flavor) const {
    std::vector<double> sums(grid_nodes_.size(), 0.0);
    for (std::size_t k = 0; k < grid_nodes_.size(); ++k) {
        double a = 0.0;
        for (auto i : grid_node_samples_[k]) a += m_->weight(i) * residual[i];
        sums[k] = a;
    }
    std::vector<TreeNode> nodes = grid_nodes_;
    // sign of a node: its own aggregate, else inherited from the nearest ancestor
    std::vector<double> sign(nodes.size(), 1.0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const int p = grid_parent_[k];
        const double inherited = p < 0 ? 1.0 : sign[static_cast<std::size_t>(p)];
        sign[k] = sums[k] > 0.0 ? 1.0 : (sums[k] < 0.0 ? -1.0 : inherited);
    }
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (!nodes[k].is_leaf()) continue;
        if (flavor == TreeFlavor::SignLeaf) nodes[k].value = sign[k];
        else nodes[k].value = grid_node_weight_[k] > 0.0 ? sums[k] / grid_node_weight_[k] : 0.0;
    }
    return Tree(flavor, std::move(nodes), cfg_.grid_level);
}

namespace {

struct NodeWork {
    std::vector<std::vector<std::size_t>> order;  // per dimension, sorted by that feature
    double sum = 0.0;                             // sum w_i r_i
    double weight = 0.0;                          // sum w_i
    int node = 0;
    std::size_t depth = 0;
};

struct SplitChoice {
    double gain = 0.0;
    int dim = -1;
    double threshold = 0.0;
};

double leaf_score(double sum, double weight, TreeFlavor flavor) {
    if (flavor == TreeFlavor::SignLeaf) return std::abs(sum);
    return weight > 0.0 ? sum * sum / weight : 0.0;
}

}  // namespace

Tree WeakLearner::grow(std::span<const double> residual, TreeFlavor flavor) const {
    const auto& data = m_->data();
    const std::size_t dims = data.dim();
    const std::size_t max_depth = cfg_.max_depth == 0 ? cfg_.max_leaves : cfg_.max_depth;

    std::vector<TreeNode> nodes(1);
    std::vector<double> node_sum(1);
    std::vector<int> parent(1, -1);

    NodeWork root;
    root.order = sorted_;
    for (std::size_t i = 0; i < data.size(); ++i) {
        root.sum += m_->weight(i) * residual[i];
        root.weight += m_->weight(i);
    }
    node_sum[0] = root.sum;

    auto best_split = [&](const NodeWork& w) {
        SplitChoice best;
        const double base = leaf_score(w.sum, w.weight, flavor);
        for (std::size_t d = 0; d < dims; ++d) {
            const auto& order = w.order[d];
            double left_sum = 0.0;
            double left_weight = 0.0;
            for (std::size_t k = 0; k + 1 < order.size(); ++k) {
                const std::size_t i = order[k];
                left_sum += m_->weight(i) * residual[i];
                left_weight += m_->weight(i);
                const double v = data.x(i)[d];
                const double next = data.x(order[k + 1])[d];
                if (!(v < next)) continue;
                const double right_weight = w.weight - left_weight;
                if (left_weight <= 0.0 || right_weight <= 0.0) continue;
                const double gain = leaf_score(left_sum, left_weight, flavor) +
                                    leaf_score(w.sum - left_sum, right_weight, flavor) - base;
                if (gain > best.gain) {
                    double thr = v + 0.5 * (next - v);
                    if (!(v < thr)) thr = next;
                    best = {gain, static_cast<int>(d), thr};
                }
            }
        }
        return best;
    };

    std::vector<NodeWork> frontier;
    frontier.push_back(std::move(root));
    std::size_t leaves = 1;
    std::size_t depth = 0;
    while (!frontier.empty() && leaves < cfg_.max_leaves && depth < max_depth) {
        std::vector<std::pair<SplitChoice, std::size_t>> candidates;
        for (std::size_t f = 0; f < frontier.size(); ++f) {
            const auto choice = best_split(frontier[f]);
            if (choice.dim >= 0) candidates.emplace_back(choice, f);
        }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const auto& a, const auto& b) { return a.first.gain > b.first.gain; });
        std::vector<NodeWork> next;
        for (const auto& [choice, f] : candidates) {
            if (leaves >= cfg_.max_leaves) break;
            auto& work = frontier[f];
            NodeWork left;
            NodeWork right;
            left.order.resize(dims);
            right.order.resize(dims);
            for (std::size_t d = 0; d < dims; ++d) {
                for (auto i : work.order[d]) {
                    const bool goes_left = data.x(i)[static_cast<std::size_t>(choice.dim)] < choice.threshold;
                    (goes_left ? left : right).order[d].push_back(i);
                }
            }
            for (auto i : left.order[0]) {
                left.sum += m_->weight(i) * residual[i];
                left.weight += m_->weight(i);
            }
            for (auto i : right.order[0]) {
                right.sum += m_->weight(i) * residual[i];
                right.weight += m_->weight(i);
            }
            const int li = static_cast<int>(nodes.size());
            const int ri = li + 1;
            nodes.emplace_back();
            nodes.emplace_back();
            node_sum.push_back(left.sum);
            node_sum.push_back(right.sum);
            parent.push_back(work.node);
            parent.push_back(work.node);
            auto& split = nodes[static_cast<std::size_t>(work.node)];
            split.dim = choice.dim;
            split.threshold = choice.threshold;
            split.left = li;
            split.right = ri;
            left.node = li;
            right.node = ri;
            left.depth = right.depth = work.depth + 1;
            next.push_back(std::move(left));
            next.push_back(std::move(right));
            ++leaves;
        }
        frontier = std::move(next);
        ++depth;
    }

    // Leaf values. Node weights are needed for the free flavor only.
    std::vector<double> node_weight(nodes.size(), 0.0);
    if (flavor == TreeFlavor::FreeLeaf) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            std::size_t k = 0;
            node_weight[0] += m_->weight(i);
            while (!nodes[k].is_leaf()) {
                k = static_cast<std::size_t>(data.x(i)[static_cast<std::size_t>(nodes[k].dim)] < nodes[k].threshold
                                                 ? nodes[k].left
                                                 : nodes[k].right);
                node_weight[k] += m_->weight(i);
            }
        }
    }
    std::vector<double> sign(nodes.size(), 1.0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const int p = parent[k];
        const double inherited = p < 0 ? 1.0 : sign[static_cast<std::size_t>(p)];
        sign[k] = node_sum[k] > 0.0 ? 1.0 : (node_sum[k] < 0.0 ? -1.0 : inherited);
        if (!nodes[k].is_leaf()) continue;
        if (flavor == TreeFlavor::SignLeaf) nodes[k].value = sign[k];
        else nodes[k].value = node_weight[k] > 0.0 ? node_sum[k] / node_weight[k] : 0.0;
    }
    return Tree(flavor, std::move(nodes));
}

namespace {

double weighted_dot(const Measure& m, std::span<const double> r, std::span<const double> f) {
    double acc = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) acc += m.weight(i) * r[i] * f[i];
    return acc;
}

void check_residual(const Measure& m, std::span<const double> residual) {
    if (residual.size() != m.size())
        throw DimensionError("residual length " + std::to_string(residual.size()) +
                             " does not match the measure (" + std::to_string(m.size()) + ")");
}

}  // namespace

Selection WeakLearner::select_direction(std::span<const double> residual) const {
    check_residual(*m_, residual);
    Tree tree = cfg_.thresholds == ThresholdPolicy::GridMidpoints ? grid_tree(residual, TreeFlavor::SignLeaf)
                                                                  : grow(residual, TreeFlavor::SignLeaf);
    const auto values = tree.evaluate(m_->data());
    const double objective = weighted_dot(*m_, residual, values);
    // zero belongs to the class; it wins whenever no tree has a positive objective
    if (!(objective > 0.0)) return {Tree::zero(TreeFlavor::SignLeaf), 0.0};
    return {std::move(tree), objective};
}

Selection WeakLearner::fit_least_squares(std::span<const double> residual) const {
    check_residual(*m_, residual);
    Tree tree = cfg_.thresholds == ThresholdPolicy::GridMidpoints ? grid_tree(residual, TreeFlavor::FreeLeaf)
                                                                  : grow(residual, TreeFlavor::FreeLeaf);
    if (tree.is_zero()) return {Tree::zero(TreeFlavor::FreeLeaf), 0.0};
    const auto values = tree.evaluate(m_->data());
    double sq = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) sq += m_->weight(i) * values[i] * values[i];
    const double objective = -2.0 * weighted_dot(*m_, residual, values) + sq;
    if (!(objective < 0.0)) return {Tree::zero(TreeFlavor::FreeLeaf), 0.0};
    return {std::move(tree), objective};
}

Selection select_direction_F(const WeakClassConfig& cfg, const Measure& m, std::span<const double> residual) {
    WeakClassConfig c = cfg;
    c.flavor = TreeFlavor::SignLeaf;
    return WeakLearner(c, m).select_direction(residual);
}

Selection fit_ls_tree(const WeakClassConfig& cfg, const Measure& m, std::span<const double> residual) {
    WeakClassConfig c = cfg;
    c.flavor = TreeFlavor::FreeLeaf;
    return WeakLearner(c, m).fit_least_squares(residual);
}

// ---------------------------------------------------------------------------
// GridPartition

GridPartition::GridPartition(std::size_t dim, int level) : dim_(dim), level_(level) {
    if (dim == 0) throw ConfigError("grid dimension must be at least 1");
    if (level < 0) throw ConfigError("grid level must be nonnegative");
    if (static_cast<std::size_t>(level) * dim > static_cast<std::size_t>(kMaxBits))
        throw CapacityError("grid with d * k = " + std::to_string(static_cast<std::size_t>(level) * dim) +
                            " exceeds the cell-count guard of " + std::to_string(kMaxBits));
    per_dim_ = std::size_t{1} << level;
    count_ = std::size_t{1} << (static_cast<std::size_t>(level) * dim);
}

double GridPartition::cell_volume() const noexcept {
    return std::ldexp(1.0, -static_cast<int>(static_cast<std::size_t>(level_) * dim_));
}

std::size_t GridPartition::cell_of(std::span<const double> x) const {
    if (x.size() != dim_) throw DimensionError("point dimension does not match grid");
    std::size_t index = 0;
    std::size_t stride = 1;
    for (std::size_t d = 0; d < dim_; ++d) {
        const double scaled = std::floor(x[d] * static_cast<double>(per_dim_));
        const double clamped = std::clamp(scaled, 0.0, static_cast<double>(per_dim_ - 1));
        index += static_cast<std::size_t>(clamped) * stride;
        stride *= per_dim_;
    }
    return index;
}

std::vector<std::size_t> GridPartition::cells_of(const Dataset& data) const {
    std::vector<std::size_t> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = cell_of(data.x(i));
    return out;
}

std::vector<std::pair<double, double>> GridPartition::cell_box(std::size_t j) const {
    if (j >= count_) throw ConfigError("cell index out of range");
    std::vector<std::pair<double, double>> box(dim_);
    const double width = 1.0 / static_cast<double>(per_dim_);
    for (std::size_t d = 0; d < dim_; ++d) {
        const auto c = j % per_dim_;
        j /= per_dim_;
        box[d] = {static_cast<double>(c) * width, static_cast<double>(c + 1) * width};
    }
    return box;
}

GridPartition enumerate_grid_class(std::size_t dim, int level) { return GridPartition(dim, level); }

}  // namespace cvxboost
