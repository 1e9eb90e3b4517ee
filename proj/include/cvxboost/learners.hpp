#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvxboost/dataset.hpp"

namespace cvxboost {

/// SignLeaf trees have leaves in {-1, +1} (or are the zero tree), so that
/// ||f|| = 1 under any measure. FreeLeaf trees have unconstrained leaves.
enum class TreeFlavor { SignLeaf, FreeLeaf };

struct TreeNode {
    int dim = -1;  ///< -1 for a leaf
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;

    bool is_leaf() const noexcept { return dim < 0; }
};

/// Axis-parallel binary tree; x goes left when x[dim] < threshold. Node 0 is the root.
class Tree {
public:
    static Tree zero(TreeFlavor flavor = TreeFlavor::FreeLeaf);
    static Tree constant(double value, TreeFlavor flavor);

    Tree(TreeFlavor flavor, std::vector<TreeNode> nodes, int grid_level = -1);

    double operator()(std::span<const double> x) const;
    std::vector<double> evaluate(const Dataset& data) const;

    TreeFlavor flavor() const noexcept { return flavor_; }
    /// Midpoint-grid level k_n, or -1 for data-driven trees.
    int grid_level() const noexcept { return grid_level_; }
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    std::size_t leaf_count() const;
    bool is_zero() const;
    Tree negated() const;

    /// {flavor, [grid_level], nodes: [{dim, thr} | {leaf: v}]} in preorder.
    nlohmann::json to_json() const;
    static Tree from_json(const nlohmann::json& j);

    friend bool operator==(const Tree& a, const Tree& b);

private:
    TreeFlavor flavor_;
    std::vector<TreeNode> nodes_;
    int grid_level_;
    std::size_t required_dim_ = 0;
};

enum class ThresholdPolicy { DataMidpoints, GridMidpoints };

struct WeakClassConfig {
    TreeFlavor flavor = TreeFlavor::SignLeaf;
    std::size_t max_leaves = 2;
    /// 0 means no depth limit beyond max_leaves.
    std::size_t max_depth = 0;
    ThresholdPolicy thresholds = ThresholdPolicy::DataMidpoints;
    int grid_level = 0;
    bool include_zero = true;

    /// `const`, `stump`, `tree:k` (k leaves), `depth:D` (2^D leaves, depth D) or
    /// `grid:k` (midpoint grid of level k on [0,1]^d).
    static WeakClassConfig parse(const std::string& text, TreeFlavor flavor);
    std::string describe() const;
};

struct Selection {
    Tree tree;
    /// SignLeaf: -E xi f = sum_i w_i r_i f(X_i). FreeLeaf: 2 E xi f + ||f||^2.
    double objective = 0.0;
};

/// Split search state for one measure: per-dimension sorted orders for
/// data-driven trees, or the fixed midpoint topology for grid classes.
/// `residual` arguments hold -xi(F(X_i), Y_i) in sample order.
class WeakLearner {
public:
    WeakLearner(WeakClassConfig cfg, const Measure& m);

    /// argmax over SignLeaf trees (plus zero) of sum_i w_i r_i f(X_i).
    Selection select_direction(std::span<const double> residual) const;
    /// Least-squares tree fit of the residual (leaf values are weighted means).
    Selection fit_least_squares(std::span<const double> residual) const;

    const WeakClassConfig& config() const noexcept { return cfg_; }
    /// "exhaustive", "greedy" or "grid".
    std::string search() const;

private:
    Tree grow(std::span<const double> residual, TreeFlavor flavor) const;
    Tree grid_tree(std::span<const double> residual, TreeFlavor flavor) const;
    void build_grid_topology();

    WeakClassConfig cfg_;
    const Measure* m_;
    std::vector<std::vector<std::size_t>> sorted_;  // per dimension
    // grid topology: nodes, the samples routed into each node, parent links
    std::vector<TreeNode> grid_nodes_;
    std::vector<std::vector<std::size_t>> grid_node_samples_;
    std::vector<int> grid_parent_;
    std::vector<double> grid_node_weight_;
};

Selection select_direction_F(const WeakClassConfig& cfg, const Measure& m, std::span<const double> residual);
Selection fit_ls_tree(const WeakClassConfig& cfg, const Measure& m, std::span<const double> residual);

/// Regular grid of N = 2^{d k} cells on [0,1]^d obtained by repeated midpoint cuts.
class GridPartition {
public:
    GridPartition(std::size_t dim, int level);

    std::size_t dim() const noexcept { return dim_; }
    int level() const noexcept { return level_; }
    std::size_t cells_per_dim() const noexcept { return per_dim_; }
    std::size_t cell_count() const noexcept { return count_; }
    /// v_n = lambda(cell) = 2^{-d k}.
    double cell_volume() const noexcept;

    /// Cell index, dimension 0 varying fastest. Points outside [0,1]^d are clamped.
    std::size_t cell_of(std::span<const double> x) const;
    std::vector<std::size_t> cells_of(const Dataset& data) const;
    /// [lo, hi) extent of cell j in each dimension.
    std::vector<std::pair<double, double>> cell_box(std::size_t j) const;

    static constexpr int kMaxBits = 24;

private:
    std::size_t dim_;
    int level_;
    std::size_t per_dim_;
    std::size_t count_;
};

/// Throws CapacityError when d * k exceeds GridPartition::kMaxBits.
GridPartition enumerate_grid_class(std::size_t dim, int level);

}  // namespace cvxboost
