#include "car/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "car/error.hpp"
#include "car/kernels.hpp"

namespace car {

std::string to_string(LearnerKind kind) {
  return kind == LearnerKind::kCart ? "cart" : "gaussian_nb";
}

LearnerKind parse_learner_kind(const std::string& name) {
  if (name == "gaussian_nb") return LearnerKind::kGaussianNb;
  if (name == "cart") return LearnerKind::kCart;
  throw ValidationError("learner.kind: unknown value '" + name + "'");
}

void LearnerSpec::validate() const {
  if (cart_max_depth < 1) throw ValidationError("cart_max_depth: must be >= 1");
  if (cart_min_split < 2) throw ValidationError("cart_min_split: must be >= 2");
  if (nb_variance_floor && !(*nb_variance_floor > 0.0)) {
    throw ValidationError("nb_variance_floor: must be > 0");
  }
}

ClassIndex argmax(std::span<const double> values) {
  ClassIndex best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<ClassIndex>(i);
  }
  return best;
}

TrainedModel::TrainedModel(LearnerKind kind, int n_features, int n_classes,
                           std::vector<ClassIndex> classes_seen,
                           std::variant<GaussianNbParams, CartParams> params)
    : kind_(kind),
      n_features_(n_features),
      n_classes_(n_classes),
      classes_seen_(std::move(classes_seen)),
      params_(std::move(params)) {}

void TrainedModel::check_dimension(std::span<const double> features) const {
  if (features.size() != static_cast<std::size_t>(n_features_)) {
    throw ValidationError("features: expected " + std::to_string(n_features_) + " values, got " +
                          std::to_string(features.size()));
  }
}

std::vector<double> TrainedModel::predict_proba(std::span<const double> features) const {
  check_dimension(features);
  std::vector<double> proba(static_cast<std::size_t>(n_classes_), 0.0);

  if (const auto* nb = naive_bayes()) {
    const std::size_t k = nb->classes.size();
    if (k == 1) {
      proba[static_cast<std::size_t>(nb->classes[0])] = 1.0;
      return proba;
    }
    std::vector<double> joint(k);
    for (std::size_t c = 0; c < k; ++c) {
      joint[c] = nb->log_norm[c] -
                 0.5 * kernels::weighted_sq_distance(features, nb->means[c], nb->inv_variances[c]);
    }
    const double peak = *std::max_element(joint.begin(), joint.end());
    double total = 0.0;
    for (double& v : joint) {
      v = std::exp(v - peak);
      total += v;
    }
    for (std::size_t c = 0; c < k; ++c) {
      proba[static_cast<std::size_t>(nb->classes[c])] = joint[c] / total;
    }
    return proba;
  }

  const CartParams& tree = std::get<CartParams>(params_);
  std::size_t node = 0;
  while (tree.nodes[node].feature >= 0) {
    const CartNode& n = tree.nodes[node];
    node = static_cast<std::size_t>(features[static_cast<std::size_t>(n.feature)] <= n.threshold
                                        ? n.left
                                        : n.right);
  }
  const auto& dist = tree.nodes[node].distribution;
  std::copy(dist.begin(), dist.end(), proba.begin());
  return proba;
}

ClassIndex TrainedModel::predict(std::span<const double> features) const {
  const auto proba = predict_proba(features);
  return argmax(proba);
}

double TrainedModel::probability_of(std::span<const double> features, ClassIndex label) const {
  const auto proba = predict_proba(features);
  if (label < 0 || static_cast<std::size_t>(label) >= proba.size()) return 0.0;
  return proba[static_cast<std::size_t>(label)];
}

namespace {

GaussianNbParams fit_naive_bayes(const LearnerSpec& spec, const Chunk& chunk,
                                 std::span<const std::size_t> indices, std::size_t n_features,
                                 const std::vector<ClassIndex>& classes) {
  GaussianNbParams nb;
  nb.classes = classes;
  std::vector<double> column(indices.size());

  double floor = 0.0;
  if (spec.nb_variance_floor) {
    floor = *spec.nb_variance_floor;
  } else {
    double max_var = 0.0;
    for (std::size_t f = 0; f < n_features; ++f) {
      for (std::size_t i = 0; i < indices.size(); ++i) {
        column[i] = chunk.samples[indices[i]].features[f];
      }
      max_var = std::max(max_var, kernels::mean_variance(column).variance);
    }
    floor = 1e-9 * std::max(max_var, 1.0);
  }
  nb.variance_floor = floor;

  const double total = static_cast<double>(indices.size());
  for (ClassIndex cls : classes) {
    std::vector<std::size_t> members;
    for (std::size_t i : indices) {
      if (chunk.samples[i].label == cls) members.push_back(i);
    }
    std::vector<double> means(n_features);
    std::vector<double> vars(n_features);
    std::vector<double> inv(n_features);
    column.resize(members.size());
    double log_det = 0.0;
    for (std::size_t f = 0; f < n_features; ++f) {
      for (std::size_t i = 0; i < members.size(); ++i) {
        column[i] = chunk.samples[members[i]].features[f];
      }
      const auto mv = kernels::mean_variance(column);
      means[f] = mv.mean;
      vars[f] = std::max(mv.variance, floor);
      inv[f] = 1.0 / vars[f];
      log_det += std::log(2.0 * std::numbers::pi * vars[f]);
    }
    const double log_prior = std::log(static_cast<double>(members.size()) / total);
    nb.log_priors.push_back(log_prior);
    nb.log_norm.push_back(log_prior - 0.5 * log_det);
    nb.means.push_back(std::move(means));
    nb.variances.push_back(std::move(vars));
    nb.inv_variances.push_back(std::move(inv));
  }
  return nb;
}

class CartBuilder {
 public:
  CartBuilder(const LearnerSpec& spec, const Chunk& chunk, std::size_t n_features,
              std::size_t n_classes)
      : spec_(spec), chunk_(chunk), n_features_(n_features), n_classes_(n_classes) {}

  CartParams build(std::vector<std::size_t> indices) {
    grow(std::move(indices), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;  // weighted child impurity, n_left*gini_left + n_right*gini_right
  };

  static double gini_times_n(const std::vector<std::size_t>& counts, std::size_t n) {
    if (n == 0) return 0.0;
    double sq = 0.0;
    for (std::size_t c : counts) sq += static_cast<double>(c) * static_cast<double>(c);
    return static_cast<double>(n) - sq / static_cast<double>(n);
  }

  std::vector<std::size_t> counts_of(const std::vector<std::size_t>& indices) const {
    std::vector<std::size_t> counts(n_classes_, 0);
    for (std::size_t i : indices) ++counts[static_cast<std::size_t>(chunk_.samples[i].label)];
    return counts;
  }

  Split best_split(const std::vector<std::size_t>& indices,
                   const std::vector<std::size_t>& parent_counts) const {
    Split best;
    const std::size_t n = indices.size();
    std::vector<std::size_t> order = indices;
    for (std::size_t f = 0; f < n_features_; ++f) {
      const auto value = [&](std::size_t i) { return chunk_.samples[i].features[f]; };
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return value(a) < value(b); });
      std::vector<std::size_t> left(n_classes_, 0);
      std::vector<std::size_t> right = parent_counts;
      for (std::size_t pos = 0; pos + 1 < n; ++pos) {
        const auto label = static_cast<std::size_t>(chunk_.samples[order[pos]].label);
        ++left[label];
        --right[label];
        const double lo = value(order[pos]);
        const double hi = value(order[pos + 1]);
        if (!(lo < hi)) continue;
        const double impurity = gini_times_n(left, pos + 1) + gini_times_n(right, n - pos - 1);
        if (best.feature < 0 || impurity < best.impurity) {
          double threshold = lo + (hi - lo) / 2.0;
          if (!(threshold < hi)) threshold = lo;
          best = {static_cast<int>(f), threshold, impurity};
        }
      }
    }
    return best;
  }

  int make_leaf(const std::vector<std::size_t>& counts, std::size_t n, int depth) {
    CartNode leaf;
    leaf.depth = depth;
    leaf.distribution.resize(n_classes_);
    for (std::size_t c = 0; c < n_classes_; ++c) {
      leaf.distribution[c] = static_cast<double>(counts[c]) / static_cast<double>(n);
    }
    tree_.nodes.push_back(std::move(leaf));
    tree_.depth = std::max(tree_.depth, depth);
    return static_cast<int>(tree_.nodes.size() - 1);
  }

  int grow(std::vector<std::size_t> indices, int depth) {
    const auto counts = counts_of(indices);
    const std::size_t n = indices.size();
    const bool pure = std::count_if(counts.begin(), counts.end(),
                                    [](std::size_t c) { return c > 0; }) <= 1;
    if (pure || depth >= spec_.cart_max_depth ||
        n < static_cast<std::size_t>(spec_.cart_min_split)) {
      return make_leaf(counts, n, depth);
    }
    const Split split = best_split(indices, counts);
    if (split.feature < 0) return make_leaf(counts, n, depth);

    const int id = static_cast<int>(tree_.nodes.size());
    CartNode node;
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.depth = depth;
    tree_.nodes.push_back(std::move(node));

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t i : indices) {
      const double v = chunk_.samples[i].features[static_cast<std::size_t>(split.feature)];
      (v <= split.threshold ? left : right).push_back(i);
    }
    indices.clear();
    indices.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    tree_.nodes[static_cast<std::size_t>(id)].left = l;
    tree_.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const LearnerSpec& spec_;
  const Chunk& chunk_;
  std::size_t n_features_;
  std::size_t n_classes_;
  CartParams tree_;
};

}  // namespace

ModelPtr fit_batch(const LearnerSpec& spec, const Chunk& chunk, std::span<const std::size_t> indices) {
  spec.validate();
  if (indices.empty()) throw ValidationError("chunk: cannot fit on an empty chunk");
  const std::size_t n_features = chunk.samples[indices[0]].features.size();
  ClassIndex max_label = 0;
  for (std::size_t i : indices) {
    const Sample& s = chunk.samples[i];
    if (s.features.size() != n_features) {
      throw ValidationError("chunk: samples have inconsistent feature dimensionality");
    }
    if (s.label < 0) throw ValidationError("chunk: negative class label");
    max_label = std::max(max_label, s.label);
  }
  const auto n_classes = static_cast<std::size_t>(max_label) + 1;
  std::vector<bool> present(n_classes, false);
  for (std::size_t i : indices) present[static_cast<std::size_t>(chunk.samples[i].label)] = true;
  std::vector<ClassIndex> classes;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (present[c]) classes.push_back(static_cast<ClassIndex>(c));
  }

  std::variant<GaussianNbParams, CartParams> params;
  if (spec.kind == LearnerKind::kGaussianNb) {
    params = fit_naive_bayes(spec, chunk, indices, n_features, classes);
  } else {
    CartBuilder builder(spec, chunk, n_features, n_classes);
    params = builder.build(std::vector<std::size_t>(indices.begin(), indices.end()));
  }
  return std::make_shared<const TrainedModel>(spec.kind, static_cast<int>(n_features),
                                              static_cast<int>(n_classes), std::move(classes),
                                              std::move(params));
}

ModelPtr fit_batch(const LearnerSpec& spec, const Chunk& chunk) {
  std::vector<std::size_t> all(chunk.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return fit_batch(spec, chunk, all);
}

}  // namespace car
