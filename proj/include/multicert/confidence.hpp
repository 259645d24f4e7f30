#pragma once

#include <cmath>
#include <map>
#include <string>

#include "multicert/beta.hpp"
#include "multicert/errors.hpp"

namespace multicert {

// Monte Carlo label frequencies for one test sample (or one per-element
// prediction in segmentation). Absent labels count zero.
struct VoteCounts {
  std::map<int, long> counts;
  long total = 0;       // number of subsampled evaluations N
  int num_classes = 0;  // label alphabet size C
  // Compact vote rows keep only the two leading labels; the histogram tail
  // is then unknown and the sum check relaxes to <= total.
  bool partial = false;

  long count_of(int label) const {
    auto it = counts.find(label);
    return it == counts.end() ? 0 : it->second;
  }

  void validate() const {
    if (total < 1) throw DataError("vote counts: need total >= 1");
    if (num_classes < 1) throw DataError("vote counts: need num_classes >= 1");
    long sum = 0;
    for (const auto& [label, c] : counts) {
      if (label < 0 || label >= num_classes)
        throw DataError("vote counts: label " + std::to_string(label) +
                        " outside [0," + std::to_string(num_classes) + ")");
      if (c < 0) throw DataError("vote counts: negative count");
      sum += c;
    }
    if (partial ? sum > total : sum != total)
      throw DataError("vote counts: counts sum to " + std::to_string(sum) +
                      ", expected " + (partial ? "at most " : "") +
                      std::to_string(total));
  }

  // Top label and runner-up, ties broken toward the smaller label. With a
  // single voted label the runner-up is the smallest other label, count 0.
  struct TopTwo {
    int label_a = 0;
    long count_a = 0;
    int label_b = 0;
    long count_b = 0;
  };

  TopTwo top_two() const {
    TopTwo t;
    t.label_a = -1;
    t.label_b = -1;
    for (int label = 0; label < num_classes; ++label) {
      const long c = count_of(label);
      if (t.label_a < 0 || c > t.count_a) {
        t.label_b = t.label_a;
        t.count_b = t.count_a;
        t.label_a = label;
        t.count_a = c;
      } else if (t.label_b < 0 || c > t.count_b) {
        t.label_b = label;
        t.count_b = c;
      }
    }
    return t;
  }
};

// Simultaneous confidence bounds: a lower bound on the top label's true
// selection probability and an upper bound on the runner-up's.
struct ProbBoundPair {
  double p_a_lower = 0.0;
  double p_b_upper = 1.0;
  int label_a = 0;
  int label_b = 0;
  double alpha = 0.0;  // joint error budget the pair was built for
};

namespace detail {

// One-sided lower confidence bound for a binomial proportion at coverage q,
// i.e. the q-quantile of Beta(s, n - s + 1); 0 when nothing was observed.
inline double binom_lower_bound(long s, long n, double q) {
  if (s <= 0) return 0.0;
  return beta_quantile(q, static_cast<double>(s),
                       static_cast<double>(n - s + 1));
}

// One-sided upper bound at coverage q, same Beta shape evaluated at the
// upper quantile. Saturated counts give the trivial bound 1; zero counts
// use the closed form 1 - (1-q)^(1/n).
inline double binom_upper_bound(long s, long n, double q) {
  if (s >= n) return 1.0;
  if (s <= 0) return 1.0 - std::pow(1.0 - q, 1.0 / static_cast<double>(n));
  return beta_quantile(q, static_cast<double>(s),
                       static_cast<double>(n - s + 1));
}

// Conservative one-ulp rounding so float error can only loosen a bound.
inline double round_down_ulp(double x) {
  return x <= 0.0 ? 0.0 : std::nextafter(x, 0.0);
}
inline double round_up_ulp(double x) {
  return x >= 1.0 ? 1.0 : std::nextafter(x, 1.0);
}

}  // namespace detail

// Clopper-Pearson style bound pair at joint level 1 - alpha: the error
// budget is split evenly over the C classes, which keeps the pair valid
// simultaneously no matter which two labels surface as top and runner-up.
inline ProbBoundPair clopper_pearson(const VoteCounts& votes, double alpha) {
  votes.validate();
  if (votes.num_classes < 2)
    throw ConfigError("confidence bounds need at least two classes");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("alpha must lie in (0,1)");
  const auto top = votes.top_two();
  const double per_class = alpha / votes.num_classes;
  ProbBoundPair out;
  out.label_a = top.label_a;
  out.label_b = top.label_b;
  out.alpha = alpha;
  out.p_a_lower = detail::round_down_ulp(
      detail::binom_lower_bound(top.count_a, votes.total, per_class));
  out.p_b_upper = detail::round_up_ulp(
      detail::binom_upper_bound(top.count_b, votes.total, 1.0 - per_class));
  return out;
}

}  // namespace multicert
