#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfie/corpus.hpp"

namespace cfie {

/// Rows are gold, columns predicted. With a NONE slot (index classes()), a
/// gold span nobody predicted lands in column NONE and a spurious prediction
/// in row NONE.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes, bool with_none = true);

  std::size_t classes() const { return classes_; }
  std::size_t dim() const { return dim_; }
  bool has_none() const { return dim_ > classes_; }
  std::size_t none() const { return classes_; }

  void add(std::size_t gold, std::size_t predicted, std::uint64_t count = 1);
  std::uint64_t at(std::size_t gold, std::size_t predicted) const { return counts_[gold * dim_ + predicted]; }
  std::uint64_t tp(std::size_t k) const { return at(k, k); }
  /// Row sum, NONE column included.
  std::uint64_t gold_count(std::size_t k) const;
  /// Column sum, NONE row included.
  std::uint64_t predicted_count(std::size_t k) const;
  void merge(const ConfusionMatrix& other);

 private:
  std::size_t classes_;
  std::size_t dim_;
  std::vector<std::uint64_t> counts_;
};

struct ClassStats {
  std::uint64_t gold = 0;
  std::uint64_t predicted = 0;
  std::uint64_t tp = 0;
  double precision = 0.0;
  double recall = 0.0;
  /// 0 when precision + recall is 0.
  double f1 = 0.0;
};

ClassStats class_stats(const ConfusionMatrix& cm, std::size_t k);

/// Values in [0,1]. Classes with no gold instances are skipped and appended
/// to `excluded`; a subset with none left throws MetricError.
double mean_recall(const ConfusionMatrix& cm, std::span<const std::size_t> subset,
                   std::vector<std::size_t>* excluded = nullptr);
double macro_f1(const ConfusionMatrix& cm, std::span<const std::size_t> subset,
                std::vector<std::size_t>* excluded = nullptr);
/// Pooled TP/FP/FN over the subset.
double micro_f1(const ConfusionMatrix& cm, std::span<const std::size_t> subset);
double micro_f1(const ConfusionMatrix& cm);

std::vector<std::size_t> all_classes(const ConfusionMatrix& cm);

struct BucketMetrics {
  std::string name;
  std::vector<std::string> classes;
  /// Percentages; empty when the bucket has no evaluable class.
  std::optional<double> mr;
  std::optional<double> mf1;
  std::optional<double> micro_f1;
};

struct MetricsReport {
  std::vector<BucketMetrics> buckets;  // Few, Medium, Many, Overall
  std::vector<std::string> class_names;
  std::vector<ClassStats> per_class;
  std::vector<std::string> notes;
  std::string fingerprint;
  std::uint64_t seed = 0;

  const BucketMetrics& bucket(std::string_view name) const;
  /// One JSON object per bucket, then one per class.
  std::string to_jsonl() const;
  /// bucket,metric,value rows.
  std::string to_csv() const;
};

/// `class_names` index the confusion matrix; classes absent from `buckets`
/// count as Few.
MetricsReport bucket_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names,
                            const BucketSplit& buckets);

}  // namespace cfie
