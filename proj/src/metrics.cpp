#include "cfie/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cfie/errors.hpp"

namespace cfie {

ConfusionMatrix::ConfusionMatrix(std::size_t classes, bool with_none)
    : classes_(classes), dim_(classes + (with_none ? 1 : 0)), counts_(dim_ * dim_, 0) {}

void ConfusionMatrix::add(std::size_t gold, std::size_t predicted, std::uint64_t count) {
  if (gold >= dim_ || predicted >= dim_)
    throw IndexError("confusion cell (" + std::to_string(gold) + "," + std::to_string(predicted) + ") outside " +
                     std::to_string(dim_) + "x" + std::to_string(dim_));
  counts_[gold * dim_ + predicted] += count;
}

std::uint64_t ConfusionMatrix::gold_count(std::size_t k) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < dim_; ++j) s += at(k, j);
  return s;
}

std::uint64_t ConfusionMatrix::predicted_count(std::size_t k) const {
  std::uint64_t s = 0;
  for (std::size_t g = 0; g < dim_; ++g) s += at(g, k);
  return s;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.dim_ != dim_ || other.classes_ != classes_) throw DimensionError("confusion matrices differ in size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

ClassStats class_stats(const ConfusionMatrix& cm, std::size_t k) {
  if (k >= cm.classes()) throw IndexError("class " + std::to_string(k) + " outside confusion matrix");
  ClassStats s;
  s.gold = cm.gold_count(k);
  s.predicted = cm.predicted_count(k);
  s.tp = cm.tp(k);
  s.precision = s.predicted ? static_cast<double>(s.tp) / static_cast<double>(s.predicted) : 0.0;
  s.recall = s.gold ? static_cast<double>(s.tp) / static_cast<double>(s.gold) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

namespace {

template <typename F>
double mean_over(const ConfusionMatrix& cm, std::span<const std::size_t> subset, std::vector<std::size_t>* excluded,
                 F value) {
  if (subset.empty()) throw MetricError("metric over an empty class subset");
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t k : subset) {
    const ClassStats s = class_stats(cm, k);
    if (s.gold == 0) {
      if (excluded) excluded->push_back(k);
      continue;
    }
    total += value(s);
    ++used;
  }
  if (used == 0) throw MetricError("every class in the subset has zero gold instances");
  return total / static_cast<double>(used);
}

}  // namespace

double mean_recall(const ConfusionMatrix& cm, std::span<const std::size_t> subset, std::vector<std::size_t>* excluded) {
  return mean_over(cm, subset, excluded, [](const ClassStats& s) { return s.recall; });
}

double macro_f1(const ConfusionMatrix& cm, std::span<const std::size_t> subset, std::vector<std::size_t>* excluded) {
  return mean_over(cm, subset, excluded, [](const ClassStats& s) { return s.f1; });
}

double micro_f1(const ConfusionMatrix& cm, std::span<const std::size_t> subset) {
  std::uint64_t tp = 0, pred = 0, gold = 0;
  for (std::size_t k : subset) {
    tp += cm.tp(k);
    pred += cm.predicted_count(k);
    gold += cm.gold_count(k);
  }
  if (pred == 0 || gold == 0 || tp == 0) return 0.0;
  const double p = static_cast<double>(tp) / static_cast<double>(pred);
  const double r = static_cast<double>(tp) / static_cast<double>(gold);
  return 2.0 * p * r / (p + r);
}

std::vector<std::size_t> all_classes(const ConfusionMatrix& cm) {
  std::vector<std::size_t> out(cm.classes());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = k;
  return out;
}

double micro_f1(const ConfusionMatrix& cm) { return micro_f1(cm, all_classes(cm)); }

const BucketMetrics& MetricsReport::bucket(std::string_view name) const {
  for (const auto& b : buckets)
    if (b.name == name) return b;
  throw UsageError("report has no bucket '" + std::string(name) + "'");
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string fixed(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

std::string MetricsReport::to_jsonl() const {
  std::string out;
  for (const auto& b : buckets) {
    nlohmann::json j;
    j["record"] = "bucket";
    j["bucket"] = b.name;
    j["classes"] = b.classes;
    j["MR"] = opt(b.mr);
    j["MF1"] = opt(b.mf1);
    j["microF1"] = opt(b.micro_f1);
    j["fingerprint"] = fingerprint;
    j["seed"] = seed;
    out += j.dump() + "\n";
  }
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    const ClassStats& s = per_class[k];
    nlohmann::json j;
    j["record"] = "class";
    j["class"] = class_names[k];
    j["gold"] = s.gold;
    j["predicted"] = s.predicted;
    j["tp"] = s.tp;
    j["precision"] = 100.0 * s.precision;
    j["recall"] = 100.0 * s.recall;
    j["f1"] = 100.0 * s.f1;
    out += j.dump() + "\n";
  }
  for (const auto& n : notes) {
    nlohmann::json j;
    j["record"] = "note";
    j["note"] = n;
    out += j.dump() + "\n";
  }
  return out;
}

std::string MetricsReport::to_csv() const {
  std::string out = "bucket,metric,value\n";
  for (const auto& b : buckets) {
    const std::pair<const char*, const std::optional<double>*> cols[] = {
        {"MR", &b.mr}, {"MF1", &b.mf1}, {"microF1", &b.micro_f1}};
    for (const auto& [name, v] : cols) out += b.name + "," + name + "," + (*v ? fixed(**v) : std::string()) + "\n";
  }
  return out;
}

MetricsReport bucket_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names,
                            const BucketSplit& buckets) {
  if (class_names.size() != cm.classes()) throw DimensionError("class names do not match the confusion matrix");
  MetricsReport report;
  report.class_names = class_names;
  for (std::size_t k = 0; k < cm.classes(); ++k) report.per_class.push_back(class_stats(cm, k));
  for (const auto& w : buckets.warnings) report.notes.push_back(w);

  std::map<Bucket, std::vector<std::size_t>> members;
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    const auto b = buckets.bucket_of(class_names[k]);
    if (!b) report.notes.push_back("class '" + class_names[k] + "' missing from the bucket split; treated as Few");
    members[b.value_or(Bucket::Few)].push_back(k);
  }
  auto summarize = [&](const std::string& name, const std::vector<std::size_t>& subset) {
    BucketMetrics m;
    m.name = name;
    for (std::size_t k : subset) m.classes.push_back(class_names[k]);
    if (subset.empty()) {
      report.notes.push_back("bucket " + name + " has no classes");
      return m;
    }
    std::vector<std::size_t> excluded;
    try {
      m.mr = 100.0 * mean_recall(cm, subset, &excluded);
      m.mf1 = 100.0 * macro_f1(cm, subset);
      m.micro_f1 = 100.0 * micro_f1(cm, subset);
    } catch (const MetricError&) {
      report.notes.push_back("bucket " + name + ": no class with gold instances");
    }
    for (std::size_t k : excluded)
      report.notes.push_back("bucket " + name + ": class '" + class_names[k] + "' has no gold instances, excluded");
    return m;
  };
  for (Bucket b : {Bucket::Few, Bucket::Medium, Bucket::Many})
    report.buckets.push_back(summarize(std::string(to_string(b)), members[b]));
  report.buckets.push_back(summarize("Overall", all_classes(cm)));
  return report;
}

}  // namespace cfie
