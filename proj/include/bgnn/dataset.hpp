#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bgnn/rng.hpp"

namespace bgnn::data {

struct DatasetMeta {
  std::string name;
  int dim = 0;
  int num_classes = 0;
};

// Immutable feature/label store with a per-class index. Labels must be dense
// in [0, num_classes).
class Dataset {
 public:
  Dataset(DatasetMeta meta, std::vector<double> features, std::vector<int> labels);

  const DatasetMeta& meta() const { return meta_; }
  int dim() const { return meta_.dim; }
  int num_classes() const { return meta_.num_classes; }
  std::int64_t num_items() const { return static_cast<std::int64_t>(labels_.size()); }

  std::span<const double> item(std::int64_t index) const;
  int label(std::int64_t index) const { return labels_[static_cast<std::size_t>(index)]; }
  const std::vector<std::int64_t>& items_of_class(int c) const;
  std::int64_t min_class_size() const;

 private:
  DatasetMeta meta_;
  std::vector<double> features_;  // [num_items, dim] row-major
  std::vector<int> labels_;
  std::vector<std::vector<std::int64_t>> class_index_;
};

// Synthetic few-shot dataset: class c is an isotropic Gaussian blob of width
// `spread` around a random unit-norm center. Deterministic given the stream.
Dataset make_synthetic_dataset(int num_classes, int dim, double spread, int items_per_class,
                               RngStream& rng, const std::string& name = "synthetic");

// CSV format, one item per row:
//   label,f0,f1,...,f{d-1}
// Parse failures name the offending line.
Dataset load_dataset(const std::string& path);
void save_dataset_csv(const Dataset& ds, const std::string& path);

}  // namespace bgnn::data
