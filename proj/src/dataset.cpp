#include "bgnn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "bgnn/error.hpp"

namespace bgnn::data {

Dataset::Dataset(DatasetMeta meta, std::vector<double> features, std::vector<int> labels)
    : meta_(std::move(meta)), features_(std::move(features)), labels_(std::move(labels)) {
  if (meta_.dim <= 0) throw Error::config("dataset: dim must be positive");
  if (meta_.num_classes < 1) throw Error::config("dataset: num_classes must be >= 1");
  if (features_.size() != labels_.size() * static_cast<std::size_t>(meta_.dim)) {
    throw Error::structure("dataset: feature matrix size does not match item count and dim");
  }
  class_index_.resize(static_cast<std::size_t>(meta_.num_classes));
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const int c = labels_[i];
    if (c < 0 || c >= meta_.num_classes) {
      throw Error::structure("dataset: label " + std::to_string(c) + " outside [0, " +
                             std::to_string(meta_.num_classes) + ")");
    }
    class_index_[static_cast<std::size_t>(c)].push_back(static_cast<std::int64_t>(i));
  }
  for (int c = 0; c < meta_.num_classes; ++c) {
    if (class_index_[static_cast<std::size_t>(c)].empty()) {
      throw Error::structure("dataset: class " + std::to_string(c) + " has no items");
    }
  }
}

std::span<const double> Dataset::item(std::int64_t index) const {
  return {features_.data() + static_cast<std::size_t>(index) * meta_.dim,
          static_cast<std::size_t>(meta_.dim)};
}

const std::vector<std::int64_t>& Dataset::items_of_class(int c) const {
  if (c < 0 || c >= meta_.num_classes) {
    throw Error::structure("dataset: class " + std::to_string(c) + " out of range");
  }
  return class_index_[static_cast<std::size_t>(c)];
}

std::int64_t Dataset::min_class_size() const {
  std::int64_t m = std::numeric_limits<std::int64_t>::max();
  for (const auto& idx : class_index_) m = std::min(m, static_cast<std::int64_t>(idx.size()));
  return m;
}

Dataset make_synthetic_dataset(int num_classes, int dim, double spread, int items_per_class,
                               RngStream& rng, const std::string& name) {
  if (num_classes < 2) throw Error::config("make_synthetic_dataset: num_classes must be >= 2");
  if (dim <= 0) throw Error::config("make_synthetic_dataset: dim must be positive");
  if (!(spread > 0.0)) throw Error::config("make_synthetic_dataset: spread must be positive");
  if (items_per_class < 1) {
    throw Error::config("make_synthetic_dataset: items_per_class must be >= 1");
  }

  std::vector<double> features;
  features.reserve(static_cast<std::size_t>(num_classes) * items_per_class * dim);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(num_classes) * items_per_class);

  std::vector<double> center(static_cast<std::size_t>(dim));
  for (int c = 0; c < num_classes; ++c) {
    double norm2 = 0.0;
    for (auto& v : center) {
      v = rng.normal();
      norm2 += v * v;
    }
    const double norm = std::sqrt(norm2);
    if (norm > 1e-12) {
      for (auto& v : center) v /= norm;
    } else {
      center.assign(center.size(), 0.0);
      center[0] = 1.0;
    }
    for (int k = 0; k < items_per_class; ++k) {
      for (double cv : center) features.push_back(cv + spread * rng.normal());
      labels.push_back(c);
    }
  }
  return Dataset({name, dim, num_classes}, std::move(features), std::move(labels));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& tok, int line_no, const char* what) {
  double v = 0.0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
    throw Error::parse("line " + std::to_string(line_no) + ": invalid " + what + " '" + tok + "'");
  }
  return v;
}

int parse_label(const std::string& tok, int line_no) {
  int v = 0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end || v < 0) {
    throw Error::parse("line " + std::to_string(line_no) + ": invalid label '" + tok + "'");
  }
  return v;
}

void format_double(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("cannot open dataset file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw Error::parse("line 1: empty dataset file '" + path + "'");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "label") {
    throw Error::parse("line 1: header must start with 'label', got '" +
                       (header.empty() ? std::string() : header[0]) + "'");
  }
  const int dim = static_cast<int>(header.size()) - 1;
  if (dim < 1) throw Error::parse("line 1: header has no feature columns");
  for (int j = 0; j < dim; ++j) {
    const std::string expect = "f" + std::to_string(j);
    if (header[static_cast<std::size_t>(j) + 1] != expect) {
      throw Error::parse("line 1: unknown header column '" + header[static_cast<std::size_t>(j) + 1] +
                         "', expected '" + expect + "'");
    }
  }

  std::vector<double> features;
  std::vector<int> labels;
  int max_label = -1;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tokens = split_csv_line(line);
    if (static_cast<int>(tokens.size()) != dim + 1) {
      throw Error::parse("line " + std::to_string(line_no) + ": expected " +
                         std::to_string(dim + 1) + " columns, got " +
                         std::to_string(tokens.size()));
    }
    const int label = parse_label(tokens[0], line_no);
    max_label = std::max(max_label, label);
    labels.push_back(label);
    for (int j = 0; j < dim; ++j) {
      features.push_back(parse_double(tokens[static_cast<std::size_t>(j) + 1], line_no, "feature"));
    }
  }
  if (labels.empty()) throw Error::parse("dataset '" + path + "' has a header but no rows");

  std::string name = path;
  if (const auto slash = name.find_last_of('/'); slash != std::string::npos) {
    name = name.substr(slash + 1);
  }
  return Dataset({name, dim, max_label + 1}, std::move(features), std::move(labels));
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error::io("cannot open '" + path + "' for writing");
  std::string buf = "label";
  for (int j = 0; j < ds.dim(); ++j) buf += ",f" + std::to_string(j);
  buf += "\n";
  for (std::int64_t i = 0; i < ds.num_items(); ++i) {
    buf += std::to_string(ds.label(i));
    for (double v : ds.item(i)) {
      buf.push_back(',');
      format_double(buf, v);
    }
    buf.push_back('\n');
  }
  out << buf;
  if (!out) throw Error::io("failed writing '" + path + "'");
}

}  // namespace bgnn::data
