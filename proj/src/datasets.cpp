#include "cist/datasets.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <string>

#include "cist/rng.hpp"

namespace cist {

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

namespace {

std::optional<Split> split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

std::string loc(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double_field(const std::string& field, const std::filesystem::path& path,
                          std::size_t line, std::size_t column) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0' || errno == ERANGE) {
    throw FormatError(loc(path, line) + ": field " + std::to_string(column) +
                      " is not a finite number: '" + field + "'");
  }
  if (!std::isfinite(v)) {
    throw FormatError(loc(path, line) + ": field " + std::to_string(column) +
                      " is non-finite: '" + field + "'");
  }
  return v;
}

int parse_label_field(const std::string& field, const std::filesystem::path& path,
                      std::size_t line, std::size_t column) {
  errno = 0;
  char* end = nullptr;
  long v = std::strtol(field.c_str(), &end, 10);
  if (end == field.c_str() || *end != '\0' || errno == ERANGE || v < 0 || v > 1 << 20) {
    throw FormatError(loc(path, line) + ": field " + std::to_string(column) +
                      " is not a valid label: '" + field + "'");
  }
  return static_cast<int>(v);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::size_t> LabeledDataset::indices_of(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

void LabeledDataset::gather(Split s, Matrix* features_out, std::vector<int>* labels_out) const {
  const std::vector<std::size_t> idx = indices_of(s);
  if (features_out != nullptr) {
    *features_out = Matrix(idx.size(), features.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto src = features.row(idx[r]);
      std::copy(src.begin(), src.end(), features_out->row(r).begin());
    }
  }
  if (labels_out != nullptr) {
    labels_out->clear();
    for (std::size_t i : idx) labels_out->push_back(labels[i]);
  }
}

GaussianMixtureDataset gen_gaussian_mixture(std::size_t num_classes, std::size_t dims,
                                            std::size_t per_class, double spread,
                                            double overlap, std::uint64_t seed) {
  if (num_classes < 2) throw InvalidArgumentError("gen_gaussian_mixture: need >= 2 classes");
  if (per_class < 1) throw InvalidArgumentError("gen_gaussian_mixture: need >= 1 per class");
  if (dims < 1) throw InvalidArgumentError("gen_gaussian_mixture: need >= 1 dim");
  if (!(spread >= 0.0) || !(overlap >= 0.0)) {
    throw InvalidArgumentError("gen_gaussian_mixture: spread/overlap must be >= 0");
  }

  GaussianMixtureDataset out;
  out.noise_std = overlap;
  out.class_means = Matrix(num_classes, dims);
  Rng mean_rng = Rng::substream(seed, "mixture-means");
  for (std::size_t c = 0; c < num_classes; ++c) {
    double norm = 0.0;
    auto row = out.class_means.row(c);
    for (double& x : row) {
      x = mean_rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;
    for (double& x : row) x *= spread / norm;
  }

  const std::size_t n = num_classes * per_class;
  out.data.features = Matrix(n, dims);
  out.data.labels.resize(n);
  out.data.split.assign(n, Split::train);
  out.data.num_classes = num_classes;

  Rng noise_rng = Rng::substream(seed, "mixture-noise");
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::size_t i = c * per_class + k;
      out.data.labels[i] = static_cast<int>(c);
      auto mean = out.class_means.row(c);
      auto row = out.data.features.row(i);
      for (std::size_t d = 0; d < dims; ++d) row[d] = mean[d] + overlap * noise_rng.normal();
    }
  }

  // Stratified 80/10/10 split, shuffled within each class.
  Rng split_rng = Rng::substream(seed, "mixture-split");
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> idx(per_class);
    std::iota(idx.begin(), idx.end(), c * per_class);
    split_rng.shuffle(idx);
    const std::size_t n_val = per_class / 10;
    const std::size_t n_test = per_class / 10;
    for (std::size_t r = 0; r < per_class; ++r) {
      Split s = Split::train;
      if (r < n_val) {
        s = Split::val;
      } else if (r < n_val + n_test) {
        s = Split::test;
      }
      out.data.split[idx[r]] = s;
    }
  }
  return out;
}

void save_dataset_csv(const std::filesystem::path& path, const LabeledDataset& dataset) {
  std::ofstream out(path);
  if (!out) throw FormatError("save_dataset_csv: cannot open " + path.string());
  out << "split,label";
  for (std::size_t d = 0; d < dataset.features.cols(); ++d) out << ",f_" << d;
  out << "\n";
  for (std::size_t i = 0; i < dataset.features.rows(); ++i) {
    out << split_name(dataset.split[i]) << ',' << dataset.labels[i];
    for (double v : dataset.features.row(i)) out << ',' << fmt_double(v);
    out << "\n";
  }
  if (!out) throw FormatError("save_dataset_csv: write failed for " + path.string());
}

LabeledDataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("load_dataset_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(loc(path, 1) + ": empty file");
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "split" || header[1] != "label") {
    throw FormatError(loc(path, 1) + ": expected header split,label,f_0,...");
  }
  const std::size_t dims = header.size() - 2;
  for (std::size_t d = 0; d < dims; ++d) {
    if (header[d + 2] != "f_" + std::to_string(d)) {
      throw FormatError(loc(path, 1) + ": bad feature column name '" + header[d + 2] + "'");
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<Split> splits;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != dims + 2) {
      throw FormatError(loc(path, line_no) + ": expected " + std::to_string(dims + 2) +
                        " fields, got " + std::to_string(fields.size()));
    }
    auto split = split_from_name(fields[0]);
    if (!split.has_value()) {
      throw FormatError(loc(path, line_no) + ": unknown split tag '" + fields[0] + "'");
    }
    splits.push_back(*split);
    labels.push_back(parse_label_field(fields[1], path, line_no, 2));
    std::vector<double> row(dims);
    for (std::size_t d = 0; d < dims; ++d) {
      row[d] = parse_double_field(fields[d + 2], path, line_no, d + 3);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(loc(path, line_no) + ": no data rows");

  LabeledDataset dataset;
  dataset.features = Matrix::from_rows(rows);
  dataset.labels = std::move(labels);
  dataset.split = std::move(splits);
  dataset.num_classes =
      static_cast<std::size_t>(*std::max_element(dataset.labels.begin(), dataset.labels.end())) +
      1;
  if (dataset.labels.size() < dataset.num_classes) {
    throw FormatError(path.string() + ": fewer samples than classes");
  }
  std::vector<bool> seen(dataset.num_classes, false);
  for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
    if (dataset.split[i] == Split::train) seen[static_cast<std::size_t>(dataset.labels[i])] = true;
  }
  for (std::size_t c = 0; c < dataset.num_classes; ++c) {
    if (!seen[c]) {
      throw FormatError(path.string() + ": class " + std::to_string(c) +
                        " missing from the train split");
    }
  }
  return dataset;
}

void save_logit_dump_csv(const std::filesystem::path& path, const ExternalLogitDump& dump) {
  if (dump.labels.has_value() && dump.labels->size() != dump.logits.rows()) {
    throw ShapeError("save_logit_dump_csv: labels/logits size mismatch");
  }
  std::ofstream out(path);
  if (!out) throw FormatError("save_logit_dump_csv: cannot open " + path.string());
  out << "label";
  for (std::size_t c = 0; c < dump.logits.cols(); ++c) out << ",logit_" << c;
  out << "\n";
  for (std::size_t i = 0; i < dump.logits.rows(); ++i) {
    if (dump.labels.has_value()) out << (*dump.labels)[i];
    for (double v : dump.logits.row(i)) out << ',' << fmt_double(v);
    out << "\n";
  }
  if (!out) throw FormatError("save_logit_dump_csv: write failed for " + path.string());
}

ExternalLogitDump load_logit_dump_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("load_logit_dump_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(loc(path, 1) + ": empty file");
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "label") {
    throw FormatError(loc(path, 1) + ": expected header label,logit_0,...");
  }
  const std::size_t width = header.size() - 1;
  for (std::size_t c = 0; c < width; ++c) {
    if (header[c + 1] != "logit_" + std::to_string(c)) {
      throw FormatError(loc(path, 1) + ": bad logit column name '" + header[c + 1] + "'");
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t labeled = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != width + 1) {
      throw FormatError(loc(path, line_no) + ": expected " + std::to_string(width + 1) +
                        " fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) {
      labels.push_back(-1);
    } else {
      labels.push_back(parse_label_field(fields[0], path, line_no, 1));
      ++labeled;
    }
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c) {
      row[c] = parse_double_field(fields[c + 1], path, line_no, c + 2);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(loc(path, line_no) + ": no data rows");
  if (labeled != 0 && labeled != rows.size()) {
    throw FormatError(path.string() + ": labels must be present on all rows or none");
  }

  ExternalLogitDump dump;
  dump.logits = Matrix::from_rows(rows);
  if (labeled == rows.size()) dump.labels = std::move(labels);
  return dump;
}

}  // namespace cist
