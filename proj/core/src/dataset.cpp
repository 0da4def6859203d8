#include "advcausal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "advcausal/common.hpp"
#include "advcausal/rng.hpp"

namespace advcausal {

void LabeledDataset::validate() const {
  if (inputs.shape.size() != 2) throw ContractError("dataset: inputs must be (n x dim)");
  if (inputs.rows() != labels.size()) {
    throw ContractError("dataset: " + std::to_string(inputs.rows()) + " rows but " +
                        std::to_string(labels.size()) + " labels");
  }
  if (class_count < 2) throw ContractError("dataset: need at least 2 classes");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= class_count) {
      throw ContractError("dataset: label " + std::to_string(y) + " out of range");
    }
  }
  for (double v : inputs.data) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("dataset: input outside [0, 1]");
  }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
  LabeledDataset out;
  out.inputs = take_rows(inputs, indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  out.class_count = class_count;
  out.split = split;
  return out;
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ContractError("synthetic spec: need at least 2 classes");
  if (input_dim == 0) throw ContractError("synthetic spec: input_dim must be positive");
  if (kind == SyntheticKind::rings && input_dim < 2) {
    throw ContractError("synthetic spec: rings need input_dim >= 2");
  }
  if (samples_per_class.empty() ||
      (samples_per_class.size() != 1 && samples_per_class.size() != num_classes)) {
    throw ContractError("synthetic spec: samples_per_class needs 1 or num_classes entries");
  }
  for (std::size_t n : samples_per_class) {
    if (n == 0) throw ContractError("synthetic spec: zero samples in a class");
  }
  if (class_margin.empty() ||
      (class_margin.size() != 1 && class_margin.size() != num_classes)) {
    throw ContractError("synthetic spec: class_margin needs 1 or num_classes entries");
  }
  for (double m : class_margin) {
    if (m <= 0.0) throw ContractError("synthetic spec: margins must be positive");
  }
  if (noise_scale < 0.0) throw ContractError("synthetic spec: negative noise_scale");
  if (test_ratio <= 0.0 || test_ratio >= 1.0) {
    throw ContractError("synthetic spec: test_ratio must be in (0, 1)");
  }
}

std::size_t SyntheticSpec::count_for(std::size_t cls) const {
  return samples_per_class.size() == 1 ? samples_per_class[0] : samples_per_class[cls];
}

double SyntheticSpec::margin_for(std::size_t cls) const {
  return class_margin.size() == 1 ? class_margin[0] : class_margin[cls];
}

namespace {

struct RawDraw {
  std::vector<double> coords;  // n x dim
  std::vector<int> labels;
};

RawDraw draw_gaussian_mixture(const SyntheticSpec& spec, Rng& rng) {
  RawDraw out;
  const std::size_t dim = spec.input_dim;
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (std::size_t cls = 0; cls < spec.num_classes; ++cls) {
    const double angle = two_pi * static_cast<double>(cls) / static_cast<double>(spec.num_classes);
    std::vector<double> center(dim, 0.0);
    center[0] = spec.margin_for(cls) * std::cos(angle);
    if (dim > 1) center[1] = spec.margin_for(cls) * std::sin(angle);
    for (std::size_t i = 0; i < spec.count_for(cls); ++i) {
      for (std::size_t k = 0; k < dim; ++k) {
        out.coords.push_back(center[k] + spec.noise_scale * rng.normal());
      }
      out.labels.push_back(static_cast<int>(cls));
    }
  }
  return out;
}

RawDraw draw_rings(const SyntheticSpec& spec, Rng& rng) {
  RawDraw out;
  const std::size_t dim = spec.input_dim;
  const double two_pi = 2.0 * 3.14159265358979323846;
  double radius = 0.0;
  for (std::size_t cls = 0; cls < spec.num_classes; ++cls) {
    radius += spec.margin_for(cls);
    for (std::size_t i = 0; i < spec.count_for(cls); ++i) {
      const double angle = rng.uniform(0.0, two_pi);
      const double r = radius + spec.noise_scale * rng.normal();
      out.coords.push_back(r * std::cos(angle));
      out.coords.push_back(r * std::sin(angle));
      for (std::size_t k = 2; k < dim; ++k) {
        out.coords.push_back(spec.noise_scale * rng.normal());
      }
      out.labels.push_back(static_cast<int>(cls));
    }
  }
  return out;
}

void rescale_to_unit(std::vector<double>& coords) {
  if (coords.empty()) return;
  const auto [lo_it, hi_it] = std::minmax_element(coords.begin(), coords.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  for (double& v : coords) v = range > 0.0 ? (v - lo) / range : 0.0;
}

}  // namespace

DatasetPair gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  RawDraw raw = spec.kind == SyntheticKind::gaussian_mixture ? draw_gaussian_mixture(spec, rng)
                                                             : draw_rings(spec, rng);
  rescale_to_unit(raw.coords);

  const std::size_t dim = spec.input_dim;
  const std::size_t total = raw.labels.size();

  // Stratified split: shuffle each class block, first round(ratio*n) go to test.
  std::vector<std::size_t> train_idx, test_idx;
  std::size_t offset = 0;
  for (std::size_t cls = 0; cls < spec.num_classes; ++cls) {
    const std::size_t n = spec.count_for(cls);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), offset);
    rng.shuffle(idx);
    const std::size_t n_test = static_cast<std::size_t>(
        std::llround(spec.test_ratio * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) {
      (i < n_test ? test_idx : train_idx).push_back(idx[i]);
    }
    offset += n;
  }
  rng.shuffle(train_idx);
  rng.shuffle(test_idx);

  auto build = [&](const std::vector<std::size_t>& idx, SplitTag tag) {
    LabeledDataset ds;
    ds.inputs = Tensor::zeros({idx.size(), dim});
    ds.labels.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy_n(raw.coords.data() + idx[i] * dim, dim, ds.inputs.data.data() + i * dim);
      ds.labels.push_back(raw.labels[idx[i]]);
    }
    ds.class_count = spec.num_classes;
    ds.split = tag;
    ds.validate();
    return ds;
  };

  (void)total;
  return DatasetPair{build(train_idx, SplitTag::train), build(test_idx, SplitTag::test)};
}

namespace {

class ByteReader {
 public:
  ByteReader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path_);
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  std::uint32_t read_u32_be() {
    if (pos_ + 4 > bytes_.size()) {
      throw FormatError(path_ + ": truncated at byte offset " + std::to_string(pos_));
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_++]);
    return v;
  }

  const unsigned char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(path_ + ": truncated at byte offset " + std::to_string(pos_) +
                        " (need " + std::to_string(n) + " more bytes)");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += n;
    return p;
  }

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::string path_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
  ByteReader images(images_path);
  const std::uint32_t image_magic = images.read_u32_be();
  if (image_magic != 0x00000803u) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "0x%08x", image_magic);
    throw FormatError(images_path.string() + ": bad image magic " + buf +
                      " at byte offset 0 (expected 0x00000803)");
  }
  const std::size_t n = images.read_u32_be();
  const std::size_t rows = images.read_u32_be();
  const std::size_t cols = images.read_u32_be();
  const std::size_t dim = rows * cols;
  if (dim == 0) throw FormatError(images_path.string() + ": zero image dimensions");
  const unsigned char* pixels = images.take(n * dim);
  if (images.pos() != images.size()) {
    throw FormatError(images_path.string() + ": trailing bytes at offset " +
                      std::to_string(images.pos()));
  }

  ByteReader labels(labels_path);
  const std::uint32_t label_magic = labels.read_u32_be();
  if (label_magic != 0x00000801u) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "0x%08x", label_magic);
    throw FormatError(labels_path.string() + ": bad label magic " + buf +
                      " at byte offset 0 (expected 0x00000801)");
  }
  const std::size_t n_labels = labels.read_u32_be();
  if (n_labels != n) {
    throw FormatError(labels_path.string() + ": " + std::to_string(n_labels) +
                      " labels for " + std::to_string(n) + " images");
  }
  const unsigned char* raw_labels = labels.take(n_labels);

  LabeledDataset ds;
  ds.inputs = Tensor::zeros({n, dim});
  for (std::size_t i = 0; i < n * dim; ++i) {
    ds.inputs.data[i] = static_cast<double>(pixels[i]) / 255.0;
  }
  int max_label = 0;
  ds.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels.push_back(static_cast<int>(raw_labels[i]));
    max_label = std::max(max_label, ds.labels.back());
  }
  ds.class_count = static_cast<std::size_t>(max_label) + 1;
  if (ds.class_count < 2) ds.class_count = 2;
  ds.split = SplitTag::train;
  ds.validate();
  return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(text, &used);
  } catch (const std::exception&) {
    return false;
  }
  while (used < text.size() && (text[used] == ' ' || text[used] == '\t')) ++used;
  return used == text.size();
}

struct CsvTable {
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
};

CsvTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool first_content_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    std::vector<double> row(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!parse_double(cells[i], row[i])) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first_content_row) {  // optional header
        first_content_row = false;
        continue;
      }
      throw FormatError(path.string() + ": non-numeric cell at row " + std::to_string(line_no));
    }
    first_content_row = false;
    if (table.rows.empty()) {
      table.width = row.size();
    } else if (row.size() != table.width) {
      throw FormatError(path.string() + ": ragged row at row " + std::to_string(line_no) +
                        " (" + std::to_string(row.size()) + " cells, expected " +
                        std::to_string(table.width) + ")");
    }
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty()) throw FormatError(path.string() + ": no data rows");
  return table;
}

int label_from_cell(double v, const std::filesystem::path& path, std::size_t row) {
  const double rounded = std::nearbyint(v);
  if (std::abs(v - rounded) > 1e-9 || rounded < 0.0) {
    throw FormatError(path.string() + ": label must be a nonnegative integer at row " +
                      std::to_string(row + 1));
  }
  return static_cast<int>(rounded);
}

}  // namespace

std::pair<LabeledDataset, CsvNormalization> load_csv(const std::filesystem::path& path,
                                                     std::size_t label_column) {
  CsvTable table = read_numeric_csv(path);
  if (label_column >= table.width) {
    throw FormatError(path.string() + ": label column " + std::to_string(label_column) +
                      " out of range for " + std::to_string(table.width) + " columns");
  }
  const std::size_t n = table.rows.size();
  const std::size_t dim = table.width - 1;
  if (dim == 0) throw FormatError(path.string() + ": no feature columns");

  CsvNormalization norm;
  norm.label_column = label_column;
  norm.col_min.assign(dim, 0.0);
  norm.col_range.assign(dim, 0.0);
  for (std::size_t f = 0, c = 0; c < table.width; ++c) {
    if (c == label_column) continue;
    double lo = table.rows[0][c], hi = table.rows[0][c];
    for (const auto& row : table.rows) {
      lo = std::min(lo, row[c]);
      hi = std::max(hi, row[c]);
    }
    norm.col_min[f] = lo;
    norm.col_range[f] = hi - lo;
    ++f;
  }

  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    max_label = std::max(max_label, label_from_cell(table.rows[i][label_column], path, i));
  }
  const std::size_t num_classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
  LabeledDataset ds = load_csv(path, norm, num_classes, SplitTag::train);
  return {std::move(ds), std::move(norm)};
}

LabeledDataset load_csv(const std::filesystem::path& path, const CsvNormalization& norm,
                        std::size_t num_classes, SplitTag split) {
  CsvTable table = read_numeric_csv(path);
  if (norm.label_column >= table.width) {
    throw FormatError(path.string() + ": label column " + std::to_string(norm.label_column) +
                      " out of range for " + std::to_string(table.width) + " columns");
  }
  const std::size_t dim = table.width - 1;
  if (norm.col_min.size() != dim) {
    throw FormatError(path.string() + ": normalization expects " +
                      std::to_string(norm.col_min.size()) + " feature columns, file has " +
                      std::to_string(dim));
  }
  LabeledDataset ds;
  ds.inputs = Tensor::zeros({table.rows.size(), dim});
  ds.labels.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    std::size_t f = 0;
    for (std::size_t c = 0; c < table.width; ++c) {
      if (c == norm.label_column) continue;
      double v = 0.0;
      if (norm.col_range[f] > 0.0) {
        v = (table.rows[i][c] - norm.col_min[f]) / norm.col_range[f];
      }
      ds.inputs.data[i * dim + f] = std::clamp(v, 0.0, 1.0);
      ++f;
    }
    ds.labels.push_back(label_from_cell(table.rows[i][norm.label_column], path, i));
  }
  ds.class_count = num_classes;
  ds.split = split;
  ds.validate();
  return ds;
}

}  // namespace advcausal
