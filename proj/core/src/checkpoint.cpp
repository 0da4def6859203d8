#include "advcausal/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "advcausal/common.hpp"

namespace advcausal {

namespace {

constexpr std::uint32_t kClassifierMagic = 0x41434c46u;  // "ACLF"
constexpr std::uint32_t kDatasetMagic = 0x41445346u;     // "ADSF"
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path.string()), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path_ + " for writing");
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 8);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    u64(bits);
  }
  void f64_array(const std::vector<double>& vs) {
    for (double v : vs) f64(v);
  }
  void close() {
    out_.flush();
    if (!out_) throw IoError("write failed for " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path_);
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  void done() {
    if (pos_ != bytes_.size()) {
      throw FormatError(path_ + ": trailing bytes at offset " + std::to_string(pos_));
    }
  }
  const std::string& path() const { return path_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(path_ + ": truncated at byte offset " + std::to_string(pos_));
    }
  }
  unsigned char byte() { return static_cast<unsigned char>(bytes_[pos_++]); }
  std::string path_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_classifier(const std::filesystem::path& path, const Classifier& model) {
  Writer w(path);
  w.u32(kClassifierMagic);
  w.u32(kVersion);
  w.u64(model.spec.input_dim);
  w.u64(model.spec.num_classes);
  w.u64(model.spec.hidden_dims.size());
  for (std::size_t h : model.spec.hidden_dims) w.u64(h);
  w.u32(static_cast<std::uint32_t>(model.spec.activation));
  w.u64(model.spec.init_seed);
  w.u64(model.weights.size());
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    w.u64(model.weights[l].shape[0]);
    w.u64(model.weights[l].shape[1]);
    w.f64_array(model.weights[l].data);
    w.f64_array(model.biases[l].data);
  }
  w.close();
}

Classifier load_classifier(const std::filesystem::path& path) {
  Reader r(path);
  if (r.u32() != kClassifierMagic) throw FormatError(r.path() + ": not a classifier checkpoint");
  if (r.u32() != kVersion) throw FormatError(r.path() + ": unsupported checkpoint version");
  Classifier model;
  model.spec.input_dim = r.u64();
  model.spec.num_classes = r.u64();
  const std::size_t n_hidden = r.u64();
  for (std::size_t i = 0; i < n_hidden; ++i) model.spec.hidden_dims.push_back(r.u64());
  model.spec.activation = static_cast<Activation>(r.u32());
  model.spec.init_seed = r.u64();
  const std::size_t n_layers = r.u64();
  if (n_layers != n_hidden + 1) throw FormatError(r.path() + ": layer count mismatch");
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t rows = r.u64();
    const std::size_t cols = r.u64();
    Tensor w = Tensor::zeros({rows, cols});
    for (double& v : w.data) v = r.f64();
    w.requires_grad = true;
    Tensor b = Tensor::zeros({rows});
    for (double& v : b.data) v = r.f64();
    b.requires_grad = true;
    model.weights.push_back(std::move(w));
    model.biases.push_back(std::move(b));
  }
  r.done();
  model.spec.validate();
  return model;
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& dataset) {
  Writer w(path);
  w.u32(kDatasetMagic);
  w.u32(kVersion);
  w.u32(dataset.split == SplitTag::train ? 0u : 1u);
  w.u64(dataset.size());
  w.u64(dataset.input_dim());
  w.u64(dataset.class_count);
  w.f64_array(dataset.inputs.data);
  for (int y : dataset.labels) w.u32(static_cast<std::uint32_t>(y));
  w.close();
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  Reader r(path);
  if (r.u32() != kDatasetMagic) throw FormatError(r.path() + ": not a dataset cache");
  if (r.u32() != kVersion) throw FormatError(r.path() + ": unsupported dataset version");
  LabeledDataset ds;
  ds.split = r.u32() == 0 ? SplitTag::train : SplitTag::test;
  const std::size_t n = r.u64();
  const std::size_t dim = r.u64();
  ds.class_count = r.u64();
  ds.inputs = Tensor::zeros({n, dim});
  for (double& v : ds.inputs.data) v = r.f64();
  ds.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(r.u32()));
  r.done();
  ds.validate();
  return ds;
}

}  // namespace advcausal
