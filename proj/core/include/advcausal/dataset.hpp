#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "advcausal/tensor.hpp"

namespace advcausal {

enum class SplitTag { train, test };

struct LabeledDataset {
  Tensor inputs;            // (n x input_dim), every value in [0, 1]
  std::vector<int> labels;  // in [0, class_count)
  std::size_t class_count = 0;
  SplitTag split = SplitTag::train;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return inputs.cols(); }
  void validate() const;
  LabeledDataset subset(const std::vector<std::size_t>& indices) const;
};

enum class SyntheticKind { gaussian_mixture, rings };

/// Per-class margin is the control for vulnerability: for gaussian_mixture
/// it is the distance of the class center from the origin (smaller margin
/// -> closer to every other class); for rings it is the radial gap added
/// over the previous ring.
struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::gaussian_mixture;
  std::size_t num_classes = 2;
  std::vector<std::size_t> samples_per_class;  // one entry, or one per class
  std::size_t input_dim = 2;
  std::vector<double> class_margin;  // one entry, or one per class
  double noise_scale = 0.1;
  double test_ratio = 0.2;  // stratified per class
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t count_for(std::size_t cls) const;
  double margin_for(std::size_t cls) const;
};

struct DatasetPair {
  LabeledDataset train;
  LabeledDataset test;
};

/// Deterministic per seed. Raw coordinates are min-max rescaled into [0, 1]
/// with a single affine map over the whole draw, then split per class at
/// test_ratio; train and test are disjoint by construction.
DatasetPair gen_synthetic(const SyntheticSpec& spec);

/// IDX (big-endian) image/label pair, magics 0x00000803 / 0x00000801.
/// Pixels are scaled to [0,1] by /255 and flattened row-major.
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path);

struct CsvNormalization {
  std::size_t label_column = 0;
  std::vector<double> col_min;    // per feature column, label excluded
  std::vector<double> col_range;  // 0 for constant columns (mapped to 0)
};

/// Numeric CSV with optional header. Features are min-max normalized to
/// [0,1] per column; the returned constants reproduce the mapping on a
/// later split.
std::pair<LabeledDataset, CsvNormalization> load_csv(const std::filesystem::path& path,
                                                     std::size_t label_column);
LabeledDataset load_csv(const std::filesystem::path& path, const CsvNormalization& norm,
                        std::size_t num_classes, SplitTag split);

}  // namespace advcausal
