#pragma once

#include <filesystem>

#include "advcausal/dataset.hpp"
#include "advcausal/model.hpp"

namespace advcausal {

// Versioned little-endian binary containers. f64 payloads are written as
// raw bit patterns, so save/load round-trips are bit-exact.

void save_classifier(const std::filesystem::path& path, const Classifier& model);
Classifier load_classifier(const std::filesystem::path& path);

void save_dataset(const std::filesystem::path& path, const LabeledDataset& dataset);
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace advcausal
