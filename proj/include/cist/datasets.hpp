#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cist/matrix.hpp"

namespace cist {

enum class Split { train, val, test };

const char* split_name(Split s);

struct LabeledDataset {
  Matrix features;           // N x D
  std::vector<int> labels;   // in [0, C)
  std::vector<Split> split;  // one tag per sample
  std::size_t num_classes = 0;

  std::vector<std::size_t> indices_of(Split s) const;
  // Materializes the rows of one split.
  void gather(Split s, Matrix* features_out, std::vector<int>* labels_out) const;
};

struct GaussianMixtureDataset {
  LabeledDataset data;
  Matrix class_means;  // C x D, for diagnostics and oracle checks
  double noise_std = 0.0;
};

// Class means sit on a sphere of radius `spread` (random directions, so
// pairwise distances vary and sample difficulty is mixed); samples add
// isotropic Gaussian noise with std `overlap`. Stratified 80/10/10 split,
// deterministic in the seed.
GaussianMixtureDataset gen_gaussian_mixture(std::size_t num_classes, std::size_t dims,
                                            std::size_t per_class, double spread,
                                            double overlap, std::uint64_t seed);

// CSV with header `split,label,f_0,...,f_{D-1}`; 17 significant digits so
// doubles round-trip losslessly.
void save_dataset_csv(const std::filesystem::path& path, const LabeledDataset& dataset);
LabeledDataset load_dataset_csv(const std::filesystem::path& path);

struct ExternalLogitDump {
  Matrix logits;                          // N x C, finite
  std::optional<std::vector<int>> labels; // present only when every row has one
};

// CSV with header `label,logit_0,...,logit_{C-1}`; the label field may be
// empty. Rejects NaN/Inf, ragged rows and bad headers with file:line context.
void save_logit_dump_csv(const std::filesystem::path& path, const ExternalLogitDump& dump);
ExternalLogitDump load_logit_dump_csv(const std::filesystem::path& path);

}  // namespace cist
