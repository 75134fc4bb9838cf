#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "poflsc/types.hpp"

namespace poflsc {

// Clean labelled data: features row-major n x dim, labels in [0, classes).
struct Dataset {
  std::size_t dim = 0;
  int classes = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
};

// Parses an IDX image file (magic 0x00000803) and label file (0x00000801).
// Pixels are scaled to [0, 1]; labels must be digits 0..9.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

// Writes a dataset back as IDX files; features must lie in [0, 1] and dim
// must equal rows * cols.
void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// Gaussian blobs with unit noise; class c is centred at separation * e_c.
Dataset synth_dataset(int classes, std::size_t per_class, std::size_t dim, double separation,
                      std::uint64_t seed);

void write_dataset_csv(const Dataset& ds, std::ostream& out);

struct Shard {
  MinerId owner;
  std::vector<std::size_t> indices;

  // Content digest of the indices; the owner is not part of it.
  Digest digest() const;
};

// Each miner draws samples_per_miner distinct indices from `pool`; draws are
// independent across miners, so shards may overlap.
std::vector<Shard> shard_dataset(std::span<const std::size_t> pool, std::size_t miner_count,
                                 std::size_t samples_per_miner, std::uint64_t seed);
std::vector<Shard> shard_dataset(const Dataset& ds, std::size_t miner_count,
                                 std::size_t samples_per_miner, std::uint64_t seed);

// Disjoint seeded split: (train pool, held-out indices).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_holdout(
    std::size_t n, double holdout_fraction, std::uint64_t seed);

// Multinomial logistic regression when hidden == 0, otherwise one tanh
// hidden layer of that width.
struct ModelSpec {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  int classes = 0;

  std::size_t param_count() const;
  bool operator==(const ModelSpec&) const = default;
};

struct ModelParams {
  ModelSpec spec;
  std::vector<double> values;

  bool operator==(const ModelParams&) const = default;
};

// Zeros for logistic models; hidden-layer weights uniform in +-0.05.
ModelParams init_params(const ModelSpec& spec, std::uint64_t seed);

// Canonical big-endian encoding: dims, then every parameter's bit pattern.
std::vector<std::uint8_t> canonical_params(const ModelParams& p);
Digest params_hash(const ModelParams& p);

struct GradientUpdate {
  MinerId miner;
  std::vector<double> delta;
  std::size_t samples_used = 0;
  std::uint64_t round = 0;  // model version the update was trained from
  std::uint64_t seed = 0;
};

void logits(const ModelParams& p, std::span<const double> x, std::span<double> out);

// Mean softmax cross-entropy over `indices` and its gradient.
double loss_and_gradient(const ModelParams& p, const Dataset& ds,
                         std::span<const std::size_t> indices, std::vector<double>& grad);

// Mini-batch gradient descent, batch size min(8, shard size), reshuffled each
// epoch from `seed`. delta = trained - params.
GradientUpdate train_local(const ModelParams& params, const Dataset& ds, const Shard& shard,
                           int epochs, double lr, std::uint64_t seed);

// One full-batch gradient step over the shard.
GradientUpdate gradient_step(const ModelParams& params, const Dataset& ds, const Shard& shard,
                             double lr);

// Fraction of argmax-correct predictions; logit ties go to the lower class.
double evaluate(const ModelParams& params, const Dataset& ds);
double evaluate(const ModelParams& params, const Dataset& ds,
                std::span<const std::size_t> indices);

}  // namespace poflsc
