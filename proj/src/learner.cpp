#include "poflsc/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "poflsc/bytes.hpp"
#include "poflsc/crypto.hpp"
#include "poflsc/error.hpp"
#include "poflsc/rng.hpp"

namespace poflsc {
namespace {

void check_dims(const ModelParams& p, const Dataset& ds) {
  if (p.values.size() != p.spec.param_count() || p.spec.input_dim != ds.dim ||
      p.spec.classes != ds.classes) {
    throw Error(ErrorCode::kDimensionMismatch,
                "model expects dim " + std::to_string(p.spec.input_dim) + " x " +
                    std::to_string(p.spec.classes) + " classes, dataset has dim " +
                    std::to_string(ds.dim) + " x " + std::to_string(ds.classes));
  }
}

void check_indices(const Dataset& ds, std::span<const std::size_t> indices) {
  for (auto i : indices) {
    if (i >= ds.size()) throw Error(ErrorCode::kBadParams, "shard index out of range");
  }
}

// Forward pass; hidden activations are written when the model has a hidden layer.
void forward(const ModelParams& p, std::span<const double> x, std::span<double> hidden,
             std::span<double> z) {
  const auto& s = p.spec;
  const double* w = p.values.data();
  const auto classes = static_cast<std::size_t>(s.classes);
  if (s.hidden == 0) {
    const double* b = w + classes * s.input_dim;
    for (std::size_t c = 0; c < classes; ++c) {
      double acc = b[c];
      const double* wc = w + c * s.input_dim;
      for (std::size_t k = 0; k < s.input_dim; ++k) acc += wc[k] * x[k];
      z[c] = acc;
    }
    return;
  }
  const double* b1 = w + s.hidden * s.input_dim;
  const double* w2 = b1 + s.hidden;
  const double* b2 = w2 + classes * s.hidden;
  for (std::size_t h = 0; h < s.hidden; ++h) {
    double acc = b1[h];
    const double* wh = w + h * s.input_dim;
    for (std::size_t k = 0; k < s.input_dim; ++k) acc += wh[k] * x[k];
    hidden[h] = std::tanh(acc);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    double acc = b2[c];
    const double* wc = w2 + c * s.hidden;
    for (std::size_t h = 0; h < s.hidden; ++h) acc += wc[h] * hidden[h];
    z[c] = acc;
  }
}

// Turns logits into probabilities in place and returns -log p[label].
double softmax_xent(std::span<double> z, int label) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return -std::log(std::max(z[static_cast<std::size_t>(label)], 1e-300));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (f == nullptr) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> data;
  std::uint8_t buf[65536];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) data.insert(data.end(), buf, buf + got);
  std::fclose(f);
  return data;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& data) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  const bool ok = std::fwrite(data.data(), 1, data.size(), f) == data.size();
  std::fclose(f);
  if (!ok) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

}  // namespace

std::size_t ModelSpec::param_count() const {
  const auto c = static_cast<std::size_t>(classes);
  if (hidden == 0) return c * input_dim + c;
  return hidden * input_dim + hidden + c * hidden + c;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  ByteReader ri(img);
  if (ri.u32() != kIdxImages) throw Error(ErrorCode::kBadMagic, images_path.string());
  const std::uint32_t n = ri.u32();
  const std::uint32_t rows = ri.u32();
  const std::uint32_t cols = ri.u32();

  ByteReader rl(lab);
  if (rl.u32() != kIdxLabels) throw Error(ErrorCode::kBadMagic, labels_path.string());
  const std::uint32_t n_labels = rl.u32();
  if (n != n_labels) {
    throw Error(ErrorCode::kCountMismatch,
                std::to_string(n) + " images vs " + std::to_string(n_labels) + " labels");
  }

  Dataset ds;
  ds.dim = static_cast<std::size_t>(rows) * cols;
  ds.classes = 10;
  const std::size_t pixels = ds.dim * n;
  if (img.size() - ri.position() < pixels) {
    throw Error(ErrorCode::kTruncatedFile, images_path.string());
  }
  if (lab.size() - rl.position() < n) throw Error(ErrorCode::kTruncatedFile, labels_path.string());

  ds.features.resize(pixels);
  for (std::size_t i = 0; i < pixels; ++i) {
    ds.features[i] = static_cast<double>(img[ri.position() + i]) / 255.0;
  }
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = lab[rl.position() + i];
    if (label > 9) throw Error(ErrorCode::kParse, "label " + std::to_string(label) + " > 9");
    ds.labels[i] = label;
  }
  return ds;
}

void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (rows * cols != ds.dim) throw Error(ErrorCode::kBadParams, "rows * cols != dim");
  ByteWriter wi;
  wi.u32(kIdxImages);
  wi.u32(static_cast<std::uint32_t>(ds.size()));
  wi.u32(static_cast<std::uint32_t>(rows));
  wi.u32(static_cast<std::uint32_t>(cols));
  for (double v : ds.features) {
    wi.u8(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  ByteWriter wl;
  wl.u32(kIdxLabels);
  wl.u32(static_cast<std::uint32_t>(ds.size()));
  for (int l : ds.labels) wl.u8(static_cast<std::uint8_t>(l));
  write_file(images_path, wi.data());
  write_file(labels_path, wl.data());
}

Dataset synth_dataset(int classes, std::size_t per_class, std::size_t dim, double separation,
                      std::uint64_t seed) {
  if (classes < 2 || per_class < 1 || dim < static_cast<std::size_t>(classes)) {
    throw Error(ErrorCode::kBadParams, "synth_dataset needs classes >= 2, per_class >= 1, dim >= classes");
  }
  Dataset ds;
  ds.dim = dim;
  ds.classes = classes;
  ds.features.reserve(static_cast<std::size_t>(classes) * per_class * dim);
  Rng rng(seed);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (int c = 0; c < classes; ++c) {
      for (std::size_t k = 0; k < dim; ++k) {
        const double centre = k == static_cast<std::size_t>(c) ? separation : 0.0;
        ds.features.push_back(centre + rng.normal());
      }
      ds.labels.push_back(c);
    }
  }
  return ds;
}

void write_dataset_csv(const Dataset& ds, std::ostream& out) {
  out << "label";
  for (std::size_t k = 0; k < ds.dim; ++k) out << ",x" << k;
  out << '\n';
  std::ostringstream cell;
  cell.precision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (double v : ds.row(i)) {
      cell.str("");
      cell << v;
      out << ',' << cell.str();
    }
    out << '\n';
  }
}

Digest Shard::digest() const {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(indices.size()));
  for (auto i : indices) w.u64(i);
  return sha256(w.data());
}

std::vector<Shard> shard_dataset(std::span<const std::size_t> pool, std::size_t miner_count,
                                 std::size_t samples_per_miner, std::uint64_t seed) {
  if (pool.size() < samples_per_miner) {
    throw Error(ErrorCode::kDatasetTooSmall, std::to_string(pool.size()) + " samples < " +
                                                 std::to_string(samples_per_miner) + " per miner");
  }
  std::vector<Shard> shards;
  shards.reserve(miner_count);
  std::vector<std::size_t> scratch(pool.begin(), pool.end());
  for (std::uint32_t m = 0; m < miner_count; ++m) {
    Rng rng(derive_seed(seed, "shard", m));
    std::copy(pool.begin(), pool.end(), scratch.begin());
    // Partial Fisher-Yates: the first samples_per_miner slots are the draw.
    for (std::size_t i = 0; i < samples_per_miner; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(scratch.size() - i));
      std::swap(scratch[i], scratch[j]);
    }
    shards.push_back({MinerId{m}, {scratch.begin(), scratch.begin() + samples_per_miner}});
  }
  return shards;
}

std::vector<Shard> shard_dataset(const Dataset& ds, std::size_t miner_count,
                                 std::size_t samples_per_miner, std::uint64_t seed) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  return shard_dataset(all, miner_count, samples_per_miner, seed);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_holdout(
    std::size_t n, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw Error(ErrorCode::kBadParams, "holdout fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span(order));
  const auto held = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
  std::vector<std::size_t> holdout(order.begin(), order.begin() + held);
  std::vector<std::size_t> train(order.begin() + held, order.end());
  std::sort(holdout.begin(), holdout.end());
  std::sort(train.begin(), train.end());
  return {std::move(train), std::move(holdout)};
}

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  ModelParams p{spec, std::vector<double>(spec.param_count(), 0.0)};
  if (spec.hidden == 0) return p;
  Rng rng(seed);
  const auto c = static_cast<std::size_t>(spec.classes);
  const std::size_t w1 = spec.hidden * spec.input_dim;
  const std::size_t w2_begin = w1 + spec.hidden;
  for (std::size_t i = 0; i < w1; ++i) p.values[i] = rng.uniform(-0.05, 0.05);
  for (std::size_t i = 0; i < c * spec.hidden; ++i) p.values[w2_begin + i] = rng.uniform(-0.05, 0.05);
  return p;
}

std::vector<std::uint8_t> canonical_params(const ModelParams& p) {
  ByteWriter w;
  w.u64(p.spec.input_dim);
  w.u64(p.spec.hidden);
  w.u32(static_cast<std::uint32_t>(p.spec.classes));
  w.u64(p.values.size());
  for (double v : p.values) w.f64(v);
  return std::move(w).take();
}

Digest params_hash(const ModelParams& p) { return sha256(canonical_params(p)); }

void logits(const ModelParams& p, std::span<const double> x, std::span<double> out) {
  std::vector<double> hidden(p.spec.hidden);
  forward(p, x, hidden, out);
}

double loss_and_gradient(const ModelParams& p, const Dataset& ds,
                         std::span<const std::size_t> indices, std::vector<double>& grad) {
  check_dims(p, ds);
  check_indices(ds, indices);
  const auto& s = p.spec;
  const auto classes = static_cast<std::size_t>(s.classes);
  grad.assign(p.values.size(), 0.0);
  if (indices.empty()) return 0.0;

  std::vector<double> hidden(s.hidden), z(classes), dh(s.hidden);
  double loss = 0.0;
  for (auto idx : indices) {
    const auto x = ds.row(idx);
    forward(p, x, hidden, z);
    loss += softmax_xent(z, ds.labels[idx]);
    z[static_cast<std::size_t>(ds.labels[idx])] -= 1.0;  // z now holds dL/dlogits

    if (s.hidden == 0) {
      double* gb = grad.data() + classes * s.input_dim;
      for (std::size_t c = 0; c < classes; ++c) {
        double* gw = grad.data() + c * s.input_dim;
        for (std::size_t k = 0; k < s.input_dim; ++k) gw[k] += z[c] * x[k];
        gb[c] += z[c];
      }
      continue;
    }
    const double* w2 = p.values.data() + s.hidden * s.input_dim + s.hidden;
    double* gb1 = grad.data() + s.hidden * s.input_dim;
    double* gw2 = gb1 + s.hidden;
    double* gb2 = gw2 + classes * s.hidden;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t h = 0; h < s.hidden; ++h) {
        gw2[c * s.hidden + h] += z[c] * hidden[h];
        dh[h] += w2[c * s.hidden + h] * z[c];
      }
      gb2[c] += z[c];
    }
    for (std::size_t h = 0; h < s.hidden; ++h) {
      const double da = dh[h] * (1.0 - hidden[h] * hidden[h]);
      double* gw1 = grad.data() + h * s.input_dim;
      for (std::size_t k = 0; k < s.input_dim; ++k) gw1[k] += da * x[k];
      gb1[h] += da;
    }
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (double& g : grad) g *= inv;
  return loss * inv;
}

GradientUpdate train_local(const ModelParams& params, const Dataset& ds, const Shard& shard,
                           int epochs, double lr, std::uint64_t seed) {
  check_dims(params, ds);
  check_indices(ds, shard.indices);
  GradientUpdate update{shard.owner, std::vector<double>(params.values.size(), 0.0),
                        shard.indices.size(), 0, seed};
  if (epochs <= 0 || shard.indices.empty()) return update;

  ModelParams work = params;
  std::vector<std::size_t> order = shard.indices;
  const std::size_t batch = std::min<std::size_t>(8, order.size());
  std::vector<double> grad;
  Rng rng(seed);
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      loss_and_gradient(work, ds, std::span(order).subspan(start, len), grad);
      for (std::size_t i = 0; i < grad.size(); ++i) work.values[i] -= lr * grad[i];
    }
  }
  for (std::size_t i = 0; i < update.delta.size(); ++i) {
    update.delta[i] = work.values[i] - params.values[i];
  }
  return update;
}

GradientUpdate gradient_step(const ModelParams& params, const Dataset& ds, const Shard& shard,
                             double lr) {
  std::vector<double> grad;
  loss_and_gradient(params, ds, shard.indices, grad);
  GradientUpdate update{shard.owner, std::vector<double>(grad.size()), shard.indices.size(), 0, 0};
  for (std::size_t i = 0; i < grad.size(); ++i) update.delta[i] = -lr * grad[i];
  return update;
}

double evaluate(const ModelParams& params, const Dataset& ds,
                std::span<const std::size_t> indices) {
  check_dims(params, ds);
  check_indices(ds, indices);
  if (indices.empty()) return 0.0;
  std::vector<double> hidden(params.spec.hidden), z(static_cast<std::size_t>(params.spec.classes));
  std::size_t correct = 0;
  for (auto idx : indices) {
    forward(params, ds.row(idx), hidden, z);
    std::size_t best = 0;
    for (std::size_t c = 1; c < z.size(); ++c) {
      if (z[c] > z[best]) best = c;
    }
    if (static_cast<int>(best) == ds.labels[idx]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

double evaluate(const ModelParams& params, const Dataset& ds) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  return evaluate(params, ds, all);
}

}  // namespace poflsc
