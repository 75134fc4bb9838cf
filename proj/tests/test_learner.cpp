#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"
#include "poflsc/bytes.hpp"
#include "poflsc/error.hpp"
#include "poflsc/learner.hpp"
#include "poflsc/rng.hpp"

using namespace poflsc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("poflsc_learner_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<std::uint8_t> idx_images(std::uint32_t magic, std::uint32_t n, std::size_t pixels) {
  ByteWriter w;
  w.u32(magic);
  w.u32(n);
  w.u32(28);
  w.u32(28);
  for (std::size_t i = 0; i < pixels; ++i) w.u8(static_cast<std::uint8_t>(i % 256));
  return std::move(w).take();
}

std::vector<std::uint8_t> idx_labels(std::uint32_t magic, std::uint32_t n) {
  ByteWriter w;
  w.u32(magic);
  w.u32(n);
  for (std::uint32_t i = 0; i < n; ++i) w.u8(static_cast<std::uint8_t>(i % 10));
  return std::move(w).take();
}

std::optional<ErrorCode> load_error(const fs::path& images, const fs::path& labels) {
  return thrown_code([&] { (void)load_idx(images, labels); });
}

Shard all_of(const Dataset& ds) {
  Shard s{MinerId{0}, {}};
  for (std::size_t i = 0; i < ds.size(); ++i) s.indices.push_back(i);
  return s;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
}

}  // namespace

TEST_CASE("IDX: valid pair") {
  const auto dir = temp_dir("valid");
  write_bytes(dir / "img", idx_images(0x803, 10, 10 * 784));
  write_bytes(dir / "lbl", idx_labels(0x801, 10));
  const auto ds = load_idx(dir / "img", dir / "lbl");
  CHECK(ds.size() == 10);
  CHECK(ds.dim == 784);
  CHECK(ds.classes == 10);
  CHECK(ds.labels[3] == 3);
  CHECK(ds.features[255] == 1.0);
  CHECK(ds.features[1] == doctest::Approx(1.0 / 255.0));
}

TEST_CASE("IDX: errors") {
  const auto dir = temp_dir("errors");
  write_bytes(dir / "img", idx_images(0x803, 10, 10 * 784));
  write_bytes(dir / "lbl_bad_magic", idx_labels(0x803, 10));
  write_bytes(dir / "lbl_9", idx_labels(0x801, 9));
  write_bytes(dir / "img_short", idx_images(0x803, 10, 10 * 784 - 1));
  write_bytes(dir / "lbl", idx_labels(0x801, 10));
  CHECK(load_error(dir / "img", dir / "lbl_bad_magic") == ErrorCode::kBadMagic);
  CHECK(load_error(dir / "img", dir / "lbl_9") == ErrorCode::kCountMismatch);
  CHECK(load_error(dir / "img_short", dir / "lbl") == ErrorCode::kTruncatedFile);
  CHECK(load_error(dir / "missing", dir / "lbl") == ErrorCode::kIo);
}

TEST_CASE("IDX round trip through write_idx") {
  const auto dir = temp_dir("roundtrip");
  Dataset ds{4, 10, {0.0, 1.0, 128.0 / 255.0, 3.0 / 255.0, 1.0, 0.0, 0.0, 0.0}, {7, 2}};
  write_idx(ds, 2, 2, dir / "i", dir / "l");
  const auto back = load_idx(dir / "i", dir / "l");
  CHECK(back.labels == ds.labels);
  CHECK(back.features == ds.features);
}

TEST_CASE("synthetic data") {
  const auto ds = synth_dataset(3, 1, 4, 2.0, 1);
  CHECK(ds.size() == 3);
  CHECK(synth_dataset(4, 20, 16, 6.0, 3).features == synth_dataset(4, 20, 16, 6.0, 3).features);
  CHECK_THROWS_AS((void)synth_dataset(1, 5, 4, 1.0, 1), Error);
  CHECK_THROWS_AS((void)synth_dataset(2, 0, 4, 1.0, 1), Error);
}

TEST_CASE("synthetic data: separable and indistinguishable cases") {
  const auto sep = synth_dataset(4, 100, 16, 6.0, 5);
  auto [train, hold] = split_holdout(sep.size(), 0.25, 9);
  Shard s{MinerId{0}, train};
  auto model = init_params({16, 0, 4}, 0);
  for (int e = 0; e < 10; ++e) {
    const auto u = train_local(model, sep, s, 1, 0.1, 100 + static_cast<std::uint64_t>(e));
    for (std::size_t i = 0; i < u.delta.size(); ++i) model.values[i] += u.delta[i];
  }
  CHECK(evaluate(model, sep, hold) > 0.95);

  const auto flat = synth_dataset(2, 400, 4, 0.0, 6);
  auto [t2, h2] = split_holdout(flat.size(), 0.5, 9);
  auto m2 = init_params({4, 0, 2}, 0);
  const auto u2 = train_local(m2, flat, Shard{MinerId{0}, t2}, 5, 0.1, 1);
  for (std::size_t i = 0; i < u2.delta.size(); ++i) m2.values[i] += u2.delta[i];
  CHECK(std::abs(evaluate(m2, flat, h2) - 0.5) < 0.1);
}

TEST_CASE("sharding") {
  const auto ds = synth_dataset(10, 50, 16, 3.0, 1);
  const auto shards = shard_dataset(ds, 100, 30, 7);
  REQUIRE(shards.size() == 100);
  for (std::uint32_t m = 0; m < 100; ++m) {
    CHECK(shards[m].owner == MinerId{m});
    CHECK(shards[m].indices.size() == 30);
    CHECK(std::set<std::size_t>(shards[m].indices.begin(), shards[m].indices.end()).size() == 30);
  }
  CHECK(shard_dataset(ds, 100, 30, 7)[42].indices == shards[42].indices);

  const auto small = synth_dataset(2, 5, 2, 1.0, 1);
  for (const auto& s : shard_dataset(small, 3, 10, 1)) {
    CHECK(std::set<std::size_t>(s.indices.begin(), s.indices.end()).size() == 10);
  }
  try {
    (void)shard_dataset(small, 3, 30, 1);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDatasetTooSmall);
  }
}

TEST_CASE("holdout split is disjoint and sized") {
  auto [train, hold] = split_holdout(1000, 0.2, 3);
  CHECK(hold.size() == 200);
  CHECK(train.size() == 800);
  std::set<std::size_t> all(train.begin(), train.end());
  for (auto h : hold) CHECK(all.insert(h).second);
  CHECK(all.size() == 1000);
}

TEST_CASE("shard digest depends on content only") {
  Shard a{MinerId{1}, {1, 2, 3}}, b{MinerId{2}, {1, 2, 3}}, c{MinerId{1}, {1, 2, 4}};
  CHECK(a.digest() == b.digest());
  CHECK(a.digest() != c.digest());
}

TEST_CASE("training edge cases") {
  const auto ds = synth_dataset(3, 10, 5, 2.0, 1);
  const auto p = init_params({5, 4, 3}, 2);
  const auto s = all_of(ds);
  for (double v : train_local(p, ds, s, 0, 0.1, 1).delta) CHECK(v == 0.0);
  for (double v : train_local(p, ds, s, 2, 0.0, 1).delta) CHECK(v == 0.0);
  const auto a = train_local(p, ds, s, 2, 0.1, 1);
  const auto b = train_local(p, ds, s, 2, 0.1, 1);
  CHECK(a.delta == b.delta);
  CHECK(a.samples_used == 30);
  ModelParams wrong{{4, 0, 3}, std::vector<double>(15, 0.0)};
  try {
    (void)train_local(wrong, ds, s, 1, 0.1, 1);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimensionMismatch);
  }
}

TEST_CASE("one epoch on one sample equals minus lr times the closed-form gradient") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t dim = 3 + rng.below(5);
    const int classes = 2 + static_cast<int>(rng.below(4));
    Dataset ds{dim, classes, {}, {static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)))}};
    std::vector<double> x(dim);
    for (auto& v : x) v = rng.normal();
    ds.features = x;
    ModelParams p = init_params({dim, 0, classes}, 0);
    for (auto& v : p.values) v = rng.normal(0.0, 0.5);
    const double lr = 0.05;
    const auto u = train_local(p, ds, Shard{MinerId{0}, {0}}, 1, lr, 3);
    const auto g = oracle::logistic_gradient(p.values, dim, static_cast<std::size_t>(classes), {x},
                                             ds.labels);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(u.delta[i] == doctest::Approx(-lr * g[i]).epsilon(1e-6));
  }
}

TEST_CASE("analytic gradient agrees with finite differences") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t dim = 2 + rng.below(5);
    const int classes = 2 + static_cast<int>(rng.below(3));
    const std::size_t hidden = trial % 2 == 0 ? 0 : 1 + rng.below(4);
    const auto ds = synth_dataset(classes, 3, std::max<std::size_t>(dim, static_cast<std::size_t>(classes)), 1.0, 100 + static_cast<std::uint64_t>(trial));
    ModelParams p = init_params({ds.dim, hidden, classes}, 1);
    for (auto& v : p.values) v = rng.normal(0.0, 0.5);
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> grad;
    (void)loss_and_gradient(p, ds, idx, grad);
    auto f = [&](const std::vector<double>& values) {
      ModelParams q{p.spec, values};
      std::vector<double> unused;
      return loss_and_gradient(q, ds, idx, unused);
    };
    CHECK(relative_error(grad, oracle::finite_difference(f, p.values, 1e-5)) <= 1e-4);
  }
}

TEST_CASE("evaluation") {
  Dataset ds{2, 3, {0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5}, {0, 1, 2, 0, 1, 2}};
  const auto zero = init_params({2, 0, 3}, 0);
  CHECK(evaluate(zero, ds) == doctest::Approx(2.0 / 6.0));

  Dataset one{2, 3, {1.0, -1.0}, {2}};
  ModelParams p = zero;
  p.values[4] = 1.0;  // W[2][0]
  CHECK(evaluate(p, one) == 1.0);

  Dataset doubled = ds;
  doubled.features.insert(doubled.features.end(), ds.features.begin(), ds.features.end());
  doubled.labels.insert(doubled.labels.end(), ds.labels.begin(), ds.labels.end());
  CHECK(evaluate(zero, doubled) == evaluate(zero, ds));
}

TEST_CASE("parameter hashing and initialisation") {
  const auto logistic = init_params({16, 0, 10}, 5);
  for (double v : logistic.values) CHECK(v == 0.0);
  CHECK(logistic.values.size() == 170);
  const auto mlp = init_params({16, 8, 10}, 5);
  CHECK(mlp.values.size() == 16 * 8 + 8 + 8 * 10 + 10);
  for (double v : mlp.values) CHECK(std::abs(v) <= 0.05);
  CHECK(params_hash(mlp) == params_hash(init_params({16, 8, 10}, 5)));
  auto tweaked = mlp;
  tweaked.values[3] = std::nextafter(tweaked.values[3], 1.0);
  CHECK(params_hash(tweaked) != params_hash(mlp));
}

TEST_CASE("dataset CSV export") {
  Dataset ds{2, 2, {0.5, 1.0, -2.0, 0.0}, {1, 0}};
  std::ostringstream out;
  write_dataset_csv(ds, out);
  const auto text = out.str();
  CHECK(text.substr(0, text.find('\n')).find("label") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}
