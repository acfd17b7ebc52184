#include "wtfd/knn.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "wtfd/binio.hpp"
#include "wtfd/errors.hpp"

using namespace wtfd;

namespace {

tfm::TimeFrequencyMap random_map(std::size_t size, Rng& rng) {
  tfm::TimeFrequencyMap m;
  m.h = size;
  m.w = size;
  m.c = 3;
  m.pixels.resize(size * size * 3);
  for (auto& v : m.pixels) v = float(rng.uniform());
  return m;
}

struct EncRig {
  ag::ParamSet<float> ps;
  vit::Encoder<float> enc;
};

EncRig tiny_encoder(std::uint64_t seed) {
  EncRig r;
  vit::ViTConfig vc;
  vc.patch_size = 4;
  vc.embed_dim = 12;
  vc.n_heads = 2;
  vc.head_dim = 6;
  vc.mlp_dim = 24;
  vc.depth = 1;
  Rng rng = Rng::stream(seed, "test.enc");
  r.enc = vit::make_encoder(r.ps, vc, 8, 8, 3, "", rng);
  return r;
}

// Bank rows with exact double cosines against the unit-x query: (4,3)/5 has
// cosine 0.8, (3,4)/5 has 0.6.
knn::FeatureBank angle_bank() {
  knn::FeatureBank b;
  b.m = 3;
  b.d = 2;
  b.vectors = {9.0f, 4.358898943540674f,  // cos 0.9 (approx)
               4.0f, 3.0f,                // cos 0.8
               8.0f, 6.0f};               // cos 0.8
  b.labels = {5, 2, 2};
  return b;
}

double cosine(const std::vector<float>& a, std::size_t off_a,
              const std::vector<float>& b, std::size_t off_b, std::size_t d) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    dot += double(a[off_a + j]) * double(b[off_b + j]);
    na += double(a[off_a + j]) * double(a[off_a + j]);
    nb += double(b[off_b + j]) * double(b[off_b + j]);
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

TEST_CASE("extract_features matches per-sample encoding") {
  auto rig = tiny_encoder(19);
  Rng rng = Rng::stream(19, "test.maps");
  std::vector<tfm::TimeFrequencyMap> maps;
  std::vector<std::uint16_t> labels;
  for (int i = 0; i < 6; ++i) {
    maps.push_back(random_map(8, rng));
    labels.push_back(std::uint16_t(i % 3));
  }

  auto bank = knn::extract_features(maps, labels, rig.enc);
  CHECK(bank.m == 6);
  CHECK(bank.d == 12);
  CHECK(bank.labels == labels);

  for (std::size_t i = 0; i < maps.size(); ++i) {
    auto single = vit::encode(rig.enc, maps[i]);
    REQUIRE(single.size() == bank.d);
    for (std::size_t j = 0; j < bank.d; ++j)
      CHECK(double(bank.vectors[i * bank.d + j]) ==
            doctest::Approx(double(single[j])).epsilon(1e-6));
  }

  auto again = knn::extract_features(maps, labels, rig.enc);
  CHECK(again.vectors == bank.vectors);

  SUBCASE("contract violations") {
    CHECK_THROWS_AS(knn::extract_features({}, {}, rig.enc), ContractError);
    CHECK_THROWS_AS(knn::extract_features(maps, {0, 1}, rig.enc),
                    ContractError);
    std::vector<tfm::TimeFrequencyMap> wrong = maps;
    wrong[0].h = 16;
    wrong[0].w = 16;
    wrong[0].pixels.resize(16 * 16 * 3, 0.5f);
    CHECK_THROWS_AS(knn::extract_features(wrong, labels, rig.enc), ShapeError);
  }
}

TEST_CASE("classify: count vote vs tempered vote on the 0.9 vs 0.8 pair") {
  auto bank = angle_bank();
  std::vector<float> q = {1.0f, 0.0f};

  auto plain = knn::classify(q, bank, {3, std::nullopt});
  CHECK(plain.label == 2);  // two 0.8 neighbors outvote one 0.9
  REQUIRE(plain.scores.size() == 2);
  CHECK(plain.scores[0].first == 2);
  CHECK(plain.scores[0].second == 2.0);
  CHECK(plain.scores[1].first == 5);
  CHECK(plain.scores[1].second == 1.0);

  auto hot = knn::classify(q, bank, {3, 0.04});
  CHECK(hot.label == 5);  // exp(0.9/0.04) dwarfs 2 exp(0.8/0.04)
  double s5 = std::exp(cosine(q, 0, bank.vectors, 0, 2) / 0.04);
  double s2 = std::exp(cosine(q, 0, bank.vectors, 2, 2) / 0.04) +
              std::exp(cosine(q, 0, bank.vectors, 4, 2) / 0.04);
  for (const auto& [cls, sc] : hot.scores) {
    if (cls == 5) CHECK(sc == doctest::Approx(s5).epsilon(1e-12));
    if (cls == 2) CHECK(sc == doctest::Approx(s2).epsilon(1e-12));
  }
  CHECK(s5 > s2);
}

TEST_CASE("classify: self match, degenerate bank, majority reduction") {
  auto bank = angle_bank();

  std::vector<float> self = {4.0f, 3.0f};
  CHECK(knn::classify(self, bank, {1, std::nullopt}).label == 2);

  knn::FeatureBank mono = bank;
  mono.labels = {7, 7, 7};
  CHECK(knn::classify({0.1f, -2.0f}, mono, {2, std::nullopt}).label == 7);

  knn::FeatureBank five;
  five.m = 5;
  five.d = 2;
  five.vectors = {1, 0, 0, 1, -1, 0, 0, -1, 1, 1};
  five.labels = {1, 1, 2, 2, 2};
  CHECK(knn::classify({0.3f, 0.9f}, five, {5, std::nullopt}).label == 2);
}

TEST_CASE("classify: rescaling invariance and total tie-break") {
  auto bank = angle_bank();
  std::vector<float> q = {0.6f, 0.2f};
  auto base = knn::classify(q, bank, {3, 0.07});

  std::vector<float> q4 = {q[0] * 4.0f, q[1] * 4.0f};
  auto scaled = knn::classify(q4, bank, {3, 0.07});
  CHECK(scaled.label == base.label);
  REQUIRE(scaled.scores.size() == base.scores.size());
  for (std::size_t i = 0; i < base.scores.size(); ++i) {
    CHECK(scaled.scores[i].first == base.scores[i].first);
    CHECK(scaled.scores[i].second == base.scores[i].second);
  }

  std::vector<float> q37 = {q[0] * 3.7f, q[1] * 3.7f};
  CHECK(knn::classify(q37, bank, {3, 0.07}).label == base.label);

  knn::FeatureBank tied;
  tied.m = 2;
  tied.d = 2;
  tied.vectors = {1, 0, 1, 0};
  tied.labels = {7, 3};
  CHECK(knn::classify({1.0f, 0.0f}, tied, {2, std::nullopt}).label == 3);
}

TEST_CASE("classify contract violations") {
  auto bank = angle_bank();
  std::vector<float> q = {1.0f, 0.0f};
  CHECK_THROWS_AS(knn::classify(q, bank, {0, std::nullopt}), ContractError);
  CHECK_THROWS_AS(knn::classify(q, bank, {4, std::nullopt}), ContractError);
  CHECK_THROWS_AS(knn::classify(q, bank, {2, -0.1}), ConfigError);
  CHECK_THROWS_AS(knn::classify(q, bank, {2, 0.0}), ConfigError);
  CHECK_THROWS_AS(knn::classify({1.0f}, bank, {2, std::nullopt}), ShapeError);
  knn::FeatureBank empty;
  CHECK_THROWS_AS(knn::classify(q, empty, {1, std::nullopt}), ContractError);
  knn::FeatureBank nan_bank = bank;
  nan_bank.vectors[2] = std::nanf("");
  CHECK_THROWS_AS(knn::classify(q, nan_bank, {1, std::nullopt}), DomainError);
}

TEST_CASE("evaluate: memorization, row normalization, unknown labels") {
  Rng rng = Rng::stream(23, "test.eval");
  knn::FeatureBank bank;
  bank.m = 12;
  bank.d = 5;
  bank.vectors.resize(bank.m * bank.d);
  for (auto& v : bank.vectors) v = float(rng.uniform(-1.0, 1.0));
  for (std::size_t i = 0; i < bank.m; ++i)
    bank.labels.push_back(std::uint16_t(i % 3));

  auto rep = knn::evaluate(bank, bank, {1, std::nullopt});
  CHECK(rep.accuracy == 1.0);
  REQUIRE(rep.classes == std::vector<std::uint16_t>{0, 1, 2});
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(rep.per_class[r] == 1.0);
    CHECK(rep.confusion[r * 3 + r] == doctest::Approx(100.0).epsilon(1e-9));
    double row_sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) row_sum += rep.confusion[r * 3 + c];
    CHECK(row_sum == doctest::Approx(100.0).epsilon(1e-3));
  }

  SUBCASE("test labels missing from the bank get their own slot") {
    knn::FeatureBank test = bank;
    test.labels[0] = 9;
    test.labels[1] = 9;
    auto r9 = knn::evaluate(test, bank, {1, std::nullopt});
    REQUIRE(r9.classes ==
            std::vector<std::uint16_t>{0, 1, 2, knn::kUnknownClass});
    CHECK(r9.accuracy == doctest::Approx(10.0 / 12.0).epsilon(1e-12));
    CHECK(r9.row_counts[3] == 2);
    double unknown_row = 0.0;
    for (std::size_t c = 0; c < 4; ++c) unknown_row += r9.confusion[3 * 4 + c];
    CHECK(unknown_row == doctest::Approx(100.0).epsilon(1e-3));
    for (std::size_t r = 0; r < 4; ++r)
      CHECK(r9.confusion[r * 4 + 3] == 0.0);  // never predicted
    CHECK(r9.per_class[3] == 0.0);
  }

  SUBCASE("contracts") {
    knn::FeatureBank empty;
    CHECK_THROWS_AS(knn::evaluate(empty, bank, {1, std::nullopt}),
                    ContractError);
    knn::FeatureBank narrow = bank;
    narrow.d = 4;
    narrow.vectors.resize(narrow.m * 4);
    CHECK_THROWS_AS(knn::evaluate(narrow, bank, {1, std::nullopt}), ShapeError);
  }
}

TEST_CASE("sweep emits one row per N_k consistent with evaluate") {
  Rng rng = Rng::stream(29, "test.sweep");
  knn::FeatureBank bank, test;
  bank.m = 10;
  bank.d = 4;
  bank.vectors.resize(40);
  for (auto& v : bank.vectors) v = float(rng.uniform(-1.0, 1.0));
  for (std::size_t i = 0; i < 10; ++i)
    bank.labels.push_back(std::uint16_t(i % 2));
  test = bank;

  auto rows = knn::sweep(test, bank, {1, 3, 5}, 0.04);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.acc_plain >= 0.0);
    CHECK(r.acc_plain <= 1.0);
    CHECK(r.acc_tempered >= 0.0);
    CHECK(r.acc_tempered <= 1.0);
  }
  CHECK(rows[0].n_k == 1);
  CHECK(rows[1].acc_plain ==
        knn::evaluate(test, bank, {3, std::nullopt}).accuracy);
  CHECK(rows[1].acc_tempered == knn::evaluate(test, bank, {3, 0.04}).accuracy);
  CHECK_THROWS_AS(knn::sweep(test, bank, {11}, 0.04), ContractError);
}

TEST_CASE("feature bank file format round-trips") {
  auto dir = std::filesystem::temp_directory_path() / "wtfd_knn_test";
  std::filesystem::create_directories(dir);
  auto path = dir / "bank.bin";

  auto bank = angle_bank();
  knn::save_bank(path, bank);
  auto back = knn::load_bank(path);
  CHECK(back.m == bank.m);
  CHECK(back.d == bank.d);
  CHECK(back.vectors == bank.vectors);
  CHECK(back.labels == bank.labels);

  std::string raw = io::read_file(path);
  io::write_file(dir / "magic.bin", "FEATBNKX" + raw.substr(8));
  CHECK_THROWS_AS(knn::load_bank(dir / "magic.bin"), ParseError);
  io::write_file(dir / "short.bin", raw.substr(0, raw.size() - 3));
  CHECK_THROWS_AS(knn::load_bank(dir / "short.bin"), ParseError);
  io::write_file(dir / "long.bin", raw + "xx");
  CHECK_THROWS_AS(knn::load_bank(dir / "long.bin"), ParseError);
}
