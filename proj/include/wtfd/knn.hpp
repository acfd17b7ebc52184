// Limited-label evaluation: frozen-teacher feature bank plus a tempered
// cosine KNN classifier with confusion-matrix reporting.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "wtfd/tfm.hpp"
#include "wtfd/vit.hpp"

namespace wtfd::knn {

// Synthetic class slot for test labels absent from the bank; such samples are
// reported in their own row/column rather than silently dropped.
constexpr std::uint16_t kUnknownClass = 0xFFFF;

struct FeatureBank {
  std::size_t m = 0, d = 0;
  std::vector<float> vectors;  // row-major m x d
  std::vector<std::uint16_t> labels;
};

struct KnnConfig {
  std::size_t n_neighbors = 5;
  std::optional<double> tau_k;  // absent = unweighted count vote
};

// One teacher feature per map (no projector head). Batched internally;
// results match per-sample vit::encode.
FeatureBank extract_features(const std::vector<tfm::TimeFrequencyMap>& maps,
                             const std::vector<std::uint16_t>& labels,
                             const vit::Encoder<float>& enc);

struct Prediction {
  std::uint16_t label = 0;
  // Ascending class id; only classes present in the top-N_k neighbors.
  std::vector<std::pair<std::uint16_t, double>> scores;
};

// Cosine similarity on L2-normalized vectors, top-N_k vote. With tau_k the
// class score is sum(exp(sim/tau_k)) over neighbors, otherwise the count.
// Ties go to the smaller class id.
Prediction classify(const std::vector<float>& query, const FeatureBank& bank,
                    const KnnConfig& cfg);

struct EvalReport {
  double accuracy = 0.0;
  std::vector<std::uint16_t> classes;  // sorted bank classes; kUnknownClass
                                       // appended when test labels miss the bank
  std::vector<std::size_t> row_counts;  // test samples per actual class
  std::vector<double> per_class;        // per-class accuracy, 0 for empty rows
  std::vector<double> confusion;  // rows actual, row-normalized percentages
};

EvalReport evaluate(const FeatureBank& test, const FeatureBank& bank,
                    const KnnConfig& cfg);

struct SweepRow {
  std::size_t n_k = 0;
  double acc_plain = 0.0;
  double acc_tempered = 0.0;
};

std::vector<SweepRow> sweep(const FeatureBank& test, const FeatureBank& bank,
                            const std::vector<std::size_t>& n_k_values,
                            double tau_k);

void save_bank(const std::filesystem::path& path, const FeatureBank& bank);
FeatureBank load_bank(const std::filesystem::path& path);

}  // namespace wtfd::knn
