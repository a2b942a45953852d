#pragma once

// JSON documents for scorers, datasets and discrete tasks. Each carries
// "version": 1. Matrices are arrays of rows.
//
// Scorer:  {version, kind: "linear"|"mlp", dims: {input_dim, output_width,
//           hidden_dim?}, weights: [layer rows...], bias: [layer vector...],
//           seed}
// Dataset: {version, n, n_e, input_dim, features, labels, costs}
// Task:    {version, n, n_e, mu, conditionals, costs[k][y][j]}

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "deferral/models.hpp"
#include "deferral/oracles.hpp"

namespace deferral::io {

inline constexpr int kFormatVersion = 1;

nlohmann::json ScorerToJson(const models::Scorer& scorer, std::uint64_t seed);
models::Scorer ScorerFromJson(const nlohmann::json& doc);

nlohmann::json DatasetToJson(const models::LabeledDataset& data);
models::LabeledDataset DatasetFromJson(const nlohmann::json& doc);

nlohmann::json TaskToJson(const oracles::DiscreteTask& task);
oracles::DiscreteTask TaskFromJson(const nlohmann::json& doc);

/// Throws Error naming the path on failure.
nlohmann::json ReadJsonFile(const std::string& path);
void WriteTextFile(const std::string& path, const std::string& text);

}  // namespace deferral::io
