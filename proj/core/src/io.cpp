#include "deferral/io.hpp"

#include <fstream>
#include <sstream>

namespace deferral::io {
namespace {

using nlohmann::json;

template <typename Matrix>
json MatrixToJson(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json VectorToJson(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

template <typename Matrix>
Matrix MatrixFromJson(const json& rows, Eigen::Index r, Eigen::Index c,
                      const char* what) {
  if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != r) {
    throw Error(std::string(what) + ": expected " + std::to_string(r) + " rows");
  }
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const json& row = rows[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) {
      throw Error(std::string(what) + ": expected rows of width " +
                  std::to_string(c));
    }
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = row[j].get<double>();
  }
  return m;
}

Eigen::VectorXd VectorFromJson(const json& v, Eigen::Index size,
                               const char* what) {
  if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != size) {
    throw Error(std::string(what) + ": expected length " + std::to_string(size));
  }
  Eigen::VectorXd out(size);
  for (Eigen::Index i = 0; i < size; ++i) out(i) = v[i].get<double>();
  return out;
}

void CheckVersion(const json& doc, const char* what) {
  if (!doc.is_object()) throw Error(std::string(what) + " must be an object");
  if (doc.value("version", -1) != kFormatVersion) {
    throw Error(std::string(what) + ": unsupported version");
  }
}

template <typename T>
T Field(const json& doc, const char* key) {
  if (!doc.contains(key)) throw Error(std::string("missing field '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

json ScorerToJson(const models::Scorer& scorer, std::uint64_t seed) {
  json doc;
  doc["version"] = kFormatVersion;
  doc["kind"] = models::KindName(scorer);
  doc["seed"] = seed;
  if (const auto* s = std::get_if<models::LinearScorer>(&scorer)) {
    doc["dims"] = {{"input_dim", s->weights.cols()},
                   {"output_width", s->weights.rows()}};
    doc["weights"] = json::array({MatrixToJson(s->weights)});
    doc["bias"] = json::array({VectorToJson(s->bias)});
  } else {
    const auto& m = std::get<models::MlpScorer>(scorer);
    doc["dims"] = {{"input_dim", m.w1.cols()},
                   {"output_width", m.w2.rows()},
                   {"hidden_dim", m.w1.rows()}};
    doc["weights"] = json::array({MatrixToJson(m.w1), MatrixToJson(m.w2)});
    doc["bias"] = json::array({VectorToJson(m.b1), VectorToJson(m.b2)});
  }
  return doc;
}

models::Scorer ScorerFromJson(const json& doc) {
  CheckVersion(doc, "scorer");
  const std::string kind = Field<std::string>(doc, "kind");
  const json dims = Field<json>(doc, "dims");
  const int input = Field<int>(dims, "input_dim");
  const int output = Field<int>(dims, "output_width");
  const json weights = Field<json>(doc, "weights");
  const json bias = Field<json>(doc, "bias");
  if (input < 1 || output < 1) throw Error("scorer dims must be positive");
  if (kind == "linear") {
    if (weights.size() != 1 || bias.size() != 1) {
      throw Error("linear scorer needs exactly one layer");
    }
    return models::LinearScorer{
        MatrixFromJson<Eigen::MatrixXd>(weights[0], output, input, "weights"),
        VectorFromJson(bias[0], output, "bias")};
  }
  if (kind == "mlp") {
    const int hidden = Field<int>(dims, "hidden_dim");
    if (hidden < 1) throw Error("hidden_dim must be positive");
    if (weights.size() != 2 || bias.size() != 2) {
      throw Error("mlp scorer needs exactly two layers");
    }
    return models::MlpScorer{
        MatrixFromJson<Eigen::MatrixXd>(weights[0], hidden, input, "weights"),
        VectorFromJson(bias[0], hidden, "bias"),
        MatrixFromJson<Eigen::MatrixXd>(weights[1], output, hidden, "weights"),
        VectorFromJson(bias[1], output, "bias")};
  }
  throw Error("unknown scorer kind '" + kind + "'");
}

json DatasetToJson(const models::LabeledDataset& data) {
  json doc;
  doc["version"] = kFormatVersion;
  doc["n"] = data.shape.n();
  doc["n_e"] = data.shape.n_e();
  doc["input_dim"] = data.input_dim();
  doc["features"] = MatrixToJson(data.features);
  doc["labels"] = data.labels;
  doc["costs"] = MatrixToJson(data.costs);
  return doc;
}

models::LabeledDataset DatasetFromJson(const json& doc) {
  CheckVersion(doc, "dataset");
  models::LabeledDataset data;
  data.shape = ProblemShape(Field<int>(doc, "n"), Field<int>(doc, "n_e"));
  data.labels = Field<std::vector<int>>(doc, "labels");
  const auto m = static_cast<Eigen::Index>(data.labels.size());
  data.features = MatrixFromJson<models::RowMatrix>(
      Field<json>(doc, "features"), m, Field<int>(doc, "input_dim"), "features");
  data.costs = MatrixFromJson<models::RowMatrix>(Field<json>(doc, "costs"), m,
                                                 data.shape.n_e(), "costs");
  data.Validate();
  return data;
}

json TaskToJson(const oracles::DiscreteTask& task) {
  json doc;
  doc["version"] = kFormatVersion;
  doc["n"] = task.shape.n();
  doc["n_e"] = task.shape.n_e();
  doc["mu"] = task.mu;
  doc["conditionals"] = task.conditionals;
  doc["costs"] = task.costs;
  return doc;
}

oracles::DiscreteTask TaskFromJson(const json& doc) {
  CheckVersion(doc, "task");
  oracles::DiscreteTask task;
  task.shape = ProblemShape(Field<int>(doc, "n"), Field<int>(doc, "n_e"));
  task.mu = Field<std::vector<double>>(doc, "mu");
  task.conditionals = Field<std::vector<std::vector<double>>>(doc, "conditionals");
  task.costs = Field<std::vector<std::vector<std::vector<double>>>>(doc, "costs");
  task.Validate();
  return task;
}

json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("cannot parse '" + path + "': " + e.what());
  }
}

void WriteTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace deferral::io
