#include "vpdmix/data/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace vpdmix::data {

namespace {

using nlohmann::json;
constexpr const char* kSchemaVersion = "vpdmix-schema-v1";
constexpr double kNudge = 1e-6;

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void cell_error(const std::string& what, std::size_t row,
                             const std::string& col) {
  throw std::runtime_error("ingest: " + what + " at row " +
                           std::to_string(row) + ", column '" + col + "'");
}

}  // namespace

void Schema::validate() const {
  if (columns.empty()) throw std::invalid_argument("Schema: no columns");
  std::vector<std::string> names;
  for (const auto& c : columns) {
    names.push_back(c.feature.name);
    if (c.feature.kind == model::FeatureKind::kContinuousBeta) {
      if (!(c.min < c.max))
        throw std::invalid_argument("Schema: bounds min < max required for '" +
                                    c.feature.name + "'");
    } else {
      if (c.categories.size() < 2)
        throw std::invalid_argument("Schema: '" + c.feature.name +
                                    "' needs >= 2 category labels");
      if (static_cast<int>(c.categories.size()) != c.feature.n_categories)
        throw std::invalid_argument("Schema: category count mismatch for '" +
                                    c.feature.name + "'");
    }
  }
  std::sort(names.begin(), names.end());
  auto dup = std::adjacent_find(names.begin(), names.end());
  if (dup != names.end())
    throw std::invalid_argument("Schema: duplicate feature name '" + *dup +
                                "'");
}

std::vector<model::FeatureSpec> Schema::feature_specs() const {
  std::vector<model::FeatureSpec> out;
  for (const auto& c : columns) out.push_back(c.feature);
  return out;
}

Schema Schema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("Schema: cannot open " + path);
  json j = json::parse(in);
  if (j.value("version", "") != kSchemaVersion)
    throw std::runtime_error("Schema: unsupported version in " + path);
  Schema s;
  for (const auto& jc : j.at("columns")) {
    ColumnSchema c;
    c.feature.name = jc.at("name").get<std::string>();
    c.feature.party = jc.at("party").get<int>();
    std::string kind = jc.at("kind").get<std::string>();
    if (kind == "continuous-beta") {
      c.feature.kind = model::FeatureKind::kContinuousBeta;
      c.min = jc.at("min").get<double>();
      c.max = jc.at("max").get<double>();
    } else if (kind == "categorical") {
      c.feature.kind = model::FeatureKind::kCategorical;
      c.categories = jc.at("categories").get<std::vector<std::string>>();
      c.feature.n_categories = static_cast<int>(c.categories.size());
    } else {
      throw std::runtime_error("Schema: unknown kind '" + kind + "'");
    }
    s.columns.push_back(std::move(c));
  }
  s.validate();
  return s;
}

void Schema::save(const std::string& path) const {
  validate();
  json j;
  j["version"] = kSchemaVersion;
  j["columns"] = json::array();
  for (const auto& c : columns) {
    json jc;
    jc["name"] = c.feature.name;
    jc["party"] = c.feature.party;
    if (c.feature.kind == model::FeatureKind::kContinuousBeta) {
      jc["kind"] = "continuous-beta";
      jc["min"] = c.min;
      jc["max"] = c.max;
    } else {
      jc["kind"] = "categorical";
      jc["categories"] = c.categories;
    }
    j["columns"].push_back(std::move(jc));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("Schema: cannot write " + path);
  out << j.dump(2) << "\n";
}

Dataset ingest(const std::string& csv_path, const Schema& schema) {
  schema.validate();
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("ingest: cannot open " + csv_path);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("ingest: empty file " + csv_path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_line(line);

  // map schema columns onto file columns by name
  std::vector<std::size_t> file_col(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    auto it = std::find(header.begin(), header.end(),
                        schema.columns[c].feature.name);
    if (it == header.end())
      throw std::runtime_error("ingest: missing column '" +
                               schema.columns[c].feature.name + "'");
    file_col[c] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<std::vector<double>> rows;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    std::vector<double> row(schema.columns.size());
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& col = schema.columns[c];
      if (file_col[c] >= cells.size())
        cell_error("missing cell", row_no, col.feature.name);
      const std::string& cell = cells[file_col[c]];
      if (cell.empty()) cell_error("missing value", row_no, col.feature.name);
      if (col.feature.kind == model::FeatureKind::kContinuousBeta) {
        double v;
        try {
          std::size_t pos = 0;
          v = std::stod(cell, &pos);
          if (pos != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
          cell_error("unparsable number '" + cell + "'", row_no,
                     col.feature.name);
        }
        if (v < col.min || v > col.max)
          cell_error("value out of declared bounds", row_no, col.feature.name);
        double norm = (v - col.min) / (col.max - col.min);
        row[c] = std::clamp(norm, kNudge, 1.0 - kNudge);
      } else {
        auto it = std::find(col.categories.begin(), col.categories.end(), cell);
        if (it == col.categories.end())
          cell_error("unknown category '" + cell + "'", row_no,
                     col.feature.name);
        row[c] = static_cast<double>(it - col.categories.begin());
      }
    }
    rows.push_back(std::move(row));
  }

  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(rows.size()),
              static_cast<Eigen::Index>(schema.columns.size()));
  for (std::size_t n = 0; n < rows.size(); ++n)
    for (std::size_t c = 0; c < schema.columns.size(); ++c)
      ds.X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) =
          rows[n][c];
  return ds;
}

PartitionedDataset partition(const Dataset& ds, const Schema& schema) {
  schema.validate();
  int P = 0;
  for (const auto& c : schema.columns) P = std::max(P, c.feature.party + 1);
  PartitionedDataset pd;
  pd.N = ds.X.rows();
  pd.blocks.resize(P);
  pd.block_columns.resize(P);
  for (std::size_t c = 0; c < schema.columns.size(); ++c)
    pd.block_columns[schema.columns[c].feature.party].push_back(c);
  for (int p = 0; p < P; ++p) {
    pd.blocks[p].resize(pd.N,
                        static_cast<Eigen::Index>(pd.block_columns[p].size()));
    for (std::size_t j = 0; j < pd.block_columns[p].size(); ++j)
      pd.blocks[p].col(static_cast<Eigen::Index>(j)) =
          ds.X.col(static_cast<Eigen::Index>(pd.block_columns[p][j]));
  }
  return pd;
}

Eigen::MatrixXd join(const PartitionedDataset& pd, const Schema& schema) {
  Eigen::MatrixXd X(pd.N, static_cast<Eigen::Index>(schema.columns.size()));
  for (std::size_t p = 0; p < pd.blocks.size(); ++p) {
    if (pd.blocks[p].rows() != pd.N)
      throw std::invalid_argument("join: party block row count mismatch");
    for (std::size_t j = 0; j < pd.block_columns[p].size(); ++j)
      X.col(static_cast<Eigen::Index>(pd.block_columns[p][j])) =
          pd.blocks[p].col(static_cast<Eigen::Index>(j));
  }
  return X;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction,
                                  std::uint64_t seed) {
  if (!(test_fraction >= 0 && test_fraction < 1))
    throw std::invalid_argument("split: test fraction in [0, 1)");
  const auto N = static_cast<std::size_t>(ds.X.rows());
  std::vector<std::size_t> idx(N);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_test = static_cast<std::size_t>(test_fraction * N);

  Dataset train, test;
  train.X.resize(static_cast<Eigen::Index>(N - n_test), ds.X.cols());
  test.X.resize(static_cast<Eigen::Index>(n_test), ds.X.cols());
  for (std::size_t i = 0; i < N; ++i) {
    if (i < n_test)
      test.X.row(static_cast<Eigen::Index>(i)) =
          ds.X.row(static_cast<Eigen::Index>(idx[i]));
    else
      train.X.row(static_cast<Eigen::Index>(i - n_test)) =
          ds.X.row(static_cast<Eigen::Index>(idx[i]));
  }
  return {std::move(train), std::move(test)};
}

void export_synthetic(const Eigen::MatrixXd& samples, const Schema& schema,
                      const std::string& path) {
  schema.validate();
  if (samples.cols() != static_cast<Eigen::Index>(schema.columns.size()))
    throw std::invalid_argument("export_synthetic: column count mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_synthetic: cannot write " + path);
  for (std::size_t c = 0; c < schema.columns.size(); ++c)
    out << (c ? "," : "") << schema.columns[c].feature.name;
  out << "\n";
  out.precision(10);
  for (Eigen::Index n = 0; n < samples.rows(); ++n) {
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& col = schema.columns[c];
      double v = samples(n, static_cast<Eigen::Index>(c));
      if (c) out << ",";
      if (col.feature.kind == model::FeatureKind::kContinuousBeta) {
        out << (col.min + v * (col.max - col.min));
      } else {
        auto idx = static_cast<std::size_t>(v);
        if (idx >= col.categories.size())
          throw std::invalid_argument("export_synthetic: category index " +
                                      std::to_string(idx) + " out of range");
        out << col.categories[idx];
      }
    }
    out << "\n";
  }
}

}  // namespace vpdmix::data
