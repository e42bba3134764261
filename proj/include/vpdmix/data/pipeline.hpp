#pragma once

// CSV ingestion against a declared schema, min-max normalization into model
// units, vertical partitioning over a shared row order, train/test splitting,
// and synthetic-data export back to the original units and labels.
//
// Records are assumed pre-matched: every party block keeps exactly the
// ingested row order, and the pipeline enforces that rather than performing
// any entity resolution.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vpdmix/model/mixture.hpp"

namespace vpdmix::data {

struct ColumnSchema {
  model::FeatureSpec feature;
  double min = 0.0, max = 1.0;          // continuous bounds
  std::vector<std::string> categories;  // categorical labels, index order
};

struct Schema {
  std::vector<ColumnSchema> columns;

  void validate() const;
  std::vector<model::FeatureSpec> feature_specs() const;
  static Schema load(const std::string& path);
  void save(const std::string& path) const;
};

struct Dataset {
  Eigen::MatrixXd X;  // model units: [0,1] continuous, category index
};

struct PartitionedDataset {
  Eigen::Index N = 0;
  std::vector<Eigen::MatrixXd> blocks;                 // per party
  std::vector<std::vector<std::size_t>> block_columns;  // schema indices
};

// Parses and validates a CSV with header row; continuous cells are min-max
// normalized and nudged into [1e-6, 1 - 1e-6], categories mapped to indices.
// Errors carry row/column coordinates.
Dataset ingest(const std::string& csv_path, const Schema& schema);

PartitionedDataset partition(const Dataset& ds, const Schema& schema);
// Reassembles the full table from party blocks (the partition inverse).
Eigen::MatrixXd join(const PartitionedDataset& pd, const Schema& schema);

std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction,
                                  std::uint64_t seed);

// Denormalizes and writes samples (model units, schema column order) as CSV.
void export_synthetic(const Eigen::MatrixXd& samples, const Schema& schema,
                      const std::string& path);

}  // namespace vpdmix::data
