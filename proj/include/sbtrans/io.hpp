#pragma once

// Data ingestion, draw archives and report writers.
//
// Draw archive layout (little-endian):
//   "SBTA"                     magic
//   u8   version               (kArchiveVersion)
//   u8   tail policy           (0 clamp, 1 linear)
//   u32  model name length, then the name bytes
//   u64  n, d, S, seed, config hash
//   u64  config length, then the canonical config JSON bytes
//   u32  block count, then per block:
//        4-byte tag, u64 rows, u64 cols, rows * cols f64 in column-major order
// Blocks: THET (S x (d+1)), SIGM (S x 1), PRED (S x m), GKNT (1 x K knot
// locations), GVAL and GSLP (S x K knot values and slopes of each g draw).
// Absent arrays are omitted.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbtrans/dataset.hpp"
#include "sbtrans/metrics.hpp"
#include "sbtrans/transform.hpp"

namespace sbtrans {

/// Reads a header-first comma-separated file. response_column names y;
/// covariate_columns selects X in order, or every other column when empty.
/// Throws InputError for an unreadable or empty file and ParseError naming the
/// data row (1-based, header excluded) and column for non-numeric, missing or
/// non-finite cells.
Dataset ingest_csv(const std::string& path, const std::string& response_column,
                   const std::vector<std::string>& covariate_columns = {});
Dataset parse_csv(std::istream& in, const std::string& response_column,
                  const std::vector<std::string>& covariate_columns = {});

/// Reads query covariates: the named columns, or every column when empty.
Eigen::MatrixXd read_query_csv(const std::string& path, const std::vector<std::string>& covariate_columns = {});

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::string& bytes);

/// Canonical form of a JSON config (sorted keys, no whitespace). Throws
/// ConfigError when the text is not a JSON object.
std::string canonical_config(const std::string& json_text);

/// fnv1a64 of the canonical form, so formatting and key order do not matter.
std::uint64_t config_hash(const std::string& json_text);

constexpr std::uint8_t kArchiveVersion = 1;

struct DrawArchive {
  std::string model;
  std::uint64_t n = 0;
  std::uint64_t d = 0;
  std::uint64_t S = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::string config;
  Eigen::MatrixXd theta;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd predictive;
  std::vector<MonotoneMap> g_draws;
};

void write_archive(std::ostream& out, const DrawArchive& archive);
void write_archive(const std::string& path, const DrawArchive& archive);
/// Throws ParseError on a bad magic number, version or truncated file, and
/// InputError when the stored hash does not match the stored config.
DrawArchive read_archive(std::istream& in);
DrawArchive read_archive(const std::string& path);

/// Rows "quantity,index,mean,lower,upper": theta and sigma with HPD intervals
/// at hpd_level, then predictive draws with equal-tailed intervals at
/// interval_level. Empty arrays are skipped.
void write_summary_csv(std::ostream& out, const Eigen::MatrixXd& theta, const Eigen::VectorXd& sigma,
                       const Eigen::MatrixXd& predictive, double hpd_level = 0.95, double interval_level = 0.9);

/// One row per replicate.
void write_metrics_csv(std::ostream& out, const std::vector<MetricReport>& reports);

/// {design: {method: {metric: {"mean", "sd", "replicates"}}}}, NaN entries
/// skipped. Merges into existing_json when it holds an object.
std::string metrics_summary_json(const std::string& design, const std::string& method,
                                 const std::vector<MetricReport>& reports, const std::string& existing_json = "");

}  // namespace sbtrans
