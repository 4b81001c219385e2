#include "sbtrans/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "sbtrans/errors.hpp"

namespace sbtrans {

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'S', 'B', 'T', 'A'};
constexpr std::size_t kMaxReported = 20;

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_number(const std::string& cell, double& value) {
  if (cell.empty()) return false;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  return ec == std::errc() && ptr == end && std::isfinite(value);
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

Table read_table(std::istream& in) {
  Table t;
  std::string line;
  bool have_header = false;
  std::vector<std::string> problems;
  std::size_t bad_count = 0;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!have_header) {
      t.header = split_fields(line);
      have_header = true;
      continue;
    }
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != t.header.size()) {
      ++bad_count;
      if (problems.size() < kMaxReported) {
        problems.push_back("row " + std::to_string(row) + ": expected " + std::to_string(t.header.size()) +
                           " fields, found " + std::to_string(fields.size()));
      }
      continue;
    }
    std::vector<double> values(fields.size());
    bool ok = true;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (parse_number(fields[j], values[j])) continue;
      ok = false;
      ++bad_count;
      if (problems.size() < kMaxReported) {
        problems.push_back("row " + std::to_string(row) + ", column \"" + t.header[j] + "\": \"" + fields[j] +
                           "\" is not a finite number");
      }
    }
    if (ok) t.rows.push_back(std::move(values));
  }
  if (!have_header) throw InputError("input file is empty");
  if (!problems.empty()) {
    std::string msg = "rejected input rows:";
    for (const auto& p : problems) msg += "\n  " + p;
    if (bad_count > problems.size()) msg += "\n  ... " + std::to_string(bad_count - problems.size()) + " more";
    throw ParseError(msg);
  }
  if (t.rows.empty()) throw InputError("input file has a header but no data rows");
  return t;
}

std::size_t column_index(const Table& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw InputError("column \"" + name + "\" not found");
  return static_cast<std::size_t>(it - t.header.begin());
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

// Little-endian primitives.

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

void read_exact(std::istream& in, char* data, std::size_t count) {
  in.read(data, static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) throw ParseError("draw archive is truncated");
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  read_exact(in, reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint8_t get_u8(std::istream& in) {
  char c;
  read_exact(in, &c, 1);
  return static_cast<std::uint8_t>(c);
}

std::string get_string(std::istream& in, std::uint64_t length) {
  if (length > (std::uint64_t{1} << 32)) throw ParseError("draw archive string length is implausible");
  std::string s(length, '\0');
  if (length > 0) read_exact(in, s.data(), length);
  return s;
}

void put_block(std::ostream& out, const char tag[4], const Eigen::MatrixXd& m) {
  out.write(tag, 4);
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.size(); ++k) put_u64(out, std::bit_cast<std::uint64_t>(m.data()[k]));
}

Eigen::MatrixXd get_matrix(std::istream& in, std::uint64_t rows, std::uint64_t cols) {
  if (rows > (std::uint64_t{1} << 31) || cols > (std::uint64_t{1} << 31)) {
    throw ParseError("draw archive block size is implausible");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = std::bit_cast<double>(get_u64(in));
  return m;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

Dataset parse_csv(std::istream& in, const std::string& response_column,
                  const std::vector<std::string>& covariate_columns) {
  const Table t = read_table(in);
  const std::size_t y_col = column_index(t, response_column);
  std::vector<std::size_t> x_cols;
  std::vector<std::string> names;
  if (covariate_columns.empty()) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      if (j == y_col) continue;
      x_cols.push_back(j);
      names.push_back(t.header[j]);
    }
  } else {
    for (const auto& name : covariate_columns) {
      x_cols.push_back(column_index(t, name));
      names.push_back(name);
    }
  }
  Dataset d;
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  d.X.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    d.y[i] = row[y_col];
    for (std::size_t j = 0; j < x_cols.size(); ++j) d.X(i, static_cast<Eigen::Index>(j)) = row[x_cols[j]];
  }
  d.covariate_names = std::move(names);
  d.response_name = response_column;
  return d;
}

Dataset ingest_csv(const std::string& path, const std::string& response_column,
                   const std::vector<std::string>& covariate_columns) {
  std::ifstream in = open_input(path);
  return parse_csv(in, response_column, covariate_columns);
}

Eigen::MatrixXd read_query_csv(const std::string& path, const std::vector<std::string>& covariate_columns) {
  std::ifstream in = open_input(path);
  const Table t = read_table(in);
  std::vector<std::size_t> cols;
  if (covariate_columns.empty()) {
    for (std::size_t j = 0; j < t.header.size(); ++j) cols.push_back(j);
  } else {
    for (const auto& name : covariate_columns) cols.push_back(column_index(t, name));
  }
  Eigen::MatrixXd Q(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      Q(i, static_cast<Eigen::Index>(j)) = t.rows[static_cast<std::size_t>(i)][cols[j]];
    }
  }
  return Q;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string canonical_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  return j.dump();
}

std::uint64_t config_hash(const std::string& json_text) { return fnv1a64(canonical_config(json_text)); }

void write_archive(std::ostream& out, const DrawArchive& a) {
  out.write(kMagic, 4);
  put_u8(out, kArchiveVersion);
  const bool linear = !a.g_draws.empty() && a.g_draws.front().tails() == TailPolicy::Linear;
  put_u8(out, linear ? 1 : 0);
  put_u32(out, static_cast<std::uint32_t>(a.model.size()));
  out.write(a.model.data(), static_cast<std::streamsize>(a.model.size()));
  for (std::uint64_t v : {a.n, a.d, a.S, a.seed, a.config_hash}) put_u64(out, v);
  put_u64(out, a.config.size());
  out.write(a.config.data(), static_cast<std::streamsize>(a.config.size()));

  std::vector<std::pair<const char*, Eigen::MatrixXd>> blocks;
  if (a.theta.size() > 0) blocks.emplace_back("THET", a.theta);
  if (a.sigma.size() > 0) blocks.emplace_back("SIGM", Eigen::MatrixXd(a.sigma));
  if (a.predictive.size() > 0) blocks.emplace_back("PRED", a.predictive);
  if (!a.g_draws.empty()) {
    const auto K = static_cast<Eigen::Index>(a.g_draws.front().size());
    const auto S = static_cast<Eigen::Index>(a.g_draws.size());
    Eigen::MatrixXd knots(1, K), values(S, K), slopes(S, K);
    const auto t0 = a.g_draws.front().knots_t();
    for (Eigen::Index k = 0; k < K; ++k) knots(0, k) = t0[static_cast<std::size_t>(k)];
    for (Eigen::Index s = 0; s < S; ++s) {
      const MonotoneMap& g = a.g_draws[static_cast<std::size_t>(s)];
      if (static_cast<Eigen::Index>(g.size()) != K || !std::equal(t0.begin(), t0.end(), g.knots_t().begin())) {
        throw ConfigError("archived transformation draws must share their knot locations");
      }
      for (Eigen::Index k = 0; k < K; ++k) {
        values(s, k) = g.knots_g()[static_cast<std::size_t>(k)];
        slopes(s, k) = g.slopes()[static_cast<std::size_t>(k)];
      }
    }
    blocks.emplace_back("GKNT", std::move(knots));
    blocks.emplace_back("GVAL", std::move(values));
    blocks.emplace_back("GSLP", std::move(slopes));
  }
  put_u32(out, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& [tag, m] : blocks) put_block(out, tag, m);
  if (!out) throw InputError("failed to write draw archive");
}

void write_archive(const std::string& path, const DrawArchive& archive) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot create " + path);
  write_archive(out, archive);
}

DrawArchive read_archive(std::istream& in) {
  char magic[4];
  read_exact(in, magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw ParseError("not a draw archive (bad magic number)");
  const std::uint8_t version = get_u8(in);
  if (version != kArchiveVersion) throw ParseError("unsupported draw archive version " + std::to_string(version));
  const TailPolicy tails = get_u8(in) == 1 ? TailPolicy::Linear : TailPolicy::Clamp;
  DrawArchive a;
  a.model = get_string(in, get_u32(in));
  a.n = get_u64(in);
  a.d = get_u64(in);
  a.S = get_u64(in);
  a.seed = get_u64(in);
  a.config_hash = get_u64(in);
  a.config = get_string(in, get_u64(in));
  if (config_hash(a.config) != a.config_hash) throw InputError("draw archive config hash does not match its config");

  const std::uint32_t count = get_u32(in);
  Eigen::MatrixXd knots, values, slopes;
  for (std::uint32_t b = 0; b < count; ++b) {
    char tag_bytes[4];
    read_exact(in, tag_bytes, 4);
    const std::string tag(tag_bytes, 4);
    const std::uint64_t rows = get_u64(in);
    const std::uint64_t cols = get_u64(in);
    Eigen::MatrixXd m = get_matrix(in, rows, cols);
    if (tag == "THET") {
      a.theta = std::move(m);
    } else if (tag == "SIGM") {
      a.sigma = m.col(0);
    } else if (tag == "PRED") {
      a.predictive = std::move(m);
    } else if (tag == "GKNT") {
      knots = std::move(m);
    } else if (tag == "GVAL") {
      values = std::move(m);
    } else if (tag == "GSLP") {
      slopes = std::move(m);
    } else {
      throw ParseError("unknown draw archive block '" + tag + "'");
    }
  }
  if (values.size() > 0) {
    if (knots.rows() != 1 || knots.cols() != values.cols() || slopes.rows() != values.rows() ||
        slopes.cols() != values.cols()) {
      throw ParseError("draw archive transformation blocks disagree in shape");
    }
    const std::vector<double> t(knots.data(), knots.data() + knots.size());
    a.g_draws.reserve(static_cast<std::size_t>(values.rows()));
    for (Eigen::Index s = 0; s < values.rows(); ++s) {
      std::vector<double> g(static_cast<std::size_t>(values.cols())), d(g.size());
      for (Eigen::Index k = 0; k < values.cols(); ++k) {
        g[static_cast<std::size_t>(k)] = values(s, k);
        d[static_cast<std::size_t>(k)] = slopes(s, k);
      }
      a.g_draws.emplace_back(t, std::move(g), std::move(d), tails);
    }
  }
  return a;
}

DrawArchive read_archive(const std::string& path) {
  std::ifstream in = open_input(path);
  return read_archive(in);
}

void write_summary_csv(std::ostream& out, const Eigen::MatrixXd& theta, const Eigen::VectorXd& sigma,
                       const Eigen::MatrixXd& predictive, double hpd_level, double interval_level) {
  out.precision(10);
  out << "quantity,index,mean,lower,upper\n";
  auto hpd_row = [&](const char* name, Eigen::Index index, const Eigen::VectorXd& draws) {
    const auto [lo, hi] = hpd_interval(std::span<const double>(draws.data(), static_cast<std::size_t>(draws.size())),
                                       hpd_level);
    out << name << ',' << index << ',' << draws.mean() << ',' << lo << ',' << hi << '\n';
  };
  for (Eigen::Index j = 0; j < theta.cols(); ++j) hpd_row("theta", j, theta.col(j));
  if (sigma.size() > 0) hpd_row("sigma", 0, sigma);
  for (Eigen::Index j = 0; j < predictive.cols(); ++j) {
    std::vector<double> v(predictive.col(j).data(), predictive.col(j).data() + predictive.rows());
    std::sort(v.begin(), v.end());
    out << "predictive," << j << ',' << predictive.col(j).mean() << ','
        << sorted_quantile(v, (1.0 - interval_level) / 2.0) << ','
        << sorted_quantile(v, (1.0 + interval_level) / 2.0) << '\n';
  }
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricReport>& reports) {
  out.precision(10);
  out << "replicate,interval_width,coverage,crps,tpr,tnr,quantile_calibration\n";
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const MetricReport& m = reports[r];
    out << r;
    for (double v : {m.interval_width, m.coverage, m.crps, m.tpr, m.tnr, m.quantile_calibration}) {
      out << ',';
      if (std::isfinite(v)) out << v;
    }
    out << '\n';
  }
}

std::string metrics_summary_json(const std::string& design, const std::string& method,
                                 const std::vector<MetricReport>& reports, const std::string& existing_json) {
  json root = json::object();
  if (!existing_json.empty()) {
    try {
      json parsed = json::parse(existing_json);
      if (parsed.is_object()) root = std::move(parsed);
    } catch (const json::parse_error&) {
    }
  }
  const std::pair<const char*, double MetricReport::*> fields[] = {
      {"interval_width", &MetricReport::interval_width}, {"coverage", &MetricReport::coverage},
      {"crps", &MetricReport::crps},                     {"tpr", &MetricReport::tpr},
      {"tnr", &MetricReport::tnr},                       {"quantile_calibration", &MetricReport::quantile_calibration},
  };
  json entry = json::object();
  for (const auto& [name, member] : fields) {
    std::vector<double> v;
    for (const auto& r : reports) {
      if (std::isfinite(r.*member)) v.push_back(r.*member);
    }
    if (v.empty()) continue;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    entry[name] = {{"mean", finite_or_null(mean)}, {"sd", finite_or_null(sd)}, {"replicates", v.size()}};
  }
  root[design][method] = std::move(entry);
  return root.dump(2);
}

}  // namespace sbtrans
