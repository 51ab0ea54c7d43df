#include "pagerec/embanalysis.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pagerec/csv.hpp"
#include "pagerec/errors.hpp"
#include "pagerec/rng.hpp"

namespace pagerec {

Matrix raw_cosine(const Matrix& embeddings, const std::vector<std::string>& ids) {
  if (ids.size() != static_cast<std::size_t>(embeddings.rows())) {
    throw std::invalid_argument("one id per embedding row required");
  }
  Matrix unit = embeddings;
  for (Eigen::Index r = 0; r < unit.rows(); ++r) {
    const double norm = unit.row(r).norm();
    if (norm == 0.0) throw std::invalid_argument("zero-norm embedding for item " + ids[static_cast<std::size_t>(r)]);
    unit.row(r) /= norm;
  }
  Matrix s = unit * unit.transpose();
  // Exact symmetry and unit diagonal regardless of summation order.
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    s(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) s(i, j) = s(j, i);
  }
  return s;
}

SimilarityMatrix cosine_matrix(const Matrix& embeddings, std::vector<std::string> ids) {
  SimilarityMatrix out{raw_cosine(embeddings, ids), std::move(ids)};
  Matrix& s = out.s;
  const auto n = s.rows();
  if (n < 2) return out;
  double lo = INFINITY, hi = -INFINITY;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      lo = std::min(lo, s(i, j));
      hi = std::max(hi, s(i, j));
    }
  }
  const double range = hi - lo;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) s(i, j) = range > 0.0 ? (s(i, j) - lo) / range : 0.0;
    }
  }
  return out;
}

SimilarityMatrix cosine_matrix(const ModelParams& params, const Vocab& vocab) {
  const Matrix& e = params.item_embedding();
  if (static_cast<std::size_t>(e.rows()) != vocab.size()) {
    throw std::invalid_argument("embedding does not match vocabulary");
  }
  std::vector<std::string> ids;
  std::vector<Eigen::Index> rows;
  for (TokenId t = 0; t < vocab.size(); ++t) {
    if (!vocab.is_item(t)) continue;
    ids.push_back(vocab.token(t));
    rows.push_back(static_cast<Eigen::Index>(t));
  }
  Matrix items(static_cast<Eigen::Index>(rows.size()), e.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) items.row(static_cast<Eigen::Index>(i)) = e.row(rows[i]);
  return cosine_matrix(items, std::move(ids));
}

double divergence(const SimilarityMatrix& a, const SimilarityMatrix& b) {
  if (a.item_ids != b.item_ids) throw std::invalid_argument("similarity matrices use different item orderings");
  const auto n = a.s.rows();
  if (n < 2) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) sum += std::abs(a.s(i, j) - b.s(i, j));
    }
  }
  return sum / static_cast<double>(n * (n - 1));
}

SimilarityMatrix random_baseline(std::vector<std::string> ids, std::size_t d, std::uint64_t seed) {
  if (ids.size() < 2) throw std::invalid_argument("random baseline needs at least two items");
  if (d == 0) throw std::invalid_argument("embedding dimension must be positive");
  Rng rng(seed);
  Matrix e(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.cols(); ++c) e(r, c) = rng.normal();
  }
  return cosine_matrix(e, std::move(ids));
}

SimilarityMatrix random_baseline(std::size_t n_items, std::size_t d, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n_items; ++i) ids.push_back(std::to_string(i));
  return random_baseline(std::move(ids), d, seed);
}

std::string divergence_table_csv(const std::vector<std::string>& labels,
                                 const std::vector<SimilarityMatrix>& matrices) {
  if (labels.size() != matrices.size()) throw std::invalid_argument("one label per matrix required");
  std::ostringstream out;
  for (const auto& l : labels) out << ',' << csv::escape(l);
  out << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << csv::escape(labels[i]);
    for (std::size_t j = 0; j < labels.size(); ++j) out << ',' << csv::format_double(divergence(matrices[i], matrices[j]));
    out << '\n';
  }
  return out.str();
}

void write_embeddings(std::ostream& out, const ModelParams& params, const Vocab& vocab) {
  const Matrix& e = params.item_embedding();
  if (static_cast<std::size_t>(e.rows()) != vocab.size()) {
    throw std::invalid_argument("embedding does not match vocabulary");
  }
  out << "token_id\ttoken\tis_item";
  for (Eigen::Index c = 0; c < e.cols(); ++c) out << "\tv" << c;
  out << '\n';
  for (TokenId t = 0; t < vocab.size(); ++t) {
    out << t << '\t' << vocab.token(t) << '\t' << (vocab.is_item(t) ? 1 : 0);
    for (Eigen::Index c = 0; c < e.cols(); ++c) out << '\t' << csv::format_double(e(t, c));
    out << '\n';
  }
}

void export_embeddings(const ModelParams& params, const Vocab& vocab, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_embeddings(out, params, vocab);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ExportedEmbeddings read_embeddings(std::istream& in) {
  auto split = [](const std::string& line) {
    std::vector<std::string> f;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, '\t')) f.push_back(cur);
    return f;
  };
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty embedding file");
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "token_id") throw DataError("bad embedding header");
  const auto d = header.size() - 3;
  ExportedEmbeddings out;
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = split(line);
    if (f.size() != header.size()) throw DataError("line " + std::to_string(lineno) + ": wrong column count");
    out.tokens.push_back(f[1]);
    out.is_item.push_back(f[2] == "1");
    for (std::size_t c = 3; c < f.size(); ++c) {
      double v = 0.0;
      const auto* end = f[c].data() + f[c].size();
      const auto r = std::from_chars(f[c].data(), end, v);
      if (r.ec != std::errc() || r.ptr != end) throw DataError("line " + std::to_string(lineno) + ": bad number");
      values.push_back(v);
    }
  }
  out.values.resize(static_cast<Eigen::Index>(out.tokens.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < out.tokens.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * d + c];
  }
  return out;
}

}  // namespace pagerec
