#pragma once

// Item-to-item similarity structure of learned embeddings, compared across
// models, plus a TSV export for external plotting.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pagerec/model.hpp"
#include "pagerec/vocab.hpp"

namespace pagerec {

struct SimilarityMatrix {
  Matrix s;                           // normalized; diagonal 1
  std::vector<std::string> item_ids;  // row order
};

/// Raw cosine similarities between the rows of `embeddings`. Throws
/// std::invalid_argument naming the id of a zero-norm row.
Matrix raw_cosine(const Matrix& embeddings, const std::vector<std::string>& ids);

/// Cosine similarities min-max normalized over the off-diagonal entries to
/// [0, 1]. If every off-diagonal value is equal they all map to 0.
SimilarityMatrix cosine_matrix(const Matrix& embeddings, std::vector<std::string> ids);
/// Item rows of the id embedding only, in vocabulary order.
SimilarityMatrix cosine_matrix(const ModelParams& params, const Vocab& vocab);

/// Mean |a_ij - b_ij| over i != j. Throws std::invalid_argument when the item
/// orderings differ.
double divergence(const SimilarityMatrix& a, const SimilarityMatrix& b);

/// Standard normal embedding rows for the given ids.
SimilarityMatrix random_baseline(std::vector<std::string> ids, std::size_t d, std::uint64_t seed);
SimilarityMatrix random_baseline(std::size_t n_items, std::size_t d, std::uint64_t seed);

/// Square CSV table: header `,label1,label2,...`, one row per label.
std::string divergence_table_csv(const std::vector<std::string>& labels,
                                 const std::vector<SimilarityMatrix>& matrices);

/// TSV `token_id, token, is_item, v0..v{d-1}`, one row per vocabulary token.
void write_embeddings(std::ostream& out, const ModelParams& params, const Vocab& vocab);
void export_embeddings(const ModelParams& params, const Vocab& vocab, const std::filesystem::path& path);

struct ExportedEmbeddings {
  std::vector<std::string> tokens;
  std::vector<bool> is_item;
  Matrix values;
};
ExportedEmbeddings read_embeddings(std::istream& in);

}  // namespace pagerec
