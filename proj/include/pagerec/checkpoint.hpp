#pragma once

// Binary checkpoints: magic, a JSON header (model config, vocabulary,
// representation strategy, encode options) and the raw tensors. Loading
// restores parameters bit for bit.

#include <filesystem>
#include <iosfwd>

#include "pagerec/batch.hpp"
#include "pagerec/model.hpp"
#include "pagerec/vocab.hpp"

namespace pagerec {

struct Checkpoint {
  ModelParams params;
  Vocab vocab;
  ReprStrategy strategy;
  EncodeOptions encode;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
/// Throws DataError on a bad magic, truncated data or tensors that do not
/// match the stored config.
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pagerec
