#include "pagerec/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "pagerec/errors.hpp"

namespace pagerec {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'G', 'R', 'E', 'C', 'K', 'P', '1'};

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("checkpoint is truncated");
  return v;
}

std::string get_bytes(std::istream& in, std::uint64_t n) {
  if (n > (std::uint64_t{1} << 32)) throw DataError("checkpoint field length is implausible");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint is truncated");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  nlohmann::ordered_json header;
  header["model"] = to_json(ckpt.params.config);
  header["strategy"] = to_json(ckpt.strategy);
  header["encode"] = {{"max_len", ckpt.encode.max_len},
                      {"non_item_targets", ckpt.encode.train_on_non_item_targets}};
  header["vocab"] = ckpt.vocab.to_json();
  const std::string text = header.dump();
  out.write(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto& t = ckpt.params.tensors;
  put_u64(out, t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    put_u64(out, t.name(i).size());
    out.write(t.name(i).data(), static_cast<std::streamsize>(t.name(i).size()));
    put_u64(out, static_cast<std::uint64_t>(t[i].rows()));
    put_u64(out, static_cast<std::uint64_t>(t[i].cols()));
    out.write(reinterpret_cast<const char*>(t[i].data()),
              static_cast<std::streamsize>(t[i].size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("not a checkpoint file");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(get_bytes(in, get_u64(in)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.params = make_params(model_config_from_json(header.at("model")));
    ckpt.strategy = strategy_from_json(header.at("strategy"));
    ckpt.encode.max_len = header.at("encode").at("max_len").get<std::size_t>();
    ckpt.encode.train_on_non_item_targets = header.at("encode").at("non_item_targets").get<bool>();
    ckpt.vocab = Vocab::from_json(header.at("vocab"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  auto& t = ckpt.params.tensors;
  if (get_u64(in) != t.size()) throw DataError("checkpoint tensor count does not match its config");
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto name = get_bytes(in, get_u64(in));
    const auto rows = get_u64(in);
    const auto cols = get_u64(in);
    if (name != t.name(i) || rows != static_cast<std::uint64_t>(t[i].rows()) ||
        cols != static_cast<std::uint64_t>(t[i].cols())) {
      throw DataError("checkpoint tensor '" + name + "' does not match its config");
    }
    if (!in.read(reinterpret_cast<char*>(t[i].data()),
                 static_cast<std::streamsize>(t[i].size() * sizeof(double)))) {
      throw DataError("checkpoint is truncated");
    }
  }
  if (ckpt.vocab.size() != ckpt.params.config.vocab_size) {
    throw DataError("checkpoint vocabulary size does not match its model");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace pagerec
