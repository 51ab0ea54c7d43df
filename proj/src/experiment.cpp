#include "pagerec/experiment.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "pagerec/checkpoint.hpp"
#include "pagerec/csv.hpp"
#include "pagerec/embanalysis.hpp"
#include "pagerec/errors.hpp"
#include "pagerec/hyptrails.hpp"

namespace pagerec {

using ojson = nlohmann::ordered_json;

namespace {

enum class Type { String, Int, OptInt, Real, Bool, IntList, RealList, StringList };

struct Key {
  const char* name;
  Type type;
  ojson value;
};

const std::vector<Key>& schema() {
  static const std::vector<Key> keys = {
      {"experiment", Type::String, "default"},
      {"out", Type::String, "runs"},
      {"seeds", Type::IntList, ojson::array({212, 6, 10, 404, 42})},
      {"data.source", Type::String, "toy"},
      {"data.sessions", Type::String, ""},
      {"data.ratings", Type::String, ""},
      {"data.movies", Type::String, ""},
      {"data.dense_dim", Type::OptInt, nullptr},
      {"synth.variant", Type::String, "prev"},
      {"synth.shuffle", Type::Real, 0.0},
      {"synth.seed", Type::Int, 1},
      {"toy.users", Type::Int, 500},
      {"toy.items", Type::Int, 50},
      {"toy.combos", Type::Int, 10},
      {"toy.items_per_user", Type::Int, 10},
      {"toy.seed", Type::Int, 1},
      {"preprocess.dedupe", Type::Bool, true},
      {"preprocess.min_occurrence", Type::Int, 1},
      {"preprocess.min_len", Type::Int, 1},
      {"preprocess.max_len", Type::OptInt, nullptr},
      {"preprocess.end_with_item", Type::Bool, true},
      {"preprocess.until_fixpoint", Type::Bool, false},
      {"list_pages.mode", Type::String, "none"},
      {"list_pages.k", Type::Int, 3},
      {"split.kind", Type::String, "user"},
      {"split.train", Type::Real, 0.8},
      {"split.valid", Type::Real, 0.1},
      {"split.seed", Type::Int, 0},
      {"strategy.mode", Type::String, "cpid"},
      {"strategy.pe_attrs", Type::Bool, true},
      {"strategy.pe_dense", Type::Bool, false},
      {"strategy.item_attrs", Type::Bool, false},
      {"model.backend", Type::String, "self_attention"},
      {"model.d", Type::Int, 64},
      {"model.max_len", Type::Int, 50},
      {"model.layers", Type::Int, 2},
      {"model.heads", Type::Int, 2},
      {"model.inner", Type::Int, 256},
      {"model.dropout", Type::Real, 0.2},
      {"train.lr", Type::Real, 1e-3},
      {"train.beta1", Type::Real, 0.9},
      {"train.beta2", Type::Real, 0.999},
      {"train.eps", Type::Real, 1e-8},
      {"train.batch_size", Type::Int, 64},
      {"train.epochs", Type::Int, 20},
      {"train.patience", Type::Int, 3},
      {"train.non_item_targets", Type::Bool, true},
      {"eval.protocol", Type::String, "auto"},
      {"eval.model", Type::String, "checkpoint"},
      {"hyptrails.k", Type::RealList, nullptr},
      {"noise.ratios", Type::RealList, ojson::array({0.0, 0.5, 1.0})},
      {"analyze.runs", Type::StringList, ojson::array()},
      {"analyze.random_seed", Type::Int, 0},
  };
  return keys;
}

const Key& key_info(const std::string& name) {
  for (const auto& k : schema()) {
    if (name == k.name) return k;
  }
  throw ConfigError("unknown config key '" + name + "'");
}

bool is_count(const ojson& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0); }

bool type_ok(Type t, const ojson& v) {
  auto all = [&](auto pred) {
    if (!v.is_array()) return false;
    for (const auto& e : v) {
      if (!pred(e)) return false;
    }
    return true;
  };
  switch (t) {
    case Type::String: return v.is_string();
    case Type::Int: return is_count(v);
    case Type::OptInt: return v.is_null() || is_count(v);
    case Type::Real: return v.is_number();
    case Type::Bool: return v.is_boolean();
    case Type::IntList: return all(is_count);
    case Type::RealList: return v.is_null() || all([](const ojson& e) { return e.is_number(); });
    case Type::StringList: return all([](const ojson& e) { return e.is_string(); });
  }
  return false;
}

ojson parse_scalar(Type t, const std::string& text) {
  auto fail = [&]() -> ojson { throw ConfigError("cannot read '" + text + "' as a value of this key"); };
  switch (t) {
    case Type::String: return text;
    case Type::Bool:
      if (text == "true") return true;
      if (text == "false") return false;
      return fail();
    case Type::OptInt:
      if (text == "null") return nullptr;
      [[fallthrough]];
    case Type::Int:
    case Type::IntList: {
      std::uint64_t v = 0;
      const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
      if (r.ec != std::errc() || r.ptr != text.data() + text.size()) return fail();
      return v;
    }
    case Type::Real:
    case Type::RealList: {
      double v = 0.0;
      const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
      if (r.ec != std::errc() || r.ptr != text.data() + text.size()) return fail();
      return v;
    }
    case Type::StringList: return text;
  }
  return fail();
}

ojson parse_override_value(Type t, const std::string& text) {
  const bool is_list = t == Type::IntList || t == Type::RealList || t == Type::StringList;
  if (!is_list) return parse_scalar(t, text);
  if (t == Type::RealList && text == "null") return nullptr;
  ojson arr = ojson::array();
  if (text.empty()) return arr;
  for (const auto& part : csv::split_record(text)) arr.push_back(parse_scalar(t, part));
  return arr;
}

template <typename T>
T get(const ojson& j, const char* key) {
  return j.at(key).get<T>();
}

}  // namespace

ojson default_config() {
  ojson j;
  for (const auto& k : schema()) j[k.name] = k.value;
  return j;
}

ojson load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    auto j = ojson::parse(in);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

ojson resolve_config(const ojson& file, const std::vector<std::string>& overrides) {
  ojson j = default_config();
  if (!file.is_null()) {
    if (!file.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [name, value] : file.items()) {
      const auto& info = key_info(name);
      if (!type_ok(info.type, value)) throw ConfigError("config key '" + name + "' has the wrong type");
      j[name] = value;
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    const std::string name = o.substr(0, eq);
    const auto& info = key_info(name);
    try {
      j[name] = parse_override_value(info.type, o.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("--set " + name + ": " + e.what());
    }
  }
  return j;
}

ExperimentConfig parse_config(const ojson& r) {
  ExperimentConfig c;
  c.resolved = r;
  try {
    for (const auto& k : schema()) {
      if (!r.contains(k.name)) throw ConfigError(std::string("missing config key '") + k.name + "'");
      if (!type_ok(k.type, r.at(k.name))) throw ConfigError(std::string("config key '") + k.name + "' has the wrong type");
    }
    for (const auto& [name, _] : r.items()) key_info(name);

    c.experiment = get<std::string>(r, "experiment");
    if (c.experiment.empty() || c.experiment.find('/') != std::string::npos) {
      throw ConfigError("experiment name must be non-empty and contain no '/'");
    }
    c.out = get<std::string>(r, "out");
    c.seeds = get<std::vector<std::uint64_t>>(r, "seeds");
    if (c.seeds.empty()) throw ConfigError("at least one seed is required");

    c.source = get<std::string>(r, "data.source");
    if (c.source != "sessions" && c.source != "ratings" && c.source != "toy") {
      throw ConfigError("data.source must be sessions, ratings or toy");
    }
    c.sessions_path = get<std::string>(r, "data.sessions");
    c.ratings_path = get<std::string>(r, "data.ratings");
    c.movies_path = get<std::string>(r, "data.movies");
    if (c.source == "sessions" && c.sessions_path.empty()) throw ConfigError("data.sessions is required");
    if (c.source == "ratings" && (c.ratings_path.empty() || c.movies_path.empty())) {
      throw ConfigError("data.ratings and data.movies are required");
    }
    if (!r.at("data.dense_dim").is_null()) c.dense_dim = get<std::size_t>(r, "data.dense_dim");

    const auto variant = get<std::string>(r, "synth.variant");
    const double shuffle = get<double>(r, "synth.shuffle");
    if (variant == "prev") c.synth = SynthVariant::prev();
    else if (variant == "group") c.synth = SynthVariant::group();
    else if (variant == "random") c.synth = SynthVariant::random(shuffle);
    else throw ConfigError("synth.variant must be prev, group or random");
    if (!(shuffle >= 0.0 && shuffle <= 1.0)) throw ConfigError("synth.shuffle must lie in [0, 1]");
    c.synth_seed = get<std::uint64_t>(r, "synth.seed");
    c.toy.n_users = get<std::size_t>(r, "toy.users");
    c.toy.n_items = get<std::size_t>(r, "toy.items");
    c.toy.n_combos = get<std::size_t>(r, "toy.combos");
    c.toy.items_per_user = get<std::size_t>(r, "toy.items_per_user");
    c.toy_seed = get<std::uint64_t>(r, "toy.seed");

    c.preprocess.dedupe = get<bool>(r, "preprocess.dedupe");
    c.preprocess.min_occurrence = get<std::size_t>(r, "preprocess.min_occurrence");
    c.preprocess.min_len = get<std::size_t>(r, "preprocess.min_len");
    if (!r.at("preprocess.max_len").is_null()) c.preprocess.max_len = get<std::size_t>(r, "preprocess.max_len");
    c.preprocess.end_with_item = get<bool>(r, "preprocess.end_with_item");
    c.preprocess.until_fixpoint = get<bool>(r, "preprocess.until_fixpoint");
    if (c.preprocess.min_occurrence < 1 || c.preprocess.min_len < 1 || c.preprocess.max_len < c.preprocess.min_len) {
      throw ConfigError("preprocess bounds must satisfy 1 <= min_len <= max_len and min_occurrence >= 1");
    }

    const auto lp = get<std::string>(r, "list_pages.mode");
    const auto lp_k = get<std::size_t>(r, "list_pages.k");
    if (lp == "first_item_proxy") c.list_pages = ListPageFeatures{ListPageMode::FirstItemProxy, lp_k};
    else if (lp == "first_item_attributes") c.list_pages = ListPageFeatures{ListPageMode::FirstItemAttributes, lp_k};
    else if (lp == "top_k_attributes") c.list_pages = ListPageFeatures{ListPageMode::TopKFrequentAttributes, lp_k};
    else if (lp != "none") throw ConfigError("list_pages.mode must be none, first_item_proxy, first_item_attributes or top_k_attributes");
    if (c.list_pages && lp_k == 0) throw ConfigError("list_pages.k must be positive");

    const auto sk = get<std::string>(r, "split.kind");
    if (sk == "user") c.split.kind = SplitStrategy::Kind::ByUser;
    else if (sk == "time") c.split.kind = SplitStrategy::Kind::ByTime;
    else throw ConfigError("split.kind must be user or time");
    c.split.train = get<double>(r, "split.train");
    c.split.valid = get<double>(r, "split.valid");
    if (!(c.split.train > 0.0 && c.split.valid >= 0.0 && c.split.train + c.split.valid < 1.0)) {
      throw ConfigError("split fractions must satisfy train > 0, valid >= 0, train + valid < 1");
    }
    c.split_seed = get<std::uint64_t>(r, "split.seed");

    const auto mode = get<std::string>(r, "strategy.mode");
    c.items_only = mode == "items";
    c.strategy.mode = c.items_only ? PageMode::Cpid : parse_page_mode(mode);
    c.strategy.pe_attrs = get<bool>(r, "strategy.pe_attrs");
    c.strategy.pe_dense = get<bool>(r, "strategy.pe_dense");
    c.strategy.item_attrs = get<bool>(r, "strategy.item_attrs");
    c.strategy.validate();

    auto& m = c.train.model;
    m.backend = parse_backend(get<std::string>(r, "model.backend"));
    m.d = get<std::size_t>(r, "model.d");
    m.max_len = get<std::size_t>(r, "model.max_len");
    m.layers = get<std::size_t>(r, "model.layers");
    m.heads = get<std::size_t>(r, "model.heads");
    m.inner = get<std::size_t>(r, "model.inner");
    m.dropout = get<double>(r, "model.dropout");
    m.vocab_size = 2;  // placeholder so validate() checks the remaining sizes
    m.validate();
    c.train.lr = get<double>(r, "train.lr");
    c.train.beta1 = get<double>(r, "train.beta1");
    c.train.beta2 = get<double>(r, "train.beta2");
    c.train.eps = get<double>(r, "train.eps");
    c.train.batch_size = get<std::size_t>(r, "train.batch_size");
    c.train.epochs = get<std::size_t>(r, "train.epochs");
    c.train.patience = get<std::size_t>(r, "train.patience");
    c.train.non_item_targets = get<bool>(r, "train.non_item_targets");
    // auto: last item for user splits, every item target for time splits.
    const auto protocol = get<std::string>(r, "eval.protocol");
    if (protocol == "auto") {
      c.protocol = c.split.kind == SplitStrategy::Kind::ByTime ? EvalProtocol::AllItemTargets : EvalProtocol::LastItem;
    } else {
      c.protocol = parse_protocol(protocol);
    }
    c.train.valid_protocol = c.protocol;
    c.train.validate();
    c.eval_model = get<std::string>(r, "eval.model");
    if (c.eval_model != "checkpoint" && c.eval_model != "genre_pop") {
      throw ConfigError("eval.model must be checkpoint or genre_pop");
    }

    c.hyptrails_k = r.at("hyptrails.k").is_null() ? hyptrails::default_k_values()
                                                    : get<std::vector<double>>(r, "hyptrails.k");
    for (double k : c.hyptrails_k) {
      if (!(k >= 0.0)) throw ConfigError("hyptrails.k values must be non-negative");
    }
    c.noise_ratios = r.at("noise.ratios").is_null() ? std::vector<double>{} : get<std::vector<double>>(r, "noise.ratios");
    for (double x : c.noise_ratios) {
      if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("noise.ratios must lie in [0, 1]");
    }
    c.analyze_runs = get<std::vector<std::string>>(r, "analyze.runs");
    c.analyze_random_seed = get<std::uint64_t>(r, "analyze.random_seed");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

Corpus build_corpus(const ExperimentConfig& cfg, std::optional<SynthVariant> variant) {
  Corpus corpus;
  if (cfg.source == "sessions") {
    corpus = load_sessions(cfg.sessions_path, cfg.dense_dim);
  } else {
    const RatingsTable ratings = cfg.source == "toy" ? make_toy_ratings(cfg.toy, cfg.toy_seed)
                                                     : load_ratings(cfg.ratings_path, cfg.movies_path);
    corpus = synthesize(ratings, variant.value_or(cfg.synth), cfg.synth_seed);
  }
  if (cfg.list_pages) corpus = derive_list_page_features(corpus, item_catalog(corpus), *cfg.list_pages);
  return preprocess(corpus, cfg.preprocess);
}

RunOutcome train_and_evaluate(const CorpusSplit& data, const ExperimentConfig& cfg, std::uint64_t seed) {
  RunOutcome out;
  out.strategy = cfg.strategy;
  const CorpusSplit* use = &data;
  CorpusSplit stripped;
  if (cfg.items_only) {
    stripped = {remove_pages(data.train), remove_pages(data.valid), remove_pages(data.test)};
    use = &stripped;
  }
  out.vocab = build_vocab(use->train, out.strategy);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  out.trained = train_model(use->train, &use->valid, out.vocab, out.strategy, tc);
  out.test = evaluate_model({out.trained.params, out.vocab, out.strategy}, use->test, kDefaultKs, cfg.protocol);
  return out;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"ingest", "synth", "hyptrails", "train",
                                                 "eval", "noise-sweep", "analyze"};
  return names;
}

namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

// CSV formats are fixed, so CSV artifacts carry their config in a sidecar.
void write_config_sidecar(const fs::path& dir, const ExperimentConfig& cfg) {
  write_json(dir / "config.json", cfg.resolved);
}

std::string strategy_label(const ExperimentConfig& cfg) {
  return cfg.items_only ? "items" : std::string(name(cfg.strategy.mode));
}

ojson metrics_json(const EvalReport& r) { return to_json(r).at("metrics"); }

ojson aggregate_metrics(const std::vector<EvalReport>& reports) {
  ojson mean = ojson::object(), sd = ojson::object();
  const ojson first = metrics_json(reports.front());
  for (const auto& [key, _] : first.items()) {
    std::vector<double> vals;
    for (const auto& r : reports) vals.push_back(r.metrics.at(key));
    const auto ms = mean_std(vals);
    mean[key] = ms.mean;
    sd[key] = ms.std;
  }
  return {{"mean", mean}, {"std", sd}};
}

std::string aggregate_csv(const ojson& agg) {
  std::ostringstream out;
  out << "metric,mean,std\n";
  for (const auto& [key, v] : agg.at("mean").items()) {
    out << key << ',' << csv::format_double(v.get<double>()) << ','
        << csv::format_double(agg.at("std").at(key).get<double>()) << '\n';
  }
  return out.str();
}

ojson seed_list(const ExperimentConfig& cfg) { return cfg.seeds; }

void cmd_ingest(const ExperimentConfig& cfg, std::ostream& log) {
  const Corpus corpus = build_corpus(cfg);
  const auto dir = cfg.experiment_dir();
  fs::create_directories(dir);
  save_sessions(dir / "corpus.jsonl", corpus);
  const auto s = stats(corpus);
  write_json(dir / "stats.json", {{"config", cfg.resolved}, {"stats", to_json(s)}});
  write_text(dir / "stats.csv", stats_csv(s));
  write_config_sidecar(dir, cfg);
  log << "ingest: " << s.n_users << " sessions -> " << (dir / "corpus.jsonl").string() << '\n';
}

void cmd_synth(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.source == "sessions") throw ConfigError("synth needs data.source ratings or toy");
  const Corpus corpus = build_corpus(cfg);
  const auto dir = cfg.experiment_dir();
  fs::create_directories(dir);
  save_sessions(dir / "corpus.jsonl", corpus);
  const auto s = stats(corpus);
  const auto ps = page_stats(corpus);
  write_json(dir / "stats.json",
             {{"config", cfg.resolved},
              {"stats", to_json(s)},
              {"pages", {{"pages_per_session", ps.pages_per_session}, {"avg_genres_per_page", ps.avg_genres_per_page}}}});
  write_text(dir / "stats.csv", stats_csv(s));
  write_config_sidecar(dir, cfg);
  log << "synth: " << s.n_users << " sessions, " << s.n_cpids << " page combinations\n";
}

void cmd_hyptrails(const ExperimentConfig& cfg, std::ostream& log) {
  using namespace hyptrails;
  const Corpus corpus = build_corpus(cfg);
  const auto states = build_state_space(corpus);
  const auto counts = count_transitions(corpus, states);
  std::vector<Hypothesis> hyps;
  for (auto kind : {HypothesisKind::Uniform, HypothesisKind::Structural, HypothesisKind::Mixed, HypothesisKind::Data}) {
    hyps.push_back(build_hypothesis(states, kind, &counts));
  }
  const auto rows = compare_sweep(counts, hyps, cfg.hyptrails_k);
  const auto dir = cfg.experiment_dir();
  write_text(dir / "sweep.csv", sweep_csv(rows));
  ojson sweep = ojson::array();
  for (const auto& row : rows) {
    sweep.push_back({{"hypothesis", name(row.kind)}, {"k", row.k}, {"log_evidence", row.log_evidence}});
  }
  write_json(dir / "report.json", {{"config", cfg.resolved},
                                   {"n_states", states.size()},
                                   {"n_transitions", counts.total()},
                                   {"sweep", sweep}});
  write_config_sidecar(dir, cfg);
  log << "hyptrails: " << states.size() << " states, " << counts.total() << " transitions\n";
}

void cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  const auto data = split(build_corpus(cfg), cfg.split, cfg.split_seed);
  std::vector<EvalReport> reports;
  for (auto seed : cfg.seeds) {
    log << "train: seed " << seed << '\n';
    const auto run = train_and_evaluate(data, cfg, seed);
    const auto dir = cfg.seed_dir(seed);
    fs::create_directories(dir);
    save_checkpoint(dir / "checkpoint.bin",
                    {run.trained.params, run.vocab, run.strategy, {cfg.train.model.max_len, cfg.train.non_item_targets}});
    write_text(dir / "log.csv", log_csv(run.trained.log));
    write_text(dir / "report.csv",
               report_csv(run.test, std::string(name(cfg.train.model.backend)), strategy_label(cfg)));
    write_config_sidecar(dir, cfg);
    write_json(dir / "report.json", {{"config", cfg.resolved},
                                     {"seed", seed},
                                     {"best_epoch", run.trained.best_epoch},
                                     {"epochs_run", run.trained.log.size()},
                                     {"metrics", metrics_json(run.test)},
                                     {"n_targets", run.test.n_targets}});
    reports.push_back(run.test);
    log << "  HR@10 " << run.test.hr(10) << "  NDCG@10 " << run.test.ndcg(10) << '\n';
  }
  const auto agg = aggregate_metrics(reports);
  write_json(cfg.experiment_dir() / "aggregate.json", {{"config", cfg.resolved}, {"seeds", seed_list(cfg)}, {"metrics", agg}});
  write_text(cfg.experiment_dir() / "aggregate.csv", aggregate_csv(agg));
  write_config_sidecar(cfg.experiment_dir(), cfg);
}

void cmd_eval(const ExperimentConfig& cfg, std::ostream& log) {
  const auto data = split(build_corpus(cfg), cfg.split, cfg.split_seed);
  std::vector<EvalReport> reports;
  const Corpus test = cfg.items_only ? remove_pages(data.test) : data.test;
  for (auto seed : cfg.seeds) {
    const auto dir = cfg.seed_dir(seed);
    EvalReport report;
    std::string model_label;
    if (cfg.eval_model == "genre_pop") {
      report = evaluate_genre_pop(GenrePop(data.train), test, kDefaultKs, cfg.protocol);
      model_label = "genre_pop";
    } else {
      const auto ckpt = load_checkpoint(dir / "checkpoint.bin");
      report = evaluate_model({ckpt.params, ckpt.vocab, ckpt.strategy}, test, kDefaultKs, cfg.protocol);
      model_label = std::string(name(ckpt.params.config.backend));
    }
    fs::create_directories(dir);
    write_json(dir / "eval.json", {{"config", cfg.resolved},
                                   {"seed", seed},
                                   {"model", model_label},
                                   {"metrics", metrics_json(report)},
                                   {"n_targets", report.n_targets}});
    write_text(dir / "eval.csv", report_csv(report, model_label, strategy_label(cfg)));
    write_config_sidecar(dir, cfg);
    reports.push_back(report);
    log << "eval: seed " << seed << "  HR@10 " << report.hr(10) << '\n';
  }
  const auto agg = aggregate_metrics(reports);
  write_json(cfg.experiment_dir() / "eval_aggregate.json", {{"config", cfg.resolved}, {"seeds", seed_list(cfg)}, {"metrics", agg}});
  write_text(cfg.experiment_dir() / "eval_aggregate.csv", aggregate_csv(agg));
  write_config_sidecar(cfg.experiment_dir(), cfg);
}

void cmd_noise_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.source == "sessions") throw ConfigError("noise-sweep needs data.source ratings or toy");
  if (cfg.items_only) throw ConfigError("noise-sweep needs a page strategy, not items");
  // Items-only baseline first, then one corpus per shuffle ratio.
  std::vector<std::string> labels{"items"};
  std::vector<CorpusSplit> splits{split(build_corpus(cfg, SynthVariant::prev()), cfg.split, cfg.split_seed)};
  for (double x : cfg.noise_ratios) {
    labels.push_back("random-" + csv::format_double(x));
    splits.push_back(split(build_corpus(cfg, SynthVariant::random(x)), cfg.split, cfg.split_seed));
  }
  ExperimentConfig items_cfg = cfg;
  items_cfg.items_only = true;

  std::map<std::string, std::vector<double>> hr10, ndcg10;
  for (auto seed : cfg.seeds) {
    std::ostringstream table;
    table << "variant,ratio,hr10,ndcg10\n";
    ojson rows = ojson::array();
    for (std::size_t v = 0; v < labels.size(); ++v) {
      log << "noise-sweep: seed " << seed << ' ' << labels[v] << '\n';
      const auto run = train_and_evaluate(splits[v], v == 0 ? items_cfg : cfg, seed);
      const std::string ratio = v == 0 ? "" : csv::format_double(cfg.noise_ratios[v - 1]);
      table << labels[v] << ',' << ratio << ',' << csv::format_double(run.test.hr(10)) << ','
            << csv::format_double(run.test.ndcg(10)) << '\n';
      rows.push_back({{"variant", labels[v]}, {"metrics", metrics_json(run.test)}, {"n_targets", run.test.n_targets}});
      hr10[labels[v]].push_back(run.test.hr(10));
      ndcg10[labels[v]].push_back(run.test.ndcg(10));
    }
    const auto dir = cfg.seed_dir(seed);
    write_text(dir / "noise.csv", table.str());
    write_json(dir / "report.json", {{"config", cfg.resolved}, {"seed", seed}, {"variants", rows}});
    write_config_sidecar(dir, cfg);
  }
  std::ostringstream agg;
  agg << "variant,hr10_mean,hr10_std,ndcg10_mean,ndcg10_std\n";
  ojson agg_json = ojson::array();
  for (const auto& label : labels) {
    const auto h = mean_std(hr10[label]);
    const auto n = mean_std(ndcg10[label]);
    agg << label << ',' << csv::format_double(h.mean) << ',' << csv::format_double(h.std) << ','
        << csv::format_double(n.mean) << ',' << csv::format_double(n.std) << '\n';
    agg_json.push_back({{"variant", label},
                        {"HR@10", {{"mean", h.mean}, {"std", h.std}}},
                        {"NDCG@10", {{"mean", n.mean}, {"std", n.std}}}});
  }
  write_text(cfg.experiment_dir() / "noise_aggregate.csv", agg.str());
  write_json(cfg.experiment_dir() / "aggregate.json", {{"config", cfg.resolved}, {"seeds", seed_list(cfg)}, {"variants", agg_json}});
  write_config_sidecar(cfg.experiment_dir(), cfg);
}

void cmd_analyze(const ExperimentConfig& cfg, std::ostream& log) {
  std::vector<std::string> runs = cfg.analyze_runs;
  if (runs.empty()) {
    for (auto seed : cfg.seeds) runs.push_back(cfg.experiment + "/" + std::to_string(seed));
  }
  const auto dir = cfg.experiment_dir() / "analysis";
  fs::create_directories(dir);
  std::vector<std::string> labels;
  std::vector<SimilarityMatrix> matrices;
  std::size_t d = 0;
  for (const auto& run : runs) {
    const auto ckpt = load_checkpoint(cfg.out / run / "checkpoint.bin");
    std::string label = run;
    for (auto& ch : label) {
      if (ch == '/') ch = '_';
    }
    export_embeddings(ckpt.params, ckpt.vocab, dir / (label + ".tsv"));
    labels.push_back(run);
    matrices.push_back(cosine_matrix(ckpt.params, ckpt.vocab));
    d = ckpt.params.config.d;
    log << "analyze: " << run << '\n';
  }
  if (!matrices.empty()) {
    labels.push_back("random");
    matrices.push_back(random_baseline(matrices.front().item_ids, d, cfg.analyze_random_seed));
  }
  write_text(dir / "divergence.csv", divergence_table_csv(labels, matrices));
  ojson table = ojson::array();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ojson row = ojson::array();
    for (std::size_t j = 0; j < labels.size(); ++j) row.push_back(divergence(matrices[i], matrices[j]));
    table.push_back(row);
  }
  write_json(dir / "report.json", {{"config", cfg.resolved}, {"labels", labels}, {"divergence", table}});
  write_config_sidecar(dir, cfg);
}

}  // namespace

void run_command(std::string_view command, const ExperimentConfig& cfg, std::ostream& log) {
  static const std::map<std::string, std::function<void(const ExperimentConfig&, std::ostream&)>, std::less<>> table = {
      {"ingest", cmd_ingest}, {"synth", cmd_synth},         {"hyptrails", cmd_hyptrails}, {"train", cmd_train},
      {"eval", cmd_eval},     {"noise-sweep", cmd_noise_sweep}, {"analyze", cmd_analyze}};
  auto it = table.find(command);
  if (it == table.end()) throw ConfigError("unknown command '" + std::string(command) + "'");
  it->second(cfg, log);
}

}  // namespace pagerec
