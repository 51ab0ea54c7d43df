#pragma once

// Bayesian comparison of first-order transition hypotheses over aggregated
// states (items grouped by attribute combination, pages by CPID).

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pagerec/corpus.hpp"

namespace pagerec::hyptrails {

using StateId = std::size_t;

enum class StateKind { ItemGroup, PageGroup };

struct State {
  StateKind kind;
  AttrSet attrs;
  friend auto operator<=>(const State&, const State&) = default;
};

class StateSpace {
 public:
  StateSpace() = default;
  /// States must be unique; they are kept in the given order.
  explicit StateSpace(std::vector<State> states);

  std::size_t size() const { return states_.size(); }
  const State& state(StateId id) const { return states_.at(id); }
  const std::vector<State>& states() const { return states_; }
  std::optional<StateId> find(StateKind kind, const AttrSet& attrs) const;
  /// Throws DataError when the interaction has no matching state.
  StateId state_of(const Interaction& event) const;

 private:
  std::vector<State> states_;
  std::map<State, StateId> index_;
};

/// Sparse non-negative count matrix, one ordered map per row.
class TransitionCounts {
 public:
  explicit TransitionCounts(std::size_t n_states = 0) : rows_(n_states), row_totals_(n_states, 0) {}

  void add(StateId from, StateId to, std::uint64_t count = 1);
  /// Associative merge of counts over the same state space.
  TransitionCounts& operator+=(const TransitionCounts& other);

  std::size_t n_states() const { return rows_.size(); }
  std::uint64_t at(StateId from, StateId to) const;
  const std::map<StateId, std::uint64_t>& row(StateId from) const { return rows_.at(from); }
  std::uint64_t row_total(StateId from) const { return row_totals_.at(from); }
  std::uint64_t total() const;

 private:
  std::vector<std::map<StateId, std::uint64_t>> rows_;
  std::vector<std::uint64_t> row_totals_;
};

enum class HypothesisKind { Uniform, Structural, Mixed, Data };

std::string_view name(HypothesisKind kind);

/// Row-stochastic matrix stored as a per-row default plus explicit entries.
class Hypothesis {
 public:
  struct Row {
    double fill = 0.0;
    std::map<StateId, double> entries;
  };

  Hypothesis(HypothesisKind kind, std::vector<Row> rows);

  HypothesisKind kind() const { return kind_; }
  std::size_t n_states() const { return rows_.size(); }
  double at(StateId from, StateId to) const;
  const Row& row(StateId from) const { return rows_.at(from); }
  double row_sum(StateId from) const;

 private:
  HypothesisKind kind_;
  std::vector<Row> rows_;
};

/// ItemGroup states first, then PageGroup states; each group ordered by
/// attribute-id sequence.
StateSpace build_state_space(const Corpus& corpus);

TransitionCounts count_transitions(const Corpus& corpus, const StateSpace& states);

/// Page rows without a matching item group, and data rows without outgoing
/// transitions, fall back to the uniform row.
Hypothesis build_hypothesis(const StateSpace& states, HypothesisKind kind,
                            const TransitionCounts* counts = nullptr);

/// Dirichlet-multinomial log marginal likelihood with pseudo-counts
/// alpha = k * H + 1.
double evidence(const TransitionCounts& counts, const Hypothesis& hypothesis, double k);

struct SweepRow {
  HypothesisKind kind;
  double k;
  double log_evidence;
};

/// Full cross product, sorted by (k, kind).
std::vector<SweepRow> compare_sweep(const TransitionCounts& counts,
                                    const std::vector<Hypothesis>& hypotheses,
                                    const std::vector<double>& k_values);

/// 0 followed by 10^0 .. 10^6.
std::vector<double> default_k_values();

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace pagerec::hyptrails
