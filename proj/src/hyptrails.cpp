#include "pagerec/hyptrails.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pagerec/csv.hpp"
#include "pagerec/errors.hpp"

namespace pagerec::hyptrails {

StateSpace::StateSpace(std::vector<State> states) : states_(std::move(states)) {
  for (StateId i = 0; i < states_.size(); ++i) {
    if (!index_.emplace(states_[i], i).second) {
      throw std::invalid_argument("duplicate state in state space");
    }
  }
}

std::optional<StateId> StateSpace::find(StateKind kind, const AttrSet& attrs) const {
  if (auto it = index_.find(State{kind, attrs}); it != index_.end()) return it->second;
  return std::nullopt;
}

StateId StateSpace::state_of(const Interaction& event) const {
  const auto kind = event.is_item() ? StateKind::ItemGroup : StateKind::PageGroup;
  if (auto id = find(kind, event.attrs)) return *id;
  throw DataError("no state for interaction '" + event.entity_id + "'");
}

void TransitionCounts::add(StateId from, StateId to, std::uint64_t count) {
  if (from >= rows_.size() || to >= rows_.size()) throw std::out_of_range("state id out of range");
  if (count == 0) return;
  rows_[from][to] += count;
  row_totals_[from] += count;
}

TransitionCounts& TransitionCounts::operator+=(const TransitionCounts& other) {
  if (other.n_states() != n_states()) throw std::invalid_argument("state spaces differ");
  for (StateId x = 0; x < other.rows_.size(); ++x) {
    for (const auto& [y, n] : other.rows_[x]) add(x, y, n);
  }
  return *this;
}

std::uint64_t TransitionCounts::at(StateId from, StateId to) const {
  const auto& r = rows_.at(from);
  auto it = r.find(to);
  return it == r.end() ? 0 : it->second;
}

std::uint64_t TransitionCounts::total() const {
  std::uint64_t sum = 0;
  for (auto t : row_totals_) sum += t;
  return sum;
}

std::string_view name(HypothesisKind kind) {
  switch (kind) {
    case HypothesisKind::Uniform: return "uniform";
    case HypothesisKind::Structural: return "structural";
    case HypothesisKind::Mixed: return "uniform+structural";
    case HypothesisKind::Data: return "data";
  }
  return "?";
}

Hypothesis::Hypothesis(HypothesisKind kind, std::vector<Row> rows)
    : kind_(kind), rows_(std::move(rows)) {}

double Hypothesis::at(StateId from, StateId to) const {
  const auto& r = rows_.at(from);
  auto it = r.entries.find(to);
  return it == r.entries.end() ? r.fill : it->second;
}

double Hypothesis::row_sum(StateId from) const {
  const auto& r = rows_.at(from);
  double sum = r.fill * static_cast<double>(rows_.size() - r.entries.size());
  for (const auto& [y, v] : r.entries) sum += v;
  return sum;
}

StateSpace build_state_space(const Corpus& corpus) {
  std::set<AttrSet> item_sets, page_sets;
  for (const auto& s : corpus.sessions) {
    for (const auto& e : s.events) {
      if (e.attrs.empty()) {
        throw DataError("interaction '" + e.entity_id + "' has no attributes to derive a state");
      }
      (e.is_item() ? item_sets : page_sets).insert(e.attrs);
    }
  }
  std::vector<State> states;
  for (const auto& a : item_sets) states.push_back({StateKind::ItemGroup, a});
  for (const auto& a : page_sets) states.push_back({StateKind::PageGroup, a});
  return StateSpace(std::move(states));
}

TransitionCounts count_transitions(const Corpus& corpus, const StateSpace& states) {
  TransitionCounts counts(states.size());
  for (const auto& s : corpus.sessions) {
    for (std::size_t t = 0; t + 1 < s.events.size(); ++t) {
      counts.add(states.state_of(s.events[t]), states.state_of(s.events[t + 1]));
    }
  }
  return counts;
}

Hypothesis build_hypothesis(const StateSpace& states, HypothesisKind kind,
                            const TransitionCounts* counts) {
  const std::size_t n = states.size();
  const double uniform = n ? 1.0 / static_cast<double>(n) : 0.0;
  std::vector<Hypothesis::Row> rows(n, Hypothesis::Row{uniform, {}});

  auto matching_item = [&](StateId x) -> std::optional<StateId> {
    const auto& st = states.state(x);
    if (st.kind != StateKind::PageGroup) return std::nullopt;
    return states.find(StateKind::ItemGroup, st.attrs);
  };

  switch (kind) {
    case HypothesisKind::Uniform:
      break;
    case HypothesisKind::Structural:
      for (StateId x = 0; x < n; ++x) {
        if (auto y = matching_item(x)) rows[x] = Hypothesis::Row{0.0, {{*y, 1.0}}};
      }
      break;
    case HypothesisKind::Mixed: {
      const double denom = 1.0 + static_cast<double>(n);
      for (StateId x = 0; x < n; ++x) {
        if (auto y = matching_item(x)) rows[x] = Hypothesis::Row{1.0 / denom, {{*y, 2.0 / denom}}};
      }
      break;
    }
    case HypothesisKind::Data:
      if (counts == nullptr) throw std::invalid_argument("data hypothesis needs transition counts");
      if (counts->n_states() != n) throw std::invalid_argument("counts do not match state space");
      for (StateId x = 0; x < n; ++x) {
        const auto total = counts->row_total(x);
        if (total == 0) continue;
        Hypothesis::Row row{0.0, {}};
        for (const auto& [y, c] : counts->row(x)) {
          row.entries[y] = static_cast<double>(c) / static_cast<double>(total);
        }
        rows[x] = std::move(row);
      }
      break;
  }
  return Hypothesis(kind, std::move(rows));
}

double evidence(const TransitionCounts& counts, const Hypothesis& hypothesis, double k) {
  if (!(k >= 0.0)) throw std::invalid_argument("belief factor k must be non-negative");
  if (counts.n_states() != hypothesis.n_states()) {
    throw std::invalid_argument("counts and hypothesis have different state spaces");
  }
  const auto n_states = static_cast<double>(counts.n_states());
  // Neumaier-compensated sum over rows in fixed order.
  double sum = 0.0;
  double carry = 0.0;
  auto accumulate = [&](double term) {
    const double t = sum + term;
    if (std::abs(sum) >= std::abs(term)) {
      carry += (sum - t) + term;
    } else {
      carry += (term - t) + sum;
    }
    sum = t;
  };
  for (StateId x = 0; x < counts.n_states(); ++x) {
    const auto total = counts.row_total(x);
    if (total == 0) continue;
    const double alpha_total = k * hypothesis.row_sum(x) + n_states;
    double row = std::lgamma(alpha_total) - std::lgamma(alpha_total + static_cast<double>(total));
    for (const auto& [y, c] : counts.row(x)) {
      const double alpha = k * hypothesis.at(x, y) + 1.0;
      row += std::lgamma(alpha + static_cast<double>(c)) - std::lgamma(alpha);
    }
    accumulate(row);
  }
  return sum + carry;
}

std::vector<SweepRow> compare_sweep(const TransitionCounts& counts,
                                    const std::vector<Hypothesis>& hypotheses,
                                    const std::vector<double>& k_values) {
  if (hypotheses.empty() || k_values.empty()) {
    throw std::invalid_argument("compare_sweep needs hypotheses and k values");
  }
  std::vector<SweepRow> rows;
  rows.reserve(hypotheses.size() * k_values.size());
  for (const auto& h : hypotheses) {
    for (double k : k_values) rows.push_back({h.kind(), k, evidence(counts, h, k)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.k != b.k) return a.k < b.k;
    return a.kind < b.kind;
  });
  return rows;
}

std::vector<double> default_k_values() {
  std::vector<double> ks{0.0};
  double k = 1.0;
  for (int i = 0; i <= 6; ++i, k *= 10.0) ks.push_back(k);
  return ks;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "hypothesis,k,log_evidence\n";
  for (const auto& r : rows) {
    out << name(r.kind) << ',' << csv::format_double(r.k) << ',' << csv::format_double(r.log_evidence)
        << '\n';
  }
  return out.str();
}

}  // namespace pagerec::hyptrails
