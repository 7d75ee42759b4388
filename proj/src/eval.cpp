#include "lkge/eval.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "lkge/error.hpp"

namespace lkge {

KnownFacts::KnownFacts(const GrowthDataset& ds) {
  for (const auto& snap : ds.snapshots) {
    for (const auto* split : {&snap.train, &snap.valid, &snap.test}) {
      for (const auto& f : *split) add(f, snap.index);
    }
  }
}

void KnownFacts::add(const Fact& f, int snapshot) {
  tails_[key(f.subject.value, f.relation.value)].push_back(
      {f.object.value, snapshot});
  heads_[key(f.object.value, f.relation.value)].push_back(
      {f.subject.value, snapshot});
}

void KnownFacts::collect_filtered(const Query& q, int up_to,
                                  std::vector<std::uint32_t>& out) const {
  const auto& index = q.direction == Direction::tail ? tails_ : heads_;
  const auto it = index.find(key(q.known.value, q.relation.value));
  if (it == index.end()) return;
  for (const auto& entry : it->second) {
    if (entry.snapshot <= up_to && entry.entity != q.answer.value) {
      out.push_back(entry.entity);
    }
  }
}

bool KnownFacts::contains(const Fact& f, int up_to) const {
  const auto it = tails_.find(key(f.subject.value, f.relation.value));
  if (it == tails_.end()) return false;
  return std::any_of(it->second.begin(), it->second.end(), [&](const Entry& e) {
    return e.entity == f.object.value && e.snapshot <= up_to;
  });
}

namespace {

// Scores candidates against a fixed translation point: for tail queries the
// point is s + r and candidates are objects; for head queries it is o - r
// and candidates are subjects. Both reduce to ||point - candidate||.
class QueryScorer {
 public:
  QueryScorer(const Query& q, const EmbeddingState& st, Norm norm)
      : st_(st), norm_(norm), point_(st.dim) {
    const auto known = st.entity(q.known);
    const auto rel = st.relation(q.relation);
    const double sign = q.direction == Direction::tail ? 1.0 : -1.0;
    for (std::size_t k = 0; k < point_.size(); ++k) {
      point_[k] = known[k] + sign * rel[k];
    }
  }

  double operator()(std::uint32_t candidate) const {
    const auto c = st_.entities.row(candidate);
    double acc = 0.0;
    if (norm_ == Norm::l2) {
      for (std::size_t k = 0; k < point_.size(); ++k) {
        const double d = point_[k] - c[k];
        acc += d * d;
      }
      return std::sqrt(acc);
    }
    for (std::size_t k = 0; k < point_.size(); ++k) acc += std::abs(point_[k] - c[k]);
    return acc;
  }

 private:
  const EmbeddingState& st_;
  Norm norm_;
  Vector point_;
};

template <typename Candidates>
double rank_impl(const Query& q, const EmbeddingState& st,
                 const Candidates& candidates, std::uint32_t bound,
                 const RankOptions& opt) {
  if (q.answer.value >= bound || q.answer.index() >= st.entities.rows()) {
    throw ContractError(fmt::format("answer {} outside the candidate range",
                                    q.answer.value));
  }
  thread_local std::vector<std::uint32_t> filtered;
  thread_local std::vector<char> mask;
  filtered.clear();
  if (opt.filter) opt.filter->collect_filtered(q, opt.filter_snapshot, filtered);
  if (mask.size() < st.entities.rows()) mask.resize(st.entities.rows(), 0);
  for (auto e : filtered) {
    if (e < mask.size()) mask[e] = 1;
  }

  const QueryScorer score(q, st, opt.norm);
  const double target = score(q.answer.value);
  std::size_t better = 0;
  std::size_t ties = 0;
  bool answer_seen = false;
  for (std::uint32_t c : candidates) {
    if (c == q.answer.value) {
      answer_seen = true;
      continue;
    }
    if (mask[c]) continue;
    const double s = score(c);
    if (s < target) {
      ++better;
    } else if (s == target) {
      ++ties;
    }
  }
  for (auto e : filtered) {
    if (e < mask.size()) mask[e] = 0;
  }
  if (!answer_seen) {
    throw ContractError(
        fmt::format("answer {} is not among the candidates", q.answer.value));
  }
  return 1.0 + static_cast<double>(better) + 0.5 * static_cast<double>(ties);
}

struct IotaRange {
  std::uint32_t n;
  struct iterator {
    std::uint32_t v;
    std::uint32_t operator*() const { return v; }
    iterator& operator++() {
      ++v;
      return *this;
    }
    bool operator!=(const iterator& o) const { return v != o.v; }
  };
  iterator begin() const { return {0}; }
  iterator end() const { return {n}; }
};

struct HandleRange {
  std::span<const EntityId> ids;
  struct iterator {
    const EntityId* p;
    std::uint32_t operator*() const { return p->value; }
    iterator& operator++() {
      ++p;
      return *this;
    }
    bool operator!=(const iterator& o) const { return p != o.p; }
  };
  iterator begin() const { return {ids.data()}; }
  iterator end() const { return {ids.data() + ids.size()}; }
};

}  // namespace

double rank(const Query& q, const EmbeddingState& st,
            std::uint32_t num_candidates, const RankOptions& opt) {
  if (num_candidates > st.entities.rows()) {
    throw BoundsError(fmt::format("{} candidates requested but only {} entity "
                                  "rows exist",
                                  num_candidates, st.entities.rows()));
  }
  return rank_impl(q, st, IotaRange{num_candidates}, num_candidates, opt);
}

double rank(const Query& q, const EmbeddingState& st,
            std::span<const EntityId> candidates, const RankOptions& opt) {
  for (auto c : candidates) {
    if (c.index() >= st.entities.rows()) {
      throw BoundsError(fmt::format("candidate {} out of range", c.value));
    }
  }
  return rank_impl(q, st, HandleRange{candidates},
                   static_cast<std::uint32_t>(st.entities.rows()), opt);
}

void MetricAccumulator::add(double r) {
  ++count_;
  reciprocal_sum_ += 1.0 / r;
  if (r <= 1.0) ++hits1_;
  if (r <= 3.0) ++hits3_;
  if (r <= 10.0) ++hits10_;
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  count_ += other.count_;
  reciprocal_sum_ += other.reciprocal_sum_;
  hits1_ += other.hits1_;
  hits3_ += other.hits3_;
  hits10_ += other.hits10_;
}

Metrics MetricAccumulator::result() const {
  Metrics m;
  m.num_queries = count_;
  if (count_ == 0) return m;
  const auto n = static_cast<double>(count_);
  m.mrr = reciprocal_sum_ / n;
  m.hits1 = static_cast<double>(hits1_) / n;
  m.hits3 = static_cast<double>(hits3_) / n;
  m.hits10 = static_cast<double>(hits10_) / n;
  return m;
}

MetricAccumulator accumulate_link_prediction(const EmbeddingState& st,
                                             std::span<const Fact> test,
                                             std::uint32_t num_candidates,
                                             int snapshot,
                                             const EvalOptions& opt) {
  RankOptions ro{opt.norm, opt.filter, snapshot};
  MetricAccumulator acc;
  for (const auto& f : test) {
    acc.add(rank(Query::tail_of(f), st, num_candidates, ro));
    acc.add(rank(Query::head_of(f), st, num_candidates, ro));
  }
  return acc;
}

Metrics link_prediction(const EmbeddingState& st, std::span<const Fact> test,
                        std::uint32_t num_candidates, int snapshot,
                        const EvalOptions& opt) {
  return accumulate_link_prediction(st, test, num_candidates, snapshot, opt)
      .result();
}

Metrics union_eval(const EmbeddingState& st, const GrowthDataset& ds,
                   const EvalOptions& opt, int up_to) {
  const int n = up_to > 0 ? up_to : static_cast<int>(ds.size());
  MetricAccumulator acc;
  for (int j = 1; j <= n; ++j) {
    const auto& snap = ds.snapshot(j);
    acc.merge(accumulate_link_prediction(st, snap.test, snap.num_entities, j,
                                         opt));
  }
  return acc.result();
}

std::size_t TransferMatrix::slot(int i, int j) const {
  if (i < 1 || i > n_ || j < 1 || j > n_) {
    throw BoundsError(
        fmt::format("h[{}][{}] outside a {}x{} transfer matrix", i, j, n_, n_));
  }
  return static_cast<std::size_t>((i - 1) * n_ + (j - 1));
}

void TransferMatrix::set(int i, int j, double mrr) {
  if (j > i + 1) {
    throw ContractError(fmt::format("h[{}][{}] is above the superdiagonal", i, j));
  }
  // NaN marks an undefined score (empty test set).
  if (mrr < 0.0 || mrr > 1.0) {
    throw ContractError(fmt::format("h[{}][{}] = {} is not an MRR", i, j, mrr));
  }
  cells_[slot(i, j)] = mrr;
}

std::optional<double> TransferMatrix::get(int i, int j) const {
  return cells_[slot(i, j)];
}

TransferScores fwt_bwt(const TransferMatrix& h) {
  const int n = h.size();
  TransferScores out;
  if (n < 2) return out;
  double fwt = 0.0;
  bool fwt_ok = true;
  for (int i = 2; i <= n; ++i) {
    const auto v = h.get(i - 1, i);
    if (!v || std::isnan(*v)) {
      fwt_ok = false;
      break;
    }
    fwt += *v;
  }
  if (fwt_ok) out.fwt = fwt / static_cast<double>(n - 1);

  double bwt = 0.0;
  bool bwt_ok = true;
  for (int i = 1; i <= n - 1; ++i) {
    const auto last = h.get(n, i);
    const auto diag = h.get(i, i);
    if (!last || !diag || std::isnan(*last) || std::isnan(*diag)) {
      bwt_ok = false;
      break;
    }
    bwt += *last - *diag;
  }
  if (bwt_ok) out.bwt = bwt / static_cast<double>(n - 1);
  return out;
}

}  // namespace lkge
