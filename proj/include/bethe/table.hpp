#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"

namespace bethe {

// Dense table over a sorted list of variables, row-major (first variable slowest).
template <class T>
struct Table {
  std::vector<int> vars;
  std::vector<int> card;
  std::vector<T> data;

  std::size_t size() const { return data.size(); }
};

struct EliminationOptions {
  std::size_t max_entries = std::size_t(1) << 26;
  std::vector<int> order;  // explicit order; empty means greedy min-fill
};

struct EliminationStats {
  std::vector<int> order;
  std::size_t largest_entries = 0;
  int largest_var = -1;
};

// Greedy min-fill over the interaction graph; ties go to the lowest variable id.
inline std::vector<int> min_fill_order(int num_vars, const std::vector<std::vector<int>>& scopes) {
  std::vector<std::set<int>> adj(num_vars);
  std::vector<bool> used(num_vars, false);
  for (const auto& s : scopes) {
    for (int a : s) {
      used[a] = true;
      for (int b : s)
        if (a != b) adj[a].insert(b);
    }
  }
  std::vector<int> order;
  std::vector<bool> done(num_vars, false);
  for (int v = 0; v < num_vars; ++v)
    if (!used[v]) done[v] = true;
  for (;;) {
    int best = -1;
    long best_fill = 0;
    std::size_t best_deg = 0;
    for (int v = 0; v < num_vars; ++v) {
      if (done[v]) continue;
      long fill = 0;
      std::vector<int> nb(adj[v].begin(), adj[v].end());
      for (std::size_t a = 0; a < nb.size(); ++a)
        for (std::size_t b = a + 1; b < nb.size(); ++b)
          if (!adj[nb[a]].count(nb[b])) ++fill;
      if (best < 0 || fill < best_fill || (fill == best_fill && nb.size() < best_deg)) {
        best = v;
        best_fill = fill;
        best_deg = nb.size();
      }
    }
    if (best < 0) break;
    std::vector<int> nb(adj[best].begin(), adj[best].end());
    for (int a : nb) {
      adj[a].erase(best);
      for (int b : nb)
        if (a != b) adj[a].insert(b);
    }
    adj[best].clear();
    done[best] = true;
    order.push_back(best);
  }
  return order;
}

// Product of the given tables with variable v summed out (v < 0: no summation).
template <class T>
Table<T> multiply_sum_out(const std::vector<const Table<T>*>& ts, int v, const std::vector<int>& var_card,
                          std::size_t max_entries) {
  std::vector<int> uni;
  for (const auto* t : ts) uni.insert(uni.end(), t->vars.begin(), t->vars.end());
  std::sort(uni.begin(), uni.end());
  uni.erase(std::unique(uni.begin(), uni.end()), uni.end());

  Table<T> out;
  for (int u : uni)
    if (u != v) {
      out.vars.push_back(u);
      out.card.push_back(var_card[u]);
    }
  std::size_t out_size = 1;
  for (int c : out.card) {
    out_size *= static_cast<std::size_t>(c);
    if (out_size > max_entries) break;
  }
  if (out_size > max_entries) {
    std::ostringstream os;
    os << "elimination intermediate over " << out.vars.size() << " variables exceeds budget of " << max_entries
       << " entries (eliminating variable " << v << ")";
    throw resource_error(os.str());
  }
  out.data.assign(out_size, T(0));

  const std::size_t k = uni.size();
  std::vector<int> radix(k);
  for (std::size_t p = 0; p < k; ++p) radix[p] = var_card[uni[p]];

  // strides[t][p]: stride of union position p inside table t (0 if absent)
  const std::size_t nt = ts.size();
  std::vector<std::vector<std::size_t>> strides(nt + 1, std::vector<std::size_t>(k, 0));
  auto fill_strides = [&](const std::vector<int>& vars, const std::vector<int>& card, std::vector<std::size_t>& st) {
    std::size_t s = 1;
    for (int q = static_cast<int>(vars.size()) - 1; q >= 0; --q) {
      auto pos = std::lower_bound(uni.begin(), uni.end(), vars[q]) - uni.begin();
      st[pos] = s;
      s *= static_cast<std::size_t>(card[q]);
    }
  };
  for (std::size_t t = 0; t < nt; ++t) fill_strides(ts[t]->vars, ts[t]->card, strides[t]);
  fill_strides(out.vars, out.card, strides[nt]);

  std::vector<std::size_t> off(nt + 1, 0);
  std::vector<int> digit(k, 0);
  for (;;) {
    T prod = ts.empty() ? T(1) : ts[0]->data[off[0]];
    for (std::size_t t = 1; t < nt && prod != T(0); ++t) prod *= ts[t]->data[off[t]];
    out.data[off[nt]] += prod;
    int p = static_cast<int>(k) - 1;
    for (; p >= 0; --p) {
      if (++digit[p] < radix[p]) {
        for (std::size_t t = 0; t <= nt; ++t) off[t] += strides[t][p];
        break;
      }
      for (std::size_t t = 0; t <= nt; ++t) off[t] -= strides[t][p] * static_cast<std::size_t>(radix[p] - 1);
      digit[p] = 0;
    }
    if (p < 0) break;
  }
  return out;
}

// Sum over all variables of the product of all tables, by variable elimination.
template <class T>
T contract_all(std::vector<Table<T>> tables, const std::vector<int>& var_card, const EliminationOptions& opt = {},
               EliminationStats* stats = nullptr) {
  const int nv = static_cast<int>(var_card.size());
  std::vector<std::vector<int>> scopes;
  for (const auto& t : tables) scopes.push_back(t.vars);
  std::vector<int> order = opt.order.empty() ? min_fill_order(nv, scopes) : opt.order;

  std::vector<bool> seen(nv, false);
  for (const auto& s : scopes)
    for (int v : s) seen[v] = true;
  T scale(1);
  for (int v = 0; v < nv; ++v)
    if (!seen[v]) scale *= T(static_cast<double>(var_card[v]));

  std::vector<bool> alive(tables.size(), true);
  EliminationStats st;
  st.order = order;
  for (int v : order) {
    if (!seen[v]) continue;
    std::vector<const Table<T>*> group;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < tables.size(); ++i) {
      if (!alive[i]) continue;
      if (std::binary_search(tables[i].vars.begin(), tables[i].vars.end(), v)) {
        group.push_back(&tables[i]);
        idx.push_back(i);
      }
    }
    if (group.empty()) continue;
    Table<T> r = multiply_sum_out(group, v, var_card, opt.max_entries);
    if (r.size() > st.largest_entries) {
      st.largest_entries = r.size();
      st.largest_var = v;
    }
    for (std::size_t i : idx) {
      alive[i] = false;
      tables[i] = Table<T>{};
    }
    tables.push_back(std::move(r));
    alive.push_back(true);
  }
  T z = scale;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (!alive[i]) continue;
    if (!tables[i].vars.empty()) throw numerical_error("elimination order did not cover every variable");
    z *= tables[i].data[0];
  }
  if (stats) *stats = st;
  return z;
}

}  // namespace bethe
