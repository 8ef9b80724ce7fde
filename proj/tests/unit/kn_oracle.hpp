#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace testing {

using Gram = std::vector<std::string>;

// Interpolated Kneser-Ney written directly from the n-gram occurrence list.
struct KneserNeyOracle {
  int order;
  double d;
  std::map<Gram, int> top;            // raw top-order counts
  std::vector<std::set<Gram>> types;  // types[m] = distinct m-grams present at order m
  std::set<std::string> predictable;

  KneserNeyOracle(const std::vector<Gram>& sentences, int n, double discount) : order(n), d(discount) {
    predictable = {"<unk>", "</s>"};
    for (const auto& s : sentences) {
      Gram padded(static_cast<std::size_t>(n - 1), "<s>");
      for (const auto& w : s) {
        padded.push_back(w);
        predictable.insert(w);
      }
      padded.push_back("</s>");
      for (std::size_t i = 0; i + n <= padded.size(); ++i) ++top[Gram(padded.begin() + i, padded.begin() + i + n)];
    }
    types.resize(static_cast<std::size_t>(n + 1));
    for (const auto& [g, c] : top) types[n].insert(g);
    for (int m = n - 1; m >= 1; --m) {
      for (const auto& g : types[m + 1]) types[m].insert(Gram(g.begin() + 1, g.end()));
    }
  }

  // count used at order m: raw at the top, continuation count below
  double count(int m, const Gram& g) const {
    if (m == order) {
      auto it = top.find(g);
      return it == top.end() ? 0.0 : it->second;
    }
    int c = 0;
    for (const auto& t : types[m + 1]) {
      if (Gram(t.begin() + 1, t.end()) == g) ++c;
    }
    return c;
  }

  double p(int m, const Gram& ctx, const std::string& w) const {
    if (m == 0) return 1.0 / static_cast<double>(predictable.size());
    const Gram h(ctx.end() - (m - 1), ctx.end());
    double total = 0;
    int distinct = 0;
    for (const auto& w2 : predictable) {
      Gram g = h;
      g.push_back(w2);
      const double c = count(m, g);
      total += c;
      if (c > 0) ++distinct;
    }
    if (total == 0) return p(m - 1, ctx, w);
    Gram g = h;
    g.push_back(w);
    return std::max(count(m, g) - d, 0.0) / total + d * distinct / total * p(m - 1, ctx, w);
  }
};

}  // namespace testing
