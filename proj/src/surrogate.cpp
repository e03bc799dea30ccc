#include "rapi/surrogate.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <unordered_set>

#include "text.hpp"

namespace rapi {

void RecListSet::validate() const {
  for (const auto& [user, list] : lists) {
    if (list.size() != k) {
      throw Error("list of user " + std::to_string(user) + " has " + std::to_string(list.size()) +
                  " items, expected " + std::to_string(k));
    }
    std::vector<ItemIndex> sorted = list;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw Error("list of user " + std::to_string(user) + " repeats an item");
    }
  }
}

const RecList& RecListSet::at(UserIndex user) const {
  auto it = lists.find(user);
  if (it == lists.end()) throw Error("no recommendation list for user " + std::to_string(user));
  return it->second;
}

RecListSet recommend_all(const RecommenderModel& model, std::span<const UserIndex> users,
                         std::size_t k, const std::vector<std::vector<ItemIndex>>& history) {
  RecListSet out;
  out.k = k;
  for (UserIndex u : users) {
    std::span<const ItemIndex> exclude;
    if (static_cast<std::size_t>(u) < history.size()) exclude = history[u];
    out.lists[u] = model.recommend_topk(u, k, exclude);
  }
  return out;
}

double compute_rls(const RecListSet& original, const RecListSet& candidate,
                   std::span<const UserIndex> users) {
  if (original.k != candidate.k) {
    throw Error("compute_rls: list lengths differ (" + std::to_string(original.k) + " vs " +
                std::to_string(candidate.k) + ")");
  }
  if (users.empty()) return 0.0;
  double total = 0.0;
  for (UserIndex u : users) {
    auto a = original.lists.find(u);
    auto b = candidate.lists.find(u);
    if (a == original.lists.end() || b == candidate.lists.end()) {
      throw Error("compute_rls: user " + std::to_string(u) + " missing from a list set");
    }
    if (a->second.empty()) throw Error("compute_rls: empty list for user " + std::to_string(u));
    std::vector<ItemIndex> x = a->second, y = b->second;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    std::vector<ItemIndex> common;
    std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(common));
    total += static_cast<double>(common.size()) / static_cast<double>(a->second.size());
  }
  return total / static_cast<double>(users.size());
}

SurrogateOutcome confirm_surrogate(const Dataset& dataset, const Split& provider_split,
                                   std::span<const UserIndex> providers,
                                   const std::vector<CandidateSpec>& candidates,
                                   const RecListSet& original) {
  if (candidates.empty()) throw Error("confirm_surrogate: no candidate models");
  SurrogateOutcome out;
  out.report.k = original.k;
  if (providers.empty()) {
    out.report.skipped = true;
    return out;
  }
  const auto history = user_histories(dataset, provider_split.train);
  std::optional<std::size_t> best;
  std::vector<std::optional<RecommenderModel>> models(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    CandidateResult r;
    r.kind = candidates[c].kind;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      models[c] = train_recommender(dataset, provider_split, candidates[c].cfg, r.kind);
      RecListSet lists = recommend_all(*models[c], providers, original.k, history);
      r.rls = compute_rls(original, lists, providers);
    } catch (const Error& e) {
      r.failed = true;
      r.error = e.what();
      models[c].reset();
    }
    r.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.report.candidates.push_back(r);
    if (r.failed) continue;
    if (!best) {
      best = c;
      continue;
    }
    const auto& incumbent = out.report.candidates[*best];
    if (r.rls > incumbent.rls ||
        (r.rls == incumbent.rls && static_cast<int>(r.kind) < static_cast<int>(incumbent.kind))) {
      best = c;
    }
  }
  if (!best) {
    std::string why;
    for (const auto& r : out.report.candidates) why += " [" + to_string(r.kind) + ": " + r.error + "]";
    throw Error("confirm_surrogate: every candidate failed to train:" + why);
  }
  out.report.chosen = candidates[*best].kind;
  out.model = std::move(models[*best]);
  return out;
}

void write_surrogate_report(const std::string& path, const SurrogateReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "kind\trls\tchosen\n";
  if (report.skipped) {
    out << "none\tNA\t0\tskipped: no interaction providers\n";
    return;
  }
  for (const auto& c : report.candidates) {
    out << to_string(c.kind) << '\t' << (c.failed ? std::string("NA") : detail::format_double(c.rls))
        << '\t' << (!c.failed && c.kind == report.chosen ? 1 : 0);
    if (c.failed) out << '\t' << c.error;
    out << '\n';
  }
}

void write_reclists(const std::string& path, const RecListSet& lists, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& [user, list] : lists.lists) {
    for (std::size_t r = 0; r < list.size(); ++r) {
      out << dataset.user_ids().at(user) << '\t' << (r + 1) << '\t' << dataset.item_ids().at(list[r])
          << '\n';
    }
  }
}

RecListSet read_reclists(const std::string& path, const Dataset& dataset) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::map<UserIndex, std::vector<std::pair<long, ItemIndex>>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto f = detail::split_on(line, "\t");
    if (detail::trim(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (f.size() < 3) throw Error(where + ": expected user, rank, item");
    auto user = dataset.find_user(std::string(f[0]));
    auto item = dataset.find_item(std::string(f[2]));
    auto rank = detail::parse_number<long>(f[1]);
    if (!user || !item || !rank) throw Error(where + ": unknown user/item or bad rank");
    rows[*user].emplace_back(*rank, *item);
  }
  RecListSet out;
  for (auto& [user, entries] : rows) {
    std::sort(entries.begin(), entries.end());
    RecList list;
    for (auto& e : entries) list.push_back(e.second);
    if (out.lists.empty()) out.k = list.size();
    out.lists[user] = std::move(list);
  }
  out.validate();
  return out;
}

}  // namespace rapi
