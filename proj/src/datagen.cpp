#include "mtgr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "mtgr/aggregate.hpp"
#include "mtgr/errors.hpp"
#include "mtgr/hash_table.hpp"
#include "mtgr/metrics.hpp"

namespace mtgr {

namespace {

/// splitmix64 stream with the handful of distributions the generator needs.
/// Written out so files are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() { return detail::splitmix64(state_); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [lo, hi].
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool bernoulli(double p) { return uniform() < p; }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  std::size_t categorical(const std::vector<double>& cumulative) {
    const double x = uniform() * cumulative.back();
    return static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin());
  }

 private:
  std::uint64_t state_;
};

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Intercept b with mean(sigmoid(b + z_i)) == target.
double solve_intercept(const std::vector<double>& z, double target) {
  if (z.empty()) return 0.0;
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (double v : z) mean += sigmoid(mid + v);
    mean /= static_cast<double>(z.size());
    (mean < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct ItemInfo {
  std::int64_t category = 0;
  std::vector<double> latent;
};

struct RealtimeEvent {
  std::int64_t ts = 0;
  std::int64_t item = 0;
  bool browsing = true;
};

struct Impression {
  std::size_t truth_index = 0;
  std::int64_t item = 0;
  std::int64_t cross = 0;
};

struct Request {
  std::int64_t ts = 0;
  std::vector<Impression> impressions;
};

struct UserSession {
  std::int64_t user_id = 0;
  bool test = false;
  FeatureMap profile;
  std::vector<InteractionItem> static_seq;
  std::vector<RealtimeEvent> realtime;
  std::vector<Request> requests;
};

InteractionItem as_item(std::int64_t item, std::int64_t category, std::int64_t ts) {
  return {{{"seq_cat", category}, {"seq_item", item}}, ts};
}

/// Bumps ts forward until it is not in used, then claims it.
std::int64_t claim_ts(std::set<std::int64_t>& used, std::int64_t ts) {
  while (used.count(ts)) ++ts;
  used.insert(ts);
  return ts;
}

}  // namespace

void GenConfig::validate() const {
  if (num_users < 1) throw ConfigError("gen.num_users must be >= 1");
  if (num_items < 1 || num_categories < 1 || num_categories > num_items) {
    throw ConfigError("gen: need 1 <= num_categories <= num_items");
  }
  if (latent_dim < 1 || age_buckets < 1 || num_cities < 1 || cross_buckets < 1) {
    throw ConfigError("gen: latent_dim, age_buckets, num_cities and cross_buckets must be >= 1");
  }
  if (min_requests < 1 || max_requests < min_requests) throw ConfigError("gen: need 1 <= min_requests <= max_requests");
  if (min_candidates < 1 || max_candidates < min_candidates) {
    throw ConfigError("gen: need 1 <= min_candidates <= max_candidates");
  }
  if (static_min > static_cap || !(static_alpha > 0)) throw ConfigError("gen: need static_min <= static_cap, alpha > 0");
  if (realtime_cap < 1) throw ConfigError("gen.realtime_cap must be >= 1");
  if (!(click_rate > 0 && click_rate < 1) || !(purchase_rate > 0 && purchase_rate < 1)) {
    throw ConfigError("gen: click_rate and purchase_rate must lie in (0, 1)");
  }
  if (!(test_fraction >= 0 && test_fraction < 1)) throw ConfigError("gen.test_fraction must lie in [0, 1)");
  if (!(follow_probability >= 0 && follow_probability <= 1)) throw ConfigError("gen.follow_probability must lie in [0, 1]");
  if (window_seconds < 1200) throw ConfigError("gen.window_seconds must be >= 1200");
  if (base_ts <= 0) throw ConfigError("gen.base_ts must be positive");
}

nlohmann::json GenConfig::to_json() const {
  return {{"num_users", num_users},
          {"seed", seed},
          {"test_fraction", test_fraction},
          {"num_items", num_items},
          {"num_categories", num_categories},
          {"latent_dim", latent_dim},
          {"age_buckets", age_buckets},
          {"num_cities", num_cities},
          {"cross_buckets", cross_buckets},
          {"min_requests", min_requests},
          {"max_requests", max_requests},
          {"min_candidates", min_candidates},
          {"max_candidates", max_candidates},
          {"static_min", static_min},
          {"static_cap", static_cap},
          {"static_alpha", static_alpha},
          {"realtime_before_max", realtime_before_max},
          {"realtime_between_max", realtime_between_max},
          {"realtime_cap", realtime_cap},
          {"follow_probability", follow_probability},
          {"w_cross", w_cross},
          {"w_seq", w_seq},
          {"w_profile", w_profile},
          {"w_rt", w_rt},
          {"click_rate", click_rate},
          {"purchase_rate", purchase_rate},
          {"window_seconds", window_seconds},
          {"base_ts", base_ts}};
}

double planted_logit(const GenConfig& cfg, double affinity, double seq_share, double profile_effect,
                     double realtime_share) {
  return cfg.w_cross * affinity + cfg.w_seq * seq_share + cfg.w_profile * profile_effect + cfg.w_rt * realtime_share;
}

GeneratedData generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  Rng world(cfg.seed);
  const std::size_t r = cfg.latent_dim;
  const double latent_scale = 1.0 / std::sqrt(static_cast<double>(r));

  std::vector<std::vector<double>> category_latent(cfg.num_categories, std::vector<double>(r));
  for (auto& c : category_latent) {
    for (auto& x : c) x = world.normal();
  }
  std::vector<ItemInfo> items(cfg.num_items + 1);
  std::vector<std::vector<std::int64_t>> items_in(cfg.num_categories + 1);
  for (std::size_t i = 1; i <= cfg.num_items; ++i) {
    // Every category gets at least one item.
    const std::size_t cat = i <= cfg.num_categories ? i : static_cast<std::size_t>(world.range(1, static_cast<std::int64_t>(cfg.num_categories)));
    items[i].category = static_cast<std::int64_t>(cat);
    items[i].latent.resize(r);
    for (std::size_t k = 0; k < r; ++k) items[i].latent[k] = category_latent[cat - 1][k] + 0.7 * world.normal();
    items_in[cat].push_back(static_cast<std::int64_t>(i));
  }
  std::vector<double> age_effect(cfg.age_buckets + 1, 0.0);
  for (std::size_t a = 1; a <= cfg.age_buckets; ++a) age_effect[a] = world.normal();

  const std::int64_t window = cfg.window_seconds;
  const std::int64_t first_window = (cfg.base_ts / window + 1) * window;

  std::vector<ImpressionTruth> truth;
  std::vector<double> raw_affinity;
  std::vector<UserSession> sessions(cfg.num_users);
  for (std::size_t uidx = 0; uidx < cfg.num_users; ++uidx) {
    Rng rng(cfg.seed ^ (0x9E3779B97F4A7C15ULL * (uidx + 1)));
    UserSession& s = sessions[uidx];
    s.user_id = static_cast<std::int64_t>(uidx + 1);
    s.test = rng.uniform() < cfg.test_fraction;

    std::vector<double> u(r);
    for (auto& x : u) x = rng.normal();
    const auto age = std::min<std::int64_t>(static_cast<std::int64_t>(cfg.age_buckets),
                                            1 + static_cast<std::int64_t>(normal_cdf(u[0]) * cfg.age_buckets));
    s.profile = {{"age", age}, {"city", rng.range(1, static_cast<std::int64_t>(cfg.num_cities))},
                 {"gender", u[1] > 0 ? 1 : 2}};

    std::vector<double> pref(cfg.num_categories);
    double acc = 0.0;
    for (std::size_t c = 0; c < cfg.num_categories; ++c) {
      acc += std::exp(1.5 * latent_scale * dot(u, category_latent[c]));
      pref[c] = acc;
    }
    auto preferred_item = [&](Rng& g) {
      const auto& pool = items_in[g.categorical(pref) + 1];
      return pool[static_cast<std::size_t>(g.range(0, static_cast<std::int64_t>(pool.size()) - 1))];
    };

    const std::int64_t window_start = first_window + static_cast<std::int64_t>(uidx) * window;
    const double pareto = static_cast<double>(cfg.static_min) * std::pow(std::max(rng.uniform(), 1e-12), -1.0 / cfg.static_alpha);
    const auto static_len = static_cast<std::size_t>(std::min<double>(static_cast<double>(cfg.static_cap), std::floor(pareto)));
    std::vector<std::size_t> static_cat_count(cfg.num_categories + 1, 0);
    for (std::size_t i = 0; i < static_len; ++i) {
      const auto item = preferred_item(rng);
      s.static_seq.push_back(as_item(item, items[item].category,
                                     window_start - 600 * static_cast<std::int64_t>(static_len - i)));
      ++static_cat_count[static_cast<std::size_t>(items[item].category)];
    }

    const auto session_cat = static_cast<std::int64_t>(rng.categorical(pref) + 1);
    auto browse = [&]() {
      if (rng.bernoulli(0.7)) {
        const auto& pool = items_in[static_cast<std::size_t>(session_cat)];
        return pool[static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(pool.size()) - 1))];
      }
      return preferred_item(rng);
    };

    std::set<std::int64_t> used_ts;
    const auto n_requests = static_cast<std::size_t>(
        rng.range(static_cast<std::int64_t>(cfg.min_requests), static_cast<std::int64_t>(cfg.max_requests)));
    const std::int64_t session_begin = window_start + 900 + rng.range(0, 300);
    const std::int64_t last_allowed = window_start + window - 150;
    std::int64_t ts = session_begin;
    for (std::size_t q = 0; q < n_requests && ts < last_allowed; ++q) {
      s.requests.push_back({ts, {}});
      ts += rng.range(60, std::max<std::int64_t>(61, (last_allowed - session_begin) / static_cast<std::int64_t>(n_requests)));
    }
    for (const auto& req : s.requests) used_ts.insert(req.ts);

    const auto before = rng.range(0, static_cast<std::int64_t>(cfg.realtime_before_max));
    for (std::int64_t i = 0; i < before; ++i) {
      const auto t = claim_ts(used_ts, window_start + 1 + rng.range(0, session_begin - window_start - 2));
      s.realtime.push_back({t, browse(), true});
    }
    for (std::size_t q = 0; q + 1 < s.requests.size(); ++q) {
      const auto between = rng.range(0, static_cast<std::int64_t>(cfg.realtime_between_max));
      const std::int64_t gap = s.requests[q + 1].ts - s.requests[q].ts;
      for (std::int64_t i = 0; i < between && gap > 2; ++i) {
        const auto t = claim_ts(used_ts, s.requests[q].ts + 1 + rng.range(0, gap - 2));
        s.realtime.push_back({t, browse(), true});
      }
    }
    std::sort(s.realtime.begin(), s.realtime.end(), [](const auto& a, const auto& b) { return a.ts < b.ts; });

    for (auto& req : s.requests) {
      std::vector<std::size_t> earlier_cat_count(cfg.num_categories + 1, 0);
      std::size_t earlier = 0;
      for (const auto& ev : s.realtime) {
        if (ev.ts < req.ts) {
          ++earlier_cat_count[static_cast<std::size_t>(items[static_cast<std::size_t>(ev.item)].category)];
          ++earlier;
        }
      }
      const auto k = rng.range(static_cast<std::int64_t>(cfg.min_candidates), static_cast<std::int64_t>(cfg.max_candidates));
      for (std::int64_t c = 0; c < k; ++c) {
        const std::int64_t item =
            rng.bernoulli(0.6) ? preferred_item(rng) : rng.range(1, static_cast<std::int64_t>(cfg.num_items));
        const auto cat = static_cast<std::size_t>(items[static_cast<std::size_t>(item)].category);
        ImpressionTruth t;
        t.user_id = s.user_id;
        t.request_ts = req.ts;
        t.item = item;
        t.test = s.test;
        t.seq_share = static_len ? static_cast<double>(static_cat_count[cat]) / static_cast<double>(static_len) : 0.0;
        t.realtime_share = earlier ? static_cast<double>(earlier_cat_count[cat]) / static_cast<double>(earlier) : 0.0;
        t.profile_effect = age_effect[static_cast<std::size_t>(age)];
        req.impressions.push_back({truth.size(), item, 0});
        truth.push_back(t);
        raw_affinity.push_back(latent_scale * dot(u, items[static_cast<std::size_t>(item)].latent));
      }
    }
  }

  // Standardize affinity, bucket it into the cross id by quantile, then
  // calibrate intercepts and draw labels.
  double mean = 0.0, var = 0.0;
  for (double a : raw_affinity) mean += a;
  mean /= static_cast<double>(std::max<std::size_t>(1, raw_affinity.size()));
  for (double a : raw_affinity) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(std::max<std::size_t>(1, raw_affinity.size()))) + 1e-12;
  std::vector<double> sorted = raw_affinity;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  for (std::size_t b = 1; b < cfg.cross_buckets; ++b) {
    edges.push_back(sorted.empty() ? 0.0 : sorted[b * sorted.size() / cfg.cross_buckets]);
  }
  std::vector<double> offsets(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth[i].affinity = (raw_affinity[i] - mean) / sd;
    offsets[i] = planted_logit(cfg, truth[i].affinity, truth[i].seq_share, truth[i].profile_effect, truth[i].realtime_share);
  }
  const double b0 = solve_intercept(offsets, cfg.click_rate);
  std::vector<double> purchase_offsets(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) purchase_offsets[i] = 0.5 * truth[i].affinity;
  // Calibrate purchase on the click-weighted population so P(purchase | click) hits the target.
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth[i].p_click = sigmoid(b0 + offsets[i]);
  }
  {
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        num += truth[i].p_click * sigmoid(mid + purchase_offsets[i]);
        den += truth[i].p_click;
      }
      (num / std::max(den, 1e-300) < cfg.purchase_rate ? lo : hi) = mid;
    }
    const double c0 = 0.5 * (lo + hi);
    for (std::size_t i = 0; i < truth.size(); ++i) truth[i].p_purchase = sigmoid(c0 + purchase_offsets[i]);
  }

  Rng labels(cfg.seed ^ 0xC0FFEEULL);
  for (auto& s : sessions) {
    std::set<std::int64_t> used_ts;
    for (const auto& ev : s.realtime) used_ts.insert(ev.ts);
    for (const auto& req : s.requests) used_ts.insert(req.ts);
    for (auto& req : s.requests) {
      for (auto& imp : req.impressions) {
        auto& t = truth[imp.truth_index];
        const auto bucket = static_cast<std::int64_t>(std::upper_bound(edges.begin(), edges.end(), raw_affinity[imp.truth_index]) - edges.begin());
        imp.cross = bucket + 1;
        t.click = labels.bernoulli(t.p_click) ? 1 : 0;
        t.purchase = t.click && labels.bernoulli(t.p_purchase) ? 1 : 0;
        if (t.click && labels.bernoulli(cfg.follow_probability)) {
          const auto ts = claim_ts(used_ts, req.ts + labels.range(1, 120));
          s.realtime.push_back({ts, imp.item, false});
        }
      }
    }
    std::sort(s.realtime.begin(), s.realtime.end(), [](const auto& a, const auto& b) { return a.ts < b.ts; });
  }

  // Per-exposure records with the realtime snapshot seen at request time.
  std::vector<EventRecord> train_records, test_records;
  for (const auto& s : sessions) {
    for (const auto& req : s.requests) {
      std::vector<InteractionItem> snapshot;
      for (const auto& ev : s.realtime) {
        if (ev.ts < req.ts) snapshot.push_back(as_item(ev.item, items[static_cast<std::size_t>(ev.item)].category, ev.ts));
      }
      for (const auto& imp : req.impressions) {
        const auto& t = truth[imp.truth_index];
        EventRecord rec;
        rec.user_id = s.user_id;
        rec.profile = s.profile;
        rec.static_seq = s.static_seq;
        rec.realtime_seq = snapshot;
        rec.candidate.features = {{"cat", items[static_cast<std::size_t>(imp.item)].category}, {"item", imp.item}};
        rec.candidate.cross = {{"affinity", imp.cross}};
        rec.candidate.request_ts = req.ts;
        rec.candidate.click = t.click;
        rec.candidate.purchase = t.purchase;
        (s.test ? test_records : train_records).push_back(std::move(rec));
      }
    }
  }

  GeneratedData out;
  AggregationOptions by_window{window, cfg.static_cap, cfg.realtime_cap};
  AggregationOptions by_request{0, cfg.static_cap, cfg.realtime_cap};
  out.train = aggregate_by_user(train_records, by_window).samples;
  out.test = aggregate_by_user(test_records, by_request).samples;
  out.truth = std::move(truth);

  std::vector<ScoredImpression> all, test_only;
  std::size_t clicks = 0, purchases = 0;
  for (const auto& t : out.truth) {
    all.push_back({t.user_id, t.p_click, t.click});
    if (t.test) test_only.push_back({t.user_id, t.p_click, t.click});
    clicks += static_cast<std::size_t>(t.click);
    purchases += static_cast<std::size_t>(t.purchase);
  }
  std::size_t with_future_realtime = 0;
  for (const auto& s : out.train) {
    const auto earliest = std::min_element(s.candidates.begin(), s.candidates.end(), [](const auto& a, const auto& b) {
                            return a.request_ts < b.request_ts;
                          })->request_ts;
    if (!s.realtime_seq.empty() && s.realtime_seq.back().ts > earliest) ++with_future_realtime;
  }
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  const double n = static_cast<double>(std::max<std::size_t>(1, out.truth.size()));
  out.manifest = {
      {"config", cfg.to_json()},
      {"bayes_auc", opt(auc(std::span<const ScoredImpression>(all)))},
      {"bayes_auc_test", opt(auc(std::span<const ScoredImpression>(test_only)))},
      {"bayes_gauc_test", opt(gauc(test_only))},
      {"click_rate", static_cast<double>(clicks) / n},
      {"purchase_given_click", clicks ? static_cast<double>(purchases) / static_cast<double>(clicks) : 0.0},
      {"click_intercept", b0},
      {"impressions", out.truth.size()},
      {"train_samples", out.train.size()},
      {"test_samples", out.test.size()},
      {"train_samples_with_future_realtime", with_future_realtime},
      {"features",
       {{"user_profile", {"age", "city", "gender"}},
        {"sequence_item", {"seq_cat", "seq_item"}},
        {"candidate_item", {"cat", "item"}},
        {"cross", {"affinity"}}}}};
  return out;
}

void write_dataset(const std::filesystem::path& dir, const GeneratedData& data) {
  std::filesystem::create_directories(dir);
  write_jsonl((dir / "train.jsonl").string(), data.train);
  write_jsonl((dir / "test.jsonl").string(), data.test);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
  out << data.manifest.dump(2) << '\n';
}

void shuffle_cross_features(std::vector<AggregatedSample>& samples, std::uint64_t seed) {
  std::vector<std::int64_t*> slots;
  for (auto& s : samples) {
    for (auto& c : s.candidates) {
      for (auto& [name, id] : c.cross) slots.push_back(&id);
    }
  }
  std::vector<std::int64_t> values;
  values.reserve(slots.size());
  for (auto* p : slots) values.push_back(*p);
  Rng rng(seed);
  for (std::size_t i = values.size(); i > 1; --i) {
    std::swap(values[i - 1], values[static_cast<std::size_t>(rng.next() % i)]);
  }
  for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = values[i];
}

}  // namespace mtgr
