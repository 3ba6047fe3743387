#include "mtgr/sample.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mtgr/errors.hpp"

namespace mtgr {

using nlohmann::json;

void validate_sample(const AggregatedSample& sample) {
  const std::string who = "user " + std::to_string(sample.user_id) + ": ";
  if (sample.candidates.empty()) throw DataError(who + "sample has no candidates");
  for (std::size_t i = 1; i < sample.realtime_seq.size(); ++i) {
    if (sample.realtime_seq[i].ts <= sample.realtime_seq[i - 1].ts) {
      throw DataError(who + "realtime sequence is not strictly time-ordered at position " + std::to_string(i));
    }
  }
  for (const auto& c : sample.candidates) {
    if (c.request_ts <= 0) throw DataError(who + "candidate request_ts must be positive");
    if ((c.click != 0 && c.click != 1) || (c.purchase != 0 && c.purchase != 1)) {
      throw DataError(who + "labels must be 0 or 1");
    }
    if (c.purchase == 1 && c.click == 0) throw DataError(who + "purchase without click");
  }
}

void check_against_schema(const AggregatedSample& sample, const FeatureSchema& schema) {
  auto check = [&](const FeatureMap& values, FeatureGroup expected, const char* where) {
    for (const auto& [name, id] : values) {
      const auto& spec = schema.spec(name);
      if (spec.group != expected) {
        throw SchemaError("feature '" + name + "' used in " + where + " but belongs to group " + to_string(spec.group));
      }
    }
  };
  check(sample.profile, FeatureGroup::UserProfile, "profile");
  for (const auto& item : sample.static_seq) check(item.features, FeatureGroup::SequenceItem, "static_seq");
  for (const auto& item : sample.realtime_seq) check(item.features, FeatureGroup::SequenceItem, "realtime_seq");
  for (const auto& c : sample.candidates) {
    check(c.features, FeatureGroup::CandidateItem, "candidate features");
    check(c.cross, FeatureGroup::Cross, "candidate cross");
  }
}

namespace {

bool has_exact_keys(const json& obj, std::initializer_list<const char*> keys) {
  if (!obj.is_object() || obj.size() != keys.size()) return false;
  for (const char* k : keys) {
    if (!obj.contains(k)) return false;
  }
  return true;
}

std::string check_id_map(const json& obj, const std::string& path) {
  if (!obj.is_object()) return path + " must be an object";
  for (const auto& [k, v] : obj.items()) {
    if (!v.is_number_integer()) return path + "." + k + " must be an integer id";
    if (v.get<std::int64_t>() < 0) return path + "." + k + " must be non-negative";
  }
  return {};
}

std::string check_items(const json& arr, const std::string& path) {
  if (!arr.is_array()) return path + " must be an array";
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!has_exact_keys(arr[i], {"features", "ts"})) return p + " must have exactly {features, ts}";
    if (auto err = check_id_map(arr[i]["features"], p + ".features"); !err.empty()) return err;
    if (!arr[i]["ts"].is_number_integer() || arr[i]["ts"].get<std::int64_t>() < 0) {
      return p + ".ts must be a non-negative integer";
    }
  }
  return {};
}

bool is_label(const json& v) {
  return v.is_number_integer() && (v.get<std::int64_t>() == 0 || v.get<std::int64_t>() == 1);
}

FeatureMap map_from_json(const json& obj) {
  FeatureMap m;
  for (const auto& [k, v] : obj.items()) m.emplace(k, v.get<std::int64_t>());
  return m;
}

std::vector<InteractionItem> items_from_json(const json& arr) {
  std::vector<InteractionItem> items;
  items.reserve(arr.size());
  for (const auto& e : arr) items.push_back({map_from_json(e["features"]), e["ts"].get<std::int64_t>()});
  return items;
}

json items_to_json(const std::vector<InteractionItem>& items) {
  json arr = json::array();
  for (const auto& item : items) arr.push_back({{"features", item.features}, {"ts", item.ts}});
  return arr;
}

}  // namespace

std::string validate_record(const json& record) {
  if (!has_exact_keys(record, {"user_id", "profile", "static_seq", "realtime_seq", "candidates"})) {
    return "record must have exactly {user_id, profile, static_seq, realtime_seq, candidates}";
  }
  if (!record["user_id"].is_number_integer()) return "user_id must be an integer";
  if (auto err = check_id_map(record["profile"], "profile"); !err.empty()) return err;
  if (auto err = check_items(record["static_seq"], "static_seq"); !err.empty()) return err;
  if (auto err = check_items(record["realtime_seq"], "realtime_seq"); !err.empty()) return err;
  const json& cands = record["candidates"];
  if (!cands.is_array() || cands.empty()) return "candidates must be a non-empty array";
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const std::string p = "candidates[" + std::to_string(i) + "]";
    const json& c = cands[i];
    if (!has_exact_keys(c, {"features", "cross", "request_ts", "click", "purchase"})) {
      return p + " must have exactly {features, cross, request_ts, click, purchase}";
    }
    if (auto err = check_id_map(c["features"], p + ".features"); !err.empty()) return err;
    if (auto err = check_id_map(c["cross"], p + ".cross"); !err.empty()) return err;
    if (!c["request_ts"].is_number_integer() || c["request_ts"].get<std::int64_t>() <= 0) {
      return p + ".request_ts must be a positive integer";
    }
    if (!is_label(c["click"]) || !is_label(c["purchase"])) return p + " labels must be 0 or 1";
  }
  return {};
}

json to_json(const AggregatedSample& sample) {
  json cands = json::array();
  for (const auto& c : sample.candidates) {
    cands.push_back({{"features", c.features},
                     {"cross", c.cross},
                     {"request_ts", c.request_ts},
                     {"click", c.click},
                     {"purchase", c.purchase}});
  }
  return {{"user_id", sample.user_id},
          {"profile", sample.profile},
          {"static_seq", items_to_json(sample.static_seq)},
          {"realtime_seq", items_to_json(sample.realtime_seq)},
          {"candidates", std::move(cands)}};
}

AggregatedSample sample_from_json(const json& record) {
  if (auto err = validate_record(record); !err.empty()) throw DataError(err);
  AggregatedSample s;
  s.user_id = record["user_id"].get<std::int64_t>();
  s.profile = map_from_json(record["profile"]);
  s.static_seq = items_from_json(record["static_seq"]);
  s.realtime_seq = items_from_json(record["realtime_seq"]);
  for (const auto& c : record["candidates"]) {
    Candidate cand;
    cand.features = map_from_json(c["features"]);
    cand.cross = map_from_json(c["cross"]);
    cand.request_ts = c["request_ts"].get<std::int64_t>();
    cand.click = c["click"].get<int>();
    cand.purchase = c["purchase"].get<int>();
    s.candidates.push_back(std::move(cand));
  }
  validate_sample(s);
  return s;
}

std::vector<AggregatedSample> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  std::vector<AggregatedSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      samples.push_back(sample_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return samples;
}

void write_jsonl(std::ostream& out, const std::vector<AggregatedSample>& samples) {
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

void write_jsonl(const std::string& path, const std::vector<AggregatedSample>& samples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_jsonl(out, samples);
}

FeatureSchema infer_schema(const std::vector<AggregatedSample>& samples, int d_model) {
  std::set<std::string> profile, seq, item, cross;
  for (const auto& s : samples) {
    for (const auto& [k, v] : s.profile) profile.insert(k);
    for (const auto& it : s.static_seq) for (const auto& [k, v] : it.features) seq.insert(k);
    for (const auto& it : s.realtime_seq) for (const auto& [k, v] : it.features) seq.insert(k);
    for (const auto& c : s.candidates) {
      for (const auto& [k, v] : c.features) item.insert(k);
      for (const auto& [k, v] : c.cross) cross.insert(k);
    }
  }
  auto vec = [](const std::set<std::string>& s) { return std::vector<std::string>(s.begin(), s.end()); };
  return FeatureSchema::make(vec(profile), vec(seq), vec(item), vec(cross), d_model);
}

}  // namespace mtgr
