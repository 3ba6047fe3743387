#include "mtgr/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "mtgr/errors.hpp"

namespace mtgr {

namespace {

bool is_key_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

[[noreturn]] void fail(const std::string& source, int line, std::size_t col, const std::string& what) {
  throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col + 1) + ": " + what);
}

/// Parses the value starting at `pos`; returns it and leaves pos after it
/// (and after any trailing whitespace or comment).
std::string parse_value(std::string_view text, std::size_t& pos, const std::string& source, int line) {
  while (pos < text.size() && is_space(text[pos])) ++pos;
  if (pos >= text.size() || text[pos] == '#') fail(source, line, pos, "missing value");
  std::string value;
  if (text[pos] == '"') {
    const std::size_t open = pos++;
    bool closed = false;
    while (pos < text.size()) {
      const char c = text[pos++];
      if (c == '"') {
        closed = true;
        break;
      }
      if (c == '\\') {
        if (pos >= text.size()) break;
        const char e = text[pos++];
        switch (e) {
          case 'n': value += '\n'; break;
          case 't': value += '\t'; break;
          case '"': value += '"'; break;
          case '\\': value += '\\'; break;
          default: fail(source, line, pos - 1, std::string("unknown escape '\\") + e + "'");
        }
      } else {
        value += c;
      }
    }
    if (!closed) fail(source, line, open, "unterminated string");
    while (pos < text.size() && is_space(text[pos])) ++pos;
    if (pos < text.size() && text[pos] != '#') fail(source, line, pos, "unexpected text after value");
  } else {
    const std::size_t start = pos;
    while (pos < text.size() && text[pos] != '#') ++pos;
    std::size_t end = pos;
    while (end > start && is_space(text[end - 1])) --end;
    value = std::string(text.substr(start, end - start));
    if (value.find('"') != std::string::npos) fail(source, line, start + value.find('"'), "stray quote in bare value");
  }
  pos = text.size();
  return value;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t to_uint(const ConfigEntry& e) {
  std::uint64_t v = 0;
  const auto* end = e.value.data() + e.value.size();
  auto [ptr, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(e.where() + ": " + e.key + " expects a non-negative integer, got '" + e.value + "'");
  return v;
}

std::int64_t to_int(const ConfigEntry& e) {
  std::int64_t v = 0;
  const auto* end = e.value.data() + e.value.size();
  auto [ptr, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(e.where() + ": " + e.key + " expects an integer, got '" + e.value + "'");
  return v;
}

double to_double(const ConfigEntry& e) {
  double v = 0;
  const auto* end = e.value.data() + e.value.size();
  auto [ptr, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError(e.where() + ": " + e.key + " expects a finite number, got '" + e.value + "'");
  }
  return v;
}

bool to_bool(const ConfigEntry& e) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  throw ConfigError(e.where() + ": " + e.key + " expects true or false, got '" + e.value + "'");
}

std::vector<std::string> to_list(const ConfigEntry& e) {
  std::vector<std::string> out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto en = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError(e.where() + ": empty name in list for " + e.key);
    out.push_back(item.substr(b, en - b + 1));
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

struct Field {
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, const ConfigEntry&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MTGR_UINT(key, member, doc)                                                     \
  Field{key, doc, [](RunConfig& c, const ConfigEntry& e) { c.member = static_cast<decltype(c.member)>(to_uint(e)); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define MTGR_INT(key, member, doc)                                                      \
  Field{key, doc, [](RunConfig& c, const ConfigEntry& e) { c.member = static_cast<decltype(c.member)>(to_int(e)); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define MTGR_DOUBLE(key, member, doc)                                                   \
  Field{key, doc, [](RunConfig& c, const ConfigEntry& e) { c.member = to_double(e); }, \
        [](const RunConfig& c) { return fmt_double(c.member); }}
#define MTGR_BOOL(key, member, doc)                                                   \
  Field{key, doc, [](RunConfig& c, const ConfigEntry& e) { c.member = to_bool(e); }, \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}
#define MTGR_STRING(key, member, doc)                                                \
  Field{key, doc, [](RunConfig& c, const ConfigEntry& e) { c.member = e.value; }, \
        [](const RunConfig& c) { return quote(c.member); }}
#define MTGR_LIST(key, member, doc)                                                     \
  Field{key, doc, [](RunConfig& c, const ConfigEntry& e) { c.member = to_list(e); }, \
        [](const RunConfig& c) { return quote(join(c.member)); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      MTGR_STRING("data.dir", data_dir, "dataset directory (gen-data output, train/eval input)"),
      MTGR_STRING("data.train", train_path, "training JSONL; empty means <data.dir>/train.jsonl"),
      MTGR_STRING("data.test", test_path, "evaluation JSONL; empty means <data.dir>/test.jsonl"),
      MTGR_BOOL("data.shuffle_cross", shuffle_cross, "permute cross-feature ids across candidates (ablation)"),
      MTGR_STRING("run.dir", run_dir, "training output directory (metrics.jsonl, checkpoint/)"),
      MTGR_STRING("eval.checkpoint", checkpoint, "checkpoint to evaluate; empty means <run.dir>/checkpoint"),
      MTGR_STRING("eval.report", report, "report path; empty means <run.dir>/eval.json"),
      Field{"eval.gauc_weighting", "unweighted | impressions",
            [](RunConfig& c, const ConfigEntry& e) {
              if (e.value == "unweighted") c.train.gauc_weighting = GaucWeighting::Unweighted;
              else if (e.value == "impressions") c.train.gauc_weighting = GaucWeighting::Impressions;
              else throw ConfigError(e.where() + ": eval.gauc_weighting expects unweighted or impressions");
            },
            [](const RunConfig& c) {
              return quote(c.train.gauc_weighting == GaucWeighting::Unweighted ? "unweighted" : "impressions");
            }},

      MTGR_UINT("gen.num_users", gen.num_users, "users to simulate"),
      MTGR_UINT("gen.seed", gen.seed, "generator seed"),
      MTGR_DOUBLE("gen.test_fraction", gen.test_fraction, "share of users held out for test"),
      MTGR_UINT("gen.num_items", gen.num_items, "item vocabulary"),
      MTGR_UINT("gen.num_categories", gen.num_categories, "category vocabulary"),
      MTGR_UINT("gen.latent_dim", gen.latent_dim, "latent factor width"),
      MTGR_UINT("gen.age_buckets", gen.age_buckets, "age profile buckets"),
      MTGR_UINT("gen.num_cities", gen.num_cities, "city profile values (carry no signal)"),
      MTGR_UINT("gen.cross_buckets", gen.cross_buckets, "quantile buckets of the affinity cross feature"),
      MTGR_UINT("gen.min_requests", gen.min_requests, "requests per user session, lower bound"),
      MTGR_UINT("gen.max_requests", gen.max_requests, "requests per user session, upper bound"),
      MTGR_UINT("gen.min_candidates", gen.min_candidates, "candidates per request, lower bound"),
      MTGR_UINT("gen.max_candidates", gen.max_candidates, "candidates per request, upper bound"),
      MTGR_UINT("gen.static_min", gen.static_min, "Pareto minimum of the long-term sequence length"),
      MTGR_UINT("gen.static_cap", gen.static_cap, "long-term sequence cap"),
      MTGR_DOUBLE("gen.static_alpha", gen.static_alpha, "Pareto tail index"),
      MTGR_UINT("gen.realtime_before_max", gen.realtime_before_max, "browsed items before the first request"),
      MTGR_UINT("gen.realtime_between_max", gen.realtime_between_max, "browsed items between requests"),
      MTGR_UINT("gen.realtime_cap", gen.realtime_cap, "realtime sequence cap"),
      MTGR_DOUBLE("gen.follow_probability", gen.follow_probability, "chance a click leaves a later realtime item"),
      MTGR_DOUBLE("gen.w_cross", gen.w_cross, "logit weight of the user-item affinity"),
      MTGR_DOUBLE("gen.w_seq", gen.w_seq, "logit weight of the long-term category share"),
      MTGR_DOUBLE("gen.w_profile", gen.w_profile, "logit weight of the profile offset"),
      MTGR_DOUBLE("gen.w_rt", gen.w_rt, "logit weight of the earlier-realtime category share"),
      MTGR_DOUBLE("gen.click_rate", gen.click_rate, "target click rate"),
      MTGR_DOUBLE("gen.purchase_rate", gen.purchase_rate, "target purchase rate among clicks"),
      MTGR_INT("gen.window_seconds", gen.window_seconds, "aggregation window"),
      MTGR_INT("gen.base_ts", gen.base_ts, "earliest timestamp"),

      MTGR_INT("model.n_layer", model.hstu.n_layer, "encoder layers"),
      MTGR_INT("model.d_model", model.hstu.d_model, "token width"),
      MTGR_INT("model.n_heads", model.hstu.n_heads, "attention heads (must divide d_model)"),
      MTGR_DOUBLE("model.eps", model.hstu.eps, "layer norm epsilon"),
      Field{"model.normalizer", "total_length | fixed",
            [](RunConfig& c, const ConfigEntry& e) {
              if (e.value == "total_length") c.model.hstu.normalizer = NormalizerMode::TotalLength;
              else if (e.value == "fixed") c.model.hstu.normalizer = NormalizerMode::Fixed;
              else throw ConfigError(e.where() + ": model.normalizer expects total_length or fixed");
            },
            [](const RunConfig& c) {
              return quote(c.model.hstu.normalizer == NormalizerMode::TotalLength ? "total_length" : "fixed");
            }},
      MTGR_DOUBLE("model.fixed_normalizer", model.hstu.fixed_normalizer, "score divisor when normalizer = fixed"),
      MTGR_BOOL("model.gln", model.hstu.use_gln, "per-group layer norm (false: one shared norm)"),
      Field{"model.mask_mode", "dynamic | causal | full",
            [](RunConfig& c, const ConfigEntry& e) {
              try {
                c.model.hstu.mask_mode = parse_mask_mode(e.value);
              } catch (const ConfigError& err) {
                throw ConfigError(e.where() + ": " + err.what());
              }
            },
            [](const RunConfig& c) { return quote(to_string(c.model.hstu.mask_mode)); }},
      MTGR_UINT("model.seed", model.seed, "dense parameter init seed"),

      MTGR_UINT("embedding.num_shards", model.num_shards, "simulated embedding shards"),
      MTGR_BOOL("embedding.merge_tables", model.merge_tables, "merge tables with equal dim and settings"),
      MTGR_UINT("embedding.initial_capacity", model.table.initial_capacity, "initial key slots per table (power of two)"),
      MTGR_UINT("embedding.max_rows", model.table.max_rows, "row limit per table, 0 = unbounded"),
      MTGR_BOOL("embedding.eviction", model.table.eviction, "evict least used rows when full"),
      MTGR_DOUBLE("embedding.max_load_factor", model.table.max_load_factor, "key index load that triggers growth"),
      MTGR_BOOL("embedding.auto_expand", model.table.auto_expand, "grow the key index automatically"),
      MTGR_UINT("embedding.seed", model.table.seed, "row init seed"),
      MTGR_DOUBLE("embedding.init_scale", model.table.init_scale, "init half-width, <= 0 means 1/sqrt(dim)"),

      MTGR_DOUBLE("train.learning_rate", train.adam.learning_rate, "Adam step size"),
      MTGR_DOUBLE("train.beta1", train.adam.beta1, "Adam beta1"),
      MTGR_DOUBLE("train.beta2", train.adam.beta2, "Adam beta2"),
      MTGR_DOUBLE("train.adam_eps", train.adam.eps, "Adam epsilon"),
      MTGR_UINT("train.num_workers", train.num_workers, "simulated data-parallel workers"),
      MTGR_UINT("train.token_budget", train.token_budget, "tokens per worker-step, 0 = whole step"),
      MTGR_UINT("train.batch_size", train.batch_size, "samples per global step"),
      MTGR_UINT("train.seed", train.seed, "data order seed"),
      MTGR_UINT("train.max_steps", train.max_steps, "optimizer steps"),
      MTGR_UINT("train.eval_every", train.eval_every, "evaluate on the test split every n steps, 0 = never"),
      MTGR_BOOL("train.threaded", train.threaded, "run workers on threads (same results)"),
      MTGR_DOUBLE("train.grad_clip", train.grad_clip, "global gradient norm clip, 0 = off"),
      Field{"train.loss_weighting", "sample | token",
            [](RunConfig& c, const ConfigEntry& e) {
              if (e.value == "sample") c.train.weighting = LossWeighting::Sample;
              else if (e.value == "token") c.train.weighting = LossWeighting::Token;
              else throw ConfigError(e.where() + ": train.loss_weighting expects sample or token");
            },
            [](const RunConfig& c) { return quote(c.train.weighting == LossWeighting::Sample ? "sample" : "token"); }},

      MTGR_LIST("schema.user_profile", schema_profile, "profile feature names, empty = infer"),
      MTGR_LIST("schema.sequence_item", schema_sequence, "sequence item feature names, empty = infer"),
      MTGR_LIST("schema.candidate_item", schema_candidate, "candidate item feature names, empty = infer"),
      MTGR_LIST("schema.cross", schema_cross, "cross feature names, empty = infer"),

      MTGR_STRING("mask.source", mask_source, "inspect-mask input: interleaved or a JSONL path"),
      MTGR_UINT("mask.index", mask_index, "inspect-mask sample index in the JSONL"),
      MTGR_STRING("mask.out", mask_out, "inspect-mask output file"),

      MTGR_UINT("flops.n_profile", flops.n_profile, "bench-flops profile tokens"),
      MTGR_UINT("flops.static_len", flops.static_len, "bench-flops long-term sequence length"),
      MTGR_UINT("flops.realtime_len", flops.realtime_len, "bench-flops realtime sequence length"),
      MTGR_UINT("flops.candidates", flops.candidates, "bench-flops candidates per request"),
  };
  return table;
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text, const std::string& source) {
  ConfigFile out;
  std::string section;
  int line_no = 0;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(begin, end - begin);
    ++line_no;
    std::size_t pos = 0;
    while (pos < line.size() && is_space(line[pos])) ++pos;
    if (pos < line.size() && line[pos] != '#') {
      if (line[pos] == '[') {
        const std::size_t open = pos++;
        const std::size_t name_start = pos;
        while (pos < line.size() && is_key_char(line[pos])) ++pos;
        if (pos >= line.size() || line[pos] != ']') fail(source, line_no, pos, "expected ']' to close section");
        if (pos == name_start) fail(source, line_no, open, "empty section name");
        section = std::string(line.substr(name_start, pos - name_start));
        ++pos;
        while (pos < line.size() && is_space(line[pos])) ++pos;
        if (pos < line.size() && line[pos] != '#') fail(source, line_no, pos, "unexpected text after section header");
      } else {
        const std::size_t key_start = pos;
        while (pos < line.size() && is_key_char(line[pos])) ++pos;
        if (pos == key_start) fail(source, line_no, pos, "expected a key");
        ConfigEntry e;
        e.key = (section.empty() ? "" : section + ".") + std::string(line.substr(key_start, pos - key_start));
        e.source = source;
        e.line = line_no;
        e.column = static_cast<int>(key_start) + 1;
        while (pos < line.size() && is_space(line[pos])) ++pos;
        if (pos >= line.size() || line[pos] != '=') fail(source, line_no, pos, "expected '=' after key '" + e.key + "'");
        ++pos;
        e.value = parse_value(line, pos, source, line_no);
        out.entries_.push_back(std::move(e));
      }
    }
    if (end == text.size()) break;
    begin = end + 1;
  }
  return out;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void ConfigFile::add_override(std::string_view assignment) {
  const std::string source = "override '" + std::string(assignment) + "'";
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) fail(source, 1, 0, "expected key=value");
  std::size_t k0 = 0, k1 = eq;
  while (k0 < k1 && is_space(assignment[k0])) ++k0;
  while (k1 > k0 && is_space(assignment[k1 - 1])) --k1;
  if (k0 == k1) fail(source, 1, 0, "expected a key");
  for (std::size_t i = k0; i < k1; ++i) {
    if (!is_key_char(assignment[i])) fail(source, 1, i, "invalid character in key");
  }
  ConfigEntry e;
  e.key = std::string(assignment.substr(k0, k1 - k0));
  e.source = source;
  e.line = 1;
  e.column = static_cast<int>(k0) + 1;
  std::size_t pos = eq + 1;
  e.value = parse_value(assignment, pos, source, 1);
  entries_.push_back(std::move(e));
}

std::string RunConfig::resolved_train_path() const {
  return train_path.empty() ? (std::filesystem::path(data_dir) / "train.jsonl").string() : train_path;
}

std::string RunConfig::resolved_test_path() const {
  return test_path.empty() ? (std::filesystem::path(data_dir) / "test.jsonl").string() : test_path;
}

RunConfig build_run_config(const ConfigFile& file) {
  RunConfig cfg;
  for (const auto& e : file.entries()) {
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (f.key == e.key) {
        field = &f;
        break;
      }
    }
    if (!field) throw ConfigError(e.where() + ": unknown key '" + e.key + "'");
    field->set(cfg, e);
  }
  cfg.model.hstu.validate();
  cfg.gen.validate();
  if (cfg.train.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (cfg.train.num_workers == 0) throw ConfigError("train.num_workers must be >= 1");
  if (cfg.model.num_shards == 0) throw ConfigError("embedding.num_shards must be >= 1");
  return cfg;
}

std::string snapshot(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> config_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.doc);
  return out;
}

}  // namespace mtgr
