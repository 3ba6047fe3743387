#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "mtgr/aggregate.hpp"
#include "mtgr/model.hpp"
#include "mtgr/sample.hpp"
#include "mtgr/schema.hpp"
#include "mtgr/tokenize.hpp"

using namespace mtgr;

namespace {

EventRecord event(std::int64_t user, std::int64_t request_ts, std::int64_t item, int click = 0) {
  EventRecord e;
  e.user_id = user;
  e.profile = {{"age", 3}, {"ctr", 2}};
  e.static_seq = {{{{"seq_item", 10}}, 0}, {{{"seq_item", 11}}, 0}};
  e.candidate.features = {{"item", item}};
  e.candidate.request_ts = request_ts;
  e.candidate.click = click;
  return e;
}

AggregatedSample figure_sample() {
  AggregatedSample s;
  s.user_id = 1;
  s.profile = {{"age", 4}, {"ctr", 7}};
  s.static_seq = {{{{"seq_item", 21}}, 0}, {{{"seq_item", 22}}, 0}};
  s.realtime_seq = {{{{"seq_item", 31}}, 200}, {{{"seq_item", 32}}, 400}};
  for (int k = 0; k < 3; ++k) {
    Candidate c;
    c.features = {{"item", 40 + k}};
    c.cross = {{"aff", k + 1}};
    c.request_ts = 500 - 200 * k;
    s.candidates.push_back(c);
  }
  return s;
}

}  // namespace

TEST(Schema, EmbeddingDimRule) {
  EXPECT_EQ(choose_embedding_dim(8, 512), 64);
  EXPECT_EQ(choose_embedding_dim(3, 512), 171);
  EXPECT_EQ(choose_embedding_dim(1, 8), 8);
  EXPECT_EQ(choose_embedding_dim(20, 8), 1);
}

TEST(Schema, GroupWidths) {
  const auto s = FeatureSchema::make({"age"}, {"seq_cat", "seq_item"}, {"cat", "item"}, {"aff"}, 64);
  EXPECT_EQ(s.spec("age").dim, 64);
  EXPECT_EQ(s.spec("seq_item").dim, 32);
  EXPECT_EQ(s.spec("cat").dim, 21);
  EXPECT_EQ(s.spec("aff").dim, 21);
  EXPECT_EQ(s.sequence_token_width(), 64);
  EXPECT_EQ(s.candidate_token_width(), 63);
}

TEST(Schema, DuplicateNamesRejected) {
  EXPECT_THROW(FeatureSchema::make({"a"}, {"a"}, {"c"}, {}, 8).validate(), SchemaError);
}

TEST(Aggregation, ThreeRecordsSameWindowGiveOneSample) {
  const std::vector<EventRecord> events = {event(7, 3600 * 5 + 10, 1), event(7, 3600 * 5 + 20, 2),
                                           event(7, 3600 * 5 + 30, 3, 1)};
  const auto result = aggregate_by_user(events);
  ASSERT_EQ(result.samples.size(), 1u);
  const auto& s = result.samples[0];
  ASSERT_EQ(s.candidates.size(), 3u);
  EXPECT_EQ(s.candidates[0].request_ts, 3600 * 5 + 30);
  EXPECT_EQ(s.candidates[2].request_ts, 3600 * 5 + 10);
  EXPECT_EQ(s.candidates[0].click, 1);
}

TEST(Aggregation, ByRequestGivesOneSamplePerRequest) {
  const std::vector<EventRecord> events = {event(7, 100, 1), event(7, 100, 2), event(7, 200, 3)};
  const auto result = aggregate_by_user(events, {.window_seconds = 0});
  ASSERT_EQ(result.samples.size(), 2u);
  EXPECT_EQ(result.samples[0].candidates.size(), 2u);
}

TEST(Aggregation, CountsMatchBruteForceGroupBy) {
  std::mt19937_64 rng(4);
  std::vector<EventRecord> events;
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> expected;
  for (int i = 0; i < 500; ++i) {
    const std::int64_t user = static_cast<std::int64_t>(rng() % 2);
    const std::int64_t ts = 1 + static_cast<std::int64_t>(rng() % 20000);
    events.push_back(event(user, ts, i));
    ++expected[{user, ts / 3600}];
  }
  const auto result = aggregate_by_user(events);
  std::map<std::int64_t, std::size_t> per_user, per_user_expected;
  for (const auto& [k, n] : expected) per_user_expected[k.first] += n;
  for (const auto& s : result.samples) per_user[s.user_id] += s.candidates.size();
  EXPECT_EQ(per_user, per_user_expected);
  EXPECT_EQ(result.samples.size(), expected.size());
}

TEST(Aggregation, RealtimeUnionedSortedAndClippedToWindow) {
  auto a = event(1, 3600 + 100, 1);
  a.realtime_seq = {{{{"seq_item", 5}}, 3600 + 50}, {{{"seq_item", 4}}, 3000}};
  auto b = event(1, 3600 + 300, 2);
  b.realtime_seq = {{{{"seq_item", 5}}, 3600 + 50}, {{{"seq_item", 6}}, 3600 + 200}};
  const auto result = aggregate_by_user({a, b});
  ASSERT_EQ(result.samples.size(), 1u);
  const auto& rt = result.samples[0].realtime_seq;
  ASSERT_EQ(rt.size(), 2u);
  EXPECT_EQ(rt[0].ts, 3600 + 50);
  EXPECT_EQ(rt[1].ts, 3600 + 200);
}

TEST(Aggregation, TruncationKeepsMostRecent) {
  AggregatedSample s = figure_sample();
  truncate_sequences(s, 1, 1);
  ASSERT_EQ(s.static_seq.size(), 1u);
  EXPECT_EQ(s.static_seq[0].features.at("seq_item"), 22);
  EXPECT_EQ(s.realtime_seq[0].ts, 400);
}

TEST(Sample, JsonRoundTrip) {
  const auto s = figure_sample();
  const auto j = to_json(s);
  EXPECT_EQ(validate_record(j), "");
  EXPECT_EQ(sample_from_json(j), s);
  std::ostringstream out;
  write_jsonl(out, {s, s});
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(Sample, ValidationRejectsBrokenInvariants) {
  auto s = figure_sample();
  s.candidates[0].purchase = 1;
  EXPECT_THROW(validate_sample(s), DataError);
  s = figure_sample();
  s.realtime_seq[1].ts = 100;
  EXPECT_THROW(validate_sample(s), DataError);
  s = figure_sample();
  s.candidates.clear();
  EXPECT_THROW(validate_sample(s), DataError);

  auto j = to_json(figure_sample());
  j["extra"] = 1;
  EXPECT_NE(validate_record(j), "");
  j = to_json(figure_sample());
  j["candidates"][0]["click"] = 2;
  EXPECT_NE(validate_record(j), "");
}

TEST(Tokenize, LayoutOrderForTwoTwoTwoThree) {
  const auto schema = FeatureSchema::make({"age", "ctr"}, {"seq_item"}, {"item"}, {"aff"}, 8);
  const auto layout = make_layout(figure_sample(), schema);
  ASSERT_EQ(layout.size(), 9u);
  const std::vector<TokenGroup> expected = {TokenGroup::UserProfile, TokenGroup::UserProfile, TokenGroup::StaticSeq,
                                            TokenGroup::StaticSeq,   TokenGroup::RealtimeSeq, TokenGroup::RealtimeSeq,
                                            TokenGroup::Candidate,   TokenGroup::Candidate,   TokenGroup::Candidate};
  EXPECT_EQ(layout.tags, expected);
  EXPECT_EQ(layout.timestamps, (std::vector<std::int64_t>{0, 0, 0, 0, 200, 400, 500, 300, 100}));
  EXPECT_EQ(layout.candidate_positions, (std::vector<Index>{6, 7, 8}));
}

TEST(Tokenize, UnknownFeatureIsRejected) {
  const auto schema = FeatureSchema::make({"age", "ctr"}, {"seq_item"}, {"item"}, {"aff"}, 8);
  auto s = figure_sample();
  s.profile["zip"] = 1;
  EXPECT_THROW(check_against_schema(s, schema), SchemaError);
}

TEST(Tokenize, TokensEqualRecomputedProjection) {
  const auto schema = FeatureSchema::make({"age", "ctr"}, {"seq_cat", "seq_item"}, {"item"}, {"aff"}, 8);
  ModelConfig cfg;
  cfg.hstu.n_layer = 1;
  cfg.hstu.d_model = 8;
  Model<double> model(schema, cfg);
  auto sample = figure_sample();
  for (auto& it : sample.static_seq) it.features["seq_cat"] = 2;
  sample.realtime_seq[0].features["seq_cat"] = 3;  // realtime[1] leaves seq_cat unknown (id 0)

  const auto keys = collect_keys(sample, schema);
  std::vector<EmbeddingStore<double>::Row> rows;
  for (const auto& k : keys) rows.push_back(model.store().peek(k));
  const LocalEmbeddings<double> local(keys, rows, model.store().plan(), false);
  const auto dense = DenseParams<double>::assemble(model.dense_leaves(false), 1);
  const auto seq = tokenize(sample, schema, local, dense.tokenizer);
  ASSERT_EQ(seq.tokens.rows(), 9);

  auto emb = [&](const std::string& name, std::int64_t id) {
    return Eigen::RowVectorXd(model.store().peek({schema.spec(name).table_id, id}));
  };
  auto id = [](const FeatureMap& m, const std::string& n) { return m.count(n) ? m.at(n) : 0; };
  const Matrix<double>& x = seq.tokens.value();
  EXPECT_EQ(x.row(0), emb("age", 4));
  EXPECT_EQ(x.row(1), emb("ctr", 7));

  const auto& sw = dense.tokenizer.seq_w.value();
  const auto& sb = dense.tokenizer.seq_b.value();
  std::vector<const InteractionItem*> items;
  for (const auto& it : sample.static_seq) items.push_back(&it);
  for (const auto& it : sample.realtime_seq) items.push_back(&it);
  for (std::size_t i = 0; i < items.size(); ++i) {
    Eigen::RowVectorXd concat(8);
    concat << emb("seq_cat", id(items[i]->features, "seq_cat")), emb("seq_item", id(items[i]->features, "seq_item"));
    const Eigen::RowVectorXd expected = concat * sw + sb;
    EXPECT_LT((x.row(static_cast<Index>(2 + i)) - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
  const auto& cw = dense.tokenizer.cand_w.value();
  const auto& cb = dense.tokenizer.cand_b.value();
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& c = sample.candidates[k];
    Eigen::RowVectorXd concat(8);
    concat << emb("item", c.features.at("item")), emb("aff", c.cross.at("aff"));
    const Eigen::RowVectorXd expected = concat * cw + cb;
    EXPECT_LT((x.row(static_cast<Index>(6 + k)) - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Tokenize, InferSchemaSortsNames) {
  auto s = figure_sample();
  s.profile["city"] = 1;
  const auto schema = infer_schema({s}, 16);
  EXPECT_EQ(schema.user_profile_features(), (std::vector<std::string>{"age", "city", "ctr"}));
  EXPECT_EQ(schema.cross_features(), (std::vector<std::string>{"aff"}));
}
