#include <doctest.h>

#include <map>
#include <set>

#include "vqsign/corpus.hpp"
#include "vqsign/errors.hpp"
#include "vqsign/rng.hpp"

using namespace vqsign;

namespace {

PhonoFeatureSchema binary_schema() {
  PhonoFeatureSchema schema = PhonoFeatureSchema::default_schema();
  for (auto& f : schema.features) f.classes = 2;
  return schema;
}

bool streams_equal(const StreamSeq& a, const StreamSeq& b) {
  return a.frames == b.frames && a.keypoints == b.keypoints && a.xyz == b.xyz;
}

}  // namespace

TEST_CASE("vocabulary covers the full product space exhaustively") {
  const PhonoFeatureSchema schema = binary_schema();
  REQUIRE(schema.vocabulary_capacity() == 65536);
  const auto vocab = build_vocabulary(schema, 65536, 7);
  CHECK(vocab.size() == 65536);
  std::set<PhonoLabels> seen;
  for (const auto& [gloss, labels] : vocab) seen.insert(labels);
  CHECK(seen.size() == 65536);
  CHECK_THROWS_AS((void)build_vocabulary(schema, 65537, 7), ConfigError);
}

TEST_CASE("vocabulary sampling is deterministic and injective") {
  const PhonoFeatureSchema schema = PhonoFeatureSchema::default_schema();
  const auto a = build_vocabulary(schema, 600, 42);
  const auto b = build_vocabulary(schema, 600, 42);
  REQUIRE(a.size() == 600);
  CHECK(a == b);
  std::set<PhonoLabels> seen;
  for (const auto& [gloss, labels] : a) seen.insert(labels);
  CHECK(seen.size() == 600);
}

TEST_CASE("render_sign is deterministic without noise") {
  const PhonoFeatureSchema schema = PhonoFeatureSchema::default_schema();
  const auto vocab = build_vocabulary(schema, 4, 3);
  const PoseSequence a = render_sign(schema, vocab[0].second, 2, 0.0, 30, 11);
  const PoseSequence b = render_sign(schema, vocab[0].second, 2, 0.0, 30, 11);
  CHECK(a.frames == b.frames);
  // Different seed, still identical at zero noise.
  const PoseSequence c = render_sign(schema, vocab[0].second, 2, 0.0, 30, 999);
  CHECK(a.frames == c.frames);
}

TEST_CASE("movement class changes only the movement streams") {
  const PhonoFeatureSchema schema = PhonoFeatureSchema::default_schema();
  PhonoLabels base(16, 0);
  PhonoLabels moved = base;
  moved[std::size_t(feat::kMovement)] = 3;
  const PoseSequence pa = render_sign(schema, base, 1, 0.0, 32, 5);
  const PoseSequence pb = render_sign(schema, moved, 1, 0.0, 32, 5);
  const StreamBundle ba = partition_pose(pa, pa.layout, 16);
  const StreamBundle bb = partition_pose(pb, pb.layout, 16);
  CHECK(streams_equal(ba[StreamId::RH], bb[StreamId::RH]));
  CHECK(streams_equal(ba[StreamId::LH], bb[StreamId::LH]));
  CHECK(streams_equal(ba[StreamId::NMM], bb[StreamId::NMM]));
  CHECK(streams_equal(ba[StreamId::BODY], bb[StreamId::BODY]));
  CHECK_FALSE(streams_equal(ba[StreamId::MOVR], bb[StreamId::MOVR]));
  CHECK_FALSE(streams_equal(ba[StreamId::MOVL], bb[StreamId::MOVL]));
}

TEST_CASE("selected fingers change only the hand streams") {
  const PhonoFeatureSchema schema = PhonoFeatureSchema::default_schema();
  PhonoLabels base(16, 0);
  base[std::size_t(feat::kSignType)] = 1;  // left hand mirrors the right
  PhonoLabels changed = base;
  changed[std::size_t(feat::kSelectedFingers)] = 4;
  const PoseSequence pa = render_sign(schema, base, 0, 0.0, 28, 5);
  const PoseSequence pb = render_sign(schema, changed, 0, 0.0, 28, 5);
  const StreamBundle ba = partition_pose(pa, pa.layout, 16);
  const StreamBundle bb = partition_pose(pb, pb.layout, 16);
  CHECK(streams_equal(ba[StreamId::MOVR], bb[StreamId::MOVR]));
  CHECK(streams_equal(ba[StreamId::MOVL], bb[StreamId::MOVL]));
  CHECK(streams_equal(ba[StreamId::NMM], bb[StreamId::NMM]));
  CHECK(streams_equal(ba[StreamId::BODY], bb[StreamId::BODY]));
  CHECK_FALSE(streams_equal(ba[StreamId::RH], bb[StreamId::RH]));
  CHECK_FALSE(streams_equal(ba[StreamId::LH], bb[StreamId::LH]));
}

TEST_CASE("changing one feature class touches only its assigned streams") {
  const PhonoFeatureSchema schema = PhonoFeatureSchema::default_schema();
  Rng rng(77);
  for (int f = 0; f < schema.feature_count(); ++f) {
    const auto& feature = schema.features[std::size_t(f)];
    PhonoLabels base(16, 0);
    for (int g = 0; g < 16; ++g)
      base[std::size_t(g)] =
          int(rng.uniform_int(std::uint64_t(schema.features[std::size_t(g)].classes)));
    PhonoLabels changed = base;
    changed[std::size_t(f)] = (base[std::size_t(f)] + 1) % feature.classes;

    const PoseSequence pa = render_sign(schema, base, 3, 0.0, 26, 1);
    const PoseSequence pb = render_sign(schema, changed, 3, 0.0, 26, 1);
    const StreamBundle ba = partition_pose(pa, pa.layout, 16);
    const StreamBundle bb = partition_pose(pb, pb.layout, 16);
    for (StreamId s : kAllStreams) {
      const bool assigned = std::count(feature.streams.begin(), feature.streams.end(), s) > 0;
      if (!assigned) {
        CAPTURE(feature.name);
        CAPTURE(to_string(s));
        CHECK(streams_equal(ba[s], bb[s]));
      }
    }
  }
}

TEST_CASE("render_sign validates class indices") {
  const PhonoFeatureSchema schema = PhonoFeatureSchema::default_schema();
  PhonoLabels bad(16, 0);
  bad[std::size_t(feat::kMovement)] = 6;  // movement has 6 classes, 0..5
  CHECK_THROWS_AS((void)render_sign(schema, bad, 0, 0.0, 24, 1), std::invalid_argument);
}

TEST_CASE("corpus splits follow the requested fractions and stay disjoint") {
  CorpusConfig cfg;
  cfg.n_signs = 600;
  cfg.instances_per_sign = 1;
  cfg.min_frames = 16;
  cfg.max_frames = 20;
  cfg.seed = 9;
  const Corpus corpus = generate_corpus(cfg);
  CHECK(corpus.split.train.size() == 480);
  CHECK(corpus.split.val.size() == 60);
  CHECK(corpus.split.test.size() == 60);
  corpus.split.validate();

  // Every record's gloss belongs to exactly one split.
  for (const auto& rec : corpus.records) {
    int hits = 0;
    for (const auto* part : {&corpus.split.train, &corpus.split.val, &corpus.split.test})
      hits += std::binary_search(part->begin(), part->end(), rec.gloss_id) ? 1 : 0;
    REQUIRE(hits == 1);
  }
}

TEST_CASE("degenerate split keeps everything in train") {
  CorpusConfig cfg;
  cfg.n_signs = 12;
  cfg.instances_per_sign = 2;
  cfg.train_frac = 1.0;
  cfg.val_frac = 0.0;
  cfg.test_frac = 0.0;
  const Corpus corpus = generate_corpus(cfg);
  CHECK(corpus.split.train.size() == 12);
  CHECK(corpus.split.val.empty());
  CHECK(corpus.split.test.empty());
}

TEST_CASE("gloss ids map to one label set each") {
  CorpusConfig cfg;
  cfg.n_signs = 40;
  cfg.instances_per_sign = 4;
  const Corpus corpus = generate_corpus(cfg);
  std::map<int, PhonoLabels> seen;
  for (const auto& rec : corpus.records) {
    auto [it, inserted] = seen.emplace(rec.gloss_id, rec.labels);
    if (!inserted) CHECK(it->second == rec.labels);
  }
  CHECK(seen.size() == 40);
}

TEST_CASE("split disjointness holds across 100 seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CorpusConfig cfg;
    cfg.n_signs = 20;
    cfg.instances_per_sign = 1;
    cfg.min_frames = 16;
    cfg.max_frames = 16;
    cfg.seed = seed;
    const Corpus corpus = generate_corpus(cfg);
    CHECK_NOTHROW(corpus.split.validate());
  }
}

TEST_CASE("fraction validation names the problem") {
  CorpusConfig cfg;
  cfg.train_frac = 0.8;
  cfg.val_frac = 0.1;
  cfg.test_frac = 0.2;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("splits"), ConfigError);
}
