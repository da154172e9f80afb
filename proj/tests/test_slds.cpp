#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vqsign/errors.hpp"
#include "vqsign/slds.hpp"

using namespace vqsign;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool corpora_equal(const Corpus& a, const Corpus& b) {
  if (!(a.layout == b.layout) || !(a.schema == b.schema) || !(a.split == b.split)) return false;
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& ra = a.records[i];
    const auto& rb = b.records[i];
    if (ra.gloss_id != rb.gloss_id || ra.signer_id != rb.signer_id || ra.labels != rb.labels)
      return false;
    if (ra.pose.frames.rows() != rb.pose.frames.rows()) return false;
    if (std::memcmp(ra.pose.frames.data(), rb.pose.frames.data(),
                    sizeof(float) * std::size_t(ra.pose.frames.size())) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("empty corpus round-trips") {
  Corpus corpus;
  corpus.layout = SkeletonLayout::default_layout();
  corpus.schema = PhonoFeatureSchema::default_schema();
  const std::string path = temp_path("vqsign_empty.slds");
  write_dataset(corpus, path);
  const Corpus back = read_dataset(path);
  CHECK(corpora_equal(corpus, back));
  std::remove(path.c_str());
}

TEST_CASE("a 100-record corpus round-trips bit-exactly") {
  CorpusConfig cfg;
  cfg.n_signs = 25;
  cfg.instances_per_sign = 4;
  cfg.seed = 17;
  const Corpus corpus = generate_corpus(cfg);
  REQUIRE(corpus.records.size() == 100);

  const std::string path = temp_path("vqsign_roundtrip.slds");
  write_dataset(corpus, path);
  const Corpus back = read_dataset(path);
  CHECK(corpora_equal(corpus, back));

  // Writing the parsed corpus again reproduces the same bytes.
  const std::string path2 = temp_path("vqsign_roundtrip2.slds");
  write_dataset(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("truncated final line reports its line number") {
  CorpusConfig cfg;
  cfg.n_signs = 3;
  cfg.instances_per_sign = 2;
  const Corpus corpus = generate_corpus(cfg);
  const std::string path = temp_path("vqsign_truncated.slds");
  write_dataset(corpus, path);

  std::ifstream in(path, std::ios::binary);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  all.resize(all.size() - 40);  // chop into the last record
  std::ofstream out(path, std::ios::binary);
  out << all;
  out.close();

  try {
    (void)read_dataset(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line == 7);  // header + 6 records; the last one is broken
  }
  std::remove(path.c_str());
}

TEST_CASE("format version mismatch is rejected") {
  const std::string path = temp_path("vqsign_badversion.slds");
  {
    CorpusConfig cfg;
    cfg.n_signs = 2;
    cfg.instances_per_sign = 1;
    const Corpus corpus = generate_corpus(cfg);
    write_dataset(corpus, path);
  }
  std::ifstream in(path, std::ios::binary);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = all.find("\"format_version\":1");
  REQUIRE(pos != std::string::npos);
  all.replace(pos, 18, "\"format_version\":9");
  std::ofstream out(path, std::ios::binary);
  out << all;
  out.close();
  CHECK_THROWS_AS((void)read_dataset(path), IoError);
  std::remove(path.c_str());
}

TEST_CASE("missing file raises an io error") {
  CHECK_THROWS_AS((void)read_dataset("/nonexistent/nothing.slds"), IoError);
}
