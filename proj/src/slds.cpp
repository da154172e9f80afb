#include "vqsign/slds.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "vqsign/errors.hpp"

namespace vqsign {

namespace {

using json = nlohmann::ordered_json;

json layout_to_json(const SkeletonLayout& l) {
  json j;
  j["right_hand"] = {l.right_hand.begin, l.right_hand.end};
  j["left_hand"] = {l.left_hand.begin, l.left_hand.end};
  j["face"] = {l.face.begin, l.face.end};
  j["body"] = {l.body.begin, l.body.end};
  j["wrist_right"] = l.wrist_right;
  j["wrist_left"] = l.wrist_left;
  j["nose"] = l.nose;
  return j;
}

SkeletonLayout layout_from_json(const json& j) {
  SkeletonLayout l;
  auto group = [&](const char* name) {
    const auto& a = j.at(name);
    return SkeletonLayout::Group{a.at(0).get<int>(), a.at(1).get<int>()};
  };
  l.right_hand = group("right_hand");
  l.left_hand = group("left_hand");
  l.face = group("face");
  l.body = group("body");
  l.wrist_right = j.at("wrist_right").get<int>();
  l.wrist_left = j.at("wrist_left").get<int>();
  l.nose = j.at("nose").get<int>();
  l.validate();
  return l;
}

json schema_to_json(const PhonoFeatureSchema& schema) {
  json features = json::array();
  for (const auto& f : schema.features) {
    json entry;
    entry["name"] = f.name;
    entry["classes"] = f.classes;
    json streams = json::array();
    for (StreamId s : f.streams) streams.push_back(to_string(s));
    entry["streams"] = streams;
    features.push_back(entry);
  }
  return features;
}

PhonoFeatureSchema schema_from_json(const json& j) {
  PhonoFeatureSchema schema;
  for (const auto& entry : j) {
    PhonoFeature f;
    f.name = entry.at("name").get<std::string>();
    f.classes = entry.at("classes").get<int>();
    for (const auto& s : entry.at("streams")) f.streams.push_back(stream_from_string(s.get<std::string>()));
    schema.features.push_back(std::move(f));
  }
  schema.validate();
  return schema;
}

void append_float(std::string& out, float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

void append_int(std::string& out, long long v) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

// Minimal cursor over one record line. Coordinates are parsed with
// from_chars so the shortest-form floats written above round-trip exactly.
struct LineCursor {
  const char* p;
  const char* end;
  long line;

  void skip_ws() {
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
  }
  void expect(char c) {
    skip_ws();
    if (p >= end || *p != c)
      throw ParseError(std::string("expected '") + c + "'", line);
    ++p;
  }
  bool consume(char c) {
    skip_ws();
    if (p < end && *p == c) {
      ++p;
      return true;
    }
    return false;
  }
  void expect_key(const char* key) {
    expect('"');
    const std::size_t len = std::strlen(key);
    if (std::size_t(end - p) < len + 1 || std::strncmp(p, key, len) != 0 || p[len] != '"')
      throw ParseError(std::string("expected key \"") + key + "\"", line);
    p += len + 1;
    expect(':');
  }
  long long read_int() {
    skip_ws();
    long long v = 0;
    const auto res = std::from_chars(p, end, v);
    if (res.ec != std::errc()) throw ParseError("expected integer", line);
    p = res.ptr;
    return v;
  }
  float read_float() {
    skip_ws();
    float v = 0;
    const auto res = std::from_chars(p, end, v);
    if (res.ec != std::errc()) throw ParseError("expected number", line);
    p = res.ptr;
    return v;
  }
};

}  // namespace

void write_dataset(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);

  json header;
  header["format"] = "slds";
  header["format_version"] = kSldsFormatVersion;
  header["layout"] = layout_to_json(corpus.layout);
  header["schema"] = schema_to_json(corpus.schema);
  header["split"] = {{"train", corpus.split.train},
                     {"val", corpus.split.val},
                     {"test", corpus.split.test}};
  header["record_count"] = corpus.records.size();
  out << header.dump() << '\n';

  std::string line;
  for (const auto& record : corpus.records) {
    line.clear();
    line.reserve(std::size_t(record.pose.frames.size()) * 9 + 128);
    line += "{\"gloss_id\":";
    append_int(line, record.gloss_id);
    line += ",\"signer_id\":";
    append_int(line, record.signer_id);
    line += ",\"labels\":[";
    for (std::size_t i = 0; i < record.labels.size(); ++i) {
      if (i) line += ',';
      append_int(line, record.labels[i]);
    }
    line += "],\"frames\":[";
    const int joints = record.pose.layout.joint_count();
    for (int t = 0; t < record.pose.frame_count(); ++t) {
      if (t) line += ',';
      line += '[';
      for (int j = 0; j < joints; ++j) {
        if (j) line += ',';
        line += '[';
        append_float(line, record.pose.frames(t, j * 3 + 0));
        line += ',';
        append_float(line, record.pose.frames(t, j * 3 + 1));
        line += ',';
        append_float(line, record.pose.frames(t, j * 3 + 2));
        line += ']';
      }
      line += ']';
    }
    line += "]}";
    out << line << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

Corpus read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);

  std::string text;
  if (!std::getline(in, text)) throw ParseError("missing header line", 1);

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad header: ") + e.what(), 1);
  }
  if (header.value("format", "") != "slds") throw ParseError("not an slds file", 1);
  const int version = header.value("format_version", -1);
  if (version != kSldsFormatVersion)
    throw IoError("unsupported slds format_version " + std::to_string(version) +
                  " (expected " + std::to_string(kSldsFormatVersion) + ")");

  Corpus corpus;
  try {
    corpus.layout = layout_from_json(header.at("layout"));
    corpus.schema = schema_from_json(header.at("schema"));
    const auto& split = header.at("split");
    corpus.split.train = split.at("train").get<std::vector<int>>();
    corpus.split.val = split.at("val").get<std::vector<int>>();
    corpus.split.test = split.at("test").get<std::vector<int>>();
    corpus.split.validate();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad header: ") + e.what(), 1);
  }
  const std::size_t expected = header.value("record_count", std::size_t(0));
  corpus.records.reserve(expected);

  const int joints = corpus.layout.joint_count();
  const int n_features = corpus.schema.feature_count();
  long line_no = 1;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    LineCursor cur{text.data(), text.data() + text.size(), line_no};

    SignRecord record;
    record.pose.layout = corpus.layout;
    cur.expect('{');
    cur.expect_key("gloss_id");
    record.gloss_id = int(cur.read_int());
    cur.expect(',');
    cur.expect_key("signer_id");
    record.signer_id = int(cur.read_int());
    cur.expect(',');
    cur.expect_key("labels");
    cur.expect('[');
    for (int f = 0; f < n_features; ++f) {
      if (f) cur.expect(',');
      const long long v = cur.read_int();
      if (v < 0 || v >= corpus.schema.features[std::size_t(f)].classes)
        throw ParseError("label class out of range", line_no);
      record.labels.push_back(int(v));
    }
    cur.expect(']');
    cur.expect(',');
    cur.expect_key("frames");
    cur.expect('[');
    std::vector<float> coords;
    coords.reserve(std::size_t(joints) * 3 * 40);
    int frames = 0;
    while (true) {
      cur.expect('[');
      for (int j = 0; j < joints; ++j) {
        if (j) cur.expect(',');
        cur.expect('[');
        coords.push_back(cur.read_float());
        cur.expect(',');
        coords.push_back(cur.read_float());
        cur.expect(',');
        coords.push_back(cur.read_float());
        cur.expect(']');
      }
      cur.expect(']');
      ++frames;
      if (!cur.consume(',')) break;
    }
    cur.expect(']');
    cur.expect('}');

    record.pose.frames.resize(frames, joints * 3);
    std::copy(coords.begin(), coords.end(), record.pose.frames.data());
    record.pose.validate();
    corpus.records.push_back(std::move(record));
  }
  if (expected != 0 && corpus.records.size() != expected)
    throw ParseError("record count mismatch: header says " + std::to_string(expected) +
                         ", file has " + std::to_string(corpus.records.size()),
                     line_no);
  return corpus;
}

}  // namespace vqsign
