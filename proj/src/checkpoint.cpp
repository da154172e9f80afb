#include "vqsign/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "vqsign/errors.hpp"
#include "vqsign/version.hpp"

namespace vqsign {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'V', 'Q', 'S', 'L', 'C', 'K', 'P', 'T'};

json plan_to_json(const CapacityPlan& plan) {
  json j;
  j["latent_counts"] = plan.latent_counts;
  j["baseline_latent_count"] = plan.baseline_latent_count;
  j["hand_book"] = plan.hand_book;
  j["movement_book"] = plan.movement_book;
  j["nmm_book"] = plan.nmm_book;
  j["body_book"] = plan.body_book;
  j["baseline_book"] = plan.baseline_book;
  return j;
}

CapacityPlan plan_from_json(const json& j) {
  CapacityPlan plan;
  const auto counts = j.at("latent_counts").get<std::vector<int>>();
  if (counts.size() != kStreamCount) throw IoError("checkpoint: bad latent_counts");
  std::copy(counts.begin(), counts.end(), plan.latent_counts.begin());
  plan.baseline_latent_count = j.at("baseline_latent_count").get<int>();
  plan.hand_book = j.at("hand_book").get<int>();
  plan.movement_book = j.at("movement_book").get<int>();
  plan.nmm_book = j.at("nmm_book").get<int>();
  plan.body_book = j.at("body_book").get<int>();
  plan.baseline_book = j.at("baseline_book").get<int>();
  return plan;
}

json config_to_json(const ModelConfig& cfg) {
  json j;
  j["model_dim"] = cfg.model_dim;
  j["layers"] = cfg.layers;
  j["heads"] = cfg.heads;
  j["latent_dim"] = cfg.latent_dim;
  j["ffn_mult"] = cfg.ffn_mult;
  j["dropout"] = cfg.dropout;
  j["sampled_frames"] = cfg.sampled_frames;
  j["max_frames"] = cfg.max_frames;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.model_dim = j.at("model_dim").get<int>();
  cfg.layers = j.at("layers").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.latent_dim = j.at("latent_dim").get<int>();
  cfg.ffn_mult = j.at("ffn_mult").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.sampled_frames = j.at("sampled_frames").get<int>();
  cfg.max_frames = j.at("max_frames").get<int>();
  return cfg;
}

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
    for (const auto& s : entry.at("streams"))
      f.streams.push_back(stream_from_string(s.get<std::string>()));
    schema.features.push_back(std::move(f));
  }
  return schema;
}

void write_blob(std::ofstream& out, const Matrix<float>& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            std::streamsize(sizeof(float) * std::size_t(m.size())));
}

void read_blob(std::ifstream& in, Matrix<float>& m) {
  in.read(reinterpret_cast<char*>(m.data()),
          std::streamsize(sizeof(float) * std::size_t(m.size())));
  if (!in) throw IoError("checkpoint: truncated tensor data");
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::string& path) {
  json header;
  header["checkpoint_version"] = kCheckpointVersion;
  header["tool_version"] = kToolVersion;
  header["variant"] = to_string(model.variant);
  header["init_seed"] = model.init_seed;
  header["trained_steps"] = model.trained_steps;
  header["config"] = config_to_json(model.cfg);
  header["plan"] = plan_to_json(model.plan);
  if (model.pss_enabled)
    header["pss"] = {{"p_force", model.pss.p_force}};
  else
    header["pss"] = nullptr;
  header["schema"] = schema_to_json(model.schema);
  header["layout"] = layout_to_json(model.layout);

  json books = json::array();
  for (const auto& book : model.books) {
    json b;
    b["name"] = book.name;
    b["usage"] = book.usage;
    books.push_back(b);
  }
  header["books"] = books;

  json tensors = json::array();
  for (const auto* p : model.params.items) {
    json t;
    t["name"] = p->name;
    t["rows"] = p->value.rows();
    t["cols"] = p->value.cols();
    tensors.push_back(t);
  }
  header["tensors"] = tensors;

  const std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = header_text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header_text.data(), std::streamsize(header_text.size()));
  for (const auto* p : model.params.items) {
    write_blob(out, p->value);
    write_blob(out, p->adam_m);
    write_blob(out, p->adam_v);
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError("not a vqsign checkpoint: " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string header_text(len, '\0');
  in.read(header_text.data(), std::streamsize(len));
  if (!in) throw IoError("checkpoint: truncated header");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: bad header: ") + e.what());
  }
  const int version = header.value("checkpoint_version", -1);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint_version " + std::to_string(version));

  const ModelVariant variant = variant_from_string(header.at("variant").get<std::string>());
  const ModelConfig cfg = config_from_json(header.at("config"));
  const CapacityPlan plan = plan_from_json(header.at("plan"));
  std::optional<PssConfig> pss;
  if (!header.at("pss").is_null())
    pss = PssConfig{header.at("pss").at("p_force").get<double>()};
  const PhonoFeatureSchema schema = schema_from_json(header.at("schema"));
  const SkeletonLayout layout = layout_from_json(header.at("layout"));
  const std::uint64_t seed = header.at("init_seed").get<std::uint64_t>();

  Checkpoint ckpt;
  ckpt.model = build_model<float>(variant, plan, pss, cfg, schema, layout, seed);
  ckpt.model->trained_steps = header.at("trained_steps").get<long long>();
  ckpt.adam_step = ckpt.model->trained_steps;

  const auto& books = header.at("books");
  if (books.size() != ckpt.model->books.size()) throw IoError("checkpoint: book count mismatch");
  for (std::size_t b = 0; b < ckpt.model->books.size(); ++b) {
    const auto usage = books.at(b).at("usage").get<std::vector<std::int64_t>>();
    if (usage.size() != ckpt.model->books[b].usage.size())
      throw IoError("checkpoint: usage histogram size mismatch");
    ckpt.model->books[b].usage = usage;
  }

  const auto& tensors = header.at("tensors");
  if (tensors.size() != ckpt.model->params.items.size())
    throw IoError("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < ckpt.model->params.items.size(); ++i) {
    auto* p = ckpt.model->params.items[i];
    const auto& t = tensors.at(i);
    if (t.at("name").get<std::string>() != p->name ||
        t.at("rows").get<Eigen::Index>() != p->value.rows() ||
        t.at("cols").get<Eigen::Index>() != p->value.cols())
      throw IoError("checkpoint: tensor layout mismatch at " + p->name);
    read_blob(in, p->value);
    read_blob(in, p->adam_m);
    read_blob(in, p->adam_v);
  }
  return ckpt;
}

}  // namespace vqsign
