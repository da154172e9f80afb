#include "vqsign/corpus.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <set>
#include <stdexcept>

#include "vqsign/errors.hpp"
#include "vqsign/rng.hpp"

namespace vqsign {

std::vector<std::pair<int, PhonoLabels>> build_vocabulary(const PhonoFeatureSchema& schema,
                                                          int n_signs, std::uint64_t seed) {
  schema.validate();
  if (n_signs < 1) throw std::invalid_argument("build_vocabulary: n_signs must be positive");
  const std::uint64_t capacity = schema.vocabulary_capacity();
  if (std::uint64_t(n_signs) > capacity)
    throw ConfigError("vocabulary of " + std::to_string(n_signs) +
                      " signs exceeds schema capacity " + std::to_string(capacity));

  Rng rng = Rng::derive(seed, 0xB0CA);
  std::set<PhonoLabels> seen;
  std::vector<std::pair<int, PhonoLabels>> vocab;
  vocab.reserve(std::size_t(n_signs));

  if (std::uint64_t(n_signs) == capacity) {
    // Exhaustive enumeration in mixed-radix order.
    PhonoLabels labels(std::size_t(schema.feature_count()), 0);
    for (int g = 0; g < n_signs; ++g) {
      vocab.emplace_back(g, labels);
      for (int f = schema.feature_count() - 1; f >= 0; --f) {
        if (++labels[std::size_t(f)] < schema.features[std::size_t(f)].classes) break;
        labels[std::size_t(f)] = 0;
      }
    }
    return vocab;
  }

  while (int(vocab.size()) < n_signs) {
    PhonoLabels labels(std::size_t(schema.feature_count()));
    for (int f = 0; f < schema.feature_count(); ++f)
      labels[std::size_t(f)] = int(rng.uniform_int(std::uint64_t(schema.features[std::size_t(f)].classes)));
    if (seen.insert(labels).second)
      vocab.emplace_back(int(vocab.size()), std::move(labels));
  }
  return vocab;
}

namespace {

using Vec3 = Eigen::Vector3f;

// Fixed per-(tag, index) pseudo-random unit-cube vector in [-1, 1]^3.
Vec3 hashed_dir(std::uint64_t tag, std::uint64_t index) {
  std::uint64_t s = hash_combine(tag, index);
  const float x = float(splitmix64(s) >> 11) * float(0x1.0p-53) * 2.f - 1.f;
  const float y = float(splitmix64(s) >> 11) * float(0x1.0p-53) * 2.f - 1.f;
  const float z = float(splitmix64(s) >> 11) * float(0x1.0p-53) * 2.f - 1.f;
  return {x, y, z};
}

struct SignerStyle {
  float global = 1.f;
  float arm = 1.f;
  float hand = 1.f;
  float torso = 1.f;
  float face = 1.f;
};

SignerStyle signer_style(int signer_id) {
  std::uint64_t s = hash_combine(0x51C9E5, std::uint64_t(signer_id));
  auto span = [&s](float lo, float hi) {
    return lo + (hi - lo) * float(splitmix64(s) >> 11) * float(0x1.0p-53);
  };
  SignerStyle style;
  style.global = span(0.92f, 1.08f);
  style.arm = span(0.94f, 1.06f);
  style.hand = span(0.92f, 1.08f);
  style.torso = span(0.95f, 1.05f);
  style.face = span(0.95f, 1.05f);
  return style;
}

// ---- hands ---------------------------------------------------------------

struct HandShapeParams {
  int selected_fingers = 0;
  int flexion = 0;
  int spread = 0;
  int thumb_position = 0;
  int thumb_contact = 0;
};

// Selected-finger subsets over {index, middle, ring, pinky}.
constexpr bool kFingerMask[8][4] = {
    {true, false, false, false},  // index
    {true, true, false, false},   // index+middle
    {true, true, true, true},     // all four
    {false, true, true, true},    // middle..pinky
    {false, false, false, true},  // pinky
    {true, false, false, true},   // index+pinky
    {false, true, false, false},  // middle
    {false, false, false, false}, // none (thumb-only)
};

constexpr float kFlexionAngle[4] = {0.05f, 0.55f, 1.05f, 1.50f};
constexpr float kUnselectedCurl = 1.25f;

// 21 local keypoints (wrist at origin) for one hand, right-hand geometry.
// Fingers: thumb, index, middle, ring, pinky; 4 joints each.
std::array<Vec3, 21> hand_local_shape(const HandShapeParams& p, float scale) {
  const Vec3 knuckle[5] = {
      {0.035f, 0.020f, 0.010f},   // thumb carpal
      {0.033f, 0.085f, 0.000f},   // index
      {0.010f, 0.090f, 0.000f},   // middle
      {-0.015f, 0.088f, 0.000f},  // ring
      {-0.037f, 0.080f, 0.000f},  // pinky
  };
  Vec3 dir[5] = {
      {0.55f, 0.15f, 0.45f},
      {0.25f, 0.95f, 0.10f},
      {0.00f, 1.00f, 0.05f},
      {-0.22f, 0.95f, 0.05f},
      {-0.42f, 0.85f, 0.05f},
  };
  if (p.thumb_position == 1) dir[0] = Vec3(0.75f, -0.10f, 0.15f);
  const float seg[5][3] = {
      {0.042f, 0.034f, 0.028f},
      {0.046f, 0.036f, 0.028f},
      {0.050f, 0.038f, 0.030f},
      {0.046f, 0.035f, 0.028f},
      {0.038f, 0.030f, 0.025f},
  };
  // Per-joint curl fractions of the finger's curl angle.
  const float bend[3] = {0.55f, 0.95f, 1.20f};

  std::array<Vec3, 21> pts;
  pts[0] = Vec3::Zero();  // wrist
  for (int f = 0; f < 5; ++f) {
    float curl;
    if (f == 0) {
      curl = 0.35f;  // thumb keeps a fixed gentle curl
    } else {
      const bool selected = kFingerMask[p.selected_fingers][f - 1];
      curl = selected ? kFlexionAngle[p.flexion] : kUnselectedCurl;
    }
    Vec3 d = dir[f];
    if (p.spread == 1 && f > 0 && kFingerMask[p.selected_fingers][f - 1]) {
      d.x() *= 1.8f;  // splay selected fingers outward
      d.x() += (f <= 2 ? 0.10f : -0.10f);
    }
    d.normalize();
    // Curl rotates successive segments in the plane spanned by the finger
    // direction and the palm normal.
    const Vec3 palm(0.f, -0.25f, -1.f);
    Vec3 axis = d.cross(palm).normalized();
    Vec3 cursor = knuckle[f];
    pts[std::size_t(1 + f * 4)] = cursor;
    Vec3 segment_dir = d;
    for (int j = 0; j < 3; ++j) {
      segment_dir = Eigen::AngleAxisf(curl * bend[j] * 0.6f, axis) * d;
      cursor += seg[f][j] * segment_dir;
      pts[std::size_t(1 + f * 4 + j + 1)] = cursor;
    }
  }
  if (p.thumb_contact == 1) {
    // Pull the thumb tip most of the way toward the index middle joint.
    const Vec3 target = pts[7];
    pts[4] = pts[4] + 0.65f * (target - pts[4]);
    pts[3] = pts[3] + 0.35f * (target - pts[3]);
  }
  for (auto& v : pts) v *= scale;
  return pts;
}

// ---- face ----------------------------------------------------------------

// 20 keypoints; index 0 is the nose. Offsets are local to the nose.
std::array<Vec3, 20> face_template() {
  return {{
      {0.000f, 0.000f, 0.000f},    // nose
      {-0.045f, 0.035f, -0.010f},  // right eye
      {0.045f, 0.035f, -0.010f},   // left eye
      {-0.070f, 0.030f, -0.020f},  // right eye outer
      {0.070f, 0.030f, -0.020f},   // left eye outer
      {-0.050f, 0.060f, -0.010f},  // right brow
      {0.050f, 0.060f, -0.010f},   // left brow
      {-0.020f, 0.058f, -0.008f},  // right brow inner
      {0.020f, 0.058f, -0.008f},   // left brow inner
      {0.000f, -0.045f, -0.005f},  // mouth top
      {0.000f, -0.070f, -0.005f},  // mouth bottom
      {-0.030f, -0.058f, -0.008f}, // mouth right
      {0.030f, -0.058f, -0.008f},  // mouth left
      {-0.018f, -0.050f, -0.006f}, // mouth upper-right
      {0.018f, -0.050f, -0.006f},  // mouth upper-left
      {-0.018f, -0.066f, -0.006f}, // mouth lower-right
      {0.018f, -0.066f, -0.006f},  // mouth lower-left
      {-0.080f, -0.010f, -0.030f}, // right cheek
      {0.080f, -0.010f, -0.030f},  // left cheek
      {0.000f, -0.095f, -0.010f},  // chin
  }};
}

// ---- body ----------------------------------------------------------------

std::array<Vec3, 13> body_template() {
  return {{
      {0.000f, 0.450f, 0.000f},   // neck
      {0.000f, 0.330f, 0.000f},   // chest
      {0.000f, 0.180f, 0.000f},   // spine
      {0.000f, 0.020f, 0.000f},   // pelvis
      {0.200f, 0.420f, 0.000f},   // right shoulder
      {-0.200f, 0.420f, 0.000f},  // left shoulder
      {0.260f, 0.240f, 0.050f},   // right elbow
      {-0.260f, 0.240f, 0.050f},  // left elbow
      {0.110f, 0.000f, 0.000f},   // right hip
      {-0.110f, 0.000f, 0.000f},  // left hip
      {0.000f, 0.520f, 0.020f},   // head base
      {0.100f, 0.440f, 0.000f},   // right collar
      {-0.100f, 0.440f, 0.000f},  // left collar
  }};
}

// ---- movement ------------------------------------------------------------

float triangle01(float x) {
  const float fr = x - std::floor(x);
  return fr < 0.5f ? 2.f * fr : 2.f * (1.f - fr);
}

// Wrist path offset at normalized time u for the movement feature set.
Vec3 wrist_path(int movement, int repeated, int flexion_change, int spread_change,
                int wrist_twist, float u) {
  const float rho = repeated == 1 ? 2.f : 1.f;
  const float w = triangle01(rho * u * 0.999999f);
  const float wc = rho * u - std::floor(rho * u * 0.999999f);
  const float amp = 0.14f;
  Vec3 p = Vec3::Zero();
  switch (movement) {
    case 0: break;  // hold
    case 1: p = Vec3(amp * 1.6f * (w - 0.5f), 0.f, 0.f); break;
    case 2: p = Vec3(0.f, amp * 1.6f * (w - 0.5f), 0.f); break;
    case 3:
      p = amp * Vec3(std::sin(float(M_PI) * (w - 0.5f)),
                     0.8f * (1.f - std::cos(float(M_PI) * (w - 0.5f))), 0.f);
      break;
    case 4:
      p = 0.8f * amp * Vec3(std::sin(2.f * float(M_PI) * wc),
                            1.f - std::cos(2.f * float(M_PI) * wc), 0.f);
      break;
    case 5:
      p = Vec3(amp * 1.6f * (w - 0.5f), 0.5f * amp * std::sin(4.f * float(M_PI) * w), 0.f);
      break;
    default:
      throw std::invalid_argument("render_sign: unknown movement class");
  }
  if (flexion_change == 1) p.z() += 0.030f * std::sin(3.f * float(M_PI) * u);
  if (spread_change == 1) p.x() += 0.020f * std::sin(5.f * float(M_PI) * u);
  if (wrist_twist == 1) {
    p.y() += 0.018f * std::sin(7.f * float(M_PI) * u);
    p.z() += 0.018f * std::cos(7.f * float(M_PI) * u);
  }
  return p;
}

// Coordinates live on a dyadic grid: sums and differences of grid values are
// exact in float, so translating a stream to its anchor cancels exactly and
// feature effects stay confined to their assigned streams bit-for-bit.
constexpr double kGrid = 4096.0;  // 2^12

float to_grid(double v) { return float(std::nearbyint(v * kGrid) / kGrid); }

Vec3 to_grid(const Vec3& v) {
  return {to_grid(double(v.x())), to_grid(double(v.y())), to_grid(double(v.z()))};
}

}  // namespace

PoseSequence render_sign(const PhonoFeatureSchema& schema, const PhonoLabels& labels,
                         int signer_id, double noise_scale, int frame_count,
                         std::uint64_t seed) {
  schema.validate();
  if (labels.size() != std::size_t(schema.feature_count()))
    throw std::invalid_argument("render_sign: label count does not match schema");
  for (int f = 0; f < schema.feature_count(); ++f) {
    if (labels[std::size_t(f)] < 0 || labels[std::size_t(f)] >= schema.features[std::size_t(f)].classes)
      throw std::invalid_argument("render_sign: class index out of range for feature " +
                                  schema.features[std::size_t(f)].name);
  }
  if (frame_count < 16) throw std::invalid_argument("render_sign: frame_count must be >= 16");
  if (noise_scale < 0) throw std::invalid_argument("render_sign: noise_scale must be >= 0");

  const SkeletonLayout layout = SkeletonLayout::default_layout();
  const SignerStyle style = signer_style(signer_id);
  auto cls = [&](int f) { return labels[std::size_t(f)]; };

  // Location displaces the body relative to the hands: hands keep a fixed
  // base, the torso shifts, so location is visible in the body stream only.
  const Vec3 major_off = 0.10f * hashed_dir(0x10C, std::uint64_t(cls(feat::kMajorLocation)));
  const Vec3 minor_off = 0.05f * hashed_dir(0x10D, std::uint64_t(cls(feat::kMinorLocation)));

  // Static hand shapes (right-hand geometry; left hand mirrors in x).
  HandShapeParams rh_shape;
  rh_shape.selected_fingers = cls(feat::kSelectedFingers);
  rh_shape.flexion = cls(feat::kFlexion);
  rh_shape.spread = cls(feat::kSpread);
  rh_shape.thumb_position = cls(feat::kThumbPosition);
  rh_shape.thumb_contact = cls(feat::kThumbContact);

  const int sign_type = cls(feat::kSignType);
  HandShapeParams lh_shape = rh_shape;
  if (sign_type == 0) {
    lh_shape = HandShapeParams{7, 2, 0, 0, 0};  // rest: nothing selected, folded
  } else if (sign_type == 2) {
    lh_shape = HandShapeParams{2, 0, 0, 0, 0};  // flat base hand
  }
  const float hand_scale = style.global * style.hand;
  const std::array<Vec3, 21> rh_local = hand_local_shape(rh_shape, hand_scale);
  std::array<Vec3, 21> lh_local = hand_local_shape(lh_shape, hand_scale);
  for (auto& v : lh_local) v.x() = -v.x();
  if (sign_type == 3) {
    for (std::size_t k = 1; k < lh_local.size(); ++k) lh_local[k] *= 0.88f;
  }
  // Per-class marker on the left knuckles keeps sign types distinct even
  // when the derived shapes coincide.
  for (int f = 0; f < 5; ++f) lh_local[std::size_t(1 + 4 * f)].z() += 0.012f * float(sign_type);

  const std::array<Vec3, 20> face_base = face_template();
  std::array<Vec3, 20> face_local = face_base;
  const int nms = cls(feat::kNonManualSignal);
  if (nms == 1) {
    for (int i = 5; i <= 8; ++i) face_local[std::size_t(i)].y() += 0.025f;  // brow raise
  } else if (nms == 2) {
    for (int i = 5; i <= 8; ++i) {
      face_local[std::size_t(i)].y() -= 0.018f;  // furrow
      face_local[std::size_t(i)].x() *= 0.70f;
    }
  }
  const int mouth = cls(feat::kMouthMorpheme);
  if (mouth == 1) {
    for (int i = 9; i <= 16; ++i)
      face_local[std::size_t(i)].y() = face_base[std::size_t(i)].y() * 1.8f + 0.045f;  // open
  } else if (mouth == 2) {
    for (int i = 9; i <= 16; ++i) face_local[std::size_t(i)].x() *= 1.5f;  // wide
  }
  for (auto& v : face_local) v *= style.global * style.face;

  const std::array<Vec3, 13> body_base = body_template();
  const int head_move = cls(feat::kHeadMovement);

  const Vec3 nose_world = style.global * Vec3(0.f, 0.55f, 0.08f);
  const Vec3 hand_base_r = style.global * style.arm * Vec3(0.25f, 0.10f, 0.18f);

  PoseSequence pose;
  pose.layout = layout;
  pose.frames.resize(frame_count, layout.joint_count() * 3);

  Rng noise_rng = Rng::derive(seed, 0x4015E);

  // Per-sign constants snapped to the grid once.
  std::array<Vec3, 21> rh_local_q, lh_local_q;
  for (int k = 0; k < 21; ++k) {
    rh_local_q[std::size_t(k)] = to_grid(rh_local[std::size_t(k)]);
    lh_local_q[std::size_t(k)] = to_grid(lh_local[std::size_t(k)]);
  }
  const Vec3 nose_q = to_grid(nose_world);

  for (int t = 0; t < frame_count; ++t) {
    const float u = float(t) / float(frame_count - 1);

    const Vec3 path = wrist_path(cls(feat::kMovement), cls(feat::kRepeatedMovement),
                                 cls(feat::kFlexionChange), cls(feat::kSpreadChange),
                                 cls(feat::kWristTwist), u) *
                      style.global * style.arm;
    const Vec3 wrist_r = to_grid(Vec3(hand_base_r + path));
    Vec3 wrist_l = wrist_r;
    wrist_l.x() = -wrist_l.x();  // exact sign flip keeps the grid

    Eigen::Matrix3f head_rot = Eigen::Matrix3f::Identity();
    if (head_move == 1)
      head_rot = Eigen::AngleAxisf(0.18f * std::sin(2.f * float(M_PI) * u), Vec3::UnitX()).matrix();
    else if (head_move == 2)
      head_rot = Eigen::AngleAxisf(0.22f * std::sin(2.f * float(M_PI) * u), Vec3::UnitY()).matrix();

    const float sway = 0.01f * std::sin(2.f * float(M_PI) * u);

    // Anchor and offset are both grid values, so anchor + offset + jitter is
    // exact and the stream translation recovers the offset bit-for-bit.
    auto put = [&](int joint, const Vec3& anchor, const Vec3& offset) {
      const Vec3 jitter = noise_scale > 0
                              ? to_grid(Vec3(float(noise_rng.normal() * noise_scale),
                                             float(noise_rng.normal() * noise_scale),
                                             float(noise_rng.normal() * noise_scale)))
                              : Vec3::Zero();
      pose.frames(t, joint * 3 + 0) = anchor.x() + offset.x() + jitter.x();
      pose.frames(t, joint * 3 + 1) = anchor.y() + offset.y() + jitter.y();
      pose.frames(t, joint * 3 + 2) = anchor.z() + offset.z() + jitter.z();
    };

    for (int k = 0; k < 21; ++k)
      put(layout.right_hand.begin + k, wrist_r, rh_local_q[std::size_t(k)]);
    for (int k = 0; k < 21; ++k)
      put(layout.left_hand.begin + k, wrist_l, lh_local_q[std::size_t(k)]);
    for (int k = 0; k < 20; ++k)
      put(layout.face.begin + k, nose_q, to_grid(Vec3(head_rot * face_local[std::size_t(k)])));
    for (int k = 0; k < 13; ++k) {
      // Per-point weights make the location shift non-rigid.
      const float w1 = 0.7f + 0.6f * (0.5f + 0.5f * hashed_dir(0xB0D7, std::uint64_t(k)).x());
      const float w2 = 0.7f + 0.6f * (0.5f + 0.5f * hashed_dir(0xB0D8, std::uint64_t(k)).y());
      Vec3 p = style.global * style.torso * body_base[std::size_t(k)];
      p += major_off * w1 + minor_off * w2;
      p.x() += sway;
      put(layout.body.begin + k, to_grid(p), Vec3::Zero());
    }
  }
  return pose;
}

void CorpusConfig::validate() const {
  if (n_signs < 1 || instances_per_sign < 1 || n_signers < 1)
    throw ConfigError("corpus counts must be positive");
  const double total = train_frac + val_frac + test_frac;
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("splits: fractions must sum to 1 (got " + std::to_string(total) + ")");
  if (train_frac < 0 || val_frac < 0 || test_frac < 0)
    throw ConfigError("splits: fractions must be non-negative");
  if (noise_scale < 0) throw ConfigError("noise_scale must be >= 0");
  if (min_frames < 16 || max_frames < min_frames)
    throw ConfigError("frame range must satisfy 16 <= min_frames <= max_frames");
}

Corpus generate_corpus(const CorpusConfig& config) {
  config.validate();
  Corpus corpus;
  corpus.layout = SkeletonLayout::default_layout();
  corpus.schema = PhonoFeatureSchema::default_schema();

  const auto vocab = build_vocabulary(corpus.schema, config.n_signs, config.seed);

  // Disjoint gloss splits from a seeded shuffle.
  std::vector<int> gloss_ids(vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) gloss_ids[i] = vocab[i].first;
  Rng split_rng = Rng::derive(config.seed, 0x5711);
  split_rng.shuffle(gloss_ids);
  const int n_train = int(std::llround(config.train_frac * config.n_signs));
  const int n_val = int(std::llround(config.val_frac * config.n_signs));
  corpus.split.train.assign(gloss_ids.begin(), gloss_ids.begin() + n_train);
  corpus.split.val.assign(gloss_ids.begin() + n_train,
                          gloss_ids.begin() + std::min(config.n_signs, n_train + n_val));
  corpus.split.test.assign(gloss_ids.begin() + std::min(config.n_signs, n_train + n_val),
                           gloss_ids.end());
  for (auto* part : {&corpus.split.train, &corpus.split.val, &corpus.split.test})
    std::sort(part->begin(), part->end());
  corpus.split.validate();

  corpus.records.reserve(std::size_t(config.n_signs) * std::size_t(config.instances_per_sign));
  for (int g = 0; g < config.n_signs; ++g) {
    for (int inst = 0; inst < config.instances_per_sign; ++inst) {
      const std::uint64_t record_index = std::uint64_t(g) * std::uint64_t(config.instances_per_sign) +
                                         std::uint64_t(inst);
      Rng rec_rng = Rng::derive(config.seed, 0x9EC0 + record_index);
      SignRecord record;
      record.gloss_id = vocab[std::size_t(g)].first;
      record.labels = vocab[std::size_t(g)].second;
      record.signer_id = int(rec_rng.uniform_int(std::uint64_t(config.n_signers)));
      const int frames = config.min_frames +
                         int(rec_rng.uniform_int(std::uint64_t(config.max_frames - config.min_frames + 1)));
      const std::uint64_t render_seed = hash_combine(config.seed, 0xF00D + record_index);
      record.pose = render_sign(corpus.schema, record.labels, record.signer_id,
                                config.noise_scale, frames, render_seed);
      corpus.records.push_back(std::move(record));
    }
  }
  return corpus;
}

}  // namespace vqsign
