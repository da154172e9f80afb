#include "vqsign/pose.hpp"

#include <cmath>
#include <stdexcept>

namespace vqsign {

const char* to_string(StreamId id) {
  switch (id) {
    case StreamId::RH: return "rh";
    case StreamId::LH: return "lh";
    case StreamId::NMM: return "nmm";
    case StreamId::BODY: return "body";
    case StreamId::MOVR: return "movr";
    case StreamId::MOVL: return "movl";
    case StreamId::All: return "all";
  }
  return "?";
}

StreamId stream_from_string(const std::string& name) {
  for (StreamId id : kAllStreams)
    if (name == to_string(id)) return id;
  if (name == "all") return StreamId::All;
  throw std::invalid_argument("unknown stream name: " + name);
}

void SkeletonLayout::validate() const {
  const Group* groups[] = {&right_hand, &left_hand, &face, &body};
  int covered = 0;
  for (const Group* g : groups) {
    if (g->begin < 0 || g->end <= g->begin)
      throw std::invalid_argument("skeleton layout: empty or negative group range");
    covered += g->size();
  }
  // Disjointness + full cover of [0, J).
  std::vector<int> owner(std::size_t(joint_count()), -1);
  int gi = 0;
  for (const Group* g : groups) {
    for (int i = g->begin; i < g->end; ++i) {
      if (i >= joint_count() || owner[std::size_t(i)] != -1)
        throw std::invalid_argument("skeleton layout: groups overlap or exceed joint count");
      owner[std::size_t(i)] = gi;
    }
    ++gi;
  }
  if (covered != joint_count())
    throw std::invalid_argument("skeleton layout: groups do not cover all joints");
  if (right_hand.size() != 21 || left_hand.size() != 21)
    throw std::invalid_argument("skeleton layout: hands must have 21 keypoints");
  if (!right_hand.contains(wrist_right) || !left_hand.contains(wrist_left) ||
      !face.contains(nose))
    throw std::invalid_argument("skeleton layout: anchor keypoint outside its group");
}

SkeletonLayout SkeletonLayout::default_layout() {
  SkeletonLayout l;
  l.right_hand = {0, 21};
  l.left_hand = {21, 42};
  l.face = {42, 62};
  l.body = {62, 75};
  l.wrist_right = 0;
  l.wrist_left = 21;
  l.nose = 42;
  l.validate();
  return l;
}

void PoseSequence::validate() const {
  layout.validate();
  if (frames.rows() < 2) throw std::invalid_argument("pose sequence needs at least 2 frames");
  if (frames.cols() != layout.joint_count() * 3)
    throw std::invalid_argument("pose sequence width does not match skeleton layout");
  if (!frames.allFinite()) throw std::invalid_argument("pose sequence has non-finite coordinates");
}

std::vector<int> uniform_frame_sample(int total_frames, int sample_count) {
  if (total_frames < 1 || sample_count < 1)
    throw std::invalid_argument("uniform_frame_sample: counts must be positive");
  if (sample_count > total_frames)
    throw std::invalid_argument("uniform_frame_sample: sample_count exceeds frame count");
  std::vector<int> indices(static_cast<std::size_t>(sample_count), 0);
  if (sample_count == 1) {
    indices[0] = 0;
    return indices;
  }
  for (int i = 0; i < sample_count; ++i) {
    const double pos = double(i) * double(total_frames - 1) / double(sample_count - 1);
    indices[std::size_t(i)] = int(std::lround(pos));
  }
  return indices;
}

namespace {

// Copy `joints` of the sampled frames, translating by the anchor keypoint
// (exact zero at the anchor) when anchor >= 0.
StreamSeq extract_stream(const PoseSequence& pose, const std::vector<int>& frame_ids,
                         const SkeletonLayout::Group& group, int anchor) {
  StreamSeq seq;
  seq.frames = int(frame_ids.size());
  seq.keypoints = group.size();
  seq.xyz.resize(std::size_t(seq.frames) * std::size_t(seq.keypoints) * 3);
  for (int fi = 0; fi < seq.frames; ++fi) {
    const int t = frame_ids[std::size_t(fi)];
    float ax = 0.f, ay = 0.f, az = 0.f;
    if (anchor >= 0) {
      ax = pose.frames(t, anchor * 3 + 0);
      ay = pose.frames(t, anchor * 3 + 1);
      az = pose.frames(t, anchor * 3 + 2);
    }
    for (int k = 0; k < seq.keypoints; ++k) {
      const int j = group.begin + k;
      seq.at(fi, k, 0) = pose.frames(t, j * 3 + 0) - ax;
      seq.at(fi, k, 1) = pose.frames(t, j * 3 + 1) - ay;
      seq.at(fi, k, 2) = pose.frames(t, j * 3 + 2) - az;
    }
  }
  return seq;
}

}  // namespace

StreamBundle partition_pose(const PoseSequence& pose, const SkeletonLayout& layout,
                            int sample_count) {
  pose.validate();
  if (pose.layout != layout)
    throw std::invalid_argument("partition_pose: pose was built with a different layout");
  const int total = pose.frame_count();
  if (sample_count > total)
    throw std::invalid_argument("partition_pose: sample_count exceeds frame count");

  const std::vector<int> sampled = uniform_frame_sample(total, sample_count);
  std::vector<int> all_frames(static_cast<std::size_t>(total), 0);
  for (int t = 0; t < total; ++t) all_frames[std::size_t(t)] = t;

  StreamBundle bundle;
  bundle.sampled_frames = sample_count;
  bundle.total_frames = total;
  bundle[StreamId::RH] = extract_stream(pose, sampled, layout.right_hand, layout.wrist_right);
  bundle[StreamId::LH] = extract_stream(pose, sampled, layout.left_hand, layout.wrist_left);
  bundle[StreamId::NMM] = extract_stream(pose, sampled, layout.face, layout.nose);
  bundle[StreamId::BODY] = extract_stream(pose, sampled, layout.body, -1);
  const SkeletonLayout::Group wrist_r{layout.wrist_right, layout.wrist_right + 1};
  const SkeletonLayout::Group wrist_l{layout.wrist_left, layout.wrist_left + 1};
  bundle[StreamId::MOVR] = extract_stream(pose, all_frames, wrist_r, -1);
  bundle[StreamId::MOVL] = extract_stream(pose, all_frames, wrist_l, -1);
  return bundle;
}

MatF flatten_stream(const StreamSeq& seq) {
  MatF mat(seq.frames, seq.keypoints * 3);
  for (int f = 0; f < seq.frames; ++f)
    for (int c = 0; c < seq.keypoints * 3; ++c)
      mat(f, c) = seq.xyz[std::size_t(f * seq.keypoints * 3 + c)];
  return mat;
}

StreamSeq unflatten_stream(const MatF& mat, int keypoints) {
  if (mat.cols() != keypoints * 3)
    throw std::invalid_argument("unflatten_stream: column count is not 3*keypoints");
  StreamSeq seq;
  seq.frames = int(mat.rows());
  seq.keypoints = keypoints;
  seq.xyz.resize(std::size_t(mat.size()));
  for (int f = 0; f < seq.frames; ++f)
    for (int c = 0; c < keypoints * 3; ++c)
      seq.xyz[std::size_t(f * keypoints * 3 + c)] = mat(f, c);
  return seq;
}

}  // namespace vqsign
