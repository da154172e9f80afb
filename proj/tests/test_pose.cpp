#include <doctest.h>

#include <set>

#include "vqsign/pose.hpp"
#include "vqsign/rng.hpp"

using namespace vqsign;

namespace {

PoseSequence random_pose(int frames, std::uint64_t seed) {
  PoseSequence pose;
  pose.layout = SkeletonLayout::default_layout();
  pose.frames.resize(frames, pose.layout.joint_count() * 3);
  Rng rng(seed);
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < pose.frames.cols(); ++c) pose.frames(t, c) = float(rng.normal());
  return pose;
}

}  // namespace

TEST_CASE("uniform_frame_sample endpoints and identity") {
  CHECK(uniform_frame_sample(16, 16) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11,
                                                         12, 13, 14, 15});
  CHECK(uniform_frame_sample(5, 2) == std::vector<int>{0, 4});
  CHECK(uniform_frame_sample(7, 1) == std::vector<int>{0});
}

TEST_CASE("uniform_frame_sample follows the rounding formula") {
  const auto idx = uniform_frame_sample(40, 16);
  REQUIRE(idx.size() == 16);
  CHECK(idx.front() == 0);
  CHECK(idx.back() == 39);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int expect = int(std::lround(double(i) * 39.0 / 15.0));
    CHECK(idx[i] == expect);
    if (i > 0) CHECK(idx[i] > idx[i - 1]);
  }
  // Deterministic: same arguments, same indices.
  CHECK(uniform_frame_sample(40, 16) == idx);
}

TEST_CASE("uniform_frame_sample rejects oversampling") {
  CHECK_THROWS_AS((void)uniform_frame_sample(4, 5), std::invalid_argument);
  CHECK_THROWS_AS((void)uniform_frame_sample(0, 1), std::invalid_argument);
}

TEST_CASE("partition of an all-zero pose is all-zero") {
  PoseSequence pose;
  pose.layout = SkeletonLayout::default_layout();
  pose.frames = MatF::Zero(8, pose.layout.joint_count() * 3);
  const StreamBundle bundle = partition_pose(pose, pose.layout, 4);
  for (StreamId s : kAllStreams)
    for (float v : bundle[s].xyz) CHECK(v == 0.0f);
}

TEST_CASE("wrist trace lands in the movement stream and hand streams are wrist-centered") {
  PoseSequence pose;
  pose.layout = SkeletonLayout::default_layout();
  const int frames = 12;
  pose.frames = MatF::Zero(frames, pose.layout.joint_count() * 3);
  for (int t = 0; t < frames; ++t) {
    // Right wrist walks along x; the whole right hand rides along.
    for (int k = pose.layout.right_hand.begin; k < pose.layout.right_hand.end; ++k) {
      pose.frames(t, k * 3 + 0) = float(t);
      pose.frames(t, k * 3 + 1) = 0.25f * float(k - pose.layout.right_hand.begin);
    }
  }
  const StreamBundle bundle = partition_pose(pose, pose.layout, frames);

  const StreamSeq& movr = bundle[StreamId::MOVR];
  REQUIRE(movr.frames == frames);
  for (int t = 0; t < frames; ++t) {
    CHECK(movr.at(t, 0, 0) == float(t));
    CHECK(movr.at(t, 0, 1) == 0.0f);
  }
  const StreamSeq& rh = bundle[StreamId::RH];
  for (int t = 0; t < rh.frames; ++t)
    for (int c = 0; c < 3; ++c) CHECK(rh.at(t, 0, c) == 0.0f);  // wrist is keypoint 0
}

TEST_CASE("stream source sets cover the skeleton with only the wrists duplicated") {
  const SkeletonLayout layout = SkeletonLayout::default_layout();
  const PoseSequence pose = random_pose(40, 99);
  const StreamBundle bundle = partition_pose(pose, layout, 16);
  const auto sampled = uniform_frame_sample(40, 16);

  // Source index sets per stream, derived from the layout.
  std::multiset<int> sources;
  auto add_group = [&](const SkeletonLayout::Group& g) {
    for (int i = g.begin; i < g.end; ++i) sources.insert(i);
  };
  add_group(layout.right_hand);
  add_group(layout.left_hand);
  add_group(layout.face);
  add_group(layout.body);
  sources.insert(layout.wrist_right);
  sources.insert(layout.wrist_left);

  std::set<int> unique(sources.begin(), sources.end());
  CHECK(int(unique.size()) == layout.joint_count());
  for (int i = 0; i < layout.joint_count(); ++i) {
    const auto count = sources.count(i);
    if (i == layout.wrist_right || i == layout.wrist_left)
      CHECK(count == 2);
    else
      CHECK(count == 1);
  }

  // The streams really are those sources: body raw, movement raw, hands and
  // face anchored.
  const StreamSeq& body = bundle[StreamId::BODY];
  for (int f = 0; f < body.frames; ++f)
    for (int k = 0; k < body.keypoints; ++k)
      CHECK(body.at(f, k, 0) ==
            pose.frames(sampled[std::size_t(f)], (layout.body.begin + k) * 3));
  const StreamSeq& movl = bundle[StreamId::MOVL];
  for (int t = 0; t < 40; ++t)
    CHECK(movl.at(t, 0, 2) == pose.frames(t, layout.wrist_left * 3 + 2));
}

TEST_CASE("normalization produces exact zeros at anchors") {
  for (int trial = 0; trial < 50; ++trial) {
    const PoseSequence pose = random_pose(24, 1000 + std::uint64_t(trial));
    const StreamBundle bundle = partition_pose(pose, pose.layout, 9);
    float max_abs = 0;
    const StreamSeq& rh = bundle[StreamId::RH];
    const StreamSeq& lh = bundle[StreamId::LH];
    const StreamSeq& nmm = bundle[StreamId::NMM];
    for (int f = 0; f < rh.frames; ++f)
      for (int c = 0; c < 3; ++c) {
        max_abs = std::max(max_abs, std::abs(rh.at(f, 0, c)));
        max_abs = std::max(max_abs, std::abs(lh.at(f, 0, c)));
        max_abs = std::max(max_abs, std::abs(nmm.at(f, 0, c)));
      }
    CHECK(max_abs == 0.0f);
  }
}

TEST_CASE("partition rejects oversampling and layout mismatch") {
  const PoseSequence pose = random_pose(6, 3);
  CHECK_THROWS_AS((void)partition_pose(pose, pose.layout, 7), std::invalid_argument);
  SkeletonLayout other = pose.layout;
  other.nose = other.face.begin + 1;
  CHECK_THROWS_AS((void)partition_pose(pose, other, 4), std::invalid_argument);
}

TEST_CASE("flatten_stream basics and round trip") {
  StreamSeq seq;
  seq.frames = 1;
  seq.keypoints = 1;
  seq.xyz = {1.f, 2.f, 3.f};
  const MatF mat = flatten_stream(seq);
  REQUIRE(mat.rows() == 1);
  REQUIRE(mat.cols() == 3);
  CHECK(mat(0, 0) == 1.f);
  CHECK(mat(0, 1) == 2.f);
  CHECK(mat(0, 2) == 3.f);

  const PoseSequence pose = random_pose(40, 4);
  const StreamBundle bundle = partition_pose(pose, pose.layout, 16);
  const StreamSeq& rh = bundle[StreamId::RH];
  const MatF flat = flatten_stream(rh);
  CHECK(flat.rows() == 16);
  CHECK(flat.cols() == 63);
  const StreamSeq back = unflatten_stream(flat, rh.keypoints);
  CHECK(back.xyz == rh.xyz);
}

TEST_CASE("layout validation catches overlaps and gaps") {
  SkeletonLayout layout = SkeletonLayout::default_layout();
  layout.left_hand = {20, 41};  // overlaps right hand
  CHECK_THROWS_AS(layout.validate(), std::invalid_argument);
  layout = SkeletonLayout::default_layout();
  layout.wrist_right = 30;  // outside the right hand group
  CHECK_THROWS_AS(layout.validate(), std::invalid_argument);
}
