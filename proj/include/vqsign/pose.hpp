// Skeleton layout, pose sequences and the articulator stream partitioning.
#ifndef VQSIGN_POSE_HPP
#define VQSIGN_POSE_HPP

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vqsign {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// The six articulator streams. `All` is a sentinel used to tag the latents
// and codebook of single-stream (baseline) models; it is not a stream.
enum class StreamId : int { RH = 0, LH = 1, NMM = 2, BODY = 3, MOVR = 4, MOVL = 5, All = 6 };

constexpr int kStreamCount = 6;
constexpr std::array<StreamId, kStreamCount> kAllStreams = {
    StreamId::RH, StreamId::LH, StreamId::NMM,
    StreamId::BODY, StreamId::MOVR, StreamId::MOVL};

const char* to_string(StreamId id);
StreamId stream_from_string(const std::string& name);

// Contiguous keypoint index ranges for each named group. Hands are 21
// keypoints each (wrist first); face and body sizes are configurable.
struct SkeletonLayout {
  struct Group {
    int begin = 0;
    int end = 0;  // one past last
    int size() const { return end - begin; }
    bool contains(int i) const { return i >= begin && i < end; }
    bool operator==(const Group&) const = default;
  };

  Group right_hand;
  Group left_hand;
  Group face;
  Group body;
  int wrist_right = 0;
  int wrist_left = 0;
  int nose = 0;

  int joint_count() const { return body.end; }

  // Throws std::invalid_argument when groups overlap, leave gaps, or the
  // anchor keypoints fall outside their groups.
  void validate() const;

  static SkeletonLayout default_layout();  // 21 + 21 + 20 + 13 = 75 keypoints

  bool operator==(const SkeletonLayout&) const = default;
};

// T x (J*3) frame-major coordinate matrix; row t holds [x0,y0,z0,x1,...].
struct PoseSequence {
  MatF frames;
  SkeletonLayout layout;

  int frame_count() const { return int(frames.rows()); }

  Eigen::Vector3f keypoint(int frame, int joint) const {
    return frames.block<1, 3>(frame, joint * 3).transpose();
  }

  void validate() const;  // finite coordinates, T >= 2, width == J*3
};

// One stream sub-sequence: frames x keypoints x 3, frame-major.
struct StreamSeq {
  int frames = 0;
  int keypoints = 0;
  std::vector<float> xyz;

  float at(int f, int k, int c) const { return xyz[std::size_t((f * keypoints + k) * 3 + c)]; }
  float& at(int f, int k, int c) { return xyz[std::size_t((f * keypoints + k) * 3 + c)]; }
  std::size_t element_count() const { return xyz.size(); }
};

struct StreamBundle {
  std::array<StreamSeq, kStreamCount> streams;
  int sampled_frames = 0;  // S for RH/LH/NMM/BODY
  int total_frames = 0;    // T for MOVR/MOVL

  const StreamSeq& operator[](StreamId id) const { return streams[int(id)]; }
  StreamSeq& operator[](StreamId id) { return streams[int(id)]; }
};

// Evenly spaced frame indices: round(i*(T-1)/(S-1)), strictly increasing,
// covering both endpoints when count >= 2.
std::vector<int> uniform_frame_sample(int total_frames, int sample_count);

// Splits a pose into the six streams. Hand streams are translated so the
// wrist sits at the origin, the face stream so the nose does; movement
// streams keep the raw wrist trajectory over all frames.
StreamBundle partition_pose(const PoseSequence& pose, const SkeletonLayout& layout,
                            int sample_count);

// frames x (3*keypoints) matrix with row t the concatenated coordinates of
// frame t. Inverse of unflatten_stream.
MatF flatten_stream(const StreamSeq& seq);
StreamSeq unflatten_stream(const MatF& mat, int keypoints);

}  // namespace vqsign

#endif  // VQSIGN_POSE_HPP
