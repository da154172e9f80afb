// Per-record model inputs derived from a corpus: partitioned streams and the
// flattened full-pose view, plus split bookkeeping and batch assembly.
#ifndef VQSIGN_DATA_HPP
#define VQSIGN_DATA_HPP

#include <vector>

#include "vqsign/corpus.hpp"
#include "vqsign/model.hpp"
#include "vqsign/pose.hpp"

namespace vqsign {

struct PreparedRecord {
  std::array<MatF, kStreamCount> streams;  // frames x features, normalized
  MatF flat_pose;                          // sampled_frames x 3J, raw coordinates
  int total_frames = 0;
  int gloss_id = 0;
  int signer_id = 0;
  const PhonoLabels* labels = nullptr;
};

struct PreparedCorpus {
  SkeletonLayout layout;
  PhonoFeatureSchema schema;
  SplitSpec split;
  std::vector<PreparedRecord> records;
  std::vector<int> train_idx;  // record indices whose gloss is in the split
  std::vector<int> val_idx;
  std::vector<int> test_idx;
  int sampled_frames = 0;
  int max_frames = 0;
};

PreparedCorpus prepare_corpus(const Corpus& corpus, int sampled_frames, int max_frames);

// Stacks records into fixed-shape model inputs. Movement streams are padded
// to max_frames with a validity mask.
template <class S>
BatchData<S> assemble_batch(const PreparedCorpus& data, const std::vector<int>& record_ids,
                            const Model<S>& model) {
  BatchData<S> batch;
  batch.batch = int(record_ids.size());
  const int n = model.stream_count();
  batch.streams.resize(std::size_t(n));
  batch.labels.reserve(record_ids.size());
  for (int rid : record_ids) batch.labels.push_back(data.records[std::size_t(rid)].labels);

  for (int s = 0; s < n; ++s) {
    const auto& net = model.nets[std::size_t(s)];
    StreamBatch<S>& sb = batch.streams[std::size_t(s)];
    sb.input = Matrix<S>::Zero(Eigen::Index(batch.batch) * net.frames, net.in_features);
    const bool movement = net.id == StreamId::MOVR || net.id == StreamId::MOVL;
    if (movement) sb.frame_valid.assign(std::size_t(batch.batch) * std::size_t(net.frames), 0);
    for (int b = 0; b < batch.batch; ++b) {
      const PreparedRecord& rec = data.records[std::size_t(record_ids[std::size_t(b)])];
      const MatF& src = model.multi_stream() ? rec.streams[std::size_t(int(net.id))]
                                             : rec.flat_pose;
      if (src.cols() != net.in_features)
        throw std::invalid_argument("assemble_batch: feature width mismatch");
      const int rows = int(src.rows());
      if (rows > net.frames)
        throw std::invalid_argument("assemble_batch: record longer than model max_frames");
      sb.input.middleRows(Eigen::Index(b) * net.frames, rows) = src.template cast<S>();
      if (movement)
        for (int f = 0; f < rows; ++f)
          sb.frame_valid[std::size_t(b) * std::size_t(net.frames) + std::size_t(f)] = 1;
      else if (rows != net.frames)
        throw std::invalid_argument("assemble_batch: sampled stream has wrong frame count");
    }
  }
  return batch;
}

}  // namespace vqsign

#endif  // VQSIGN_DATA_HPP
