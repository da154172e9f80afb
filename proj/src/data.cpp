#include "vqsign/data.hpp"

#include <algorithm>

#include "vqsign/errors.hpp"

namespace vqsign {

PreparedCorpus prepare_corpus(const Corpus& corpus, int sampled_frames, int max_frames) {
  PreparedCorpus out;
  out.layout = corpus.layout;
  out.schema = corpus.schema;
  out.split = corpus.split;
  out.sampled_frames = sampled_frames;
  out.max_frames = max_frames;
  out.records.reserve(corpus.records.size());

  auto in_split = [](const std::vector<int>& ids, int gloss) {
    return std::binary_search(ids.begin(), ids.end(), gloss);
  };

  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const SignRecord& rec = corpus.records[i];
    const int total = rec.pose.frame_count();
    if (total < sampled_frames)
      throw ConfigError("record has " + std::to_string(total) +
                        " frames, below the sampled frame count " +
                        std::to_string(sampled_frames));
    if (total > max_frames)
      throw ConfigError("record has " + std::to_string(total) +
                        " frames, above the model max_frames " + std::to_string(max_frames));

    PreparedRecord prep;
    prep.total_frames = total;
    prep.gloss_id = rec.gloss_id;
    prep.signer_id = rec.signer_id;
    prep.labels = &rec.labels;

    const StreamBundle bundle = partition_pose(rec.pose, corpus.layout, sampled_frames);
    for (StreamId s : kAllStreams)
      prep.streams[std::size_t(int(s))] = flatten_stream(bundle[s]);

    // The single-stream models consume the raw pose at the same sampled
    // frames, flattened per frame.
    const std::vector<int> sampled = uniform_frame_sample(total, sampled_frames);
    prep.flat_pose.resize(sampled_frames, corpus.layout.joint_count() * 3);
    for (int f = 0; f < sampled_frames; ++f)
      prep.flat_pose.row(f) = rec.pose.frames.row(sampled[std::size_t(f)]);

    out.records.push_back(std::move(prep));

    if (in_split(corpus.split.train, rec.gloss_id)) out.train_idx.push_back(int(i));
    else if (in_split(corpus.split.val, rec.gloss_id)) out.val_idx.push_back(int(i));
    else if (in_split(corpus.split.test, rec.gloss_id)) out.test_idx.push_back(int(i));
  }
  return out;
}

}  // namespace vqsign
