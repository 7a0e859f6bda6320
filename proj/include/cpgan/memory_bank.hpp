#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cpgan/data.hpp"

namespace cpgan {
namespace text {

// Word-indexed visual memory. vectors holds vocab_size rows of memory_dim;
// a word never seen in a caption keeps count 0 and a zero row.
struct MemoryBank {
  index_t vocab_size = 0;
  index_t memory_dim = 0;
  index_t top_k = 0;
  std::vector<index_t> counts;
  std::vector<double> vectors;

  const double* row(index_t word) const {
    return vectors.data() + word * memory_dim;
  }
};

// Maps (image bytes, resolution, normalized box) to a memory_dim feature.
using ObjectFeatureFn = std::function<std::vector<double>(
    const std::vector<std::uint8_t>& image_rgb, index_t resolution,
    const data::BoxN& box)>;

// Maps (word, sample index, regions) to salience weights over the regions.
using SalienceFn = std::function<std::vector<double>(
    index_t word_id, index_t sample_index,
    const std::vector<data::BoxN>& regions)>;

// Salience oracle that rebuilds each sample's scene from the dataset seed.
SalienceFn salience_from_seed(std::uint64_t seed);

MemoryBank build_memory(const data::Dataset& dataset,
                        const ObjectFeatureFn& object_feature,
                        const SalienceFn& salience, index_t top_k,
                        index_t memory_dim);

void save_memory_bank(const MemoryBank& bank, const std::string& path);
MemoryBank load_memory_bank(const std::string& path);

}  // namespace text
}  // namespace cpgan
