#include "cpgan/memory_bank.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "cpgan/common.hpp"
#include "cpgan/ops.hpp"
#include "cpgan/parallel.hpp"

namespace cpgan {
namespace text {

SalienceFn salience_from_seed(std::uint64_t seed) {
  return [seed](index_t word_id, index_t sample_index,
                const std::vector<data::BoxN>& regions) {
    data::Scene scene = data::sample_scene(seed ^ (std::uint64_t)sample_index);
    return data::salience_weights(word_id, scene, regions);
  };
}

MemoryBank build_memory(const data::Dataset& dataset,
                        const ObjectFeatureFn& object_feature,
                        const SalienceFn& salience, index_t top_k,
                        index_t memory_dim) {
  require(!dataset.samples.empty(), "build_memory on an empty dataset");
  require(top_k >= 1, "top_k must be at least 1, got ", top_k);
  require(memory_dim >= 1, "memory_dim must be at least 1, got ", memory_dim);

  MemoryBank bank;
  bank.vocab_size = (index_t)dataset.vocab.size();
  bank.memory_dim = memory_dim;
  bank.top_k = top_k;
  bank.counts.assign((std::size_t)bank.vocab_size, 0);
  bank.vectors.assign((std::size_t)(bank.vocab_size * memory_dim), 0.0);

  // Relevant images per word: every sample whose caption mentions the word,
  // in dataset order.
  std::vector<std::vector<index_t>> relevant((std::size_t)bank.vocab_size);
  for (std::size_t n = 0; n < dataset.samples.size(); ++n) {
    std::vector<index_t> seen;
    for (index_t tok : dataset.samples[n].tokens) {
      if (std::find(seen.begin(), seen.end(), tok) == seen.end()) {
        seen.push_back(tok);
        relevant[(std::size_t)tok].push_back((index_t)n);
      }
    }
  }

  parallel_for(bank.vocab_size, [&](index_t w0, index_t w1) {
    for (index_t word = w0; word < w1; ++word) {
      const auto& imgs = relevant[(std::size_t)word];
      bank.counts[(std::size_t)word] = (index_t)imgs.size();
      if (imgs.empty()) continue;

      // Most salient region and its weight for each relevant image.
      std::vector<double> weights;
      std::vector<data::BoxN> best_box;
      for (index_t n : imgs) {
        const data::Sample& s = dataset.samples[(std::size_t)n];
        std::vector<data::BoxN> regions;
        for (const auto& det : s.detections)
          regions.push_back(
              data::detection_box_normalized(det, dataset.resolution));
        require(!regions.empty(), "sample ", n, " has no detections");
        auto a = salience(word, n, regions);
        require(a.size() == regions.size(),
                "salience returned ", a.size(), " weights for ",
                regions.size(), " regions");
        index_t q = ops::argmax_n(a.data(), (index_t)a.size());
        weights.push_back(a[(std::size_t)q]);
        best_box.push_back(regions[(std::size_t)q]);
      }

      auto kept = ops::topk_indices(weights, top_k);
      double total = 0;
      for (index_t k : kept) total += weights[(std::size_t)k];
      if (total <= 0) {
        log_warn("memory word '", dataset.vocab[(std::size_t)word],
                 "' has zero total salience over ", imgs.size(),
                 " images; stored as unobserved");
        continue;
      }

      double* out = bank.vectors.data() + word * memory_dim;
      for (index_t k : kept) {
        index_t n = imgs[(std::size_t)k];
        const data::Sample& s = dataset.samples[(std::size_t)n];
        auto v = object_feature(s.image, dataset.resolution,
                                best_box[(std::size_t)k]);
        require((index_t)v.size() == memory_dim, "object feature length ",
                v.size(), " does not match memory_dim ", memory_dim);
        double w = weights[(std::size_t)k] / total;
        for (index_t d = 0; d < memory_dim; ++d) out[d] += w * v[(std::size_t)d];
      }
    }
  });
  return bank;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back((char)(v & 0xff));
  out.push_back((char)((v >> 8) & 0xff));
  out.push_back((char)((v >> 16) & 0xff));
  out.push_back((char)((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

std::uint32_t take_u32(const std::string& buf, std::size_t& pos,
                       const std::string& path) {
  if (pos + 4 > buf.size())
    fail_runtime("malformed memory bank ", path, " at byte ", pos,
                 ": truncated");
  std::uint32_t v = (std::uint8_t)buf[pos] |
                    ((std::uint32_t)(std::uint8_t)buf[pos + 1] << 8) |
                    ((std::uint32_t)(std::uint8_t)buf[pos + 2] << 16) |
                    ((std::uint32_t)(std::uint8_t)buf[pos + 3] << 24);
  pos += 4;
  return v;
}

float take_f32(const std::string& buf, std::size_t& pos,
               const std::string& path) {
  std::uint32_t bits = take_u32(buf, pos, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_memory_bank(const MemoryBank& bank, const std::string& path) {
  std::string out = "CPGM";
  put_u32(out, 1);
  put_u32(out, (std::uint32_t)bank.vocab_size);
  put_u32(out, (std::uint32_t)bank.memory_dim);
  put_u32(out, (std::uint32_t)bank.top_k);
  for (index_t w = 0; w < bank.vocab_size; ++w) {
    put_u32(out, (std::uint32_t)bank.counts[(std::size_t)w]);
    for (index_t d = 0; d < bank.memory_dim; ++d)
      put_f32(out, (float)bank.vectors[(std::size_t)(w * bank.memory_dim + d)]);
  }
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "cannot open ", path, " for writing");
  f.write(out.data(), (std::streamsize)out.size());
  require(f.good(), "short write to ", path);
}

MemoryBank load_memory_bank(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open ", path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 4 || buf.substr(0, 4) != "CPGM")
    fail_runtime("malformed memory bank ", path, " at byte 0: bad magic");
  std::size_t pos = 4;
  std::uint32_t version = take_u32(buf, pos, path);
  if (version != 1)
    fail_runtime("memory bank ", path, ": unsupported version ", version);
  MemoryBank bank;
  bank.vocab_size = take_u32(buf, pos, path);
  bank.memory_dim = take_u32(buf, pos, path);
  bank.top_k = take_u32(buf, pos, path);
  bank.counts.resize((std::size_t)bank.vocab_size);
  bank.vectors.resize((std::size_t)(bank.vocab_size * bank.memory_dim));
  for (index_t w = 0; w < bank.vocab_size; ++w) {
    bank.counts[(std::size_t)w] = take_u32(buf, pos, path);
    for (index_t d = 0; d < bank.memory_dim; ++d)
      bank.vectors[(std::size_t)(w * bank.memory_dim + d)] =
          take_f32(buf, pos, path);
  }
  if (pos != buf.size())
    fail_runtime("malformed memory bank ", path, " at byte ", pos,
                 ": trailing bytes");
  return bank;
}

}  // namespace text
}  // namespace cpgan
