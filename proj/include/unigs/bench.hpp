#pragma once

#include <string>
#include <vector>

#include "unigs/decoder.hpp"

namespace unigs {

struct BenchRow {
  long views = 0;
  double encode_ms = 0;  // encoder alone
  double total_ms = 0;   // full reconstruction forward
  long gaussians = 0;    // emitted splat count
  long query_bytes = 0;  // per-gaussian feature buffer footprint
};

// The default model is sized so the per-gaussian pipeline dominates the
// per-view cost: a large budget and a wide feed-forward keep the forward
// time flat-ish as views are added.
struct BenchConfig {
  ModelConfig model = [] {
    ModelConfig m;
    m.n_gaussians = 2048;
    m.ffn_hidden = 1024;
    return m;
  }();
  std::vector<long> view_counts = {1, 2, 4, 6, 8};
  long width = 32;
  long height = 32;
  unsigned long seed = 1;
  long repeats = 1;  // best-of timing
};

// Random weights, random input images, shared across rows. Forward only.
std::vector<BenchRow> bench_views(const BenchConfig& cfg);

void write_bench_csv(const std::string& path,
                     const std::vector<BenchRow>& rows);
std::string bench_table(const std::vector<BenchRow>& rows);

}  // namespace unigs
